//! Local (2S+1)-dimensional spin algebra.
//!
//! The local basis is ordered by decreasing magnetic quantum number: index 0
//! is m = S, index 2S is m = -S. Transition operators T^{ab} = |a><b| are
//! flattened as `a * (2S+1) + b`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Spin length stored as the integer 2S so that half-integers are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Spin(u32);

impl Spin {
    pub fn from_twice(twice: i64) -> Result<Self> {
        if !(1..=200).contains(&twice) {
            return Err(Error::Spin(twice));
        }
        Ok(Spin(twice as u32))
    }

    /// Accepts only exact half-integers >= 1/2.
    pub fn from_f64(s: f64) -> Result<Self> {
        let twice = 2.0 * s;
        if !twice.is_finite() || (twice - twice.round()).abs() > 1e-12 {
            return Err(Error::Spin(twice.round() as i64));
        }
        Self::from_twice(twice.round() as i64)
    }

    pub fn twice(self) -> u32 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    /// Local Hilbert-space dimension 2S+1.
    pub fn dim(self) -> usize {
        self.0 as usize + 1
    }

    /// Magnetic quantum number of basis index `a`.
    pub fn m(self, a: usize) -> f64 {
        self.value() - a as f64
    }
}

impl std::fmt::Display for Spin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0.is_multiple_of(2) {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpinMatrices {
    pub spin: Spin,
    pub sx: CMatrix,
    pub sy: CMatrix,
    pub sz: CMatrix,
    pub splus: CMatrix,
    pub sminus: CMatrix,
}

impl SpinMatrices {
    pub fn dim(&self) -> usize {
        self.spin.dim()
    }

    /// Component along a unit axis.
    pub fn along(&self, axis: [f64; 3]) -> CMatrix {
        &self.sx * Complex64::from(axis[0])
            + &self.sy * Complex64::from(axis[1])
            + &self.sz * Complex64::from(axis[2])
    }
}

pub fn spin_operators(spin: Spin) -> SpinMatrices {
    let d = spin.dim();
    let s = spin.value();
    let mut sz = CMatrix::zeros(d, d);
    let mut splus = CMatrix::zeros(d, d);
    for a in 0..d {
        sz[(a, a)] = Complex64::from(spin.m(a));
    }
    // S+ |m> = sqrt(S(S+1) - m(m+1)) |m+1>, and m+1 sits one index lower.
    for b in 1..d {
        let m = spin.m(b);
        splus[(b - 1, b)] = Complex64::from((s * (s + 1.0) - m * (m + 1.0)).sqrt());
    }
    let sminus = splus.adjoint();
    let sx = (&splus + &sminus) * Complex64::from(0.5);
    let sy = (&splus - &sminus) * (-0.5 * I);
    SpinMatrices { spin, sx, sy, sz, splus, sminus }
}

/// Flat index of T^{ab}.
pub fn transition_index(dim: usize, a: usize, b: usize) -> usize {
    a * dim + b
}

/// Inverse of [`transition_index`].
pub fn transition_pair(dim: usize, flat: usize) -> (usize, usize) {
    (flat / dim, flat % dim)
}

/// Coefficients of a local operator in the transition-operator basis,
/// `A = sum_ab <a|A|b> T^{ab}`, flattened with [`transition_index`].
pub fn transition_coefficients(op: &CMatrix) -> Vec<Complex64> {
    let d = op.nrows();
    let mut out = vec![Complex64::new(0.0, 0.0); d * d];
    for a in 0..d {
        for b in 0..d {
            out[transition_index(d, a, b)] = op[(a, b)];
        }
    }
    out
}

/// Matrix of the transition operator T^{ab}.
pub fn transition_operator(dim: usize, a: usize, b: usize) -> CMatrix {
    let mut t = CMatrix::zeros(dim, dim);
    t[(a, b)] = Complex64::new(1.0, 0.0);
    t
}

fn rotation_angles(axis: [f64; 3]) -> Result<(f64, f64)> {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    if !(n > 1e-14) || !n.is_finite() {
        return Err(Error::Invalid("coherent-state axis must be non-zero".into()));
    }
    let z = (axis[2] / n).clamp(-1.0, 1.0);
    Ok((z.acos(), axis[1].atan2(axis[0])))
}

/// Spin coherent state |S; n>: the +S eigenvector of n.S, obtained by rotating
/// |m = S> with exp(-i phi Sz) exp(-i theta Sy). The global phase is fixed so
/// that the largest-magnitude amplitude is real and positive.
pub fn coherent_state(spin: Spin, axis: [f64; 3]) -> Result<Vec<Complex64>> {
    let (theta, phi) = rotation_angles(axis)?;
    let d = spin.dim();
    let s2 = spin.twice() as i64;
    // Wigner small-d: d^S_{m,S}(theta) = sqrt(C(2S, S+m)) cos^{S+m} sin^{S-m}.
    let (c, sn) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let mut psi: Vec<Complex64> = (0..d)
        .map(|a| {
            let up = s2 - a as i64; // S + m
            let down = a as i64; // S - m
            let amp = (0.5 * ln_binomial(s2 as u64, up as u64)).exp()
                * c.powi(up as i32)
                * sn.powi(down as i32);
            amp * (-I * phi * spin.m(a)).exp()
        })
        .collect();
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let (mut best, mut idx) = (-1.0, 0);
    for (k, z) in psi.iter().enumerate() {
        if z.norm() > best + 1e-14 {
            best = z.norm();
            idx = k;
        }
    }
    let phase = psi[idx].conj() / psi[idx].norm();
    for z in psi.iter_mut() {
        *z = *z * phase / norm;
    }
    Ok(psi)
}

pub(crate) fn ln_binomial(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

pub(crate) fn ln_factorial(n: u64) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// Expectation value <psi|A|psi>.
pub fn expectation(op: &CMatrix, psi: &[Complex64]) -> Complex64 {
    let d = psi.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for a in 0..d {
        let mut row = Complex64::new(0.0, 0.0);
        for b in 0..d {
            row += op[(a, b)] * psi[b];
        }
        acc += psi[a].conj() * row;
    }
    acc
}

/// Collective-moment record for a single spin evolved under B_q (Sz)^2.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleSpinSample {
    pub t: f64,
    pub moments: crate::oat::CollectiveMoments,
    pub sz2: f64,
    pub norm: f64,
}

/// Exact evolution of one spin from |S; x> under B_q (Sz)^2, using the
/// diagonal phases exp(-i B_q m^2 t).
pub fn single_spin_evolution(spin: Spin, bq: f64, times: &[f64]) -> Vec<SingleSpinSample> {
    let ops = spin_operators(spin);
    let psi0 = coherent_state(spin, [1.0, 0.0, 0.0]).expect("x axis is valid");
    let syz = (&ops.sy * &ops.sz + &ops.sz * &ops.sy) * Complex64::from(0.5);
    let sy2 = &ops.sy * &ops.sy;
    let sz2 = &ops.sz * &ops.sz;
    times
        .iter()
        .map(|&t| {
            let psi: Vec<Complex64> = psi0
                .iter()
                .enumerate()
                .map(|(a, z)| z * (-I * bq * spin.m(a).powi(2) * t).exp())
                .collect();
            let mx = expectation(&ops.sx, &psi).re;
            let my = expectation(&ops.sy, &psi).re;
            let mz = expectation(&ops.sz, &psi).re;
            let vyy = expectation(&sy2, &psi).re - my * my;
            let vzz = expectation(&sz2, &psi).re - mz * mz;
            let cyz = expectation(&syz, &psi).re - my * mz;
            SingleSpinSample {
                t,
                moments: crate::oat::CollectiveMoments {
                    mean_x: mx,
                    cov: [[vyy, cyz], [cyz, vzz]],
                    total_j2: Some(spin.value() * (spin.value() + 1.0)),
                },
                sz2: expectation(&sz2, &psi).re,
                norm: psi.iter().map(|z| z.norm_sqr()).sum(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs(m: &CMatrix) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn spins() -> Vec<Spin> {
        (1..=16).map(|t| Spin::from_twice(t).unwrap()).collect()
    }

    #[test]
    fn rejects_non_half_integer() {
        assert!(Spin::from_f64(0.3).is_err());
        assert!(Spin::from_f64(0.0).is_err());
        assert!(Spin::from_f64(-1.5).is_err());
        assert_eq!(Spin::from_f64(1.5).unwrap().twice(), 3);
        assert_eq!(Spin::from_f64(3.0).unwrap().to_string(), "3");
        assert_eq!(Spin::from_f64(1.5).unwrap().to_string(), "3/2");
    }

    #[test]
    fn spin_half_is_pauli_over_two() {
        let ops = spin_operators(Spin::from_twice(1).unwrap());
        let h = Complex64::from(0.5);
        assert_eq!(ops.sx[(0, 1)], h);
        assert_eq!(ops.sx[(1, 0)], h);
        assert_eq!(ops.sy[(0, 1)], -0.5 * I);
        assert_eq!(ops.sy[(1, 0)], 0.5 * I);
        assert_eq!(ops.sz[(0, 0)], h);
        assert_eq!(ops.sz[(1, 1)], -h);
    }

    #[test]
    fn commutators_and_casimir() {
        for spin in spins() {
            let o = spin_operators(spin);
            let c1 = &o.sx * &o.sy - &o.sy * &o.sx - &o.sz * I;
            let c2 = &o.sy * &o.sz - &o.sz * &o.sy - &o.sx * I;
            let c3 = &o.sz * &o.sx - &o.sx * &o.sz - &o.sy * I;
            assert!(max_abs(&c1) < 1e-13, "{spin}");
            assert!(max_abs(&c2) < 1e-13);
            assert!(max_abs(&c3) < 1e-13);
            let s = spin.value();
            let cas = &o.sx * &o.sx + &o.sy * &o.sy + &o.sz * &o.sz
                - CMatrix::identity(spin.dim(), spin.dim()) * Complex64::from(s * (s + 1.0));
            assert!(max_abs(&cas) < 1e-12);
        }
    }

    #[test]
    fn transition_algebra() {
        let d = 4;
        for a in 0..d {
            for b in 0..d {
                assert_eq!(transition_pair(d, transition_index(d, a, b)), (a, b));
                let tab = transition_operator(d, a, b);
                assert_eq!(tab.adjoint(), transition_operator(d, b, a));
                for c in 0..d {
                    for e in 0..d {
                        let prod = &tab * transition_operator(d, c, e);
                        let expect = if b == c {
                            transition_operator(d, a, e)
                        } else {
                            CMatrix::zeros(d, d)
                        };
                        assert_eq!(prod, expect);
                    }
                }
            }
        }
        let mut id = CMatrix::zeros(d, d);
        for a in 0..d {
            id += transition_operator(d, a, a);
        }
        assert_eq!(id, CMatrix::identity(d, d));
    }

    #[test]
    fn observables_reconstruct_from_transition_basis() {
        let o = spin_operators(Spin::from_twice(5).unwrap());
        let d = o.dim();
        let coeffs = transition_coefficients(&o.sy);
        let mut rebuilt = CMatrix::zeros(d, d);
        for (k, c) in coeffs.iter().enumerate() {
            let (a, b) = transition_pair(d, k);
            rebuilt += transition_operator(d, a, b) * *c;
        }
        assert!(max_abs(&(rebuilt - &o.sy)) < 1e-15);
    }

    #[test]
    fn coherent_state_z_is_top_basis_vector() {
        let spin = Spin::from_twice(6).unwrap();
        let psi = coherent_state(spin, [0.0, 0.0, 2.0]).unwrap();
        assert!((psi[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(psi[1..].iter().all(|z| z.norm() < 1e-15));
        assert!(coherent_state(spin, [0.0; 3]).is_err());
    }

    #[test]
    fn coherent_state_x_moments() {
        for spin in spins() {
            let o = spin_operators(spin);
            let psi = coherent_state(spin, [1.0, 0.0, 0.0]).unwrap();
            let s = spin.value();
            let ex = expectation(&o.sx, &psi).re;
            let ey = expectation(&o.sy, &psi).re;
            let ez = expectation(&o.sz, &psi).re;
            assert!((ex - s).abs() < 1e-12);
            assert!(ey.abs() < 1e-12 && ez.abs() < 1e-12);
            let vy = expectation(&(&o.sy * &o.sy), &psi).re;
            let vz = expectation(&(&o.sz * &o.sz), &psi).re;
            assert!((vy - s / 2.0).abs() < 1e-12);
            assert!((vz - s / 2.0).abs() < 1e-12);
        }
        let spin = Spin::from_twice(6).unwrap();
        let o = spin_operators(spin);
        let psi = coherent_state(spin, [1.0, 0.0, 0.0]).unwrap();
        assert!((expectation(&(&o.sz * &o.sz), &psi).re - 1.5).abs() < 1e-12);
    }

    #[test]
    fn coherent_state_is_top_eigenvector_for_any_axis() {
        let spin = Spin::from_twice(5).unwrap();
        let o = spin_operators(spin);
        for axis in [[0.3, -0.4, 0.8], [-1.0, 0.2, -0.1], [0.0, 1.0, 0.0]] {
            let psi = coherent_state(spin, axis).unwrap();
            let n = (axis.iter().map(|v| v * v).sum::<f64>()).sqrt();
            let unit = [axis[0] / n, axis[1] / n, axis[2] / n];
            let a = o.along(unit);
            let mean = expectation(&a, &psi).re;
            let var = expectation(&(&a * &a), &psi).re - mean * mean;
            assert!((mean - spin.value()).abs() < 1e-12);
            assert!(var.abs() < 1e-11);
            // total variance over the three axes equals S
            let tot: f64 = [&o.sx, &o.sy, &o.sz]
                .iter()
                .map(|m| {
                    let e = expectation(m, &psi).re;
                    expectation(&(*m * *m), &psi).re - e * e
                })
                .sum();
            assert!((tot - spin.value()).abs() < 1e-11);
            let big = psi.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let lead = psi.iter().find(|z| (z.norm() - big).abs() < 1e-14).unwrap();
            assert!(lead.im.abs() < 1e-14 && lead.re > 0.0);
        }
    }

    #[test]
    fn single_spin_half_never_squeezes() {
        let spin = Spin::from_twice(1).unwrap();
        let times: Vec<f64> = (0..50).map(|k| 0.1 * k as f64).collect();
        for s in single_spin_evolution(spin, 1.7, &times) {
            let sq = crate::oat::squeezing_from_moments(&s.moments, 1, spin).unwrap();
            assert!((sq.xi2 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_spin_zero_field_is_static() {
        let spin = Spin::from_twice(6).unwrap();
        let series = single_spin_evolution(spin, 0.0, &[0.0, 0.5, 3.0]);
        for s in &series {
            assert!((s.moments.mean_x - 3.0).abs() < 1e-12);
            assert!((s.moments.cov[0][0] - 1.5).abs() < 1e-12);
            assert!((s.moments.cov[1][1] - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn single_spin_conserves_norm_and_sz2() {
        let spin = Spin::from_twice(7).unwrap();
        let times: Vec<f64> = (0..200).map(|k| 0.037 * k as f64).collect();
        let series = single_spin_evolution(spin, 1.3, &times);
        for s in &series {
            assert!((s.norm - 1.0).abs() < 1e-12);
            assert!((s.sz2 - series[0].sz2).abs() < 1e-12);
        }
    }

    #[test]
    fn single_spin_s3_respects_sql() {
        // dense scan: the single-spin minimum stays above 1/(1+S)
        let spin = Spin::from_twice(6).unwrap();
        let times: Vec<f64> = (0..=40000).map(|k| k as f64 * 2.0 * std::f64::consts::PI / 40000.0).collect();
        let best = single_spin_evolution(spin, 1.0, &times)
            .iter()
            .filter_map(|s| crate::oat::squeezing_from_moments(&s.moments, 1, spin).ok())
            .map(|q| q.xi2)
            .fold(f64::INFINITY, f64::min);
        assert!(best >= 0.25 - 1e-12, "min xi2 = {best}");
        // one spin-3 is an OAT rotor of length 3 with chi = B_q
        let opt = crate::oat::optimal_time(&crate::oat::OatParams::new(3.0, 1.0).unwrap()).unwrap();
        assert!((best - opt.xi2_min).abs() < 1e-6, "min xi2 = {best} vs {}", opt.xi2_min);
        assert!((best - 0.416320).abs() < 1e-5);
    }
}
