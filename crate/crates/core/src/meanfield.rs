//! Two-sublattice self-consistent mean-field thermodynamics.
//!
//! Each site sees `H_i = -h_i . (S_i - <S_i>/2) + B_q (S^z_i)^2` with
//! `h^{x,y}_i = (J/2) sum_j D_ij <S^{x,y}_j>` and `h^z_i = -J sum_j D_ij <S^z_j>`.
//! Sublattices A and B are the two checkerboard colors, so the lattice sums
//! reduce to `D_same = (D_0 + D_pi)/2` and `D_other = (D_0 - D_pi)/2` with
//! `D_0 = sum_r D(r)` and `D_pi = sum_r (-1)^(x+y) D(r)`.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{build_couplings, Boundary, LatticeSpec};
use crate::spin::{spin_operators, CMatrix, Spin};

pub const DEFAULT_LATTICE: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeanFieldOptions {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MeanFieldOptions {
    fn default() -> Self {
        MeanFieldOptions { damping: 0.5, tol: 1e-10, max_iter: 100_000 }
    }
}

#[derive(Debug, Clone)]
pub struct MeanFieldModel {
    pub spin: Spin,
    pub j: f64,
    pub bq: f64,
    pub d0: f64,
    pub dpi: f64,
    ops: [CMatrix; 3],
    sz2: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    XyFerro,
    ZNeel,
    Paramagnet,
    Other,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::XyFerro => "xy-ferro",
            Phase::ZNeel => "z-neel",
            Phase::Paramagnet => "paramagnet",
            Phase::Other => "other",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderKind {
    Xy,
    Neel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldState {
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub t: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Per site, counter-term included.
    pub energy: f64,
    pub free_energy: f64,
}

impl MeanFieldState {
    pub fn xy_order(&self) -> f64 {
        0.5 * (self.a[0].hypot(self.a[1]) + self.b[0].hypot(self.b[1]))
    }

    pub fn staggered_z(&self) -> f64 {
        0.5 * (self.a[2] - self.b[2])
    }

    pub fn uniform_z(&self) -> f64 {
        0.5 * (self.a[2] + self.b[2])
    }

    pub fn phase(&self, spin: Spin) -> Phase {
        let thr = 1e-6 * spin.value();
        let xy = self.xy_order() > thr;
        let neel = self.staggered_z().abs() > thr;
        match (xy, neel, self.uniform_z().abs() > thr) {
            (false, false, false) => Phase::Paramagnet,
            (true, false, false) => Phase::XyFerro,
            (false, true, false) => Phase::ZNeel,
            _ => Phase::Other,
        }
    }
}

struct SiteAverage {
    mean: [f64; 3],
    sz2: f64,
    /// `-T ln Z` (lowest level at T = 0).
    free: f64,
}

/// Boltzmann weights and `-T ln Z`; at T = 0 equal weights on the ground manifold.
fn weights(evals: &[f64], t: f64) -> (Vec<f64>, f64) {
    let e0 = evals.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = evals.iter().map(|e| e.abs()).fold(1.0, f64::max);
    let w: Vec<f64> = if t > 0.0 {
        evals.iter().map(|e| (-(e - e0) / t).exp()).collect()
    } else {
        evals.iter().map(|e| if e - e0 <= 1e-12 * scale { 1.0 } else { 0.0 }).collect()
    };
    let z: f64 = w.iter().sum();
    let free = if t > 0.0 { e0 - t * z.ln() } else { e0 };
    (w.iter().map(|x| x / z).collect(), free)
}

fn norm_inf(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).abs()).fold(0.0, f64::max)
}

impl MeanFieldModel {
    pub fn from_sums(spin: Spin, j: f64, bq: f64, d0: f64, dpi: f64) -> Self {
        let ops = spin_operators(spin);
        let sz2 = (0..spin.dim()).map(|a| spin.m(a).powi(2)).collect();
        MeanFieldModel { spin, j, bq, d0, dpi, ops: [ops.sx, ops.sy, ops.sz], sz2 }
    }

    /// Lattice sums from an even `l x l` periodic minimum-image table.
    pub fn new(spin: Spin, j: f64, bq: f64, l: usize) -> Result<Self> {
        if l < 2 || !l.is_multiple_of(2) {
            return Err(Error::Invalid("mean-field lattice must be even".into()));
        }
        let spec = LatticeSpec::new(l, Boundary::Periodic, spin, j, bq)?;
        let table = build_couplings(&spec)?;
        let disp = table.displacement_table().ok_or_else(|| Error::Invalid("no displacement table".into()))?;
        let d0 = disp.iter().sum();
        let dpi = disp
            .iter()
            .enumerate()
            .map(|(r, d)| if (r / l + r % l) % 2 == 0 { *d } else { -*d })
            .sum();
        Ok(Self::from_sums(spin, j, bq, d0, dpi))
    }

    pub fn with_bq(&self, bq: f64) -> Self {
        MeanFieldModel { bq, ..self.clone() }
    }

    fn d_same(&self) -> f64 {
        0.5 * (self.d0 + self.dpi)
    }

    fn d_other(&self) -> f64 {
        0.5 * (self.d0 - self.dpi)
    }

    fn field(&self, own: &[f64; 3], other: &[f64; 3]) -> [f64; 3] {
        let (s, o) = (self.d_same(), self.d_other());
        [
            0.5 * self.j * (s * own[0] + o * other[0]),
            0.5 * self.j * (s * own[1] + o * other[1]),
            -self.j * (s * own[2] + o * other[2]),
        ]
    }

    fn site(&self, h: [f64; 3], t: f64) -> SiteAverage {
        if h[1] == 0.0 {
            return self.site_real(h, t);
        }
        let d = self.spin.dim();
        let mut ham = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            d,
            self.sz2.iter().map(|v| C::from(self.bq * v)),
        ));
        for (k, op) in self.ops.iter().enumerate() {
            if h[k] != 0.0 {
                ham -= op * C::from(h[k]);
            }
        }
        let eig = SymmetricEigen::new(ham);
        let evals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let (w, free) = weights(&evals, t);
        let mut mean = [0.0; 3];
        let mut sz2 = 0.0;
        for (n, p) in w.iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            let v = eig.eigenvectors.column(n);
            for (k, op) in self.ops.iter().enumerate() {
                mean[k] += p * (v.adjoint() * op * v)[(0, 0)].re;
            }
            sz2 += p * v.iter().zip(&self.sz2).map(|(c, m)| c.norm_sqr() * m).sum::<f64>();
        }
        SiteAverage { mean, sz2, free }
    }

    /// Real symmetric path when the field has no y component.
    fn site_real(&self, h: [f64; 3], t: f64) -> SiteAverage {
        let d = self.spin.dim();
        let mut ham = DMatrix::<f64>::zeros(d, d);
        for a in 0..d {
            ham[(a, a)] = self.bq * self.sz2[a] - h[2] * self.spin.m(a);
            if a + 1 < d {
                let x = self.ops[0][(a, a + 1)].re;
                ham[(a, a + 1)] = -h[0] * x;
                ham[(a + 1, a)] = -h[0] * x;
            }
        }
        let eig = SymmetricEigen::new(ham);
        let evals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let (w, free) = weights(&evals, t);
        let mut mean = [0.0; 3];
        let mut sz2 = 0.0;
        for (n, p) in w.iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            let v = eig.eigenvectors.column(n);
            for a in 0..d {
                let pa = v[a] * v[a];
                mean[2] += p * pa * self.spin.m(a);
                sz2 += p * pa * self.sz2[a];
                if a + 1 < d {
                    mean[0] += p * 2.0 * v[a] * v[a + 1] * self.ops[0][(a, a + 1)].re;
                }
            }
        }
        SiteAverage { mean, sz2, free }
    }

    /// One undamped application of the self-consistency map.
    pub fn update(&self, a: &[f64; 3], b: &[f64; 3], t: f64) -> ([f64; 3], [f64; 3]) {
        let ma = self.site(self.field(a, b), t).mean;
        if a == b {
            return (ma, ma);
        }
        (ma, self.site(self.field(b, a), t).mean)
    }

    fn evaluate(&self, a: [f64; 3], b: [f64; 3], t: f64, converged: bool, iterations: usize) -> MeanFieldState {
        let (ha, hb) = (self.field(&a, &b), self.field(&b, &a));
        let (sa, sb) = (self.site(ha, t), self.site(hb, t));
        let counter = |h: &[f64; 3], m: &[f64; 3]| 0.5 * (h[0] * m[0] + h[1] * m[1] + h[2] * m[2]);
        let energy = 0.5 * (-counter(&ha, &a) + self.bq * sa.sz2 - counter(&hb, &b) + self.bq * sb.sz2);
        let free_energy = 0.5 * (sa.free + counter(&ha, &a) + sb.free + counter(&hb, &b));
        MeanFieldState { a, b, t, converged, iterations, energy, free_energy }
    }

    /// Damped fixed-point iteration from `seed`; `t = 0` uses the ground manifold.
    pub fn solve(&self, t: f64, seed: ([f64; 3], [f64; 3]), opts: &MeanFieldOptions) -> Result<MeanFieldState> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Invalid("temperature must be finite and >= 0".into()));
        }
        if !(opts.damping > 0.0 && opts.damping <= 1.0) {
            return Err(Error::Invalid("damping must lie in (0, 1]".into()));
        }
        let s = self.spin.value();
        if seed.0.iter().chain(&seed.1).any(|v| !v.is_finite() || v.abs() > s) {
            return Err(Error::Invalid("seed outside the spin sphere".into()));
        }
        let eta = opts.damping;
        let (mut a, mut b) = seed;
        for it in 1..=opts.max_iter {
            let (ua, ub) = self.update(&a, &b, t);
            let na: [f64; 3] = std::array::from_fn(|k| (1.0 - eta) * a[k] + eta * ua[k]);
            let nb: [f64; 3] = std::array::from_fn(|k| (1.0 - eta) * b[k] + eta * ub[k]);
            let change = norm_inf(&na, &a).max(norm_inf(&nb, &b));
            a = na;
            b = nb;
            if change < opts.tol {
                return Ok(self.evaluate(a, b, t, true, it));
            }
        }
        Ok(self.evaluate(a, b, t, false, opts.max_iter))
    }

    /// Both ordered seeds and the paramagnet.
    pub fn seeds(&self) -> Vec<([f64; 3], [f64; 3])> {
        let s = self.spin.value();
        vec![([s, 0.0, 0.0], [s, 0.0, 0.0]), ([0.0, 0.0, s], [0.0, 0.0, -s]), ([0.0; 3], [0.0; 3])]
    }

    /// Lowest free-energy branch among the standard seeds. Converged branches
    /// win over unconverged ones.
    pub fn equilibrium(&self, t: f64, opts: &MeanFieldOptions) -> Result<MeanFieldState> {
        let mut best: Option<MeanFieldState> = None;
        for seed in self.seeds() {
            let st = self.solve(t, seed, opts)?;
            best = Some(match best {
                None => st,
                Some(b) => {
                    let better = (st.converged && !b.converged)
                        || (st.converged == b.converged && st.free_energy < b.free_energy - 1e-12 * st.free_energy.abs().max(1.0));
                    if better {
                        st
                    } else {
                        b
                    }
                }
            });
        }
        Ok(best.expect("at least one seed"))
    }

    /// Linear-response instability `lambda` of the paramagnet toward `kind`;
    /// `lambda > 1` means the paramagnet is unstable. Infinite when the ground
    /// manifold is degenerate and coupled by the order parameter.
    pub fn paramagnet_instability(&self, kind: OrderKind, t: f64) -> f64 {
        let d = self.spin.dim();
        let e: Vec<f64> = self.sz2.iter().map(|m| self.bq * m).collect();
        let e0 = e.iter().copied().fold(f64::INFINITY, f64::min);
        let scale = e.iter().map(|x| x.abs()).fold(1.0, f64::max);
        let p: Vec<f64> = if t > 0.0 {
            let w: Vec<f64> = e.iter().map(|x| (-(x - e0) / t).exp()).collect();
            let z: f64 = w.iter().sum();
            w.iter().map(|x| x / z).collect()
        } else {
            let w: Vec<f64> = e.iter().map(|x| if x - e0 <= 1e-12 * scale { 1.0 } else { 0.0 }).collect();
            let z: f64 = w.iter().sum();
            w.iter().map(|x| x / z).collect()
        };
        let (op, coupling) = match kind {
            OrderKind::Xy => (&self.ops[0], 0.5 * self.j * self.d0),
            OrderKind::Neel => (&self.ops[2], -self.j * self.dpi),
        };
        let mean: f64 = (0..d).map(|a| p[a] * op[(a, a)].re).sum();
        let mut chi = 0.0;
        for a in 0..d {
            for b in 0..d {
                let o2 = op[(a, b)].norm_sqr();
                if o2 == 0.0 {
                    continue;
                }
                let de = e[a] - e[b];
                if de.abs() <= 1e-12 * scale {
                    if p[a] > 0.0 {
                        if t == 0.0 {
                            return if coupling > 0.0 { f64::INFINITY } else { 0.0 };
                        }
                        chi += p[a] * o2 / t;
                    }
                } else {
                    chi += o2 * (p[b] - p[a]) / de;
                }
            }
        }
        if t > 0.0 {
            chi -= mean * mean / t;
        }
        coupling * chi
    }

    fn ordered_seed(&self, kind: OrderKind) -> ([f64; 3], [f64; 3]) {
        let s = self.spin.value();
        match kind {
            OrderKind::Xy => ([s, 0.0, 0.0], [s, 0.0, 0.0]),
            OrderKind::Neel => ([0.0, 0.0, s], [0.0, 0.0, -s]),
        }
    }

    fn order_of(&self, kind: OrderKind, st: &MeanFieldState) -> f64 {
        match kind {
            OrderKind::Xy => st.xy_order(),
            OrderKind::Neel => st.staggered_z().abs(),
        }
    }

    /// Ordered solution of the given kind that beats the paramagnet.
    fn ordered_branch(&self, kind: OrderKind, t: f64, opts: &MeanFieldOptions) -> Result<Option<MeanFieldState>> {
        let st = self.solve(t, self.ordered_seed(kind), opts)?;
        let para = self.solve(t, ([0.0; 3], [0.0; 3]), opts)?;
        let thr = 1e-3 * self.spin.value();
        let ok = st.converged && self.order_of(kind, &st) > thr && st.free_energy < para.free_energy;
        Ok(if ok { Some(st) } else { None })
    }

    fn is_ordered(&self, kind: OrderKind, t: f64, opts: &MeanFieldOptions) -> Result<bool> {
        Ok(self.paramagnet_instability(kind, t) > 1.0 || self.ordered_branch(kind, t, opts)?.is_some())
    }

    fn temperature_scale(&self) -> f64 {
        let s = self.spin.value();
        let c = (0.5 * self.j * self.d0).abs().max((self.j * self.dpi).abs());
        (c * s * (s + 1.0)).max(self.bq.abs() * s * s).max(1e-6)
    }

    /// Highest temperature with `kind` order, `None` if there is none at any T.
    ///
    /// The paramagnet instability line is located on a log grid and refined by
    /// bisection; an ordered-seed solve just above it catches first-order
    /// transitions, which are then followed upward.
    pub fn critical_temperature(&self, kind: OrderKind, opts: &MeanFieldOptions) -> Result<Option<f64>> {
        let mut hi = 4.0 * self.temperature_scale();
        while self.paramagnet_instability(kind, hi) > 1.0 {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::Numerical("critical temperature does not close".into()));
            }
        }
        const GRID: usize = 256;
        let lo = hi * 1e-6;
        let grid: Vec<f64> = (0..=GRID).map(|k| lo * (hi / lo).powf(k as f64 / GRID as f64)).collect();
        let lam = |t: f64| self.paramagnet_instability(kind, t);
        let linear = match grid.iter().rposition(|&t| lam(t) > 1.0) {
            Some(k) => {
                let (mut a, mut b) = (grid[k], grid[k + 1]);
                for _ in 0..100 {
                    let m = 0.5 * (a + b);
                    if lam(m) > 1.0 {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                Some(0.5 * (a + b))
            }
            None if lam(0.0) > 1.0 => Some(0.0),
            None => None,
        };
        let base = linear.unwrap_or(0.0);
        let probe = base + 0.01 * base.max(self.temperature_scale() * 1e-3);
        if self.ordered_branch(kind, probe, opts)?.is_none() {
            if linear.is_none() && self.ordered_branch(kind, 0.0, opts)?.is_none() {
                return Ok(None);
            }
            return Ok(Some(base));
        }
        let (mut a, mut b) = (probe, hi);
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if self.is_ordered(kind, m, opts)? {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(Some(0.5 * (a + b)))
    }

    /// CSS energy per site, `-(J S^2/4) D_0 + B_q S/2`.
    pub fn css_energy(&self) -> f64 {
        let s = self.spin.value();
        -0.25 * self.j * s * s * self.d0 + 0.5 * self.bq * s
    }

    /// Temperature where the equilibrium energy reaches the CSS energy.
    pub fn t_css(&self, opts: &MeanFieldOptions) -> Result<f64> {
        let target = self.css_energy();
        let tol = 1e-12 * target.abs().max(1.0);
        let e = |t: f64| -> Result<f64> { Ok(self.equilibrium(t, opts)?.energy) };
        if e(0.0)? >= target - tol {
            return Ok(0.0);
        }
        let s = self.spin.value();
        let e_inf = self.bq * s * (s + 1.0) / 3.0;
        if target >= e_inf {
            return Err(Error::Undefined(format!("CSS energy {target} beyond the infinite-temperature value {e_inf}")));
        }
        let mut hi = self.temperature_scale();
        while e(hi)? < target {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::Numerical("T_CSS bracket does not close".into()));
            }
        }
        let (mut a, mut b) = (0.0, hi);
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if e(m)? < target {
                a = m;
            } else {
                b = m;
            }
            if b - a < 1e-10 * b {
                break;
            }
        }
        Ok(0.5 * (a + b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanWindow {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundaryWindows {
    pub neel: ScanWindow,
    pub css: ScanWindow,
    pub paramagnet: ScanWindow,
    /// Relative bisection tolerance on B_q.
    pub tol: f64,
}

impl Default for BoundaryWindows {
    fn default() -> Self {
        BoundaryWindows {
            neel: ScanWindow { lo: -5.0, hi: 0.0 },
            css: ScanWindow { lo: 1.0, hi: 200.0 },
            paramagnet: ScanWindow { lo: 1.0, hi: 1000.0 },
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseBoundaries {
    pub bq_m: f64,
    pub bq_c: f64,
    pub bq_p: f64,
}

/// Bisection on a sign change of `f` over `w` in units of `|J|`.
fn bisect_bq(
    w: ScanWindow,
    tol: f64,
    what: &str,
    mut f: impl FnMut(f64) -> Result<bool>,
) -> Result<f64> {
    if !(w.lo < w.hi) {
        return Err(Error::Invalid(format!("empty {what} window")));
    }
    let (flo, fhi) = (f(w.lo)?, f(w.hi)?);
    if flo == fhi {
        return Err(Error::Undefined(format!("{what} boundary outside [{}, {}]", w.lo, w.hi)));
    }
    let (mut a, mut b) = (w.lo, w.hi);
    while (b - a) > tol * a.abs().max(b.abs()).max(1e-3) {
        let m = 0.5 * (a + b);
        if f(m)? == flo {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

impl MeanFieldModel {
    /// T = 0 boundary between uniform xy order and z-Neel order.
    pub fn bq_m(&self, w: ScanWindow, tol: f64, opts: &MeanFieldOptions) -> Result<f64> {
        bisect_bq(w, tol, "Neel", |bq| {
            let m = self.with_bq(bq);
            let xy = m.solve(0.0, m.ordered_seed(OrderKind::Xy), opts)?;
            let neel = m.solve(0.0, m.ordered_seed(OrderKind::Neel), opts)?;
            Ok(xy.energy < neel.energy)
        })
    }

    /// B_q where the xy critical temperature meets T_CSS. Since the
    /// equilibrium energy grows with T, `T_c > T_CSS` is decided by comparing
    /// the energy at T_c with the CSS energy, which avoids a nested root search.
    pub fn bq_c(&self, w: ScanWindow, tol: f64, opts: &MeanFieldOptions) -> Result<f64> {
        bisect_bq(w, tol, "CSS", |bq| {
            let m = self.with_bq(bq);
            let Some(tc) = m.critical_temperature(OrderKind::Xy, opts)? else {
                return Ok(false);
            };
            Ok(m.equilibrium(tc, opts)?.energy > m.css_energy())
        })
    }

    /// T = 0 disappearance of xy order on the positive-B_q side.
    pub fn bq_p(&self, w: ScanWindow, tol: f64, opts: &MeanFieldOptions) -> Result<f64> {
        bisect_bq(w, tol, "paramagnet", |bq| self.with_bq(bq).is_ordered(OrderKind::Xy, 0.0, opts))
    }

    pub fn phase_boundaries(&self, w: &BoundaryWindows, opts: &MeanFieldOptions) -> Result<PhaseBoundaries> {
        Ok(PhaseBoundaries {
            bq_m: self.bq_m(w.neel, w.tol, opts)?,
            bq_c: self.bq_c(w.css, w.tol, opts)?,
            bq_p: self.bq_p(w.paramagnet, w.tol, opts)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseRow {
    pub bq: f64,
    pub tc_xy: Option<f64>,
    pub tc_neel: Option<f64>,
    pub t_css: Option<f64>,
    /// Order parameters of the equilibrium state at T_CSS.
    pub xy_order: Option<f64>,
    pub neel_order: Option<f64>,
    pub phase: Option<Phase>,
}

pub fn phase_diagram(model: &MeanFieldModel, bqs: &[f64], opts: &MeanFieldOptions) -> Result<Vec<PhaseRow>> {
    bqs.par_iter()
        .map(|&bq| {
            let m = model.with_bq(bq);
            let tc_xy = m.critical_temperature(OrderKind::Xy, opts)?;
            let tc_neel = m.critical_temperature(OrderKind::Neel, opts)?;
            let t_css = match m.t_css(opts) {
                Ok(t) => Some(t),
                Err(Error::Undefined(_)) => None,
                Err(e) => return Err(e),
            };
            let st = t_css.map(|t| m.equilibrium(t, opts)).transpose()?;
            Ok(PhaseRow {
                bq,
                tc_xy,
                tc_neel,
                t_css,
                xy_order: st.map(|s| s.xy_order()),
                neel_order: st.map(|s| s.staggered_z().abs()),
                phase: st.map(|s| s.phase(m.spin)),
            })
        })
        .collect()
}

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_phase_diagram_csv<W: Write>(rows: &[PhaseRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["B_q", "T_c_xy", "T_c_neel", "T_css", "xy_order", "neel_order", "phase"]).map_err(io)?;
    for r in rows {
        w.write_record([
            r.bq.to_string(),
            opt_field(r.tc_xy),
            opt_field(r.tc_neel),
            opt_field(r.t_css),
            opt_field(r.xy_order),
            opt_field(r.neel_order),
            r.phase.map(|p| p.to_string()).unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Thermal average of `B_q (S^z)^2` for a lone spin, by direct summation.
pub fn single_site_energy(spin: Spin, bq: f64, t: f64) -> f64 {
    let m2: Vec<f64> = (0..spin.dim()).map(|a| spin.m(a).powi(2)).collect();
    let e0 = m2.iter().map(|m| bq * m).fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = m2.iter().map(|m| (-(bq * m - e0) / t).exp()).collect();
    let z: f64 = w.iter().sum();
    m2.iter().zip(&w).map(|(m, p)| bq * m * p).sum::<f64>() / z
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spin(twice: i64) -> Spin {
        Spin::from_twice(twice).unwrap()
    }

    fn model(twice: i64, bq: f64) -> MeanFieldModel {
        MeanFieldModel::new(spin(twice), 1.0, bq, 16).unwrap()
    }

    #[test]
    fn infinite_temperature_is_paramagnetic() {
        let m = model(6, 2.0);
        let st = m.equilibrium(1e6, &MeanFieldOptions::default()).unwrap();
        assert!(st.converged);
        assert!(norm_inf(&st.a, &[0.0; 3]) < 1e-8 && norm_inf(&st.b, &[0.0; 3]) < 1e-8);
        assert_eq!(st.phase(m.spin), Phase::Paramagnet);
    }

    #[test]
    fn ground_state_at_zero_bq_is_fully_polarized() {
        for twice in [1, 6, 16] {
            let m = model(twice, 0.0);
            let st = m.equilibrium(0.0, &MeanFieldOptions::default()).unwrap();
            assert!(st.converged);
            assert!((st.xy_order() - m.spin.value()).abs() < 1e-9, "{}", st.xy_order());
            assert_eq!(st.phase(m.spin), Phase::XyFerro);
            assert!((st.energy - m.css_energy()).abs() < 1e-9);
        }
    }

    #[test]
    fn converged_state_is_a_fixed_point() {
        let m = model(6, 10.0);
        let st = m.equilibrium(5.0, &MeanFieldOptions::default()).unwrap();
        let (a, b) = m.update(&st.a, &st.b, st.t);
        assert!(norm_inf(&a, &st.a).max(norm_inf(&b, &st.b)) < 1e-9);
    }

    #[test]
    fn negative_bq_ground_state_is_neel() {
        let m = model(6, -3.0);
        let st = m.equilibrium(0.0, &MeanFieldOptions::default()).unwrap();
        assert_eq!(st.phase(m.spin), Phase::ZNeel);
        assert!((st.staggered_z().abs() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn paramagnet_instability_matches_perturbation_theory() {
        // T = 0, B_q > 0, integer S: chi_xx = S(S+1)/B_q
        let m = model(6, 10.0);
        let lam = m.paramagnet_instability(OrderKind::Xy, 0.0);
        assert!((lam - 0.5 * m.d0 * 12.0 / 10.0).abs() < 1e-12);
        // B_q = 0 Curie law: chi = S(S+1)/(3T)
        let m = model(6, 0.0);
        let lam = m.paramagnet_instability(OrderKind::Xy, 7.0);
        assert!((lam - 0.5 * m.d0 * 12.0 / 21.0).abs() < 1e-12);
        let lam = m.paramagnet_instability(OrderKind::Neel, 7.0);
        assert!((lam + m.dpi * 12.0 / 21.0).abs() < 1e-12);
    }

    #[test]
    fn bq_p_is_the_linear_instability_point() {
        let m = model(6, 0.0);
        let bqp = m.bq_p(ScanWindow { lo: 1.0, hi: 200.0 }, 1e-9, &MeanFieldOptions::default()).unwrap();
        assert!((bqp - 0.5 * m.d0 * 12.0).abs() < 1e-6 * bqp);
    }

    #[test]
    fn far_above_bq_p_there_is_no_order() {
        let m = model(6, 500.0);
        assert_eq!(m.critical_temperature(OrderKind::Xy, &MeanFieldOptions::default()).unwrap(), None);
    }

    #[test]
    fn curie_temperature_at_zero_bq() {
        // T_c = (J/2) D_0 S(S+1)/3 for the isotropic paramagnet
        let m = model(6, 0.0);
        let tc = m.critical_temperature(OrderKind::Xy, &MeanFieldOptions::default()).unwrap().unwrap();
        assert!((tc - 0.5 * m.d0 * 4.0).abs() < 1e-8 * tc);
    }

    #[test]
    fn t_css_vanishes_at_zero_bq() {
        let m = model(6, 0.0);
        assert_eq!(m.t_css(&MeanFieldOptions::default()).unwrap(), 0.0);
    }

    #[test]
    fn decoupled_t_css_matches_single_site_oracle() {
        let m = MeanFieldModel::from_sums(spin(6), 0.0, 2.0, 9.0, -2.6);
        let t = m.t_css(&MeanFieldOptions::default()).unwrap();
        assert!((single_site_energy(m.spin, 2.0, t) - 2.0 * 3.0 / 2.0).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = model(2, 0.0);
        let o = MeanFieldOptions::default();
        assert!(m.solve(-1.0, ([0.0; 3], [0.0; 3]), &o).is_err());
        assert!(m.solve(1.0, ([2.0, 0.0, 0.0], [0.0; 3]), &o).is_err());
        assert!(m.solve(1.0, ([0.0; 3], [0.0; 3]), &MeanFieldOptions { damping: 0.0, ..o }).is_err());
        assert!(MeanFieldModel::new(spin(2), 1.0, 0.0, 7).is_err());
    }

    #[test]
    fn non_convergence_is_reported() {
        let m = model(6, 0.0);
        let st = m.solve(1.0, ([3.0, 0.0, 0.0], [0.0, 3.0, 0.0]), &MeanFieldOptions { max_iter: 2, ..Default::default() }).unwrap();
        assert!(!st.converged);
        assert_eq!(st.iterations, 2);
    }

    #[test]
    fn phase_diagram_csv_leaves_undefined_cells_empty() {
        let rows = [PhaseRow { bq: 1.0, tc_xy: Some(2.0), tc_neel: None, t_css: None, xy_order: None, neel_order: None, phase: None }];
        let mut buf = Vec::new();
        write_phase_diagram_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "1,2,,,,,");
    }
}
