//! Exact dynamics of tiny clusters by dense diagonalization.
//!
//! Product basis: site 0 is the most significant digit, each digit ordered by
//! decreasing m. In that basis the Hamiltonian is real symmetric.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{build_couplings, CouplingTable, LatticeSpec};
use crate::observe::Observation;
use crate::oat::CollectiveMoments;
use crate::spin::{coherent_state, spin_operators, CMatrix, Spin};

pub const DEFAULT_DIM_CAP: usize = 4096;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Dense Hamiltonian and the data needed to evaluate observables.
#[derive(Debug, Clone)]
pub struct EdSystem {
    pub spec: LatticeSpec,
    pub n_sites: usize,
    pub dim: usize,
    pub hamiltonian: DMatrix<f64>,
}

fn hilbert_dim(spin: Spin, n: usize, cap: usize) -> Result<usize> {
    let d = spin.dim();
    let mut dim: usize = 1;
    for _ in 0..n {
        dim = dim.checked_mul(d).filter(|&v| v <= cap).ok_or(Error::DimensionCap {
            dim: d.checked_pow(n as u32).unwrap_or(usize::MAX),
            cap,
        })?;
    }
    Ok(dim)
}

fn digit(state: usize, site: usize, n: usize, d: usize) -> usize {
    (state / d.pow((n - 1 - site) as u32)) % d
}

pub fn build_hamiltonian(spec: &LatticeSpec, table: &CouplingTable, cap: usize) -> Result<DMatrix<f64>> {
    let n = spec.n_sites();
    let spin = spec.spin;
    let d = spin.dim();
    let dim = hilbert_dim(spin, n, cap)?;
    let s = spin.value();
    let m: Vec<f64> = (0..d).map(|a| spin.m(a)).collect();
    // <a-1| S+ |a>
    let up: Vec<f64> = (0..d)
        .map(|a| if a == 0 { 0.0 } else { (s * (s + 1.0) - m[a] * (m[a] + 1.0)).sqrt() })
        .collect();
    let pow: Vec<usize> = (0..n).map(|i| d.pow((n - 1 - i) as u32)).collect();
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for st in 0..dim {
        let digits: Vec<usize> = (0..n).map(|i| digit(st, i, n, d)).collect();
        let mut diag = 0.0;
        for i in 0..n {
            diag += spec.bq * m[digits[i]] * m[digits[i]];
            for j in (i + 1)..n {
                let jd = spec.j * table.d(i, j);
                diag += jd * m[digits[i]] * m[digits[j]];
                // -(1/4)(S+_i S-_j + S-_i S+_j)
                let (ai, aj) = (digits[i], digits[j]);
                if ai > 0 && aj + 1 < d {
                    let amp = up[ai] * up[aj + 1];
                    let to = st - pow[i] + pow[j];
                    h[(to, st)] += -0.25 * jd * amp;
                }
                if aj > 0 && ai + 1 < d {
                    let amp = up[ai + 1] * up[aj];
                    let to = st + pow[i] - pow[j];
                    h[(to, st)] += -0.25 * jd * amp;
                }
            }
        }
        h[(st, st)] += diag;
    }
    Ok(h)
}

impl EdSystem {
    pub fn new(spec: &LatticeSpec, cap: usize) -> Result<Self> {
        let table = build_couplings(spec)?;
        Self::with_table(spec, &table, cap)
    }

    pub fn with_table(spec: &LatticeSpec, table: &CouplingTable, cap: usize) -> Result<Self> {
        let hamiltonian = build_hamiltonian(spec, table, cap)?;
        Ok(EdSystem {
            spec: *spec,
            n_sites: spec.n_sites(),
            dim: hamiltonian.nrows(),
            hamiltonian,
        })
    }

    fn d(&self) -> usize {
        self.spec.spin.dim()
    }

    /// |CSS_x> as a product vector.
    pub fn css_x(&self) -> Vec<Complex64> {
        let local = coherent_state(self.spec.spin, [1.0, 0.0, 0.0]).expect("x axis is valid");
        let mut psi = vec![Complex64::from(1.0)];
        for _ in 0..self.n_sites {
            let mut next = Vec::with_capacity(psi.len() * local.len());
            for a in &psi {
                for b in &local {
                    next.push(a * b);
                }
            }
            psi = next;
        }
        psi
    }

    /// `op` acting on `site`.
    pub fn apply_local(&self, op: &CMatrix, site: usize, psi: &[Complex64]) -> Vec<Complex64> {
        let d = self.d();
        let stride = d.pow((self.n_sites - 1 - site) as u32);
        let mut out = vec![Complex64::from(0.0); psi.len()];
        for (st, amp) in psi.iter().enumerate() {
            if *amp == Complex64::from(0.0) {
                continue;
            }
            let b = (st / stride) % d;
            let base = st - b * stride;
            for a in 0..d {
                let v = op[(a, b)];
                if v != Complex64::from(0.0) {
                    out[base + a * stride] += v * amp;
                }
            }
        }
        out
    }

    pub fn apply_collective(&self, op: &CMatrix, psi: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::from(0.0); psi.len()];
        for i in 0..self.n_sites {
            for (o, v) in out.iter_mut().zip(self.apply_local(op, i, psi)) {
                *o += v;
            }
        }
        out
    }

    pub fn energy(&self, psi: &[Complex64]) -> f64 {
        let mut e = 0.0;
        for r in 0..self.dim {
            let mut row = Complex64::from(0.0);
            for c in 0..self.dim {
                let h = self.hamiltonian[(r, c)];
                if h != 0.0 {
                    row += h * psi[c];
                }
            }
            e += (psi[r].conj() * row).re;
        }
        e
    }

    /// Collective moments, energy and <J^2> of a pure state.
    pub fn observe(&self, t: f64, psi: &[Complex64]) -> Observation {
        let ops = spin_operators(self.spec.spin);
        let dot = |u: &[Complex64], v: &[Complex64]| -> Complex64 { u.iter().zip(v).map(|(a, b)| a.conj() * b).sum() };
        let xp = self.apply_collective(&ops.sx, psi);
        let yp = self.apply_collective(&ops.sy, psi);
        let zp = self.apply_collective(&ops.sz, psi);
        let mean = [dot(psi, &xp).re, dot(psi, &yp).re, dot(psi, &zp).re];
        let vyy = dot(&yp, &yp).re - mean[1] * mean[1];
        let vzz = dot(&zp, &zp).re - mean[2] * mean[2];
        let cyz = dot(&yp, &zp).re - mean[1] * mean[2];
        let j2 = dot(&xp, &xp).re + dot(&yp, &yp).re + dot(&zp, &zp).re;
        Observation::new(
            t,
            mean,
            CollectiveMoments { mean_x: mean[0], cov: [[vyy, cyz], [cyz, vzz]], total_j2: Some(j2) },
            self.energy(psi),
            self.n_sites,
            self.spec.spin,
        )
    }

    pub fn eigen(&self) -> SymmetricEigen<f64, nalgebra::Dyn> {
        SymmetricEigen::new(self.hamiltonian.clone())
    }

    /// States at each time, via the spectral decomposition.
    pub fn evolve_states(&self, psi0: &[Complex64], times: &[f64]) -> Vec<Vec<Complex64>> {
        let eig = self.eigen();
        let v = &eig.eigenvectors;
        // c = V^T psi0
        let coeff: Vec<Complex64> = (0..self.dim)
            .map(|k| (0..self.dim).map(|r| v[(r, k)] * psi0[r]).sum())
            .collect();
        times
            .iter()
            .map(|&t| {
                let ph: Vec<Complex64> = coeff
                    .iter()
                    .zip(eig.eigenvalues.iter())
                    .map(|(c, e)| c * (-I * e * t).exp())
                    .collect();
                (0..self.dim)
                    .map(|r| (0..self.dim).map(|k| v[(r, k)] * ph[k]).sum())
                    .collect()
            })
            .collect()
    }

    /// States at each time by fixed-step RK4 on i d psi/dt = H psi with
    /// `substeps` steps between consecutive grid times. Independent check of
    /// [`EdSystem::evolve_states`].
    pub fn evolve_states_rk4(&self, psi0: &[Complex64], times: &[f64], substeps: usize) -> Vec<Vec<Complex64>> {
        let h = &self.hamiltonian;
        let hc = h.map(Complex64::from);
        let deriv = |p: &DVector<Complex64>| -> DVector<Complex64> { (&hc * p) * (-I) };
        let mut psi = DVector::from_column_slice(psi0);
        let mut now = 0.0;
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            let span = t - now;
            if span != 0.0 {
                let dt = span / substeps as f64;
                let c = Complex64::from(dt);
                for _ in 0..substeps {
                    let k1 = deriv(&psi);
                    let k2 = deriv(&(&psi + &k1 * (c * 0.5)));
                    let k3 = deriv(&(&psi + &k2 * (c * 0.5)));
                    let k4 = deriv(&(&psi + &k3 * c));
                    let two = Complex64::from(2.0);
                    psi += (k1 + k2 * two + k3 * two + k4) * (c / 6.0);
                }
                now = t;
            }
            out.push(psi.iter().copied().collect());
        }
        out
    }

    /// Density matrix |psi><psi|.
    pub fn density(psi: &[Complex64]) -> CMatrix {
        let n = psi.len();
        CMatrix::from_fn(n, n, |r, c| psi[r] * psi[c].conj())
    }

    /// d rho / dt = -i [H, rho].
    pub fn density_derivative(&self, rho: &CMatrix) -> CMatrix {
        let h = self.hamiltonian.map(Complex64::from);
        (&h * rho - rho * &h) * (-I)
    }

    /// Reduced density matrix of the listed sites (in that order).
    pub fn reduce(&self, rho: &CMatrix, sites: &[usize]) -> CMatrix {
        let n = self.n_sites;
        let d = self.d();
        let keep = d.pow(sites.len() as u32);
        let rest: Vec<usize> = (0..n).filter(|s| !sites.contains(s)).collect();
        let env = d.pow(rest.len() as u32);
        let compose = |kept: usize, other: usize| -> usize {
            let mut digits = vec![0; n];
            let mut k = kept;
            for &s in sites.iter().rev() {
                digits[s] = k % d;
                k /= d;
            }
            let mut o = other;
            for &s in rest.iter().rev() {
                digits[s] = o % d;
                o /= d;
            }
            digits.iter().fold(0, |acc, &v| acc * d + v)
        };
        let mut out = CMatrix::zeros(keep, keep);
        for r in 0..keep {
            for c in 0..keep {
                let mut acc = Complex64::from(0.0);
                for e in 0..env {
                    acc += rho[(compose(r, e), compose(c, e))];
                }
                out[(r, c)] = acc;
            }
        }
        out
    }

    /// Exact observables on a time grid starting from |CSS_x>.
    pub fn evolve_exact(&self, times: &[f64]) -> Vec<Observation> {
        let psi0 = self.css_x();
        self.evolve_states(&psi0, times)
            .iter()
            .zip(times)
            .map(|(psi, &t)| self.observe(t, psi))
            .collect()
    }
}

pub fn evolve_exact(spec: &LatticeSpec, times: &[f64], cap: usize) -> Result<Vec<Observation>> {
    Ok(EdSystem::new(spec, cap)?.evolve_exact(times))
}
