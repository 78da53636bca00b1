//! Second-order truncated cumulant expansion (TCE).
//!
//! The stored moments are the one-site and two-site reduced density
//! matrices. With `T^{ab} = |a><b|` they carry exactly the moment set
//! `<T_i^{ab}> = rho_i[b, a]` and `<T_i^{ab} T_j^{cd}> = rho_ij[(b, d), (a, c)]`.
//! Three-site moments are closed by setting the third cumulant to zero.
//!
//! Two storage layouts:
//! * `Translation`: one site matrix and one pair matrix per displacement
//!   class `{r, -r}` on a periodic lattice;
//! * `Full`: every site and every pair `i < j`, for any boundary.

pub mod checkpoint;
mod integrate;
pub mod kernel;
mod rhs;

use std::sync::Arc;

use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{build_couplings, Boundary, CouplingTable, LatticeSpec};
use crate::oat::CollectiveMoments;
use crate::observe::Observation;
use crate::spin::{coherent_state, spin_operators, Spin};

pub use integrate::{
    converged_dt, default_dt, integrate, IntegrateOptions, MonitorOptions, RMaxMonitor, StopReason, TceRunReport,
};
use kernel::{Sparse, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Storage {
    Translation,
    Full,
}

impl std::fmt::Display for Storage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Storage::Translation => "translation",
            Storage::Full => "full",
        })
    }
}

/// Placement of singles and pairs in the flat state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub storage: Storage,
    pub spin: Spin,
    pub lx: usize,
    pub ly: usize,
    /// Translation: representative displacement of each class.
    pub classes: Vec<usize>,
    /// Translation: `(class, swapped)` for every displacement; entry 0 unused.
    pub class_of: Vec<(usize, bool)>,
}

impl Layout {
    pub fn new(storage: Storage, spin: Spin, lx: usize, ly: usize) -> Result<Self> {
        if lx == 0 || ly == 0 {
            return Err(Error::Lattice("empty lattice".into()));
        }
        let n = lx.checked_mul(ly).ok_or_else(|| Error::Lattice("lattice too large".into()))?;
        let (mut classes, mut class_of) = (Vec::new(), Vec::new());
        if storage == Storage::Translation {
            if n < 2 {
                return Err(Error::Lattice("translation storage needs at least two sites".into()));
            }
            class_of = vec![(usize::MAX, false); n];
            for disp in 1..n {
                if class_of[disp].0 != usize::MAX {
                    continue;
                }
                let (dx, dy) = (disp / ly, disp % ly);
                let opp = ((lx - dx) % lx) * ly + (ly - dy) % ly;
                let c = classes.len();
                classes.push(disp);
                class_of[disp] = (c, false);
                if opp != disp {
                    class_of[opp] = (c, true);
                }
            }
        }
        Ok(Layout { storage, spin, lx, ly, classes, class_of })
    }

    pub fn for_spec(spec: &LatticeSpec, storage: Storage) -> Result<Self> {
        if storage == Storage::Translation && spec.boundary != Boundary::Periodic {
            return Err(Error::Invalid("translation storage needs periodic boundaries".into()));
        }
        Self::new(storage, spec.spin, spec.lx, spec.ly)
    }

    pub fn d(&self) -> usize {
        self.spin.dim()
    }

    pub fn n_sites(&self) -> usize {
        self.lx * self.ly
    }

    pub fn n_singles(&self) -> usize {
        match self.storage {
            Storage::Translation => 1,
            Storage::Full => self.n_sites(),
        }
    }

    pub fn n_pairs(&self) -> usize {
        match self.storage {
            Storage::Translation => self.classes.len(),
            Storage::Full => {
                let n = self.n_sites();
                n * (n - 1) / 2
            }
        }
    }

    pub fn len(&self) -> usize {
        let d2 = self.d() * self.d();
        self.n_singles() * d2 + self.n_pairs() * d2 * d2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat pair index of `i < j` in full storage.
    pub fn pair_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j);
        let n = self.n_sites();
        i * (2 * n - i - 1) / 2 + (j - i - 1)
    }

    /// Number of ordered displacements represented by a class (1 or 2).
    pub fn multiplicity(&self, class: usize) -> usize {
        let r = self.classes[class];
        let (dx, dy) = (r / self.ly, r % self.ly);
        let opp = ((self.lx - dx) % self.lx) * self.ly + (self.ly - dy) % self.ly;
        if opp == r {
            1
        } else {
            2
        }
    }

    pub fn add_displacement(&self, a: usize, b: usize) -> usize {
        let (lx, ly) = (self.lx, self.ly);
        ((a / ly + b / ly) % lx) * ly + (a % ly + b % ly) % ly
    }

    pub fn sub_displacement(&self, a: usize, b: usize) -> usize {
        let (lx, ly) = (self.lx, self.ly);
        ((a / ly + lx - b / ly) % lx) * ly + (a % ly + ly - b % ly) % ly
    }
}

/// First and second moments of the local transition operators.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantState {
    pub layout: Arc<Layout>,
    pub data: Vec<C>,
    pub time: f64,
}

impl CumulantState {
    fn d(&self) -> usize {
        self.layout.d()
    }

    pub fn single(&self, k: usize) -> &[C] {
        let d2 = self.d() * self.d();
        &self.data[k * d2..(k + 1) * d2]
    }

    pub fn pair(&self, k: usize) -> &[C] {
        let d2 = self.d() * self.d();
        let off = self.layout.n_singles() * d2 + k * d2 * d2;
        &self.data[off..off + d2 * d2]
    }

    /// `<T_i^{ab}>` at flat index `a * d + b`.
    pub fn single_moments(&self, k: usize) -> Vec<C> {
        let d = self.d();
        let rho = self.single(k);
        (0..d * d).map(|f| rho[(f % d) * d + f / d]).collect()
    }

    /// `<T_i^{ab} T_j^{cd}>` at flat index `(a d + b) d^2 + c d + d'`.
    pub fn pair_moments(&self, k: usize) -> Vec<C> {
        let d = self.d();
        let d2 = d * d;
        let p = self.pair(k);
        let mut out = vec![ZERO; d2 * d2];
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    for e in 0..d {
                        out[(a * d + b) * d2 + c * d + e] = p[(b * d + e) * d2 + a * d + c];
                    }
                }
            }
        }
        out
    }

    /// Largest violation of trace, Hermiticity and pair-swap invariants.
    pub fn invariant_residual(&self) -> f64 {
        let d = self.d();
        let d2 = d * d;
        let mut worst: f64 = 0.0;
        let herm = |m: &[C], n: usize| -> f64 {
            let mut w: f64 = 0.0;
            for r in 0..n {
                for c in 0..n {
                    w = w.max((m[r * n + c] - m[c * n + r].conj()).norm());
                }
            }
            w
        };
        for k in 0..self.layout.n_singles() {
            let s = self.single(k);
            worst = worst.max((kernel::trace(s, d) - 1.0).norm()).max(herm(s, d));
        }
        for k in 0..self.layout.n_pairs() {
            let p = self.pair(k);
            worst = worst.max((kernel::trace(p, d2) - 1.0).norm()).max(herm(p, d2));
            if self.layout.storage == Storage::Translation && self.layout.multiplicity(k) == 1 {
                let sw = kernel::swap(p, d);
                let w = p.iter().zip(&sw).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                worst = worst.max(w);
            }
        }
        worst
    }

    /// Largest connected correlation `|rho_ij - rho_i x rho_j|`.
    pub fn max_connected(&self) -> f64 {
        let d = self.d();
        let mut worst: f64 = 0.0;
        let n = self.layout.n_sites();
        let mut check = |p: &[C], a: &[C], b: &[C]| {
            let k = kernel::kron(a, b, d);
            for (x, y) in p.iter().zip(&k) {
                worst = worst.max((x - y).norm());
            }
        };
        match self.layout.storage {
            Storage::Translation => {
                for c in 0..self.layout.n_pairs() {
                    check(self.pair(c), self.single(0), self.single(0));
                }
            }
            Storage::Full => {
                for i in 0..n {
                    for j in (i + 1)..n {
                        let k = self.layout.pair_index(i, j);
                        check(self.pair(k), self.single(i), self.single(j));
                    }
                }
            }
        }
        worst
    }
}

/// Local operators in the sparse form used by the equations of motion.
#[derive(Debug, Clone)]
pub(crate) struct LocalOps {
    pub d: usize,
    /// Interaction channels `g O_i Obar_j`: `(S+, S-, -1/4)`, `(S-, S+, -1/4)`, `(Sz, Sz, 1)`.
    pub o: [Sparse; 3],
    pub obar: [Sparse; 3],
    pub g: [f64; 3],
    /// Diagonal of `B_q (S^z)^2`.
    pub h: Vec<f64>,
    /// Dense Sx, Sy, Sz and the symmetrized products.
    pub s: [Vec<C>; 3],
    pub ss: [[Vec<C>; 3]; 3],
}

fn to_flat(m: &crate::spin::CMatrix) -> Vec<C> {
    let n = m.nrows();
    (0..n * n).map(|k| m[(k / n, k % n)]).collect()
}

fn to_sparse(m: &crate::spin::CMatrix) -> Sparse {
    let n = m.nrows();
    let mut s = Sparse::default();
    for r in 0..n {
        for c in 0..n {
            if m[(r, c)] != ZERO {
                s.entries.push((r, c, m[(r, c)]));
            }
        }
    }
    s
}

impl LocalOps {
    pub fn new(spin: Spin, bq: f64) -> Self {
        let ops = spin_operators(spin);
        let d = spin.dim();
        let s = [to_flat(&ops.sx), to_flat(&ops.sy), to_flat(&ops.sz)];
        let mats = [&ops.sx, &ops.sy, &ops.sz];
        let ss = std::array::from_fn(|m| {
            std::array::from_fn(|n| to_flat(&((mats[m] * mats[n] + mats[n] * mats[m]) * C::new(0.5, 0.0))))
        });
        LocalOps {
            d,
            o: [to_sparse(&ops.splus), to_sparse(&ops.sminus), to_sparse(&ops.sz)],
            obar: [to_sparse(&ops.sminus), to_sparse(&ops.splus), to_sparse(&ops.sz)],
            g: [-0.25, -0.25, 1.0],
            h: (0..d).map(|a| bq * spin.m(a) * spin.m(a)).collect(),
            s,
            ss,
        }
    }
}

/// Couplings in the layout's addressing.
#[derive(Debug, Clone)]
pub(crate) enum Couplings {
    /// `J D(r)` by displacement, zero at r = 0.
    Translation(Vec<f64>),
    /// `J D_ij`, dense N x N.
    Full(Vec<f64>),
}

/// Model and storage: everything needed to evaluate the equations of motion.
#[derive(Debug, Clone)]
pub struct TceSystem {
    pub spec: LatticeSpec,
    pub layout: Arc<Layout>,
    pub(crate) local: LocalOps,
    pub(crate) couplings: Couplings,
}

impl TceSystem {
    pub fn new(spec: &LatticeSpec, storage: Storage) -> Result<Self> {
        let table = build_couplings(spec)?;
        Self::with_table(spec, &table, storage)
    }

    pub fn with_table(spec: &LatticeSpec, table: &CouplingTable, storage: Storage) -> Result<Self> {
        let layout = Layout::for_spec(spec, storage)?;
        let n = spec.n_sites();
        let couplings = match storage {
            Storage::Translation => {
                let disp = table
                    .displacement_table()
                    .ok_or_else(|| Error::Invalid("translation storage needs a periodic table".into()))?;
                Couplings::Translation(disp.iter().map(|d| spec.j * d).collect())
            }
            Storage::Full => {
                let mut m = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            m[i * n + j] = spec.j * table.d(i, j);
                        }
                    }
                }
                Couplings::Full(m)
            }
        };
        Ok(TceSystem { spec: *spec, layout: Arc::new(layout), local: LocalOps::new(spec.spin, spec.bq), couplings })
    }

    pub fn n_sites(&self) -> usize {
        self.layout.n_sites()
    }

    /// Product coherent state along x: all cumulants beyond first order vanish.
    pub fn initialize_css(&self) -> CumulantState {
        let d = self.layout.d();
        let psi = coherent_state(self.spec.spin, [1.0, 0.0, 0.0]).expect("x axis is valid");
        let rho: Vec<C> = (0..d * d).map(|k| psi[k / d] * psi[k % d].conj()).collect();
        let pair = kernel::kron(&rho, &rho, d);
        let mut data = Vec::with_capacity(self.layout.len());
        for _ in 0..self.layout.n_singles() {
            data.extend_from_slice(&rho);
        }
        for _ in 0..self.layout.n_pairs() {
            data.extend_from_slice(&pair);
        }
        CumulantState { layout: self.layout.clone(), data, time: 0.0 }
    }

    /// Time derivative of every stored moment.
    pub fn eom_rhs(&self, state: &CumulantState) -> Vec<C> {
        let mut out = vec![ZERO; state.data.len()];
        self.rhs_into(&state.data, &mut out);
        out
    }

    pub(crate) fn rhs_into(&self, data: &[C], out: &mut [C]) {
        match &self.couplings {
            Couplings::Translation(jd) => rhs::translation(self, jd, data, out),
            Couplings::Full(jd) => rhs::full(self, jd, data, out),
        }
    }

    /// `<H>` as a linear functional of the stored moments.
    pub fn energy(&self, state: &CumulantState) -> f64 {
        let lo = &self.local;
        let d = lo.d;
        let hdiag: Vec<C> = {
            let mut m = vec![ZERO; d * d];
            for a in 0..d {
                m[a * d + a] = C::new(lo.h[a], 0.0);
            }
            m
        };
        let bond = |p: &[C]| -> f64 {
            let mut acc = ZERO;
            for mu in 0..3 {
                acc += lo.g[mu] * kernel::expect_pair(&lo.o[mu].dense(d), &lo.obar[mu].dense(d), p, d);
            }
            acc.re
        };
        let onsite = |rho: &[C]| kernel::trace(&mul(&hdiag, rho, d), d).re;
        match &self.couplings {
            Couplings::Translation(jd) => {
                let n = self.n_sites() as f64;
                let mut e = onsite(state.single(0));
                for (c, &r) in self.layout.classes.iter().enumerate() {
                    e += 0.5 * self.layout.multiplicity(c) as f64 * jd[r] * bond(state.pair(c));
                }
                n * e
            }
            Couplings::Full(jd) => {
                let n = self.n_sites();
                let mut e = 0.0;
                for i in 0..n {
                    e += onsite(state.single(i));
                    for j in (i + 1)..n {
                        let w = jd[i * n + j];
                        if w != 0.0 {
                            e += w * bond(state.pair(self.layout.pair_index(i, j)));
                        }
                    }
                }
                e
            }
        }
    }

    /// Collective moments, energy and `<J^2>`.
    pub fn observables(&self, state: &CumulantState) -> Observation {
        let lo = &self.local;
        let d = lo.d;
        let mut mean = [0.0; 3];
        let mut second = [[0.0; 3]; 3];
        let n = self.n_sites();
        let onsite = |rho: &[C], mean: &mut [f64; 3], second: &mut [[f64; 3]; 3], w: f64| {
            for m in 0..3 {
                mean[m] += w * kernel::trace(&mul(&lo.s[m], rho, d), d).re;
                for k in 0..3 {
                    second[m][k] += w * kernel::trace(&mul(&lo.ss[m][k], rho, d), d).re;
                }
            }
        };
        // sum over both orders of the pair: Tr((Sm x Sk) P) + Tr((Sk x Sm) P)
        let pair = |p: &[C], second: &mut [[f64; 3]; 3], w: f64| {
            for m in 0..3 {
                for k in 0..3 {
                    let v = kernel::expect_pair(&lo.s[m], &lo.s[k], p, d).re;
                    second[m][k] += w * v;
                    second[k][m] += w * v;
                }
            }
        };
        match self.layout.storage {
            Storage::Translation => {
                onsite(state.single(0), &mut mean, &mut second, n as f64);
                for c in 0..self.layout.n_pairs() {
                    // multiplicity 2 classes: (r, -r) give both orders; multiplicity 1: once
                    let w = n as f64 * self.layout.multiplicity(c) as f64 / 2.0;
                    pair(state.pair(c), &mut second, w);
                }
            }
            Storage::Full => {
                for i in 0..n {
                    onsite(state.single(i), &mut mean, &mut second, 1.0);
                }
                for k in 0..self.layout.n_pairs() {
                    pair(state.pair(k), &mut second, 1.0);
                }
            }
        }
        let cov = |a: usize, b: usize| second[a][b] - mean[a] * mean[b];
        let moments = CollectiveMoments {
            mean_x: mean[0],
            cov: [[cov(1, 1), cov(1, 2)], [cov(2, 1), cov(2, 2)]],
            total_j2: Some(second[0][0] + second[1][1] + second[2][2]),
        };
        Observation::new(state.time, mean, moments, self.energy(state), n, self.spec.spin)
    }
}

pub(crate) fn mul(a: &[C], b: &[C], d: usize) -> Vec<C> {
    let mut out = vec![ZERO; d * d];
    for r in 0..d {
        for k in 0..d {
            let av = a[r * d + k];
            if av == ZERO {
                continue;
            }
            for c in 0..d {
                out[r * d + c] += av * b[k * d + c];
            }
        }
    }
    out
}

/// `R = 4 Var(J^min) Var(J^max) / <J^x>^2`.
pub fn validity_ratio(m: &CollectiveMoments) -> Result<f64> {
    crate::oat::heisenberg_ratio(m)
}
