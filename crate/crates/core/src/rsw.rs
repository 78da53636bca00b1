//! Rotor/spin-wave (RSW) theory.
//!
//! Holstein-Primakoff bosons about the x-polarized state, expanded to
//! quadratic order, give for every k != 0
//! `H_k = A_k b_k^+ b_k + (B_k / 2)(b_k b_-k + h.c.)` with
//! `A_k = S(J_0/2 + J_k/4 + B_q)` and `B_k = -S(3 J_k/4 + B_q)`, where
//! `J_k = J sum_{r != 0} D(r) e^{ik.r}` is the table transform. The k = 0 mode
//! is the rotor, evolved exactly by [`crate::oat`].

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{build_couplings, inverse_moment_of_inertia, Boundary, CouplingTable, LatticeSpec};
use crate::oat::{oat_moments, squeezing_with_norm, OatParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mode {
    /// Index `nx * Ly + ny` into the momentum grid.
    pub index: usize,
    pub kx: f64,
    pub ky: f64,
    pub a: f64,
    pub b: f64,
    pub omega2: f64,
    pub stable: bool,
}

#[derive(Debug, Clone)]
pub struct ModeTable {
    pub spin: f64,
    pub modes: Vec<Mode>,
}

/// Bogoliubov coefficients `(A_k, B_k)` for a given `J_k`.
pub fn coefficients(s: f64, j0: f64, jk: f64, bq: f64) -> (f64, f64) {
    (s * (0.5 * j0 + 0.25 * jk + bq), -s * (0.75 * jk + bq))
}

/// `A^2 - B^2` written as `(A + B)(A - B)`, which is exact at the Goldstone point.
fn omega2(a: f64, b: f64) -> f64 {
    (a + b) * (a - b)
}

pub fn mode_table(spec: &LatticeSpec, table: &CouplingTable) -> Result<ModeTable> {
    if spec.boundary != Boundary::Periodic {
        return Err(Error::Invalid("spin-wave modes need a periodic lattice".into()));
    }
    let jk = table.jk().ok_or_else(|| Error::Invalid("coupling table has no momentum grid".into()))?;
    let s = spec.spin.value();
    let j0 = jk[0];
    let modes = (1..jk.len())
        .map(|idx| {
            let (a, b) = coefficients(s, j0, jk[idx], spec.bq);
            let (kx, ky) = table.momentum(idx);
            let w2 = omega2(a, b);
            Mode { index: idx, kx, ky, a, b, omega2: w2, stable: w2 > 0.0 }
        })
        .collect();
    Ok(ModeTable { spin: s, modes })
}

/// Goldstone frequency squared `(A_0 + B_0)(A_0 - B_0)` of the excluded k = 0 mode.
pub fn goldstone_omega2(spec: &LatticeSpec, table: &CouplingTable) -> Result<f64> {
    let jk = table.jk().ok_or_else(|| Error::Invalid("coupling table has no momentum grid".into()))?;
    let (a, b) = coefficients(spec.spin.value(), jk[0], jk[0], spec.bq);
    Ok(omega2(a, b))
}

/// Rotor coupling `A_0 / (N S) = (3J / 4N^2) sum_{i != j} D_ij + B_q / N`: the
/// quadratic coefficient of `(K^z)^2` implied by the same expansion.
pub fn spin_wave_rotor_coupling(spec: &LatticeSpec, table: &CouplingTable) -> f64 {
    let n = table.n_sites() as f64;
    0.75 * spec.j * table.sum_d() / (n * n) + spec.bq / n
}

/// Which rotor coupling drives the k = 0 mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RotorCoupling {
    /// [`spin_wave_rotor_coupling`].
    #[default]
    SpinWave,
    /// [`inverse_moment_of_inertia`].
    Inertia,
}

impl RotorCoupling {
    pub fn value(self, spec: &LatticeSpec, table: &CouplingTable) -> f64 {
        match self {
            RotorCoupling::SpinWave => spin_wave_rotor_coupling(spec, table),
            RotorCoupling::Inertia => inverse_moment_of_inertia(spec, table),
        }
    }
}

/// `n_k(t) = <b_k^+ b_k>` from the vacuum: `(B/w)^2 sin^2(w t)` for stable
/// modes, `(B/g)^2 sinh^2(g t)` with `g^2 = B^2 - A^2` for unstable ones and
/// `B^2 t^2` at `A^2 = B^2`.
pub fn mode_population(a: f64, b: f64, t: f64) -> f64 {
    let w2 = omega2(a, b);
    if b == 0.0 {
        0.0
    } else if w2 > 0.0 {
        let w = w2.sqrt();
        let s = (w * t).sin() / w;
        b * b * s * s
    } else if w2 < 0.0 {
        let g = (-w2).sqrt();
        let s = (g * t).sinh() / g;
        b * b * s * s
    } else {
        b * b * t * t
    }
}

/// Numerical oracle: RK4 on `i du/dt = A u + B conj(v)`, `i dv/dt = A v + B conj(u)`
/// from `(u, v) = (1, 0)`; returns `|v|^2`.
pub fn mode_population_ode(a: f64, b: f64, t: f64, steps: usize) -> f64 {
    use num_complex::Complex64 as C;
    let mi = C::new(0.0, -1.0);
    let f = |u: C, v: C| (mi * (a * u + b * v.conj()), mi * (a * v + b * u.conj()));
    let (mut u, mut v) = (C::new(1.0, 0.0), C::new(0.0, 0.0));
    let h = t / steps as f64;
    for _ in 0..steps {
        let (k1u, k1v) = f(u, v);
        let (k2u, k2v) = f(u + 0.5 * h * k1u, v + 0.5 * h * k1v);
        let (k3u, k3v) = f(u + 0.5 * h * k2u, v + 0.5 * h * k2v);
        let (k4u, k4v) = f(u + h * k3u, v + h * k3v);
        u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
    v.norm_sqr()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BosonPopulation {
    pub total: f64,
    pub per_mode: Vec<f64>,
    pub any_unstable: bool,
}

pub fn boson_population(table: &ModeTable, t: f64) -> BosonPopulation {
    let per_mode: Vec<f64> = table.modes.par_iter().map(|m| mode_population(m.a, m.b, t)).collect();
    // ordered reduction
    let total = per_mode.iter().sum();
    BosonPopulation { total, per_mode, any_unstable: table.modes.iter().any(|m| !m.stable) }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub bq: f64,
    pub mode: Mode,
}

/// Smallest `omega2 / S^2` over the momentum grid at a given `B_q`.
fn min_omega2(spec: &LatticeSpec, table: &CouplingTable, bq: f64) -> Result<(f64, Mode)> {
    let mt = mode_table(&spec.with_bq(bq), table)?;
    let s2 = spec.spin.value().powi(2);
    mt.modes
        .iter()
        .map(|m| (m.omega2 / s2, *m))
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .ok_or_else(|| Error::Invalid("no finite-momentum modes".into()))
}

/// Bisection on `min_k omega2(B_q) = 0` inside `[lo, hi]`. `None` if the sign
/// does not change across the window.
pub fn instability_threshold(spec: &LatticeSpec, table: &CouplingTable, lo: f64, hi: f64) -> Result<Option<Threshold>> {
    if !(lo < hi) {
        return Err(Error::Invalid("empty B_q window".into()));
    }
    let (flo, _) = min_omega2(spec, table, lo)?;
    let (fhi, _) = min_omega2(spec, table, hi)?;
    if (flo > 0.0) == (fhi > 0.0) {
        return Ok(None);
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break;
        }
        let (fm, _) = min_omega2(spec, table, mid)?;
        if (fm > 0.0) == (flo > 0.0) {
            a = mid;
        } else {
            b = mid;
        }
    }
    // first unstable mode just on the unstable side
    let unstable_side = if flo > 0.0 { b } else { a };
    let (_, mode) = min_omega2(spec, table, unstable_side)?;
    Ok(Some(Threshold { bq: 0.5 * (a + b), mode }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RswSample {
    pub t: f64,
    pub xi2: f64,
    pub mean_x_eff: f64,
    pub n_bos: f64,
    pub rotor_mean_x: f64,
    pub var_min: f64,
    pub var_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RswSeries {
    pub samples: Vec<RswSample>,
    /// Time at which `N_bos >= <K^x>`; the series stops before it.
    pub breakdown: Option<f64>,
    pub chi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RswOptions {
    /// Explicit rotor coupling, overriding `rotor`.
    pub chi: Option<f64>,
    pub rotor: RotorCoupling,
    pub allow_unstable: bool,
    /// Drop the spin waves (pure rotor).
    pub no_bosons: bool,
}

impl Default for RswOptions {
    fn default() -> Self {
        RswOptions { chi: None, rotor: RotorCoupling::SpinWave, allow_unstable: false, no_bosons: false }
    }
}

/// `xi^2 = 2NS Var(K^min) / (<K^x> - N_bos)^2` along a time grid.
pub fn rsw_squeezing(spec: &LatticeSpec, times: &[f64], opts: &RswOptions) -> Result<RswSeries> {
    let table = build_couplings(spec)?;
    rsw_squeezing_with(spec, &table, times, opts)
}

pub fn rsw_squeezing_with(
    spec: &LatticeSpec,
    table: &CouplingTable,
    times: &[f64],
    opts: &RswOptions,
) -> Result<RswSeries> {
    let modes = mode_table(spec, table)?;
    if !opts.allow_unstable && modes.modes.iter().any(|m| !m.stable) {
        return Err(Error::Invalid(format!("unstable spin-wave spectrum at B_q = {}", spec.bq)));
    }
    let chi = opts.chi.unwrap_or_else(|| opts.rotor.value(spec, table));
    let k = spec.total_spin();
    let rotor = OatParams::new(k, chi)?;
    let mut samples = Vec::with_capacity(times.len());
    let mut breakdown = None;
    for &t in times {
        let m = oat_moments(&rotor, t);
        let n_bos = if opts.no_bosons { 0.0 } else { boson_population(&modes, t).total };
        let eff = m.mean_x - n_bos;
        if eff <= 0.0 {
            breakdown = Some(t);
            break;
        }
        let (var_min, var_max) = m.transverse_eigenvalues();
        let mut shifted = m;
        shifted.mean_x = eff;
        let xi2 = squeezing_with_norm(&shifted, 2.0 * k)?.xi2;
        samples.push(RswSample { t, xi2, mean_x_eff: eff, n_bos, rotor_mean_x: m.mean_x, var_min, var_max });
    }
    Ok(RswSeries { samples, breakdown, chi })
}

/// Dispersion table as CSV: `kx,ky,omega2,stable`.
pub fn write_dispersion_csv<W: Write>(table: &ModeTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kx", "ky", "omega2", "stable"]).map_err(|e| Error::Io(e.to_string()))?;
    for m in &table.modes {
        w.write_record([m.kx.to_string(), m.ky.to_string(), m.omega2.to_string(), m.stable.to_string()])
            .map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
