//! Exact one-axis-twisting dynamics of a collective spin of length K under
//! `chi (K^z)^2`, started from the coherent state along x.

use std::f64::consts::PI;

use crate::analysis::fit_power_law;
use crate::error::{Error, Result};
use crate::spin::Spin;

/// Amplitude and exponent of the finite-size optimal-time law
/// `chi t_min = A / (2K)^sigma`.
pub const T_MIN_AMPLITUDE: f64 = 1.0142;
pub const T_MIN_EXPONENT: f64 = 0.648;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OatParams {
    /// Total spin length K = N S.
    pub ktot: f64,
    /// Coupling 1/(2I).
    pub chi: f64,
}

impl OatParams {
    pub fn new(ktot: f64, chi: f64) -> Result<Self> {
        let twice = 2.0 * ktot;
        if !(ktot >= 0.5) || (twice - twice.round()).abs() > 1e-9 {
            return Err(Error::Invalid(format!("K = {ktot} is not a half-integer >= 1/2")));
        }
        if !chi.is_finite() {
            return Err(Error::Invalid("chi must be finite".into()));
        }
        Ok(OatParams { ktot, chi })
    }

    fn twice_k(&self) -> i32 {
        (2.0 * self.ktot).round() as i32
    }
}

/// `<J^x>` and the covariance matrix of `(J^y, J^z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectiveMoments {
    pub mean_x: f64,
    /// `[[Var Jy, Cov(Jy,Jz)], [Cov(Jy,Jz), Var Jz]]`, symmetrized covariance.
    pub cov: [[f64; 2]; 2],
    pub total_j2: Option<f64>,
}

impl CollectiveMoments {
    /// Coherent state of total spin K along x.
    pub fn coherent(ktot: f64) -> Self {
        CollectiveMoments {
            mean_x: ktot,
            cov: [[ktot / 2.0, 0.0], [0.0, ktot / 2.0]],
            total_j2: Some(ktot * (ktot + 1.0)),
        }
    }

    /// Eigenvalues of the transverse covariance, ascending.
    pub fn transverse_eigenvalues(&self) -> (f64, f64) {
        let [[a, b], [_, c]] = self.cov;
        let mid = 0.5 * (a + c);
        let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        (mid - rad, mid + rad)
    }

    pub fn var_min(&self) -> f64 {
        self.transverse_eigenvalues().0
    }

    pub fn var_max(&self) -> f64 {
        self.transverse_eigenvalues().1
    }
}

/// Exact OAT moments at time `t`.
///
/// With `x = chi t` and `2K` constituent spin-1/2:
/// `<J^x> = K cos^{2K-1} x`, `<J^y J^y> = [K(2K+1) - 2K(K-1/2) cos^{2K-2}(2x)] / 4`,
/// `<J^z J^z> = K/2`, `Cov(J^y, J^z) = K(K-1/2) sin x cos^{2K-2} x`.
pub fn oat_moments(p: &OatParams, t: f64) -> CollectiveMoments {
    let k = p.ktot;
    let n = p.twice_k();
    let x = p.chi * t;
    let (s, c) = x.sin_cos();
    let mean_x = k * c.powi(n - 1);
    let vyy = (k * (2.0 * k + 1.0) - 2.0 * k * (k - 0.5) * (2.0 * x).cos().powi(n - 2)) / 4.0;
    let vzz = k / 2.0;
    let cyz = k * (k - 0.5) * s * c.powi(n - 2);
    CollectiveMoments {
        mean_x,
        cov: [[vyy, cyz], [cyz, vzz]],
        total_j2: Some(k * (k + 1.0)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Squeezing {
    pub xi2: f64,
    /// Orientation of the minimal-variance axis in the yz plane, in [0, pi).
    pub angle: f64,
    /// Isotropic covariance: every transverse axis is minimal.
    pub degenerate: bool,
}

/// xi_R^2 = 2 N S Var(J^min) / <J^x>^2.
pub fn squeezing_from_moments(m: &CollectiveMoments, n_sites: usize, spin: Spin) -> Result<Squeezing> {
    squeezing_with_norm(m, 2.0 * n_sites as f64 * spin.value())
}

/// Same as [`squeezing_from_moments`] with an explicit normalization `2NS`.
pub fn squeezing_with_norm(m: &CollectiveMoments, two_ns: f64) -> Result<Squeezing> {
    if m.mean_x == 0.0 || !m.mean_x.is_finite() {
        return Err(Error::Undefined("<J^x> = 0, squeezing parameter diverges".into()));
    }
    let (lmin, lmax) = m.transverse_eigenvalues();
    let [[a, b], [_, c]] = m.cov;
    let degenerate = (lmax - lmin) <= 1e-12 * lmax.abs().max(1e-300);
    let angle = if degenerate {
        0.0
    } else {
        // eigenvector of lmin: (b, lmin - a) or (lmin - c, b)
        let (vy, vz) = if (lmin - a).abs() + b.abs() > (lmin - c).abs() + b.abs() {
            (b, lmin - a)
        } else {
            (lmin - c, b)
        };
        let th = vz.atan2(vy);
        th.rem_euclid(PI)
    };
    Ok(Squeezing { xi2: two_ns * lmin / (m.mean_x * m.mean_x), angle, degenerate })
}

/// R = 4 Var(J^min) Var(J^max) / <J^x>^2.
pub fn heisenberg_ratio(m: &CollectiveMoments) -> Result<f64> {
    if m.mean_x == 0.0 || !m.mean_x.is_finite() {
        return Err(Error::Undefined("<J^x> = 0, validity ratio undefined".into()));
    }
    let (lmin, lmax) = m.transverse_eigenvalues();
    Ok(4.0 * lmin * lmax / (m.mean_x * m.mean_x))
}

pub fn oat_squeezing(p: &OatParams, t: f64) -> f64 {
    let m = oat_moments(p, t);
    squeezing_with_norm(&m, 2.0 * p.ktot).map(|s| s.xi2).unwrap_or(f64::INFINITY)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalTime {
    pub t_min: f64,
    pub xi2_min: f64,
    /// `A / (chi (2K)^sigma)`, the fitted-law estimate used as a seed.
    pub seed: f64,
    /// K = 1/2: (K^z)^2 is constant, nothing to minimize.
    pub trivial: bool,
}

pub fn fitted_t_min(p: &OatParams) -> f64 {
    T_MIN_AMPLITUDE / (p.chi * (2.0 * p.ktot).powf(T_MIN_EXPONENT))
}

/// First minimum of xi_R^2(t), refined by golden-section search.
pub fn optimal_time(p: &OatParams) -> Result<OptimalTime> {
    if p.chi == 0.0 {
        return Err(Error::Invalid("chi = 0: no twisting".into()));
    }
    let chi = p.chi.abs();
    let pp = OatParams { chi, ..*p };
    let seed = fitted_t_min(&pp);
    if p.twice_k() <= 1 {
        return Ok(OptimalTime { t_min: 0.0, xi2_min: 1.0, seed, trivial: true });
    }
    let horizon = (PI / chi).min(4.0 * seed);
    let f = |t: f64| oat_squeezing(&pp, t);
    // coarse scan from t = 0 to locate the first basin, then refine
    let steps = 400;
    let h = horizon / steps as f64;
    let mut prev = f(0.0);
    let mut best_k = None;
    for k in 1..=steps {
        let v = f(k as f64 * h);
        if v > prev && k > 1 {
            best_k = Some(k - 1);
            break;
        }
        prev = v;
    }
    let kstar: usize = best_k.unwrap_or(steps);
    let lo = (kstar.saturating_sub(1)) as f64 * h;
    let hi = ((kstar + 1) as f64 * h).min(PI / chi);
    let (t_min, xi2_min) = golden_section(f, lo, hi, 1e-13 * horizon);
    Ok(OptimalTime { t_min, xi2_min, seed, trivial: false })
}

pub(crate) fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..300 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

/// Fitted `(A, sigma)` of `chi t_min = A / (2K)^sigma` over a family of K.
pub fn fit_optimal_time_law(ktots: &[f64]) -> Result<(f64, f64)> {
    let mut xs = Vec::with_capacity(ktots.len());
    let mut ys = Vec::with_capacity(ktots.len());
    for &k in ktots {
        let p = OatParams::new(k, 1.0)?;
        let opt = optimal_time(&p)?;
        xs.push(2.0 * k);
        ys.push(opt.t_min);
    }
    let fit = fit_power_law(&xs, &ys)?;
    Ok((fit.amplitude, -fit.exponent))
}

/// Fitted exponent of `(xi^2)_min ~ (2K)^exponent`.
pub fn fit_optimal_squeezing(ktots: &[f64]) -> Result<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &k in ktots {
        let opt = optimal_time(&OatParams::new(k, 1.0)?)?;
        xs.push(2.0 * k);
        ys.push(opt.xi2_min);
    }
    Ok(fit_power_law(&xs, &ys)?.exponent)
}

/// Exponents rho_alpha of `xi^2(alpha t_min) ~ N^{-rho_alpha}` over a family of
/// N spins of length S.
pub fn early_time_scaling(sizes: &[usize], spin: Spin, alphas: &[f64]) -> Result<Vec<f64>> {
    if sizes.len() < 3 {
        return Err(Error::TooFewPoints { need: 3, got: sizes.len() });
    }
    for &a in alphas {
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::Invalid(format!("alpha = {a} outside (0, 1]")));
        }
    }
    let mut per_size = Vec::new();
    for &n in sizes {
        let p = OatParams::new(n as f64 * spin.value(), 1.0)?;
        let opt = optimal_time(&p)?;
        per_size.push((n as f64, p, opt.t_min));
    }
    alphas
        .iter()
        .map(|&a| {
            let xs: Vec<f64> = per_size.iter().map(|(n, _, _)| *n).collect();
            let ys: Vec<f64> = per_size.iter().map(|(_, p, t)| oat_squeezing(p, a * t)).collect();
            Ok(-fit_power_law(&xs, &ys)?.exponent)
        })
        .collect()
}
