//! Fixed-step RK4 driver with the R(t) validity monitor.

use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};

use super::kernel::ZERO;
use super::{CumulantState, TceSystem};
use crate::error::{Error, Result};
use crate::observe::Observation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    EndOfGrid,
    RMaximum,
    DilutenessBreach,
    NegativeVariance,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::EndOfGrid => "end-of-grid",
            StopReason::RMaximum => "R-maximum",
            StopReason::DilutenessBreach => "diluteness-breach",
            StopReason::NegativeVariance => "negative-variance",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorOptions {
    /// Stop at the first maximum of R(t).
    pub stop_at_r_max: bool,
    /// Consecutive decreasing samples that confirm a maximum.
    pub decreasing_samples: usize,
    /// Stop when `Var(J^min) < -tol * N S`.
    pub negative_variance_tol: f64,
    /// Check trace/Hermiticity invariants at every recorded sample.
    pub check_invariants: bool,
    pub invariant_tol: f64,
    /// R must exceed its initial value by this much before a maximum counts.
    pub rise_tol: f64,
}

impl Default for MonitorOptions {
    fn default() -> Self {
        MonitorOptions {
            stop_at_r_max: true,
            decreasing_samples: 3,
            negative_variance_tol: 1e-9,
            check_invariants: false,
            invariant_tol: 1e-10,
            rise_tol: 1e-9,
        }
    }
}

impl MonitorOptions {
    pub fn unmonitored() -> Self {
        MonitorOptions { stop_at_r_max: false, negative_variance_tol: f64::INFINITY, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub dt: f64,
    pub t_end: f64,
    /// Record observables every this many steps (the last step is always recorded).
    pub record_every: usize,
    pub monitor: MonitorOptions,
}

impl IntegrateOptions {
    pub fn new(dt: f64, t_end: f64) -> Self {
        IntegrateOptions { dt, t_end, record_every: 1, monitor: MonitorOptions::default() }
    }
}

#[derive(Debug, Clone)]
pub struct TceRunReport {
    pub samples: Vec<Observation>,
    pub stop: StopReason,
    /// `max |E(t) - E(0)| / |E(0)|` over recorded samples (absolute if E(0) = 0).
    pub energy_drift: f64,
    pub max_invariant_residual: f64,
    pub final_state: CumulantState,
    pub steps: usize,
}

impl TceRunReport {
    pub fn r_series(&self) -> Vec<(f64, Option<f64>)> {
        self.samples.iter().map(|o| (o.t, o.ratio)).collect()
    }
}

/// Streaming detector for the first maximum of R(t). A maximum is accepted
/// once R has risen above its initial value by more than `rise_tol` and then
/// fallen for `window` consecutive samples.
#[derive(Debug, Clone)]
pub struct RMaxMonitor {
    window: usize,
    rise_tol: f64,
    first: Option<f64>,
    prev: Option<(usize, f64)>,
    peak: Option<(usize, f64)>,
    falls: usize,
}

impl RMaxMonitor {
    pub fn new(window: usize, rise_tol: f64) -> Self {
        RMaxMonitor { window: window.max(1), rise_tol, first: None, prev: None, peak: None, falls: 0 }
    }

    /// Feed sample `k`; returns the index of the confirmed maximum.
    pub fn push(&mut self, k: usize, r: Option<f64>) -> Option<usize> {
        // R undefined: no decision on this sample
        let r = r?;
        let first = *self.first.get_or_insert(r);
        if let Some((pk, p)) = self.prev {
            if r < p {
                if self.falls == 0 {
                    self.peak = Some((pk, p));
                }
                self.falls += 1;
            } else if r > p {
                self.falls = 0;
            }
        }
        self.prev = Some((k, r));
        match self.peak {
            Some((pk, pr)) if self.falls >= self.window && pr > first + self.rise_tol => Some(pk),
            _ => None,
        }
    }

    /// Index of the sample where the current decreasing run started.
    pub fn pending_peak(&self) -> Option<usize> {
        if self.falls > 0 {
            self.peak.map(|p| p.0)
        } else {
            None
        }
    }
}

/// `1e-3 / J_scale`, `J_scale = max(|J| sumD / N, |B_q|)`.
pub fn default_dt(sys: &TceSystem) -> f64 {
    let table = crate::lattice::build_couplings(&sys.spec).expect("spec validated by the system");
    let scale = (sys.spec.j.abs() * table.sum_d_per_site()).max(sys.spec.bq.abs());
    if scale == 0.0 {
        1e-3
    } else {
        1e-3 / scale
    }
}

fn rk4_step(sys: &TceSystem, y: &mut [C], dt: f64, k: &mut [Vec<C>; 4], tmp: &mut [C]) {
    let len = y.len();
    sys.rhs_into(y, &mut k[0]);
    for s in 1..4 {
        let h = if s == 3 { dt } else { 0.5 * dt };
        for i in 0..len {
            tmp[i] = y[i] + h * k[s - 1][i];
        }
        sys.rhs_into(tmp, &mut k[s]);
    }
    let w = dt / 6.0;
    for i in 0..len {
        y[i] += w * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
    }
}

/// Classic RK4 from `state` to `t_end`, stopping early when the monitor fires.
pub fn integrate(sys: &TceSystem, state: CumulantState, opts: &IntegrateOptions) -> Result<TceRunReport> {
    if !(opts.dt > 0.0) || !opts.dt.is_finite() {
        return Err(Error::Invalid("dt must be positive".into()));
    }
    if !(opts.t_end >= state.time) {
        return Err(Error::Invalid("t_end before the initial time".into()));
    }
    let every = opts.record_every.max(1);
    let mon = opts.monitor;
    let span = opts.t_end - state.time;
    let n_steps = (span / opts.dt - 1e-9).ceil().max(0.0) as usize;
    let dt = if n_steps == 0 { 0.0 } else { span / n_steps as f64 };
    let t0 = state.time;
    let layout = state.layout.clone();
    let mut y = state.data;
    let len = y.len();
    let mut k: [Vec<C>; 4] = std::array::from_fn(|_| vec![ZERO; len]);
    let mut tmp = vec![ZERO; len];

    let mut cur = CumulantState { layout: layout.clone(), data: Vec::new(), time: t0 };
    let observe = |data: &Vec<C>, t: f64, cur: &mut CumulantState| -> (Observation, f64) {
        cur.data.clone_from(data);
        cur.time = t;
        let res = if mon.check_invariants { cur.invariant_residual() } else { 0.0 };
        (sys.observables(cur), res)
    };
    let (o0, res0) = observe(&y, t0, &mut cur);
    let e0 = o0.energy;
    let mut drift: f64 = 0.0;
    let mut worst_res = res0;
    let ns = sys.n_sites() as f64 * sys.spec.spin.value();
    let mut samples = vec![o0];
    let mut monitor = RMaxMonitor::new(mon.decreasing_samples, mon.rise_tol);
    monitor.push(0, samples[0].ratio);
    let mut stop = StopReason::EndOfGrid;
    let mut steps = 0;
    let mut end_state: Option<Vec<C>> = None;
    // state at the previous sample and at the start of the current decline
    let mut prev_state: Option<(Vec<C>, usize)> = None;
    let mut peak_state: Option<(Vec<C>, usize)> = None;

    for step in 1..=n_steps {
        rk4_step(sys, &mut y, dt, &mut k, &mut tmp);
        steps = step;
        if y.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Numerical(format!("non-finite moment at t = {}", t0 + step as f64 * dt)));
        }
        if step % every != 0 && step != n_steps {
            continue;
        }
        let t = t0 + step as f64 * dt;
        let (o, res) = observe(&y, t, &mut cur);
        worst_res = worst_res.max(res);
        if mon.check_invariants && res > mon.invariant_tol {
            return Err(Error::Numerical(format!("invariant residual {res:e} at t = {t}")));
        }
        let de = (o.energy - e0).abs();
        drift = drift.max(if e0 != 0.0 { de / e0.abs() } else { de });
        let negative = o.var_min < -mon.negative_variance_tol * ns;
        let idx = samples.len();
        let r = o.ratio;
        samples.push(o);
        if negative {
            stop = StopReason::NegativeVariance;
            break;
        }
        if mon.stop_at_r_max {
            let had_peak = monitor.pending_peak().is_some();
            let fired = monitor.push(idx, r);
            if !had_peak && monitor.pending_peak().is_some() {
                peak_state = prev_state.take();
            }
            if let Some(kmax) = fired {
                samples.truncate(kmax + 1);
                if let Some((data, st)) = peak_state.take() {
                    end_state = Some(data);
                    steps = st;
                }
                stop = StopReason::RMaximum;
                break;
            }
            prev_state = Some((y.clone(), step));
        }
    }
    let data = end_state.unwrap_or(y);
    let time = samples.last().map(|o| o.t).unwrap_or(t0);
    Ok(TceRunReport {
        samples,
        stop,
        energy_drift: drift,
        max_invariant_residual: worst_res,
        final_state: CumulantState { layout, data, time },
        steps,
    })
}

/// Halve `dt` from the default until the end-of-window observables change by
/// less than `tol` (at most `max_halvings` times).
pub fn converged_dt(sys: &TceSystem, t_probe: f64, tol: f64, max_halvings: usize) -> Result<f64> {
    let mut dt = default_dt(sys);
    let run = |dt: f64| -> Result<Observation> {
        let mut opts = IntegrateOptions::new(dt, t_probe);
        opts.monitor = MonitorOptions::unmonitored();
        opts.record_every = usize::MAX;
        let rep = integrate(sys, sys.initialize_css(), &opts)?;
        Ok(rep.samples.last().cloned().expect("at least the initial sample"))
    };
    let mut prev = run(dt)?;
    for _ in 0..max_halvings {
        let next = run(dt / 2.0)?;
        let change = (next.moments.mean_x - prev.moments.mean_x)
            .abs()
            .max((next.var_min - prev.var_min).abs())
            .max((next.var_max - prev.var_max).abs());
        if change < tol {
            return Ok(dt);
        }
        dt /= 2.0;
        prev = next;
    }
    Ok(dt)
}
