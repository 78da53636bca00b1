//! Config-driven runs: compute, write CSV + manifest atomically, report status.

use std::path::PathBuf;

use rayon::prelude::*;

use crate::config::{Config, Method, TimeUnits};
use crate::ed::EdSystem;
use crate::error::{Error, Result};
use crate::lattice::{build_couplings, Boundary, CouplingTable, LatticeSpec};
use crate::meanfield::{phase_diagram, write_phase_diagram_csv, MeanFieldModel, OrderKind};
use crate::oat::{oat_moments, optimal_time, OatParams};
use crate::observe::Observation;
use crate::output::{series_table, write_atomic, Cell, Manifest, Table};
use crate::rsw::{instability_threshold, mode_table, rsw_squeezing_with, write_dispersion_csv, RotorCoupling, RswOptions};
use crate::spin::single_spin_evolution;
use crate::tce::{checkpoint, default_dt, integrate, IntegrateOptions, StopReason, TceSystem};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_NONCONVERGENCE: i32 = 4;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse(_) | Error::Invalid(_) | Error::Lattice(_) | Error::Spin(_) | Error::DimensionCap { .. } => EXIT_CONFIG,
        Error::Numerical(_) | Error::Io(_) => EXIT_NUMERICAL,
        Error::Undefined(_) | Error::TooFewPoints { .. } => EXIT_NONCONVERGENCE,
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub manifest: Manifest,
    /// False when a solver reported non-convergence.
    pub converged: bool,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.converged {
            EXIT_OK
        } else {
            EXIT_NONCONVERGENCE
        }
    }
}

/// Rotor optimal time for the selected coupling; `None` when the rotor does
/// not twist (K = 1/2 or zero coupling).
pub fn rotor_t_min(spec: &LatticeSpec, table: &CouplingTable, rotor: RotorCoupling) -> Option<f64> {
    let chi = rotor.value(spec, table);
    let p = OatParams::new(spec.total_spin(), chi).ok()?;
    match optimal_time(&p) {
        Ok(o) if !o.trivial => Some(o.t_min),
        _ => None,
    }
}

fn linspace(t_end: f64, samples: usize) -> Vec<f64> {
    (0..=samples).map(|k| t_end * k as f64 / samples as f64).collect()
}

struct Ctx {
    spec: LatticeSpec,
    table: CouplingTable,
    t_min: Option<f64>,
    t_end: f64,
}

fn context(cfg: &Config) -> Result<Ctx> {
    let spec = cfg.lattice_spec()?;
    let table = build_couplings(&spec)?;
    let t_min = rotor_t_min(&spec, &table, cfg.rsw.rotor);
    let t_end = match cfg.time.units {
        TimeUnits::Absolute => cfg.time.t_max,
        TimeUnits::TMin => cfg.time.t_max * t_min.ok_or_else(|| Error::Invalid("rotor t_min undefined for t-min units".into()))?,
    };
    Ok(Ctx { spec, table, t_min, t_end })
}

struct Produced {
    files: Vec<(String, Vec<u8>)>,
    manifest: Manifest,
    converged: bool,
}

impl Produced {
    fn new() -> Self {
        Produced { files: Vec::new(), manifest: Manifest::default(), converged: true }
    }

    fn csv(&mut self, stem: &str, table: &Table) -> Result<()> {
        self.files.push((format!("{stem}.csv"), table.to_csv()?));
        Ok(())
    }
}

/// Execute a configuration and write its outputs under `output_dir`.
pub fn run(cfg: &Config) -> Result<RunSummary> {
    cfg.validate()?;
    let stem = cfg.stem();
    let mut p = Produced::new();
    match cfg.method {
        Method::Oat => run_oat(cfg, &stem, &mut p)?,
        Method::Rsw => run_rsw(cfg, &stem, &mut p)?,
        Method::Tce => run_tce(cfg, &stem, &mut p)?,
        Method::Ed => run_ed(cfg, &stem, &mut p)?,
        Method::SingleSpin => run_single_spin(cfg, &stem, &mut p)?,
        Method::Meanfield => run_meanfield(cfg, &stem, &mut p)?,
        Method::Dispersion => run_dispersion(cfg, &stem, &mut p)?,
        Method::PhaseDiagram => run_phase_diagram(cfg, &stem, &mut p)?,
        Method::Fig1d => run_fig1d(cfg, &stem, &mut p)?,
    }
    let mut manifest = p.manifest;
    manifest.set("method", cfg.method);
    manifest.set("code_version", env!("CARGO_PKG_VERSION"));
    manifest.set("time_units", "absolute (1/J)");
    manifest.set("converged", p.converged);
    let resolved: toml::Value = toml::Value::try_from(cfg).map_err(|e| Error::Invalid(e.to_string()))?;
    manifest.add_toml("config", &resolved);
    manifest.set("outputs", p.files.iter().map(|f| f.0.as_str()).collect::<Vec<_>>().join(","));
    let mut files = Vec::new();
    for (name, bytes) in &p.files {
        let path = cfg.output_dir.join(name);
        write_atomic(&path, bytes)?;
        files.push(path);
    }
    let mpath = cfg.output_dir.join(format!("{stem}.manifest"));
    write_atomic(&mpath, manifest.render().as_bytes())?;
    files.push(mpath);
    Ok(RunSummary { files, manifest, converged: p.converged })
}

fn set_t_min(p: &mut Produced, ctx: &Ctx) {
    p.manifest.set("t_min", ctx.t_min.map(|t| format!("{t:e}")).unwrap_or_default());
    p.manifest.set("t_end", format!("{:e}", ctx.t_end));
}

fn run_oat(cfg: &Config, stem: &str, p: &mut Produced) -> Result<()> {
    let ctx = context(cfg)?;
    let chi = cfg.rsw.rotor.value(&ctx.spec, &ctx.table);
    let params = OatParams::new(ctx.spec.total_spin(), chi)?;
    let obs: Vec<Observation> = linspace(ctx.t_end, cfg.time.samples)
        .into_iter()
        .map(|t| {
            let m = oat_moments(&params, t);
            Observation::new(t, [m.mean_x, 0.0, 0.0], m, f64::NAN, ctx.spec.n_sites(), ctx.spec.spin)
        })
        .collect();
    p.csv(stem, &series_table(&obs, ctx.t_min))?;
    p.manifest.set("chi", format!("{chi:e}"));
    set_t_min(p, &ctx);
    Ok(())
}

fn run_rsw(cfg: &Config, stem: &str, p: &mut Produced) -> Result<()> {
    let ctx = context(cfg)?;
    let opts = RswOptions { chi: None, rotor: cfg.rsw.rotor, allow_unstable: cfg.rsw.allow_unstable, no_bosons: cfg.rsw.no_bosons };
    let series = rsw_squeezing_with(&ctx.spec, &ctx.table, &linspace(ctx.t_end, cfg.time.samples), &opts)?;
    let mut t = Table::new(&["t", "t_over_tmin", "mean_x", "n_bos", "rotor_mean_x", "var_min", "var_max", "xi2"]);
    for s in &series.samples {
        t.push(vec![
            s.t.into(),
            Cell::opt(ctx.t_min.map(|m| s.t / m)),
            s.mean_x_eff.into(),
            s.n_bos.into(),
            s.rotor_mean_x.into(),
            s.var_min.into(),
            s.var_max.into(),
            s.xi2.into(),
        ]);
    }
    p.csv(stem, &t)?;
    p.manifest.set("chi", format!("{:e}", series.chi));
    p.manifest.set("breakdown", series.breakdown.map(|b| format!("{b:e}")).unwrap_or_default());
    set_t_min(p, &ctx);
    Ok(())
}

fn run_tce(cfg: &Config, stem: &str, p: &mut Produced) -> Result<()> {
    let ctx = context(cfg)?;
    let sys = TceSystem::with_table(&ctx.spec, &ctx.table, cfg.storage())?;
    let state = match &cfg.tce.resume_from {
        None => sys.initialize_css(),
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let st = checkpoint::decode(&text)?;
            if *st.layout != *sys.layout {
                return Err(Error::Invalid("checkpoint does not match the configured lattice".into()));
            }
            st
        }
    };
    let dt = cfg.time.dt.unwrap_or_else(|| default_dt(&sys));
    let span = (ctx.t_end - state.time).max(0.0);
    let n_steps = (span / dt).ceil().max(1.0) as usize;
    let mut opts = IntegrateOptions::new(dt, ctx.t_end.max(state.time));
    opts.record_every = (n_steps / cfg.time.samples).max(1);
    opts.monitor = cfg.tce.monitor;
    let rep = integrate(&sys, state, &opts)?;
    p.csv(stem, &series_table(&rep.samples, ctx.t_min))?;
    p.manifest.set("stop_reason", rep.stop);
    p.manifest.set("energy_drift", format!("{:e}", rep.energy_drift));
    p.manifest.set("steps", rep.steps);
    p.manifest.set("dt", format!("{dt:e}"));
    p.manifest.set("t_stop", format!("{:e}", rep.final_state.time));
    set_t_min(p, &ctx);
    if cfg.tce.checkpoint {
        p.files.push((format!("{stem}.checkpoint"), checkpoint::encode(&rep.final_state).into_bytes()));
    }
    if rep.stop == StopReason::NegativeVariance {
        p.converged = false;
    }
    Ok(())
}

fn run_ed(cfg: &Config, stem: &str, p: &mut Produced) -> Result<()> {
    let ctx = context(cfg)?;
    let ed = EdSystem::with_table(&ctx.spec, &ctx.table, cfg.ed.dim_cap)?;
    let obs = ed.evolve_exact(&linspace(ctx.t_end, cfg.time.samples));
    p.csv(stem, &series_table(&obs, ctx.t_min))?;
    p.manifest.set("dimension", ed.dim);
    set_t_min(p, &ctx);
    Ok(())
}

fn run_single_spin(cfg: &Config, stem: &str, p: &mut Produced) -> Result<()> {
    let spin = cfg.spin()?;
    let bq = cfg.couplings.bq;
    if cfg.time.units != TimeUnits::Absolute {
        return Err(Error::Invalid("single-spin runs use absolute time".into()));
    }
    let obs: Vec<Observation> = single_spin_evolution(spin, bq, &linspace(cfg.time.t_max, cfg.time.samples))
        .into_iter()
        .map(|s| Observation::new(s.t, [s.moments.mean_x, 0.0, 0.0], s.moments, bq * s.sz2, 1, spin))
        .collect();
    p.csv(stem, &series_table(&obs, None))?;
    Ok(())
}

fn mf_model(cfg: &Config) -> Result<MeanFieldModel> {
    MeanFieldModel::new(cfg.spin()?, cfg.couplings.j, cfg.couplings.bq, cfg.meanfield.lattice)
}

fn boundaries(cfg: &Config, model: &MeanFieldModel, p: &mut Produced) -> Result<()> {
    if cfg.meanfield.boundaries {
        let b = model.phase_boundaries(&cfg.meanfield.windows, &cfg.meanfield.solver)?;
        p.manifest.set("bq_m", format!("{:e}", b.bq_m));
        p.manifest.set("bq_c", format!("{:e}", b.bq_c));
        p.manifest.set("bq_p", format!("{:e}", b.bq_p));
    }
    Ok(())
}

fn run_meanfield(cfg: &Config, stem: &str, p: &mut Produced) -> Result<()> {
    let model = mf_model(cfg)?;
    let o = &cfg.meanfield.solver;
    let states = cfg
        .meanfield
        .temperatures
        .par_iter()
        .map(|&t| model.equilibrium(t, o))
        .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(&["T", "phase", "xy_order", "neel_order", "uniform_z", "energy", "free_energy", "converged", "iterations"]);
    for s in &states {
        p.converged &= s.converged;
        t.push(vec![
            s.t.into(),
            s.phase(model.spin).to_string().as_str().into(),
            s.xy_order().into(),
            s.staggered_z().abs().into(),
            s.uniform_z().into(),
            s.energy.into(),
            s.free_energy.into(),
            (if s.converged { "true" } else { "false" }).into(),
            (s.iterations as f64).into(),
        ]);
    }
    p.csv(stem, &t)?;
    let show = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    p.manifest.set("T_c_xy", show(model.critical_temperature(OrderKind::Xy, o)?));
    p.manifest.set("T_c_neel", show(model.critical_temperature(OrderKind::Neel, o)?));
    p.manifest.set("T_css", show(model.t_css(o).ok()));
    p.manifest.set("d0", format!("{:e}", model.d0));
    p.manifest.set("dpi", format!("{:e}", model.dpi));
    boundaries(cfg, &model, p)
}

fn run_dispersion(cfg: &Config, stem: &str, p: &mut Produced) -> Result<()> {
    let spec = cfg.lattice_spec()?;
    if spec.boundary != Boundary::Periodic {
        return Err(Error::Invalid("dispersion needs a periodic lattice".into()));
    }
    let table = build_couplings(&spec)?;
    let modes = mode_table(&spec, &table)?;
    let mut buf = Vec::new();
    write_dispersion_csv(&modes, &mut buf)?;
    p.files.push((format!("{stem}.csv"), buf));
    let scale = spec.j.abs().max(1e-12);
    let th = instability_threshold(&spec, &table, -10.0 * scale, 10.0 * scale)?;
    p.manifest.set("threshold_bq", th.map(|t| format!("{:e}", t.bq)).unwrap_or_default());
    p.manifest.set(
        "threshold_mode",
        th.map(|t| format!("({:e};{:e})", t.mode.kx, t.mode.ky)).unwrap_or_default(),
    );
    p.manifest.set("unstable_modes", modes.modes.iter().filter(|m| !m.stable).count());
    Ok(())
}

fn run_phase_diagram(cfg: &Config, stem: &str, p: &mut Produced) -> Result<()> {
    let model = mf_model(cfg)?;
    let grid = cfg.meanfield.bq_grid.ok_or_else(|| Error::Invalid("phase-diagram needs meanfield.bq_grid".into()))?;
    let rows = phase_diagram(&model, &grid.values()?, &cfg.meanfield.solver)?;
    let mut buf = Vec::new();
    write_phase_diagram_csv(&rows, &mut buf)?;
    p.files.push((format!("{stem}.csv"), buf));
    boundaries(cfg, &model, p)
}

fn run_fig1d(cfg: &Config, stem: &str, p: &mut Produced) -> Result<()> {
    let spin = cfg.spin()?;
    let f = &cfg.fig1d;
    let jobs: Vec<(f64, usize)> = f.bq.iter().flat_map(|&b| f.sizes.iter().map(move |&l| (b, l))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(bq, l)| -> Result<Vec<Cell>> {
            let spec = LatticeSpec::new(l, Boundary::Periodic, spin, cfg.couplings.j, bq)?;
            let table = build_couplings(&spec)?;
            let Some(t_min) = rotor_t_min(&spec, &table, cfg.rsw.rotor) else {
                return Ok(vec![bq.into(), (l as f64).into(), (spec.n_sites() as f64).into(), Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty, "".into()]);
            };
            let t = f.fraction * t_min;
            let opts = RswOptions { rotor: cfg.rsw.rotor, ..Default::default() };
            let rsw = match rsw_squeezing_with(&spec, &table, &[t], &opts) {
                Ok(s) => s.samples.first().map(|x| x.xi2),
                Err(Error::Invalid(_)) => None,
                Err(e) => return Err(e),
            };
            let (tce, stop) = if f.tce {
                let sys = TceSystem::with_table(&spec, &table, cfg.storage())?;
                let mut o = IntegrateOptions::new(cfg.time.dt.unwrap_or_else(|| default_dt(&sys)), t);
                o.monitor = cfg.tce.monitor;
                o.record_every = usize::MAX;
                let rep = integrate(&sys, sys.initialize_css(), &o)?;
                let last = rep.samples.last().filter(|_| rep.stop == StopReason::EndOfGrid);
                (last.and_then(|s| s.xi2), rep.stop.to_string())
            } else {
                (None, String::new())
            };
            Ok(vec![
                bq.into(),
                (l as f64).into(),
                (spec.n_sites() as f64).into(),
                t_min.into(),
                t.into(),
                Cell::opt(rsw),
                Cell::opt(tce),
                stop.as_str().into(),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(&["B_q", "L", "N", "t_min", "t", "xi2_rsw", "xi2_tce", "tce_stop"]);
    for r in rows {
        table.push(r);
    }
    p.csv(stem, &table)?;
    p.manifest.set("fraction", f.fraction);
    Ok(())
}
