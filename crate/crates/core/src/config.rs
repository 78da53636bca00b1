//! Run configuration (TOML, strict: unknown keys are errors).
//!
//! ```toml
//! method = "tce"
//! output_dir = "out"
//!
//! [lattice]
//! l = 10
//! boundary = "periodic"
//! spin = 3
//!
//! [couplings]
//! j = 1.0
//! bq = 2.0
//!
//! [time]
//! t_max = 1.0
//! units = "t-min"
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Boundary, LatticeSpec};
use crate::meanfield::{BoundaryWindows, MeanFieldOptions, DEFAULT_LATTICE};
use crate::rsw::RotorCoupling;
use crate::spin::Spin;
use crate::tce::{MonitorOptions, Storage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Oat,
    Rsw,
    Tce,
    Ed,
    SingleSpin,
    Meanfield,
    Dispersion,
    PhaseDiagram,
    Fig1d,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Oat => "oat",
            Method::Rsw => "rsw",
            Method::Tce => "tce",
            Method::Ed => "ed",
            Method::SingleSpin => "single-spin",
            Method::Meanfield => "meanfield",
            Method::Dispersion => "dispersion",
            Method::PhaseDiagram => "phase-diagram",
            Method::Fig1d => "fig1d",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeUnits {
    #[default]
    Absolute,
    /// Multiples of the rotor t_min.
    TMin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    /// Square side; alternatively give `lx` and `ly`.
    #[serde(default)]
    pub l: Option<usize>,
    #[serde(default)]
    pub lx: Option<usize>,
    #[serde(default)]
    pub ly: Option<usize>,
    #[serde(default = "default_boundary")]
    pub boundary: Boundary,
    pub spin: f64,
}

fn default_boundary() -> Boundary {
    Boundary::Periodic
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Couplings {
    #[serde(default = "one")]
    pub j: f64,
    #[serde(default)]
    pub bq: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for Couplings {
    fn default() -> Self {
        Couplings { j: 1.0, bq: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub t_max: f64,
    pub units: TimeUnits,
    /// Integration step for TCE; `None` picks `1e-3 / J_scale`.
    pub dt: Option<f64>,
    /// Output rows (analytic methods) or target recorded samples (integrators).
    pub samples: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig { t_max: 1.0, units: TimeUnits::Absolute, dt: None, samples: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TceConfig {
    /// Defaults to translation storage on periodic lattices, full otherwise.
    pub storage: Option<Storage>,
    pub monitor: MonitorOptions,
    /// Write the final cumulant state next to the CSV.
    pub checkpoint: bool,
    pub resume_from: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RswConfig {
    pub rotor: RotorCoupling,
    pub allow_unstable: bool,
    pub no_bosons: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EdConfig {
    pub dim_cap: usize,
}

impl Default for EdConfig {
    fn default() -> Self {
        EdConfig { dim_cap: crate::ed::DEFAULT_DIM_CAP }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.count == 0 || !self.start.is_finite() || !self.stop.is_finite() {
            return Err(Error::Invalid("grid needs count >= 1 and finite ends".into()));
        }
        if self.count == 1 {
            return Ok(vec![self.start]);
        }
        let h = (self.stop - self.start) / (self.count - 1) as f64;
        Ok((0..self.count).map(|k| self.start + h * k as f64).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeanFieldConfig {
    /// Periodic lattice for the coupling sums.
    pub lattice: usize,
    pub solver: MeanFieldOptions,
    /// Temperatures for `method = "meanfield"`.
    pub temperatures: Vec<f64>,
    /// B_q grid for `method = "phase-diagram"`.
    pub bq_grid: Option<Grid>,
    /// Also locate B_{q,m}, B_{q,c}, B_{q,p}.
    pub boundaries: bool,
    pub windows: BoundaryWindows,
}

impl Default for MeanFieldConfig {
    fn default() -> Self {
        MeanFieldConfig {
            lattice: DEFAULT_LATTICE,
            solver: MeanFieldOptions::default(),
            temperatures: Vec::new(),
            bq_grid: None,
            boundaries: false,
            windows: BoundaryWindows::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig1dConfig {
    pub bq: Vec<f64>,
    pub sizes: Vec<usize>,
    /// Sampling time as a fraction of the rotor t_min.
    pub fraction: f64,
    /// Also evaluate TCE (RSW is always evaluated).
    pub tce: bool,
}

impl Default for Fig1dConfig {
    fn default() -> Self {
        Fig1dConfig { bq: vec![0.0, 1.0, 2.0, 4.0, 7.0, 10.0], sizes: vec![6, 8, 10], fraction: 0.3, tce: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub method: Method,
    pub output_dir: PathBuf,
    /// Stem of the output files; defaults to the method name.
    #[serde(default)]
    pub name: Option<String>,
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub couplings: Couplings,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub tce: TceConfig,
    #[serde(default)]
    pub rsw: RswConfig,
    #[serde(default)]
    pub ed: EdConfig,
    #[serde(default)]
    pub meanfield: MeanFieldConfig,
    #[serde(default)]
    pub fig1d: Fig1dConfig,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Parse(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn stem(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.method.to_string())
    }

    pub fn spin(&self) -> Result<Spin> {
        Spin::from_f64(self.lattice.spin)
    }

    pub fn dims(&self) -> Result<(usize, usize)> {
        let lat = &self.lattice;
        match (lat.l, lat.lx, lat.ly) {
            (Some(l), None, None) => Ok((l, l)),
            (None, Some(x), Some(y)) => Ok((x, y)),
            _ => Err(Error::Invalid("give either lattice.l or both lattice.lx and lattice.ly".into())),
        }
    }

    pub fn lattice_spec(&self) -> Result<LatticeSpec> {
        let (lx, ly) = self.dims()?;
        LatticeSpec::rectangular(lx, ly, self.lattice.boundary, self.spin()?, self.couplings.j, self.couplings.bq)
    }

    pub fn storage(&self) -> Storage {
        match (self.tce.storage, self.lattice.boundary) {
            (Some(s), _) => s,
            (None, Boundary::Periodic) => Storage::Translation,
            (None, Boundary::Open) => Storage::Full,
        }
    }

    /// Methods that only need the spin length, not a lattice.
    pub fn site_only(&self) -> bool {
        matches!(self.method, Method::SingleSpin | Method::Meanfield | Method::PhaseDiagram | Method::Fig1d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.site_only() {
            self.spin()?;
        } else {
            self.lattice_spec()?;
        }
        let t = &self.time;
        if !(t.t_max >= 0.0) || !t.t_max.is_finite() {
            return Err(Error::Invalid("time.t_max must be finite and >= 0".into()));
        }
        if let Some(dt) = t.dt {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(Error::Invalid("time.dt must be positive".into()));
            }
        }
        if t.samples == 0 {
            return Err(Error::Invalid("time.samples must be >= 1".into()));
        }
        if let Some(name) = &self.name {
            if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
                return Err(Error::Invalid(format!("bad output name `{name}`")));
            }
        }
        if let Some(g) = &self.meanfield.bq_grid {
            g.values()?;
        }
        if self.meanfield.temperatures.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(Error::Invalid("meanfield.temperatures must be finite and >= 0".into()));
        }
        let f = &self.fig1d;
        if !(f.fraction > 0.0) || !f.fraction.is_finite() {
            return Err(Error::Invalid("fig1d.fraction must be positive".into()));
        }
        if self.method == Method::Fig1d && (f.bq.is_empty() || f.sizes.is_empty()) {
            return Err(Error::Invalid("fig1d needs non-empty bq and sizes".into()));
        }
        Ok(())
    }
}
