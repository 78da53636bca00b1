//! Observable record shared by the TCE, ED and RSW drivers.

use crate::oat::{heisenberg_ratio, squeezing_from_moments, CollectiveMoments};
use crate::spin::Spin;

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub t: f64,
    /// `<J^x>, <J^y>, <J^z>`.
    pub mean: [f64; 3],
    pub moments: CollectiveMoments,
    pub energy: f64,
    pub total_j2: f64,
    pub var_min: f64,
    pub var_max: f64,
    /// `None` when `<J^x> = 0`.
    pub xi2: Option<f64>,
    pub angle: Option<f64>,
    pub ratio: Option<f64>,
}

impl Observation {
    pub fn new(t: f64, mean: [f64; 3], moments: CollectiveMoments, energy: f64, n_sites: usize, spin: Spin) -> Self {
        let (var_min, var_max) = moments.transverse_eigenvalues();
        let sq = squeezing_from_moments(&moments, n_sites, spin).ok();
        Observation {
            t,
            mean,
            total_j2: moments.total_j2.unwrap_or(f64::NAN),
            moments,
            energy,
            var_min,
            var_max,
            xi2: sq.map(|s| s.xi2),
            angle: sq.map(|s| s.angle),
            ratio: heisenberg_ratio(&moments).ok(),
        }
    }
}
