//! Square-lattice geometry and dipolar couplings.
//!
//! The field is perpendicular to the plane, so every pair couples with
//! `D_ij = 1 / r_ij^3 > 0`. Lengths are in units of the lattice spacing.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::Spin;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Open,
    /// Minimum-image distances on the L x L torus.
    Periodic,
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Boundary::Open => f.write_str("open"),
            Boundary::Periodic => f.write_str("periodic"),
        }
    }
}

/// Model parameters: geometry, spin length and the two energy scales.
///
/// The cluster is an `lx x ly` patch of the square lattice; `lx == ly` is the
/// production geometry, strips (e.g. 2 x 1) serve the exact-diagonalization
/// cross-checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSpec {
    pub lx: usize,
    pub ly: usize,
    pub boundary: Boundary,
    pub spin: Spin,
    /// Overall dipolar strength.
    pub j: f64,
    /// Quadratic Zeeman shift.
    pub bq: f64,
}

impl LatticeSpec {
    /// L x L square cluster.
    pub fn new(l: usize, boundary: Boundary, spin: Spin, j: f64, bq: f64) -> Result<Self> {
        Self::rectangular(l, l, boundary, spin, j, bq)
    }

    pub fn rectangular(
        lx: usize,
        ly: usize,
        boundary: Boundary,
        spin: Spin,
        j: f64,
        bq: f64,
    ) -> Result<Self> {
        let spec = LatticeSpec { lx, ly, boundary, spin, j, bq };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lx == 0 || self.ly == 0 {
            return Err(Error::Lattice("L must be at least 1".into()));
        }
        if self.boundary == Boundary::Periodic && self.n_sites() == 1 {
            return Err(Error::Lattice(
                "periodic boundary needs L >= 2 (a single site is its own image)".into(),
            ));
        }
        if !self.j.is_finite() || !self.bq.is_finite() {
            return Err(Error::Invalid("couplings must be finite".into()));
        }
        Ok(())
    }

    pub fn n_sites(&self) -> usize {
        self.lx * self.ly
    }

    pub fn is_square(&self) -> bool {
        self.lx == self.ly
    }

    pub fn with_bq(&self, bq: f64) -> Self {
        LatticeSpec { bq, ..*self }
    }

    pub fn coords(&self, site: usize) -> (usize, usize) {
        (site / self.ly, site % self.ly)
    }

    pub fn site(&self, x: usize, y: usize) -> usize {
        x * self.ly + y
    }

    /// Total collective spin length N S.
    pub fn total_spin(&self) -> f64 {
        self.n_sites() as f64 * self.spin.value()
    }
}

#[derive(Debug, Clone)]
enum Pairs {
    /// `D` indexed by the displacement `(dx mod Lx) * Ly + (dy mod Ly)`.
    Translation(Vec<f64>),
    /// Full symmetric N x N table.
    Dense(Vec<f64>),
}

/// Dipolar factors and their Fourier transform.
#[derive(Debug, Clone)]
pub struct CouplingTable {
    lx: usize,
    ly: usize,
    boundary: Boundary,
    pairs: Pairs,
    /// J_k for k = 2 pi (nx / Lx, ny / Ly), indexed `nx * Ly + ny`; periodic only.
    jk: Option<Vec<f64>>,
    sum_d: f64,
}

/// Signed minimum images of a displacement component on a ring of length `l`.
/// A component of exactly l/2 has two tied images and both are returned.
fn ring_images(l: usize, v: usize) -> Vec<f64> {
    let a = (v % l) as f64;
    let b = a - l as f64;
    if (a.abs() - b.abs()).abs() < 1e-12 {
        vec![a, b]
    } else if a.abs() < b.abs() {
        vec![a]
    } else {
        vec![b]
    }
}

/// Dipolar factor for a displacement on the torus, averaged over tied
/// minimum images.
pub fn periodic_dipolar_factor(lx: usize, ly: usize, dx: usize, dy: usize) -> f64 {
    let (xs, ys) = (ring_images(lx, dx), ring_images(ly, dy));
    let mut acc = 0.0;
    let mut count = 0.0;
    for x in &xs {
        for y in &ys {
            let r2 = x * x + y * y;
            if r2 > 0.0 {
                acc += r2.powf(-1.5);
            }
            count += 1.0;
        }
    }
    acc / count
}

pub fn build_couplings(spec: &LatticeSpec) -> Result<CouplingTable> {
    spec.validate()?;
    let (lx, ly) = (spec.lx, spec.ly);
    let n = spec.n_sites();
    match spec.boundary {
        Boundary::Periodic => {
            let mut disp = vec![0.0; n];
            for dx in 0..lx {
                for dy in 0..ly {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    disp[dx * ly + dy] = periodic_dipolar_factor(lx, ly, dx, dy);
                }
            }
            let per_site: f64 = disp.iter().sum();
            let jk = fourier_table(lx, ly, &disp, spec.j);
            Ok(CouplingTable {
                lx,
                ly,
                boundary: Boundary::Periodic,
                pairs: Pairs::Translation(disp),
                jk: Some(jk),
                sum_d: per_site * n as f64,
            })
        }
        Boundary::Open => {
            let mut dense = vec![0.0; n * n];
            let mut sum_d = 0.0;
            for i in 0..n {
                let (xi, yi) = spec.coords(i);
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let (xj, yj) = spec.coords(j);
                    let dx = xi as f64 - xj as f64;
                    let dy = yi as f64 - yj as f64;
                    let d = (dx * dx + dy * dy).powf(-1.5);
                    dense[i * n + j] = d;
                    sum_d += d;
                }
            }
            Ok(CouplingTable {
                lx,
                ly,
                boundary: Boundary::Open,
                pairs: Pairs::Dense(dense),
                jk: None,
                sum_d,
            })
        }
    }
}

fn phase_table(l: usize) -> (Vec<f64>, Vec<f64>) {
    let mut c = vec![0.0; l * l];
    let mut s = vec![0.0; l * l];
    for n in 0..l {
        for x in 0..l {
            let arg = 2.0 * PI * ((n * x) % l) as f64 / l as f64;
            c[n * l + x] = arg.cos();
            s[n * l + x] = arg.sin();
        }
    }
    (c, s)
}

/// J_k = J sum_{r != 0} D(r) cos(k.r); the sine part cancels because D(r) = D(-r).
fn fourier_table(lx: usize, ly: usize, disp: &[f64], j: f64) -> Vec<f64> {
    let (cxt, sxt) = phase_table(lx);
    let (cyt, syt) = phase_table(ly);
    let mut out = vec![0.0; lx * ly];
    for nx in 0..lx {
        for ny in 0..ly {
            let mut acc = 0.0;
            for dx in 0..lx {
                let (cx, sx) = (cxt[nx * lx + dx], sxt[nx * lx + dx]);
                for dy in 0..ly {
                    let d = disp[dx * ly + dy];
                    if d == 0.0 {
                        continue;
                    }
                    let (cy, sy) = (cyt[ny * ly + dy], syt[ny * ly + dy]);
                    acc += d * (cx * cy - sx * sy);
                }
            }
            out[nx * ly + ny] = j * acc;
        }
    }
    out
}

impl CouplingTable {
    pub fn n_sites(&self) -> usize {
        self.lx * self.ly
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.lx, self.ly)
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Dimensionless factor D_ij (zero on the diagonal).
    pub fn d(&self, i: usize, j: usize) -> f64 {
        match &self.pairs {
            Pairs::Dense(m) => m[i * self.n_sites() + j],
            Pairs::Translation(disp) => disp[self.displacement(i, j)],
        }
    }

    /// Displacement index of `r_j - r_i` on the torus.
    pub fn displacement(&self, i: usize, j: usize) -> usize {
        let (lx, ly) = (self.lx, self.ly);
        let (xi, yi) = (i / ly, i % ly);
        let (xj, yj) = (j / ly, j % ly);
        ((xj + lx - xi) % lx) * ly + (yj + ly - yi) % ly
    }

    /// Displacement-indexed table on the torus.
    pub fn displacement_table(&self) -> Option<&[f64]> {
        match &self.pairs {
            Pairs::Translation(d) => Some(d),
            Pairs::Dense(_) => None,
        }
    }

    /// `sum_{i != j} D_ij`.
    pub fn sum_d(&self) -> f64 {
        self.sum_d
    }

    /// `sum_{j != i} D_ij` averaged over sites.
    pub fn sum_d_per_site(&self) -> f64 {
        self.sum_d / self.n_sites() as f64
    }

    /// Momentum-space couplings, present for periodic tables.
    pub fn jk(&self) -> Option<&[f64]> {
        self.jk.as_deref()
    }

    pub fn jk_at(&self, nx: usize, ny: usize) -> Option<f64> {
        self.jk
            .as_ref()
            .map(|t| t[(nx % self.lx) * self.ly + ny % self.ly])
    }

    /// Momentum (kx, ky) of the table entry `nx * Ly + ny`, folded into (-pi, pi].
    pub fn momentum(&self, idx: usize) -> (f64, f64) {
        let fold = |n: usize, l: usize| {
            let k = 2.0 * PI * n as f64 / l as f64;
            if k > PI + 1e-12 {
                k - 2.0 * PI
            } else {
                k
            }
        };
        (fold(idx / self.ly, self.lx), fold(idx % self.ly, self.ly))
    }

    /// Table index of -k.
    pub fn opposite_momentum(&self, idx: usize) -> usize {
        let (nx, ny) = (idx / self.ly, idx % self.ly);
        ((self.lx - nx) % self.lx) * self.ly + (self.ly - ny) % self.ly
    }
}

/// 1/(2I) = (J / 2N^2) sum_{i != j} D_ij + B_q / N.
pub fn inverse_moment_of_inertia(spec: &LatticeSpec, table: &CouplingTable) -> f64 {
    let n = table.n_sites() as f64;
    spec.j / (2.0 * n * n) * table.sum_d() + spec.bq / n
}

/// Rotor zero-point energy E_{0,R} = -S(NS+1)/(2N) J sum_{i != j} D_ij.
pub fn rotor_zero_point_energy(spec: &LatticeSpec, table: &CouplingTable) -> f64 {
    let n = table.n_sites() as f64;
    let s = spec.spin.value();
    -s * (n * s + 1.0) / (2.0 * n) * spec.j * table.sum_d()
}

/// <CSS_x|H|CSS_x> = -(J S^2 / 2) sum_{i<j} D_ij + B_q N S / 2.
pub fn css_energy(spec: &LatticeSpec, table: &CouplingTable) -> f64 {
    let s = spec.spin.value();
    let pairs = 0.5 * table.sum_d();
    -0.5 * spec.j * s * s * pairs + spec.bq * table.n_sites() as f64 * s / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spin(twice: i64) -> Spin {
        Spin::from_twice(twice).unwrap()
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(LatticeSpec::new(0, Boundary::Open, spin(1), 1.0, 0.0).is_err());
        assert!(LatticeSpec::new(1, Boundary::Periodic, spin(1), 1.0, 0.0).is_err());
        assert!(LatticeSpec::new(1, Boundary::Open, spin(1), 1.0, 0.0).is_ok());
    }

    #[test]
    fn nearest_and_diagonal_neighbors() {
        for b in [Boundary::Open, Boundary::Periodic] {
            let spec = LatticeSpec::new(5, b, spin(2), 1.0, 0.0).unwrap();
            let t = build_couplings(&spec).unwrap();
            assert_eq!(t.d(spec.site(1, 1), spec.site(1, 2)), 1.0);
            let diag = t.d(spec.site(1, 1), spec.site(2, 2));
            assert!((diag - 2f64.powf(-1.5)).abs() < 1e-15);
            assert!((diag - 0.353553).abs() < 1e-6);
        }
    }

    #[test]
    fn periodic_table_by_brute_force_double_sum() {
        // 4x4 torus: explicit enumeration of every ordered site pair
        let spec = LatticeSpec::new(4, Boundary::Periodic, spin(1), 1.0, 0.0).unwrap();
        let t = build_couplings(&spec).unwrap();
        let n = 16;
        let pair_d = |i: usize, j: usize| -> f64 {
            let (xi, yi) = (i / 4, i % 4);
            let (xj, yj) = (j / 4, j % 4);
            // every image among {-4,0,4} shifts, keep the shortest, average ties
            let mut best = f64::INFINITY;
            let mut vals = Vec::new();
            for sx in [-4i64, 0, 4] {
                for sy in [-4i64, 0, 4] {
                    let dx = xj as i64 - xi as i64 + sx;
                    let dy = yj as i64 - yi as i64 + sy;
                    let r = ((dx * dx + dy * dy) as f64).sqrt();
                    if r + 1e-12 < best {
                        best = r;
                        vals.clear();
                    }
                    if (r - best).abs() < 1e-12 {
                        vals.push(r.powi(-3));
                    }
                }
            }
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        let mut j0 = 0.0;
        let mut jpi = 0.0;
        let mut sum = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let d = pair_d(i, j);
                assert!((t.d(i, j) - d).abs() < 1e-14, "pair {i} {j}");
                let (xi, yi) = (i / 4, i % 4);
                let (xj, yj) = (j / 4, j % 4);
                let phase = PI * ((xi + yi + xj + yj) as f64);
                j0 += d;
                jpi += phase.cos() * d;
                sum += d;
            }
        }
        j0 /= n as f64;
        jpi /= n as f64;
        assert!((t.jk_at(0, 0).unwrap() - j0).abs() < 1e-12);
        assert!((t.jk_at(2, 2).unwrap() - jpi).abs() < 1e-12);
        assert!(t.jk_at(2, 2).unwrap() < 0.0 && 0.0 < t.jk_at(0, 0).unwrap());
        assert!((t.sum_d() - sum).abs() < 1e-12);
        // frozen values of the brute-force sum
        assert!((j0 - 6.066178612597221).abs() < 1e-12);
        assert!((jpi - (-2.649363140202713)).abs() < 1e-12);
    }

    #[test]
    fn jk_sums_to_zero_and_is_symmetric() {
        for l in [2, 3, 4, 7, 8] {
            let spec = LatticeSpec::new(l, Boundary::Periodic, spin(6), 1.3, 0.0).unwrap();
            let t = build_couplings(&spec).unwrap();
            let jk = t.jk().unwrap();
            let s: f64 = jk.iter().sum();
            assert!(s.abs() < 1e-11, "L={l} sum={s}");
            for nx in 0..l {
                for ny in 0..l {
                    let a = t.jk_at(nx, ny).unwrap();
                    let b = t.jk_at(l - nx, l - ny).unwrap();
                    assert!((a - b).abs() < 1e-12);
                }
            }
            let n = (l * l) as f64;
            assert!((t.jk_at(0, 0).unwrap() * n / 1.3 - t.sum_d()).abs() < 1e-9);
        }
    }

    #[test]
    fn couplings_positive_symmetric_and_decreasing() {
        let spec = LatticeSpec::new(6, Boundary::Periodic, spin(1), 1.0, 0.0).unwrap();
        let t = build_couplings(&spec).unwrap();
        let mut by_dist = Vec::new();
        for i in 0..36 {
            for j in 0..36 {
                if i == j {
                    continue;
                }
                assert!(t.d(i, j) > 0.0);
                assert_eq!(t.d(i, j), t.d(j, i));
                let (xi, yi) = spec.coords(i);
                let (xj, yj) = spec.coords(j);
                let fold = |a: usize, b: usize| {
                    let d = (a as i64 - b as i64).rem_euclid(6);
                    d.min(6 - d) as f64
                };
                let r = fold(xi, xj).hypot(fold(yi, yj));
                by_dist.push((r, t.d(i, j)));
            }
        }
        by_dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in by_dist.windows(2) {
            if w[1].0 > w[0].0 + 1e-12 {
                assert!(w[1].1 < w[0].1);
            }
        }
    }

    #[test]
    fn inertia_limits() {
        let spec = LatticeSpec::new(4, Boundary::Open, spin(6), 0.0, 3.0).unwrap();
        let t = build_couplings(&spec).unwrap();
        assert_eq!(inverse_moment_of_inertia(&spec, &t), 3.0 / 16.0);
        let single = LatticeSpec::new(1, Boundary::Open, spin(6), 1.0, 2.5).unwrap();
        let t1 = build_couplings(&single).unwrap();
        assert_eq!(inverse_moment_of_inertia(&single, &t1), 2.5);
        assert_eq!(rotor_zero_point_energy(&single, &t1), 0.0);
    }

    #[test]
    fn inertia_open_4x4_pair_sum() {
        let spec = LatticeSpec::new(4, Boundary::Open, spin(2), 1.0, 0.0).unwrap();
        let t = build_couplings(&spec).unwrap();
        let mut brute = 0.0;
        for i in 0..16 {
            for j in 0..16 {
                if i != j {
                    let (xi, yi) = (i / 4, i % 4);
                    let (xj, yj) = (j / 4, j % 4);
                    let r = ((xi as f64 - xj as f64).powi(2) + (yi as f64 - yj as f64).powi(2)).sqrt();
                    brute += r.powi(-3);
                }
            }
        }
        // J / (2 N^2) with N = 16
        assert!((inverse_moment_of_inertia(&spec, &t) - brute / 512.0).abs() < 1e-14);
        let doubled = LatticeSpec { j: 2.0, ..spec };
        assert!((inverse_moment_of_inertia(&doubled, &t) - 2.0 * brute / 512.0).abs() < 1e-14);
    }

    #[test]
    fn zero_point_energy_two_sites() {
        // -S(NS+1)/(2N) J sum D with S = 1/2, N = 2, sum D = 2
        let spec = LatticeSpec::rectangular(2, 1, Boundary::Open, spin(1), 1.0, 0.0).unwrap();
        let t = build_couplings(&spec).unwrap();
        assert_eq!(t.sum_d(), 2.0);
        assert!((rotor_zero_point_energy(&spec, &t) - (-0.5)).abs() < 1e-15);
        let big = LatticeSpec::new(3, Boundary::Periodic, spin(6), 1.0, 0.0).unwrap();
        assert!(rotor_zero_point_energy(&big, &build_couplings(&big).unwrap()) < 0.0);
    }

    #[test]
    fn two_site_css_energy() {
        let spec = LatticeSpec::rectangular(2, 1, Boundary::Open, spin(1), 1.0, 0.0).unwrap();
        let t = build_couplings(&spec).unwrap();
        assert!((css_energy(&spec, &t) - (-0.125)).abs() < 1e-15);
    }

    #[test]
    fn css_energy_cases() {
        let one = LatticeSpec::new(1, Boundary::Open, spin(3), 1.0, 0.0).unwrap();
        assert_eq!(css_energy(&one, &build_couplings(&one).unwrap()), 0.0);
        let spec = LatticeSpec::new(3, Boundary::Open, spin(4), 0.0, 1.7).unwrap();
        let t = build_couplings(&spec).unwrap();
        assert!((css_energy(&spec, &t) - 1.7 * 9.0 * 2.0 / 2.0).abs() < 1e-14);
    }
}
