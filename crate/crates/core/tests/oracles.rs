//! Closed-form and limiting values checked through the public API.

use dipsqz::ed::{evolve_exact, EdSystem, DEFAULT_DIM_CAP};
use dipsqz::lattice::{build_couplings, css_energy, inverse_moment_of_inertia, Boundary, LatticeSpec};
use dipsqz::meanfield::{single_site_energy, MeanFieldModel, MeanFieldOptions};
use dipsqz::oat::{oat_moments, oat_squeezing, optimal_time, OatParams};
use dipsqz::rsw::{instability_threshold, mode_population, spin_wave_rotor_coupling};
use dipsqz::tce::{integrate, IntegrateOptions, MonitorOptions, Storage, TceSystem};
use dipsqz::Spin;

fn spin(twice: i64) -> Spin {
    Spin::from_twice(twice).unwrap()
}

#[test]
fn fresh_coherent_state_is_unsqueezed_everywhere() {
    let spec = LatticeSpec::new(2, Boundary::Periodic, spin(2), 1.0, 0.7).unwrap();
    let table = build_couplings(&spec).unwrap();
    let sys = TceSystem::new(&spec, Storage::Translation).unwrap();
    let tce = sys.observables(&sys.initialize_css());
    let ed = EdSystem::new(&spec, DEFAULT_DIM_CAP).unwrap().evolve_exact(&[0.0]).remove(0);
    let e_css = css_energy(&spec, &table);
    for o in [&tce, &ed] {
        assert!((o.xi2.unwrap() - 1.0).abs() < 1e-12);
        assert!((o.ratio.unwrap() - 1.0).abs() < 1e-12);
        assert!((o.mean[0] - spec.total_spin()).abs() < 1e-12);
        assert!((o.energy - e_css).abs() < 1e-12);
    }
    assert_eq!(oat_squeezing(&OatParams::new(3.0, 1.0).unwrap(), 0.0), 1.0);
}

#[test]
fn spin_half_pair_is_one_axis_twisting() {
    // triplet sector: H = const + (3J/4) (J^z)^2
    let j = 0.8;
    let spec = LatticeSpec::rectangular(2, 1, Boundary::Open, spin(1), j, 0.0).unwrap();
    let times: Vec<f64> = (0..=40).map(|k| 0.1 * k as f64).collect();
    let ed = evolve_exact(&spec, &times, DEFAULT_DIM_CAP).unwrap();
    let p = OatParams::new(1.0, 0.75 * j).unwrap();
    for (o, &t) in ed.iter().zip(&times) {
        let m = oat_moments(&p, t);
        assert!((o.moments.mean_x - m.mean_x).abs() < 1e-12, "t = {t}");
        for a in 0..2 {
            for b in 0..2 {
                assert!((o.moments.cov[a][b] - m.cov[a][b]).abs() < 1e-12, "t = {t}");
            }
        }
    }
}

#[test]
fn spin_half_pair_tce_matches_twisting_too() {
    let spec = LatticeSpec::rectangular(2, 1, Boundary::Open, spin(1), 1.0, 0.0).unwrap();
    let sys = TceSystem::new(&spec, Storage::Full).unwrap();
    let mut opts = IntegrateOptions::new(1e-3, 2.0);
    opts.monitor = MonitorOptions::unmonitored();
    opts.record_every = 250;
    let rep = integrate(&sys, sys.initialize_css(), &opts).unwrap();
    let p = OatParams::new(1.0, 0.75).unwrap();
    for o in &rep.samples {
        assert!((o.moments.mean_x - oat_moments(&p, o.t).mean_x).abs() < 1e-10);
    }
}

#[test]
fn twisting_time_matches_large_k_asymptote() {
    // chi t_min -> 3^{1/6} (2K)^{-2/3} for large K
    let k = 1e6;
    let opt = optimal_time(&OatParams::new(k, 1.0).unwrap()).unwrap();
    let asym = 3f64.powf(1.0 / 6.0) * (2.0 * k).powf(-2.0 / 3.0);
    assert!((opt.t_min / asym - 1.0).abs() < 0.01, "{} vs {asym}", opt.t_min);
}

#[test]
fn instability_threshold_matches_closed_form() {
    // omega^2 at (pi, pi) vanishes where A = -B there
    let l = 64;
    let spec = LatticeSpec::new(l, Boundary::Periodic, spin(6), 1.0, 0.0).unwrap();
    let table = build_couplings(&spec).unwrap();
    let j0 = table.jk_at(0, 0).unwrap();
    let jpi = table.jk_at(l / 2, l / 2).unwrap();
    let th = instability_threshold(&spec, &table, -3.0, 0.0).unwrap().unwrap();
    assert!((th.bq + (j0 / 2.0 + jpi) / 2.0).abs() < 1e-9, "{} vs {}", th.bq, -(j0 / 2.0 + jpi) / 2.0);
}

#[test]
fn spin_wave_rotor_coupling_exceeds_inertia_value() {
    let spec = LatticeSpec::new(8, Boundary::Periodic, spin(6), 1.0, 2.0).unwrap();
    let table = build_couplings(&spec).unwrap();
    let n = spec.n_sites() as f64;
    let chi = spin_wave_rotor_coupling(&spec, &table);
    assert!((chi - (0.75 * table.sum_d() / (n * n) + 2.0 / n)).abs() < 1e-14);
    assert!(chi > inverse_moment_of_inertia(&spec, &table));
}

#[test]
fn boson_population_limits() {
    assert_eq!(mode_population(1.0, 0.0, 3.0), 0.0);
    let (a, b, t) = (2.0f64, 1.0f64, 0.4f64);
    let w = (a * a - b * b).sqrt();
    assert!((mode_population(a, b, t) - (b * (w * t).sin() / w).powi(2)).abs() < 1e-15);
    assert!((mode_population(1.0, 1.0, 0.5) - 0.25).abs() < 1e-15);
}

#[test]
fn dipolar_sums_approach_the_infinite_lattice() {
    // sum over Z^2 \ 0 of 1/r^3 = 4 zeta(3/2) beta(3/2)
    let infinite = 9.033_621_683_100_6;
    let d16 = MeanFieldModel::new(spin(6), 1.0, 0.0, 16).unwrap().d0;
    let d48 = MeanFieldModel::new(spin(6), 1.0, 0.0, 48).unwrap().d0;
    assert!(d16 < d48 && d48 < infinite);
    assert!((d48 - 8.7978).abs() < 1e-3);
}

#[test]
fn lone_spin_thermal_energy_limits() {
    let s = spin(6);
    let bq = 2.0;
    // infinite temperature: uniform over m
    let hot = single_site_energy(s, bq, 1e9);
    assert!((hot - bq * 3.0 * 4.0 / 3.0).abs() < 1e-6);
    // low temperature: m = 0 for B_q > 0
    assert!(single_site_energy(s, bq, 1e-3).abs() < 1e-100);
}

#[test]
fn css_temperature_vanishes_without_quadratic_shift() {
    let m = MeanFieldModel::new(spin(6), 1.0, 0.0, 16).unwrap();
    assert_eq!(m.t_css(&MeanFieldOptions::default()).unwrap(), 0.0);
}
