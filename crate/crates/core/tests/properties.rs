use dipsqz::analysis::{crossing_time, fit_power_law};
use dipsqz::config::Config;
use dipsqz::ed::{EdSystem, DEFAULT_DIM_CAP};
use dipsqz::lattice::{build_couplings, Boundary, LatticeSpec};
use dipsqz::meanfield::MeanFieldModel;
use dipsqz::oat::{heisenberg_ratio, oat_moments, squeezing_with_norm, OatParams};
use dipsqz::output::{Cell, Manifest, Table};
use dipsqz::rsw::{coefficients, goldstone_omega2, mode_population, mode_population_ode, mode_table};
use dipsqz::spin::{coherent_state, expectation, spin_operators};
use dipsqz::tce::checkpoint::{decode, encode};
use dipsqz::tce::{integrate, IntegrateOptions, MonitorOptions, Storage, TceSystem};
use dipsqz::Spin;
use proptest::prelude::*;

fn spin_strategy(max_twice: i64) -> impl Strategy<Value = Spin> {
    (1..=max_twice).prop_map(|t| Spin::from_twice(t).unwrap())
}

fn unit_axis() -> impl Strategy<Value = [f64; 3]> {
    (0.0f64..std::f64::consts::PI, 0.0f64..2.0 * std::f64::consts::PI)
        .prop_map(|(th, ph)| [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()])
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn coherent_states_point_along_their_axis(s in spin_strategy(16), n in unit_axis()) {
        let ops = spin_operators(s);
        let psi = coherent_state(s, n).unwrap();
        let norm: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
        prop_assert!((norm - 1.0).abs() < 1e-12);
        for (op, nk) in [(&ops.sx, n[0]), (&ops.sy, n[1]), (&ops.sz, n[2])] {
            prop_assert!((expectation(op, &psi).re - s.value() * nk).abs() < 1e-10);
        }
    }

    #[test]
    fn periodic_couplings_are_symmetric_and_translation_invariant(
        lx in 2usize..7, ly in 2usize..7, sx in 0usize..6, sy in 0usize..6,
    ) {
        let spec = LatticeSpec::rectangular(lx, ly, Boundary::Periodic, Spin::from_twice(1).unwrap(), 1.0, 0.0).unwrap();
        let t = build_couplings(&spec).unwrap();
        let shift = |i: usize| {
            let (x, y) = spec.coords(i);
            spec.site((x + sx) % lx, (y + sy) % ly)
        };
        for i in 0..spec.n_sites() {
            prop_assert_eq!(t.d(i, i), 0.0);
            for j in 0..spec.n_sites() {
                prop_assert_eq!(t.d(i, j), t.d(j, i));
                prop_assert!((t.d(i, j) - t.d(shift(i), shift(j))).abs() < 1e-15);
                if i != j {
                    prop_assert!(t.d(i, j) > 0.0 && t.d(i, j) <= 1.0);
                }
            }
        }
    }

    #[test]
    fn spin_wave_frequency_is_product_of_branches(
        s in 0.5f64..8.0, j0 in 0.0f64..10.0, jk in -3.0f64..10.0, bq in -5.0f64..20.0,
    ) {
        let (a, b) = coefficients(s, j0, jk, bq);
        let w2 = (a + b) * (a - b);
        prop_assert!((w2 - (a * a - b * b)).abs() <= 1e-9 * (a * a + b * b).max(1.0));
    }

    #[test]
    fn goldstone_mode_is_gapless(s in spin_strategy(16), l in 2usize..12, bq in -2.0f64..20.0) {
        let spec = LatticeSpec::new(l, Boundary::Periodic, s, 1.0, bq).unwrap();
        let table = build_couplings(&spec).unwrap();
        prop_assert_eq!(goldstone_omega2(&spec, &table).unwrap(), 0.0);
        let modes = mode_table(&spec, &table).unwrap();
        prop_assert!(modes.modes.iter().all(|m| m.omega2.is_finite()));
    }

    #[test]
    fn boson_population_closed_form_matches_ode(a in -4.0f64..4.0, b in -4.0f64..4.0, t in 0.0f64..1.5) {
        let closed = mode_population(a, b, t);
        let ode = mode_population_ode(a, b, t, 4000);
        prop_assert!(closed >= -1e-12);
        prop_assert!((closed - ode).abs() <= 1e-7 * closed.abs().max(1.0));
    }

    #[test]
    fn oat_states_respect_uncertainty(twice_k in 1u32..400, chi_t in 0.0f64..0.5) {
        let k = twice_k as f64 / 2.0;
        let m = oat_moments(&OatParams::new(k, 1.0).unwrap(), chi_t);
        let (lo, hi) = m.transverse_eigenvalues();
        prop_assert!(lo >= -1e-9 * k && hi >= lo);
        prop_assert!(m.mean_x <= k + 1e-9);
        if m.mean_x.abs() > 1e-6 * k {
            prop_assert!(heisenberg_ratio(&m).unwrap() >= 1.0 - 1e-9);
            prop_assert!(squeezing_with_norm(&m, 2.0 * k).unwrap().xi2 > 0.0);
        }
    }

    #[test]
    fn power_law_fit_recovers_exact_laws(amp in 0.01f64..100.0, expo in -3.0f64..3.0, x0 in 1.0f64..10.0) {
        let x: Vec<f64> = (0..8).map(|k| x0 * 1.7f64.powi(k)).collect();
        let y: Vec<f64> = x.iter().map(|v| amp * v.powf(expo)).collect();
        let fit = fit_power_law(&x, &y).unwrap();
        prop_assert!((fit.exponent - expo).abs() < 1e-9);
        prop_assert!((fit.amplitude / amp - 1.0).abs() < 1e-9);
    }

    #[test]
    fn crossing_lies_inside_the_bracket(a in 1e-6f64..5.0, b in -5.0f64..-1e-6, t0 in 0.0f64..3.0, h in 1e-3f64..1.0) {
        let t = [t0, t0 + h, t0 + 2.0 * h];
        let c = crossing_time(&t, &[2.0 * a, a, b]).unwrap();
        prop_assert!(c > t[1] && c <= t[2]);
    }

    #[test]
    fn csv_tables_round_trip(rows in prop::collection::vec(prop::collection::vec(prop::option::of(-1e300f64..1e300), 3), 0..20)) {
        let mut t = Table::new(&["a", "b", "c"]);
        for r in &rows {
            t.push(r.iter().map(|v| Cell::opt(*v)).collect());
        }
        let back = Table::from_csv(&t.to_csv().unwrap()).unwrap();
        prop_assert_eq!(&back.headers, &t.headers);
        for name in ["a", "b", "c"] {
            prop_assert_eq!(back.column(name).unwrap(), t.column(name).unwrap());
        }
    }

    #[test]
    fn manifests_round_trip(entries in prop::collection::btree_map("[a-z][a-z_.]{0,12}", "[ -~]{0,30}", 0..10)) {
        let mut m = Manifest::default();
        for (k, v) in &entries {
            m.set(k.clone(), v);
        }
        let back = Manifest::parse(&m.render()).unwrap();
        for (k, v) in &entries {
            prop_assert_eq!(back.get(k), Some(v.as_str()));
        }
    }

    #[test]
    fn configs_round_trip(l in 2usize..40, twice in 1i64..17, bq in -50.0f64..50.0, t_max in 0.01f64..10.0, samples in 1usize..500) {
        let text = format!(
            "method = \"tce\"\noutput_dir = \"out\"\n[lattice]\nl = {l}\nspin = {}\n[couplings]\nbq = {bq}\n[time]\nt_max = {t_max}\nsamples = {samples}\n",
            twice as f64 / 2.0
        );
        let cfg = Config::parse(&text).unwrap();
        let again = Config::parse(&cfg.to_toml()).unwrap();
        prop_assert_eq!(again.to_toml(), cfg.to_toml());
        prop_assert_eq!(again.couplings.bq, bq);
    }

    #[test]
    fn paramagnet_is_a_fixed_point(s in spin_strategy(16), bq in -5.0f64..60.0, t in 0.01f64..50.0) {
        let m = MeanFieldModel::from_sums(s, 1.0, bq, 9.0, -2.6);
        let (a, b) = m.update(&[0.0; 3], &[0.0; 3], t);
        prop_assert!(a.iter().chain(&b).all(|v| v.abs() < 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn two_site_tce_follows_ed(s in spin_strategy(3), j in -1.5f64..1.5, bq in -2.0f64..2.0) {
        let spec = LatticeSpec::rectangular(2, 1, Boundary::Open, s, j, bq).unwrap();
        let sys = TceSystem::new(&spec, Storage::Full).unwrap();
        let mut opts = IntegrateOptions::new(1e-3, 0.5);
        opts.monitor = MonitorOptions::unmonitored();
        opts.record_every = 100;
        let rep = integrate(&sys, sys.initialize_css(), &opts).unwrap();
        let times: Vec<f64> = rep.samples.iter().map(|o| o.t).collect();
        let ed = EdSystem::new(&spec, DEFAULT_DIM_CAP).unwrap().evolve_exact(&times);
        for (a, b) in rep.samples.iter().zip(&ed) {
            prop_assert!((a.moments.mean_x - b.moments.mean_x).abs() < 1e-8);
            prop_assert!((a.var_min - b.var_min).abs() < 1e-8);
            prop_assert!((a.var_max - b.var_max).abs() < 1e-8);
            prop_assert!((a.energy - b.energy).abs() < 1e-8);
        }
    }

    #[test]
    fn checkpoints_round_trip(s in spin_strategy(4), l in 2usize..4, bq in -2.0f64..2.0, t in 0.0f64..0.2) {
        let spec = LatticeSpec::new(l, Boundary::Periodic, s, 1.0, bq).unwrap();
        let sys = TceSystem::new(&spec, Storage::Translation).unwrap();
        let mut opts = IntegrateOptions::new(0.01, t);
        opts.monitor = MonitorOptions::unmonitored();
        let state = integrate(&sys, sys.initialize_css(), &opts).unwrap().final_state;
        let back = decode(&encode(&state)).unwrap();
        prop_assert_eq!(back.time, state.time);
        prop_assert_eq!(back.data, state.data);
    }
}
