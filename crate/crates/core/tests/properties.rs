use proptest::prelude::*;

use shelab_core::blowup::wilson_interval;
use shelab_core::integrator::run;
use shelab_core::lattice::{kernel_matrix, walk_kernel};
use shelab_core::model::{osgood_sum, ScalarFn};
use shelab_core::{parse_config, Boundary, LatticeDomain, ModelSpec, NoiseSource, SolverConfig};

fn boundary() -> impl Strategy<Value = Boundary> {
    prop_oneof![
        Just(Boundary::Dirichlet),
        Just(Boundary::Neumann),
        Just(Boundary::Periodic),
        Just(Boundary::FreeTruncated),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernel_is_symmetric_substochastic(b in boundary(), k in 2i32..5, t in 0.0f64..0.5) {
        let d = LatticeDomain::interval(0.0, 1.0, 2f64.powi(-k), b).unwrap();
        let m = kernel_matrix(t, &d).unwrap();
        for i in 0..m.n() {
            let s = m.row_sum(i);
            prop_assert!(s <= 1.0 + 1e-12);
            if matches!(b, Boundary::Periodic | Boundary::Neumann) {
                prop_assert!((s - 1.0).abs() <= 1e-12);
            }
            for j in 0..m.n() {
                prop_assert!(m.get(i, j) >= -1e-15);
                prop_assert!((m.get(i, j) - m.get(j, i)).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn walk_kernel_is_even_and_sums_to_one(tau in 0.01f64..40.0) {
        let mut total = walk_kernel(tau, 1.0, 0).unwrap();
        for j in 1..400i64 {
            let p = walk_kernel(tau, 1.0, j).unwrap();
            prop_assert_eq!(p, walk_kernel(tau, 1.0, -j).unwrap());
            total += 2.0 * p;
        }
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn noise_is_a_pure_function_of_its_key(seed: u64, replica in 0u32..1000, site in -1000i64..1000, step in 0u64..1_000_000) {
        let a = NoiseSource::new(seed, 0.01, 1e-4, replica).unwrap();
        let b = NoiseSource::new(seed, 0.01, 1e-4, 0).unwrap().with_replica(replica);
        prop_assert_eq!(a.site_increment(site, step).to_bits(), b.site_increment(site, step).to_bits());
        prop_assert!(a.site_increment(site, step) != a.with_replica(replica + 1).site_increment(site, step));
    }

    #[test]
    fn coarse_increments_aggregate_fine_ones(seed: u64, k in 0u32..4, m in 1u64..5, site in -100i64..100, step in 0u64..1000) {
        let src = NoiseSource::new(seed, 1.0 / 256.0, 1e-6, 3).unwrap();
        let r = 1i64 << k;
        let view = src.view(r as f64 / 256.0, m as f64 * 1e-6).unwrap();
        let mut total = 0.0;
        for s in 0..m {
            let mut cell = 0.0;
            for q in 0..r {
                cell += src.site_increment(site * r + q, step * m + s);
            }
            total += cell;
        }
        let expect = total / (r as f64).sqrt();
        prop_assert!((view.increment(site, step) - expect).abs() <= 1e-15 * total.abs().max(1e-3));
    }

    #[test]
    fn pure_diffusion_obeys_the_maximum_principle(
        b in prop_oneof![Just(Boundary::Periodic), Just(Boundary::Neumann)],
        u0 in prop::collection::vec(0.0f64..10.0, 16),
        frac in 0.05f64..0.5,
    ) {
        let eps = 1.0 / 16.0;
        let d = LatticeDomain::interval(0.0, 1.0 - eps, eps, b).unwrap();
        let u0 = &u0[..d.n_sites()];
        let model = ModelSpec::new("heat", ScalarFn::Zero, ScalarFn::Zero);
        let mut cfg = SolverConfig::euler(eps, 0.05);
        cfg.dt = frac * eps * eps;
        let noise = NoiseSource::new(1, eps, cfg.dt, 0).unwrap().coupled_view(&d).unwrap();
        let out = run(&d, &model, &noise, &cfg, u0, None).unwrap().final_state.values;
        let lo = u0.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = u0.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(out.iter().all(|v| *v >= lo && *v <= hi));
    }

    #[test]
    fn noiseless_scheme_preserves_order(
        base in prop::collection::vec(0.0f64..4.0, 17),
        bump in prop::collection::vec(0.0f64..1.0, 17),
    ) {
        let eps = 1.0 / 16.0;
        let d = LatticeDomain::interval(0.0, 1.0, eps, Boundary::Dirichlet).unwrap();
        let model = ModelSpec::new("x", ScalarFn::linear(1.0), ScalarFn::Zero);
        let cfg = SolverConfig::euler(eps, 0.1);
        let noise = NoiseSource::new(2, eps, cfg.dt, 0).unwrap().coupled_view(&d).unwrap();
        let upper: Vec<f64> = base.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let u = run(&d, &model, &noise, &cfg, &upper, None).unwrap().final_state.values;
        let v = run(&d, &model, &noise, &cfg, &base, None).unwrap().final_state.values;
        for (a, b) in u.iter().zip(&v) {
            prop_assert!(a - b >= -1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn config_round_trip_keeps_the_digest(
        seed in 0u64..=i64::MAX as u64,
        k in 3i32..7,
        t_end in 0.01f64..2.0,
        b in prop_oneof![Just("dirichlet"), Just("neumann"), Just("periodic")],
        replicas in 1u32..500,
    ) {
        let text = format!(
            "[model]\ndrift = \"x^2\"\ndiffusion = \"linear\"\n[domain]\nepsilon = {}\nboundary = \"{b}\"\n\
             [solver]\nt_end = {t_end}\n[noise]\nmaster_seed = {seed}\nreplicas = {replicas}\n",
            2f64.powi(-k)
        );
        let c = parse_config(&text).unwrap();
        let again = parse_config(&c.to_toml()).unwrap();
        prop_assert_eq!(c.digest(), again.digest());
        prop_assert_eq!(c, again);
    }

    #[test]
    fn wilson_interval_brackets_the_estimate(n in 1usize..2000, k_frac in 0.0f64..=1.0) {
        let k = ((n as f64) * k_frac).round() as usize;
        let (lo, hi) = wilson_interval(k, n, 1.959963984540054);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }

    #[test]
    fn osgood_partial_sums_are_nondecreasing(p in 1.0f64..3.0) {
        let m = ModelSpec::new("power", ScalarFn::power(1.0, p), ScalarFn::Zero);
        let s = osgood_sum(&m, 40).unwrap();
        prop_assert!(s.partial_sums.windows(2).all(|w| w[1] >= w[0]));
    }
}
