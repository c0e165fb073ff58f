use accel_eval::cross_entropy::{ce_search, tilt_ceiling, CeSettings};
use accel_eval::distributions::{ecm_natural_parameter, TruncatedExponential, TruncatedPareto};
use accel_eval::estimation::EstimatorAccumulator;
use accel_eval::numeric::integrate_pieces;
use accel_eval::pipeline::EventKind;
use accel_eval::plant::{classify_events, simulate, AvConfig, Mode};
use accel_eval::rng::StreamKey;
use accel_eval::scenario::{
    default_bins, derive_kinematics, ProposalParams, ScenarioModel, ScenarioModelSpec, ScenarioSample,
};
use accel_eval::distributions::EmpiricalDist;
use proptest::prelude::*;

fn model() -> ScenarioModel {
    ScenarioModel::from_spec(&ScenarioModelSpec {
        v_dist: EmpiricalDist::new(vec![2.0, 10.0, 20.0, 40.0], vec![0.4, 0.3, 0.3]).unwrap(),
        r_inv: TruncatedPareto::new(0.2, 0.012, 1.0 / 75.0, 1.0 / 75.0, 10.0).unwrap(),
        r_inv_exp_approx: None,
        ttc_lambda_table: vec![(10.0, 0.06), (20.0, 0.04), (30.0, 0.026)],
        ttc_lambda_floor: 0.01,
        ttc_inv_bounds: (0.0, f64::INFINITY),
        bins: default_bins(),
    })
    .unwrap()
}

fn cut_in(v_l: f64, r0: f64, closing: f64) -> ScenarioSample {
    let k = derive_kinematics(v_l, 1.0 / r0, closing / r0).unwrap();
    ScenarioSample {
        v_l,
        r_inv: 1.0 / r0,
        ttc_inv: closing / r0,
        r0: k.r0,
        rdot: k.rdot,
        v0: k.v0,
        likelihood: 1.0,
    }
}

fn pareto() -> impl Strategy<Value = TruncatedPareto> {
    (0.02f64..0.8, 0.005f64..0.2, 0.0f64..0.05, 0.5f64..20.0).prop_map(|(k, sigma, theta, width)| {
        TruncatedPareto::new(k, sigma, theta, theta, theta + width).unwrap()
    })
}

fn exponential() -> impl Strategy<Value = TruncatedExponential> {
    (0.01f64..5.0, 0.0f64..2.0, prop_oneof![Just(f64::INFINITY), 0.1f64..20.0])
        .prop_map(|(mean, lo, w)| TruncatedExponential::new(mean, lo, lo + w).unwrap())
}

fn stream() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((prop_oneof![Just(0.0), Just(1.0), 0.0f64..1.0], 1e-6f64..1e3, 0.0f64..500.0), 0..40)
}

fn accumulate(xs: &[(f64, f64, f64)]) -> EstimatorAccumulator {
    let mut a = EstimatorAccumulator::new();
    for &(i, l, d) in xs {
        a.update(i, l, d).unwrap();
    }
    a
}

fn fields(a: &EstimatorAccumulator) -> (u64, f64, f64, f64, Option<f64>) {
    (a.n, a.sum_w(), a.sum_w2(), a.distance_m(), a.sample_variance())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pareto_density_normalized(p in pareto()) {
        let mut breaks = vec![p.lo()];
        let mut x = p.lo();
        while x < p.hi() {
            x = (p.lo() + (x - p.lo() + p.sigma()) * 2.0).min(p.hi());
            breaks.push(x);
        }
        let total = integrate_pieces(|x| p.pdf(x), &breaks, 1e-10);
        prop_assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn exponential_density_normalized(e in exponential()) {
        let hi = if e.hi().is_finite() { e.hi() } else { e.lo() + 60.0 * e.mean_parameter() };
        let breaks: Vec<f64> = (0..=60).map(|i| e.lo() + (hi - e.lo()) * i as f64 / 60.0).collect();
        let total = integrate_pieces(|x| e.pdf(x), &breaks, 1e-11);
        prop_assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn pareto_cdf_round_trip(p in pareto(), u in 1e-6f64..(1.0 - 1e-6)) {
        prop_assert!((p.cdf(p.sample(u)) - u).abs() < 1e-9);
    }

    #[test]
    fn exponential_cdf_round_trip(e in exponential(), u in 1e-6f64..(1.0 - 1e-6)) {
        prop_assert!((e.cdf(e.sample(u)) - u).abs() < 1e-9);
    }

    #[test]
    fn identity_tilt_is_the_base_law(e in exponential()) {
        prop_assert_eq!(e.tilted(0.0).unwrap(), e);
    }

    #[test]
    fn ecm_ratio_matches_density_ratio(lambda in 0.05f64..3.0, frac in -3.0f64..0.95, x in 0.0f64..10.0) {
        let vartheta = frac * lambda;
        let base = TruncatedExponential::with_mean(lambda).unwrap();
        let tilted = base.tilted(vartheta).unwrap();
        let t = ecm_natural_parameter(lambda, vartheta);
        let direct = base.pdf(x) / tilted.pdf(x);
        let ecm = (-t * x + base.log_mgf(t)).exp();
        prop_assert!((direct / ecm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn merge_equals_sequential(a in stream(), b in stream()) {
        let whole: Vec<_> = a.iter().chain(&b).copied().collect();
        prop_assert_eq!(fields(&accumulate(&a).merge(&accumulate(&b))), fields(&accumulate(&whole)));
    }

    #[test]
    fn merge_associative_and_commutative(a in stream(), b in stream(), c in stream()) {
        let (x, y, z) = (accumulate(&a), accumulate(&b), accumulate(&c));
        prop_assert_eq!(fields(&x.merge(&y).merge(&z)), fields(&x.merge(&y.merge(&z))));
        prop_assert_eq!(fields(&x.merge(&y)), fields(&y.merge(&x)));
    }

    #[test]
    fn accumulator_stays_sane(a in stream()) {
        let acc = accumulate(&a);
        prop_assert!(acc.sum_w2() >= 0.0);
        if let Some(v) = acc.sample_variance() {
            prop_assert!(v >= 0.0);
        }
    }

    #[test]
    fn kinematics_identity(v_l in 0.0f64..40.0, r_inv in 1e-3f64..10.0, ttc_inv in 0.0f64..5.0) {
        let k = derive_kinematics(v_l, r_inv, ttc_inv).unwrap();
        let back = -k.rdot * r_inv;
        prop_assert!((back - ttc_inv).abs() <= 2.0 * f64::EPSILON * ttc_inv);
        prop_assert!(k.v0 >= v_l);
        prop_assert!(k.rdot <= 0.0);
    }

    #[test]
    fn bin_sampling_stays_in_bin(i in 0u64..10_000, bin in 0usize..3, vr in -0.3f64..0.012, vt in -0.5f64..0.02) {
        let m = model();
        let b = &m.bins()[bin];
        let p = ProposalParams { vartheta_r: vr, vartheta_ttc: vt, bin: b.name.clone() };
        prop_assume!(p.validate(&m).is_ok());
        let s = m.sampler(b.range()).unwrap().sample(Some(&p), &mut StreamKey::new(1, "prop").stream(i)).unwrap();
        prop_assert!(s.v_l >= b.lo && s.v_l <= b.hi);
        prop_assert!(s.likelihood > 0.0 && s.likelihood.is_finite());
        prop_assert_eq!(s.rdot, -s.ttc_inv / s.r_inv);
    }

    #[test]
    fn plant_invariants(v_l in 2.0f64..40.0, r0 in 0.2f64..75.0, closing in 0.0f64..25.0) {
        let cfg = AvConfig::default();
        let s = cut_in(v_l, r0, closing);
        let tr = simulate(&s, &cfg).unwrap();
        prop_assert_eq!(&tr, &simulate(&s, &cfg).unwrap());

        let modes: Vec<Mode> = tr.states.iter().map(|st| st.mode).collect();
        let switches = modes.windows(2).filter(|w| w[0] != w[1]).count();
        prop_assert!(switches <= 1);
        prop_assert!(!modes.windows(2).any(|w| w[0] == Mode::Aeb && w[1] == Mode::Acc));

        for w in tr.states.windows(2) {
            prop_assert!(w[1].v >= 0.0);
            match w[1].mode {
                Mode::Acc => prop_assert!(w[1].a_cmd.abs() <= cfg.a_acc_max),
                Mode::Aeb => {
                    prop_assert!(w[1].a_cmd >= -cfg.a_aeb);
                    prop_assert!(w[1].a_cmd - w[0].a_cmd >= cfg.r_aeb * cfg.ts - 1e-12);
                }
            }
        }
        let ev = classify_events(&tr, &cfg);
        if ev.crash {
            prop_assert!(ev.conflict);
            prop_assert!(ev.delta_v.unwrap() >= 0.0);
        }
        prop_assert!(tr.t_end <= cfg.t_lc_max + 1e-9);
    }
}

#[test]
fn ce_tilts_stay_valid_every_iteration() {
    let m = model();
    let cfg = AvConfig::default();
    for event in [EventKind::Conflict, EventKind::Crash] {
        let settings = CeSettings {
            n_per_iter: 200,
            ..CeSettings::default()
        };
        let st = ce_search(&m, &cfg, "low", event, &settings, None, &StreamKey::new(4, "prop-ce")).unwrap();
        assert_eq!(st.history.len(), settings.iterations as usize);
        let b = m.bin("low").unwrap();
        for h in &st.history {
            assert!(h.vartheta_r <= tilt_ceiling(m.lambda_r(), settings.margin));
            assert!(h.vartheta_ttc <= tilt_ceiling(m.min_lambda_ttc(b.lo, b.hi), settings.margin));
        }
        let again = ce_search(&m, &cfg, "low", event, &settings, None, &StreamKey::new(4, "prop-ce")).unwrap();
        assert_eq!(st, again);
    }
}

#[test]
fn ce_without_elites_aborts_on_empty_iterations() {
    let m = model();
    let settings = CeSettings {
        n_per_iter: 20,
        elite_fraction: None,
        ..CeSettings::default()
    };
    let err = ce_search(
        &m,
        &AvConfig::default(),
        "high",
        EventKind::Crash,
        &settings,
        None,
        &StreamKey::new(1, "stall"),
    )
    .unwrap_err();
    assert!(matches!(err, accel_eval::Error::CeStalled { streak: 3, .. }), "{err}");
}
