use moment_ident::empirical::{joint_cumulant, mixed_moment, MomentTable, PairMoments, RawMoments};
use moment_ident::estimators::{alg4, ratio_from_table, EstimatorConfig};
use moment_ident::model::{
    construct_counterexample, construct_epsy_counterexample, population_moment, population_moments,
    rescale_alpha_to_one, ChangeKind, ScenarioSpec, ScmParams,
};
use moment_ident::noise::NoiseSpec;
use proptest::prelude::*;

fn noise() -> impl Strategy<Value = NoiseSpec> {
    prop_oneof![
        (0.3f64..3.0).prop_map(NoiseSpec::exponential),
        (0.5f64..4.0, 0.3f64..2.0).prop_map(|(k, s)| NoiseSpec::gamma(k, s)),
        (0.3f64..2.0).prop_map(NoiseSpec::gumbel),
        (0.3f64..2.0).prop_map(NoiseSpec::logistic),
        (0.3f64..2.0).prop_map(NoiseSpec::uniform),
    ]
}

fn signed(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo..hi, any::<bool>()).prop_map(|(v, neg)| if neg { -v } else { v })
}

fn env() -> impl Strategy<Value = ScmParams> {
    (signed(0.3, 1.5), -2.0f64..2.0, signed(0.2, 2.0), noise(), noise(), noise()).prop_map(
        |(alpha, beta, gamma, noise_u, noise_t, noise_y)| ScmParams { alpha, beta, gamma, noise_u, noise_t, noise_y },
    )
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn moments_match(a: &ScmParams, b: &ScmParams, order: usize, tol: f64) -> Result<(), TestCaseError> {
    let (ma, mb) = (population_moments(a, order).unwrap(), population_moments(b, order).unwrap());
    for (x, y) in ma.iter().zip(&mb) {
        prop_assert_eq!((x.p, x.q), (y.p, y.q));
        prop_assert!(rel_close(x.value, y.value, tol), "E[T^{} Y^{}]: {} vs {}", x.p, x.q, x.value, y.value);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn oracle_scales_with_the_noises(e in env(), c in 0.25f64..3.0) {
        let scaled = ScmParams {
            noise_u: e.noise_u.scaled(c),
            noise_t: e.noise_t.scaled(c),
            noise_y: e.noise_y.scaled(c),
            ..e
        };
        for p in 0..=4 {
            for q in 0..=(6 - p) {
                let want = c.powi((p + q) as i32) * population_moment(&e, p, q).unwrap();
                prop_assert!(rel_close(population_moment(&scaled, p, q).unwrap(), want, 1e-12));
            }
        }
    }

    #[test]
    fn point_mass_noises_give_zero_moments(alpha in -2.0f64..2.0, beta in -2.0f64..2.0, gamma in -2.0f64..2.0) {
        let p = NoiseSpec::point_mass();
        let e = ScmParams { alpha, beta, gamma, noise_u: p, noise_t: p, noise_y: p };
        for m in population_moments(&e, 8).unwrap() {
            prop_assert_eq!(m.value, if m.p + m.q == 0 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn rescaling_alpha_preserves_moments(e in env()) {
        let r = rescale_alpha_to_one(&e).unwrap();
        prop_assert_eq!(r.alpha, 1.0);
        moments_match(&e, &r, 8, 1e-12)?;
    }

    #[test]
    fn joint_noise_counterexample_is_observationally_equivalent(e1 in env(), u2 in noise(), t2 in noise()) {
        let e2 = ScmParams { noise_u: u2, noise_t: t2, ..e1 };
        let s = ScenarioSpec::new(ChangeKind::EpsTAndEpsU, e1, e2);
        let tilde = construct_counterexample(&s).unwrap();
        moments_match(&s.env1, &tilde.env1, 6, 1e-9)?;
        moments_match(&s.env2, &tilde.env2, 6, 1e-9)?;
        prop_assert!(rel_close((tilde.beta() - s.beta()).abs(), (e1.gamma / e1.alpha).abs(), 1e-12));
        prop_assert!((tilde.beta() - s.beta()).abs() > 0.0);
        prop_assert_eq!(tilde.change, ChangeKind::EpsTAndEpsU);
    }

    #[test]
    fn outcome_noise_counterexample_is_observationally_equivalent(e1 in env(), y2 in noise()) {
        let s = ScenarioSpec::new(ChangeKind::EpsY, e1, ScmParams { noise_y: y2, ..e1 });
        let tilde = construct_epsy_counterexample(&s).unwrap();
        moments_match(&s.env1, &tilde.env1, 6, 1e-9)?;
        moments_match(&s.env2, &tilde.env2, 6, 1e-9)?;
        prop_assert!(rel_close(tilde.beta(), s.beta() + e1.gamma / e1.alpha, 1e-12));
    }

    #[test]
    fn mixed_moment_scales_exactly(
        t in prop::collection::vec(-10.0f64..10.0, 2..50),
        k in -3i32..4, p in 0usize..5, q in 0usize..3,
    ) {
        let c = 2f64.powi(k);
        let y: Vec<f64> = t.iter().map(|v| v * 0.5 + 1.0).collect();
        let ct: Vec<f64> = t.iter().map(|v| c * v).collect();
        let base = mixed_moment(&t, &y, p, q).unwrap().value;
        prop_assert_eq!(mixed_moment(&ct, &y, p, q).unwrap().value, c.powi(p as i32) * base);
    }

    #[test]
    fn joint_cumulant_is_multilinear(
        x in prop::collection::vec(-10.0f64..10.0, 40..80),
        k in -3i32..4, px in 1usize..4, py in 1usize..4,
    ) {
        let c = 2f64.powi(k);
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v * v * 0.1 + (i % 7) as f64).collect();
        let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
        let base = joint_cumulant(&x, &y, px, py).unwrap().value;
        let scaled = joint_cumulant(&cx, &y, px, py).unwrap().value;
        prop_assert!(rel_close(scaled, c.powi(px as i32) * base, 1e-12));
    }

    #[test]
    fn ratio_is_homogeneous_in_the_first_variable(e in env(), c in signed(0.1, 5.0)) {
        // (Y - beta T, T) shares the confounder noise with loadings gamma and alpha
        let raw = {
            let m = population_moments(&e, 8).unwrap();
            RawMoments::from_fn(8, |a, b| m.iter().find(|x| x.p == a && x.q == b).unwrap().value)
        };
        let table = MomentTable::exact(raw).linear([[-e.beta, 1.0], [1.0, 0.0]]);
        let rule = EstimatorConfig::default().rule;
        let base = ratio_from_table(&table, &rule, 8);
        prop_assume!(base.is_ok());
        let base = base.unwrap().ratio.value;
        let scaled = ratio_from_table(&table.linear([[c, 0.0], [0.0, 1.0]]), &rule, 8).unwrap().ratio.value;
        prop_assert!(rel_close(scaled, c * base, 1e-9), "{scaled} vs {}", c * base);
        prop_assert!(rel_close(base, e.gamma / e.alpha, 1e-8), "{base} vs {}", e.gamma / e.alpha);
    }

    #[test]
    fn alg4_rescales_with_the_outcome(
        alpha in 0.4f64..0.6, alt in 0.8f64..0.9, beta in 0.6f64..0.7, gamma in 0.8f64..0.9,
        rate in 0.9f64..1.1, c in signed(0.2, 5.0),
    ) {
        let n = NoiseSpec::exponential(rate);
        let e1 = ScmParams { alpha, beta, gamma, noise_u: n, noise_t: n, noise_y: n };
        let s = ScenarioSpec::new(ChangeKind::Alpha, e1, ScmParams { alpha: alt, ..e1 });
        let cfg = EstimatorConfig::default();
        let pm = PairMoments::from_population(&s, 8).unwrap();
        let base = alg4(&pm, &cfg).unwrap();
        let m = [[1.0, 0.0], [0.0, c]];
        let scaled = alg4(&pm.linear(m, m), &cfg).unwrap();
        let roots = |r: &moment_ident::estimators::EstimateReport| {
            let (a, b) = (r.diagnostics["root0"], r.diagnostics["root1"]);
            (a.min(b), a.max(b))
        };
        let (lo, hi) = roots(&base);
        let (slo, shi) = roots(&scaled);
        let (want_lo, want_hi) = if c > 0.0 { (c * lo, c * hi) } else { (c * hi, c * lo) };
        prop_assert!(rel_close(slo, want_lo, 1e-9) && rel_close(shi, want_hi, 1e-9));
        prop_assert!(rel_close(scaled.beta_hat().unwrap(), c * base.beta_hat().unwrap(), 1e-9));
    }
}
