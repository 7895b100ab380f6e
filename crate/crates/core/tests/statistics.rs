use exodyn::analysis::{f_tail_probability, ln_gamma, one_way_anova, regularized_incomplete_beta};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

#[test]
fn tail_matches_reference_on_grid() {
    for df1 in [1.0, 2.0, 3.0, 5.0, 10.0, 30.0, 120.0] {
        for df2 in [1.0, 2.0, 4.0, 7.0, 20.0, 100.0, 5000.0] {
            let dist = FisherSnedecor::new(df1, df2).unwrap();
            for f in [0.01, 0.1, 0.5, 1.0, 1.5, 2.0, 4.0, 10.0, 50.0] {
                let ours = f_tail_probability(f, df1, df2).unwrap();
                let reference = dist.sf(f);
                assert!((ours - reference).abs() < 1e-10, "F({df1},{df2}) at {f}: {ours} vs {reference}");
            }
        }
    }
}

#[test]
fn hand_case_matches_t_distribution_identity() {
    // F(1, 4) at 1.5 equals the two-sided t(4) tail at √1.5.
    let p = f_tail_probability(1.5, 1.0, 4.0).unwrap();
    let t = statrs::distribution::StudentsT::new(0.0, 1.0, 4.0).unwrap();
    assert!((p - 2.0 * t.sf(1.5f64.sqrt())).abs() < 1e-10);
    assert!((p - 0.2877).abs() < 1e-3);
}

proptest! {
    #[test]
    fn incomplete_beta_matches_reference(a in 0.5f64..200.0, b in 0.5f64..200.0, x in 0.0f64..1.0) {
        let ours = regularized_incomplete_beta(a, b, x);
        let reference = statrs::function::beta::beta_reg(a, b, x);
        prop_assert!((ours - reference).abs() < 1e-10, "I_{x}({a},{b}) = {ours} vs {reference}");
    }

    #[test]
    fn ln_gamma_matches_reference(x in 0.01f64..500.0) {
        let reference = statrs::function::gamma::ln_gamma(x);
        prop_assert!((ln_gamma(x) - reference).abs() < 1e-10 * reference.abs().max(1.0));
    }

    #[test]
    fn tail_is_monotone(df1 in 1u32..50, df2 in 1u32..200, f in 0.0f64..20.0, df in 0.001f64..5.0) {
        let (d1, d2) = (df1 as f64, df2 as f64);
        let lo = f_tail_probability(f, d1, d2).unwrap();
        let hi = f_tail_probability(f + df, d1, d2).unwrap();
        prop_assert!((0.0..=1.0).contains(&lo));
        prop_assert!(hi <= lo);
    }

    #[test]
    fn anova_invariances(
        groups in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2..12), 2..6),
        scale in 0.1f64..50.0,
        shift in -100.0f64..100.0,
    ) {
        let t = one_way_anova(&groups).unwrap();
        prop_assert!(t.f >= 0.0 && (0.0..=1.0).contains(&t.p));
        prop_assert_eq!(t.df_total, t.df_between + t.df_within);
        prop_assert!((t.ss_between + t.ss_within - t.ss_total).abs() <= 1e-9 * t.ss_total.max(1e-300));
        if t.ss_within > 1e-9 {
            let scaled: Vec<Vec<f64>> = groups.iter().map(|g| g.iter().map(|v| v * scale).collect()).collect();
            let s = one_way_anova(&scaled).unwrap();
            prop_assert!((s.f - t.f).abs() <= 1e-8 * t.f.max(1.0));
            prop_assert!((s.p - t.p).abs() <= 1e-8);
            let shifted: Vec<Vec<f64>> = groups.iter().map(|g| g.iter().map(|v| v + shift).collect()).collect();
            let s = one_way_anova(&shifted).unwrap();
            prop_assert!((s.ss_between - t.ss_between).abs() <= 1e-7 * t.ss_total.max(1.0));
            prop_assert!((s.ss_within - t.ss_within).abs() <= 1e-7 * t.ss_total.max(1.0));
            prop_assert!((s.p - t.p).abs() <= 1e-6);
        }
    }
}
