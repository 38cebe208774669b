mod common;

use pore::bounds::{beta_quantile, cp_lower, cp_upper, ln_gamma, make_context, reg_inc_beta, CpTable, UpperConvention};
use proptest::prelude::*;
use rand::Rng;
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma as statrs_ln_gamma;

use common::rng;

#[test]
fn incomplete_beta_matches_statrs() {
    let mut r = rng(21);
    let mut worst: f64 = 0.0;
    for _ in 0..2000 {
        let a = 0.5 + 1999.5 * r.random::<f64>().powi(3);
        let b = 0.5 + 1999.5 * r.random::<f64>().powi(3);
        let x = r.random::<f64>();
        worst = worst.max((reg_inc_beta(x, a, b) - beta_reg(a, b, x)).abs());
    }
    assert!(worst < 1e-10, "worst {worst:e}");
}

#[test]
fn ln_gamma_matches_statrs() {
    for k in 1..400 {
        let x = k as f64 * 0.37;
        let (ours, theirs) = (ln_gamma(x), statrs_ln_gamma(x));
        assert!((ours - theirs).abs() <= 1e-12 * theirs.abs().max(1.0), "x={x}");
    }
}

#[test]
fn quantiles_invert_the_distribution() {
    let mut r = rng(22);
    for _ in 0..500 {
        let a = 0.5 + 1999.5 * r.random::<f64>().powi(2);
        let b = 0.5 + 1999.5 * r.random::<f64>().powi(2);
        let level = 10f64.powf(-8.0 * r.random::<f64>());
        let x = beta_quantile(level, a, b).unwrap();
        assert!((beta_reg(a, b, x) - level).abs() <= 1e-10, "a={a} b={b} level={level}");
    }
}

#[test]
fn clopper_pearson_reference_values() {
    // k = 1 has the closed form 1 - (1 - beta)^(1/T) for the lower bound
    let (t, beta): (u64, f64) = (2000, 0.001 / 943.0 / 1682.0);
    let closed = -((-beta).ln_1p() / t as f64).exp_m1();
    assert!((cp_lower(1, t, beta).unwrap() - closed).abs() <= 1e-12 * closed);
    // k = T - 1 under the same-shape convention: Beta(k, 2) has cdf
    // x^k (k + 1 - k x), checked by evaluating it at the returned bound
    let k = 199u64;
    let u = cp_upper(k, 200, 0.05, UpperConvention::SameShape).unwrap();
    let cdf = u.powi(k as i32) * ((k + 1) as f64 - k as f64 * u);
    assert!((cdf - 0.95).abs() < 1e-10);
}

#[test]
fn table_and_direct_calls_agree() {
    let table = CpTable::new(300, 1e-4, UpperConvention::Textbook).unwrap();
    for k in [0u32, 1, 7, 150, 299, 300] {
        assert_eq!(table.lower(k), cp_lower(k as u64, 300, 1e-4).unwrap());
        assert_eq!(table.upper(k), cp_upper(k as u64, 300, 1e-4, UpperConvention::Textbook).unwrap());
    }
}

#[test]
fn slack_grows_with_attack_and_subsample_size() {
    for s in [1u64, 5, 50, 200] {
        let sigmas: Vec<f64> = (0..60).map(|e| make_context(943, e, s, false).unwrap().sigma).collect();
        assert_eq!(sigmas[0], 0.0);
        assert!(sigmas.windows(2).all(|w| w[0] <= w[1]), "s={s}");
    }
    for e in [1u64, 10, 50] {
        let sigmas: Vec<f64> = (1..=300).map(|s| make_context(943, e, s, false).unwrap().sigma).collect();
        assert!(sigmas.windows(2).all(|w| w[0] <= w[1] * (1.0 + 1e-12)), "e={e}");
    }
}

#[test]
fn slack_matches_exact_arithmetic() {
    for e in 0..=50 {
        let ctx = make_context(943, e, 200, true).unwrap();
        let exact = ctx.exact_sigma_f64().unwrap();
        assert!(ctx.sigma >= exact);
        assert!((ctx.sigma - exact).abs() <= 1e-12 * exact.max(f64::MIN_POSITIVE), "e={e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bounds_bracket_and_order(t in 1u64..3000, frac in 0.0f64..=1.0, beta in 1e-9f64..0.4) {
        let k = ((t as f64) * frac).round() as u64;
        let lo = cp_lower(k, t, beta).unwrap();
        let p = k as f64 / t as f64;
        prop_assert!(lo <= p);
        for conv in [UpperConvention::SameShape, UpperConvention::Textbook] {
            let up = cp_upper(k, t, beta, conv).unwrap();
            prop_assert!((0.0..=1.0).contains(&up));
            prop_assert!(lo <= up);
            if conv == UpperConvention::Textbook {
                prop_assert!(p <= up);
            }
        }
    }

    #[test]
    fn bounds_monotone_in_count(t in 2u64..500, beta in 1e-9f64..0.4) {
        let mut prev = (0.0, 0.0);
        for k in 0..=t {
            let lo = cp_lower(k, t, beta).unwrap();
            let up = cp_upper(k, t, beta, UpperConvention::SameShape).unwrap();
            prop_assert!(lo >= prev.0 && up >= prev.1, "k={}", k);
            prev = (lo, up);
        }
    }

    #[test]
    fn stricter_level_widens(t in 1u64..2000, frac in 0.0f64..=1.0, beta in 1e-8f64..0.4, shrink in 1e-3f64..1.0) {
        let k = ((t as f64) * frac).round() as u64;
        let strict = beta * shrink;
        prop_assert!(cp_lower(k, t, strict).unwrap() <= cp_lower(k, t, beta).unwrap());
        for conv in [UpperConvention::SameShape, UpperConvention::Textbook] {
            prop_assert!(cp_upper(k, t, strict, conv).unwrap() >= cp_upper(k, t, beta, conv).unwrap());
        }
    }
}
