use fts_core::specfun::{gamma, ln_mittag_leffler, mittag_leffler, psi_eigenfunction_residual, MlfParams};
use fts_core::Error;
use proptest::prelude::*;

/// `E_{1/2}(t) = e^{t²} erfc(-t) = e^{t²} + (2/√π) Σ 2ⁿ t^{2n+1} / (2n+1)!!`
fn erfc_oracle(t: f64) -> f64 {
    let mut term = t;
    let mut sum = 0.0;
    let mut n = 0.0;
    while term > 1e-300 && (sum == 0.0 || term > 1e-18 * sum) {
        sum += term;
        term *= 2.0 * t * t / (2.0 * n + 3.0);
        n += 1.0;
    }
    (t * t).exp() + 2.0 / std::f64::consts::PI.sqrt() * sum
}

/// `ln(t^σ / E_σ(θ t^σ))`, or `-∞` when `E_σ` lies beyond any float.
fn ln_ratio(sigma: f64, theta: f64, t: f64) -> f64 {
    if t == 0.0 {
        return f64::NEG_INFINITY;
    }
    let p = MlfParams::with_default_tol(sigma).unwrap();
    match ln_mittag_leffler(&p, theta * t.powf(sigma)) {
        Ok(l) => sigma * t.ln() - l,
        Err(Error::Overflow(_)) => f64::NEG_INFINITY,
        Err(e) => panic!("σ={sigma} θ={theta} t={t}: {e}"),
    }
}

#[test]
fn order_one_is_the_exponential() {
    let p = MlfParams::with_default_tol(1.0).unwrap();
    for i in 0..100 {
        let t = -1.0 + 51.0 * i as f64 / 99.0;
        let e = mittag_leffler(&p, t).unwrap();
        assert!((e - t.exp()).abs() <= 1e-12 * t.exp(), "t={t}");
    }
}

#[test]
fn order_half_matches_erfc_identity() {
    let p = MlfParams::with_default_tol(0.5).unwrap();
    for i in 0..=50 {
        let t = 0.1 * i as f64;
        let want = erfc_oracle(t);
        let got = mittag_leffler(&p, t).unwrap();
        assert!((got - want).abs() <= 1e-9 * want, "t={t}: {got} vs {want}");
    }
}

#[test]
fn eigenfunction_identity_holds_on_unit_interval() {
    for sigma in [0.5, 0.7, 0.9] {
        for theta in [-1.0, 1.0, 2.0] {
            for k in 1..=4 {
                let s = 0.25 * k as f64;
                let r = psi_eigenfunction_residual(sigma, theta, 0.0, s, 512).unwrap();
                assert!(r <= 1e-6, "σ={sigma} θ={theta} s={s}: {r}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn ratio_bound_holds(sigma in 0.02f64..0.999, theta in 1e-3f64..20.0, t in 0.0f64..100.0) {
        let bound = (gamma(sigma + 1.0).unwrap() / theta).ln() + 1e-10;
        prop_assert!(ln_ratio(sigma, theta, t) <= bound);
    }

    #[test]
    fn mlf_is_increasing_on_positive_axis(sigma in 0.05f64..1.0, t in 0.0f64..50.0, dt in 1e-3f64..5.0) {
        let p = MlfParams::with_default_tol(sigma).unwrap();
        let a = ln_mittag_leffler(&p, t).unwrap();
        let b = ln_mittag_leffler(&p, t + dt).unwrap();
        prop_assert!(b > a);
    }

    #[test]
    fn log_form_agrees_with_direct_value(sigma in 0.1f64..1.0, t in -1.0f64..30.0) {
        let p = MlfParams::with_default_tol(sigma).unwrap();
        if let Ok(e) = mittag_leffler(&p, t) {
            let l = ln_mittag_leffler(&p, t).unwrap();
            prop_assert!((l - e.ln()).abs() <= 1e-11 * l.abs().max(1.0));
        }
    }

    #[test]
    fn gamma_recurrence(x in 0.01f64..150.0) {
        let lhs = gamma(x + 1.0).unwrap();
        let rhs = x * gamma(x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-13 * lhs);
    }
}
