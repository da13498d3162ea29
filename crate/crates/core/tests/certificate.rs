mod common;

use fts_core::certificate::{compute_certificate, compute_m, optimize_eta, sweep_eta, Status};
use fts_core::specfun::gamma;
use fts_core::{EtaChoice, FtsQuery, SystemSpec};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn scaled(spec: &SystemSpec, a2_scale: f64) -> SystemSpec {
    let mut s = spec.clone();
    s.a2 = &spec.a2 * a2_scale;
    s
}

#[test]
fn example_coefficients() {
    for (build, a) in [
        (common::example1 as fn() -> _, [2.01, 5.01, 1.01]),
        (common::example2, [2.01, 1.01, 1.01]),
    ] {
        let (spec, query) = build();
        let c = compute_certificate(&spec, &query).unwrap();
        assert!((c.a0 - a[0]).abs() <= 1e-12);
        assert!((c.a1 - a[1]).abs() <= 1e-12);
        assert!((c.a2 - a[2]).abs() <= 1e-12);
        assert_eq!(c.status, Status::Certified);
    }
}

#[test]
fn example_bounds_are_frozen() {
    // D = (a01/η · E + 1) ε1 + a2/η · E ρ with E = E_β(θ T^β) from a
    // 60-digit evaluation of the Mittag-Leffler series.
    let (spec, query) = common::example1();
    let c = compute_certificate(&spec, &query).unwrap();
    let e1 = 54.396_602_259_255_74;
    assert!((c.e - e1).abs() <= 1e-10 * e1);
    let d1 = (7.02 * e1 + 1.0) * 0.1 + 1.01 * e1 * 0.1;
    assert!((c.d - d1).abs() <= 1e-10 * d1);

    let (spec, query) = common::example2();
    let c = compute_certificate(&spec, &query).unwrap();
    assert!((95.1..99.0).contains(&c.d), "{}", c.d);
}

#[test]
fn eta_search_dominates_fixed_eta_and_dense_grid() {
    for build in [common::example1 as fn() -> _, common::example2] {
        let (spec, query) = build();
        let fixed = compute_certificate(&spec, &query).unwrap();
        let q = query.with_eta(EtaChoice::Search { lo: 0.1, hi: 10.0, points: 64 });
        let best = optimize_eta(&spec, &q).unwrap().best;
        assert!(best.d <= fixed.d);

        let dense = sweep_eta(&spec, &q, 0.1, 10.0, 1000).unwrap();
        let dense_min = dense.rows.iter().map(|r| r.d).fold(f64::INFINITY, f64::min);
        assert!(best.d <= dense_min * (1.0 + 1e-6), "{} vs {}", best.d, dense_min);
    }
}

#[test]
fn degenerate_sweep_matches_check() {
    let (spec, query) = common::example1();
    let fixed = compute_certificate(&spec, &query).unwrap();
    let s = sweep_eta(&spec, &query, 1.0, 1.0, 1).unwrap();
    assert_eq!(s.rows.len(), 1);
    assert_eq!(s.rows[0].d, fixed.d);
    assert_eq!(s.best, fixed);
}

#[test]
fn vacuous_when_mlf_overflows() {
    let spec = SystemSpec::linear(
        0.5,
        0.0,
        30.0,
        DMatrix::from_element(1, 1, 5.0),
        DMatrix::zeros(1, 1),
        DMatrix::zeros(1, 1),
    );
    let q = FtsQuery::for_spec(&spec, 0.1, 1.0, EtaChoice::Fixed(1.0));
    let c = compute_certificate(&spec, &q).unwrap();
    assert_eq!(c.status, Status::VacuousOverflow);
    assert_eq!(c.status.exit_code(), 2);
    assert!(!c.verdict_c && !c.verdict_d);
}

#[test]
fn integer_order_limit_is_continuous() {
    let (spec, query) = common::example1();
    let mut near = spec.clone();
    near.beta = 1.0 - 1e-9;
    let mut one = spec;
    one.beta = 1.0;
    let a = compute_certificate(&near, &query).unwrap();
    let b = compute_certificate(&one, &query).unwrap();
    assert!((a.d - b.d).abs() <= 1e-6 * b.d, "{} vs {}", a.d, b.d);
    assert!((a.c - b.c).abs() <= 1e-6 * b.c, "{} vs {}", a.c, b.c);
}

#[test]
fn short_horizon_bounds_approach_eps1() {
    let (spec, query) = common::example2();
    let spec = spec.with_horizon(1e-10);
    let q = FtsQuery { t_end: 1e-10, ..query };
    let c = compute_certificate(&spec, &q).unwrap();
    let d_floor = (c.a01() + 1.0) * q.eps1 + c.a2 * q.rho;
    assert!(c.d >= d_floor && c.d <= d_floor * (1.0 + 1e-3), "{}", c.d);
    assert!((c.c - q.eps1).abs() <= 1e-3 * q.eps1, "{}", c.c);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bounds_monotone_in_inputs(
        eps1 in 0.01f64..1.0,
        rho in 0.0f64..1.0,
        scale in 0.1f64..3.0,
        bump in 1.01f64..2.0,
    ) {
        let (spec, base) = common::example2();
        let spec = scaled(&spec, scale);
        let mut spec_rho = spec.clone();
        spec_rho.rho = rho;
        let q = FtsQuery { eps1, rho, ..base };
        let c0 = compute_certificate(&spec_rho, &q).unwrap();

        let c_eps = compute_certificate(&spec_rho, &FtsQuery { eps1: eps1 * bump, ..q }).unwrap();
        prop_assert!(c_eps.c > c0.c && c_eps.d > c0.d);

        let mut spec_rho2 = spec_rho.clone();
        spec_rho2.rho = rho * bump + 0.01;
        let c_rho = compute_certificate(&spec_rho2, &FtsQuery { rho: spec_rho2.rho, ..q }).unwrap();
        prop_assert!(c_rho.c > c0.c && c_rho.d > c0.d);

        let c_a2 = compute_certificate(&scaled(&spec_rho, bump), &q).unwrap();
        prop_assert!(c_a2.c >= c0.c && c_a2.d >= c0.d);

        prop_assert!(c0.c <= c0.d * (1.0 + 1e-8));
    }

    #[test]
    fn sup_m_respects_gamma_bound(beta in 0.05f64..1.0, theta in 0.01f64..30.0, span in 1e-3f64..20.0) {
        let m = compute_m(beta, theta, 0.0, span, 400).unwrap();
        prop_assert!(m <= gamma(beta + 1.0).unwrap() / theta * (1.0 + 1e-8));
        prop_assert!(m >= 0.0);
    }
}
