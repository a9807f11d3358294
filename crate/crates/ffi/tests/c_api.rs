use std::ffi::CStr;
use std::ptr;

use levelconf_ffi::*;

const BETA: [f64; 2] = [3.124, 2.128];
const COV: [f64; 4] = [0.1122, 0.0679, 0.0679, 0.0490];
const LO: [f64; 1] = [-2.30];
const HI: [f64; 1] = [-0.05];

fn last_error() -> String {
    let p = lc_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn toxicity_fit() -> *mut LcFit {
    let mut fit = ptr::null_mut();
    let st = unsafe { lc_fit_from_covariance(BETA.as_ptr(), COV.as_ptr(), 2, &mut fit) };
    assert_eq!(st, LcStatus::Ok);
    fit
}

#[test]
fn injected_constants_give_expected_intervals() {
    let fit = toxicity_fit();
    let cases = [
        (LcSetKind::G1u, LcSide::Upper, 2.14, -1.61),
        (LcSetKind::G1l, LcSide::Lower, 2.14, -1.33),
        (LcSetKind::G2u, LcSide::TwoSided, 2.42, -1.64),
        (LcSetKind::G2l, LcSide::TwoSided, 2.42, -1.32),
    ];
    for (kind, side, c, left) in cases {
        unsafe {
            let mut constant = ptr::null_mut();
            let st = lc_constant_fixed(c, LO.as_ptr(), HI.as_ptr(), 1, side, LcShape::Hyperbolic, 0.05, &mut constant);
            assert_eq!(st, LcStatus::Ok);
            let mut set = ptr::null_mut();
            assert_eq!(lc_level_set(fit, constant, 0.0, kind, 0, &mut set), LcStatus::Ok);
            let mut count = 0;
            assert_eq!(lc_level_set_interval_count(set, &mut count), LcStatus::Ok);
            assert_eq!(count, 1);
            let (mut a, mut b) = (0.0, 0.0);
            assert_eq!(lc_level_set_interval(set, 0, &mut a, &mut b), LcStatus::Ok);
            assert!((a - left).abs() <= 0.01, "{kind:?}: {a}");
            assert_eq!(b, -0.05);
            let mut inside = -1;
            assert_eq!(lc_level_set_contains(set, [-0.5].as_ptr(), 1, &mut inside), LcStatus::Ok);
            assert_eq!(inside, 1);
            assert_eq!(lc_level_set_contains(set, [-2.2].as_ptr(), 1, &mut inside), LcStatus::Ok);
            assert_eq!(inside, 0);
            lc_level_set_free(set);
            lc_constant_free(constant);
        }
    }
    unsafe { lc_fit_free(fit) };
}

#[test]
fn simulated_constant_and_band() {
    let fit = toxicity_fit();
    unsafe {
        let mut cfg = lc_mc_config_default(1);
        cfg.draws = 20_000;
        cfg.workers = 2;
        let mut c = ptr::null_mut();
        let st = lc_critical_constant(fit, LO.as_ptr(), HI.as_ptr(), 1, LcSide::TwoSided, LcShape::Hyperbolic, 0.05, &cfg, &mut c);
        assert_eq!(st, LcStatus::Ok);
        let (mut value, mut se) = (0.0, 0.0);
        assert_eq!(lc_constant_value(c, &mut value, &mut se), LcStatus::Ok);
        assert!((value - 2.42).abs() < 0.05, "{value}");
        assert!(se > 0.0 && se < 0.05);

        let (mut lo, mut hi) = (0.0, 0.0);
        assert_eq!(lc_band_at(fit, c, [-1.0].as_ptr(), 1, &mut lo, &mut hi), LcStatus::Ok);
        let centre = 3.124 - 2.128;
        let m = (0.1122 - 2.0 * 0.0679 + 0.0490f64).sqrt();
        assert!((hi - (centre + value * m)).abs() < 1e-12);
        assert!((lo - (centre - value * m)).abs() < 1e-12);
        lc_constant_free(c);
        lc_fit_free(fit);
    }
}

#[test]
fn ols_through_the_c_api() {
    let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
    let y: Vec<f64> = x.iter().map(|v| 1.0 + 0.5 * v + if (*v as i32) % 2 == 0 { 0.1 } else { -0.1 }).collect();
    unsafe {
        let mut fit = ptr::null_mut();
        assert_eq!(lc_fit_ols(y.as_ptr(), x.as_ptr(), 10, 1, &mut fit), LcStatus::Ok);
        let mut k = 0;
        assert_eq!(lc_fit_coefficient_count(fit, &mut k), LcStatus::Ok);
        assert_eq!(k, 2);
        let mut beta = [0.0; 2];
        assert_eq!(lc_fit_coefficients(fit, beta.as_mut_ptr(), 2), LcStatus::Ok);
        assert!((beta[1] - 0.5).abs() < 0.05);
        let (mut s, mut nu) = (0.0, 0.0);
        assert_eq!(lc_fit_scale(fit, &mut s, &mut nu), LcStatus::Ok);
        assert_eq!(nu, 8.0);
        assert_eq!(lc_fit_coefficients(fit, beta.as_mut_ptr(), 1), LcStatus::DimensionMismatch);
        lc_fit_free(fit);

        let mut poly = ptr::null_mut();
        assert_eq!(lc_fit_ols_poly(y.as_ptr(), x.as_ptr(), 10, 2, &mut poly), LcStatus::Ok);
        assert_eq!(lc_fit_coefficient_count(poly, &mut k), LcStatus::Ok);
        assert_eq!(k, 3);
        lc_fit_free(poly);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut fit = ptr::null_mut();
        // Constant covariate: rank deficient.
        let y = [1.0, 2.0, 3.0, 4.0];
        let x = [1.0, 1.0, 1.0, 1.0];
        assert_eq!(lc_fit_ols(y.as_ptr(), x.as_ptr(), 4, 1, &mut fit), LcStatus::RankDeficient);
        assert!(fit.is_null());
        assert!(last_error().starts_with("E_RANK_DEFICIENT"));

        assert_eq!(lc_fit_ols(ptr::null(), x.as_ptr(), 4, 1, &mut fit), LcStatus::NullPointer);
        assert!(last_error().contains("y"));

        let bad_cov = [1.0, 2.0, 2.0, 1.0];
        assert_eq!(lc_fit_from_covariance(BETA.as_ptr(), bad_cov.as_ptr(), 2, &mut fit), LcStatus::NotPositiveDefinite);

        let mut c = ptr::null_mut();
        let st = lc_constant_fixed(2.0, HI.as_ptr(), LO.as_ptr(), 1, LcSide::Upper, LcShape::Hyperbolic, 0.05, &mut c);
        assert_eq!(st, LcStatus::InvalidRegion);
        let st = lc_constant_fixed(2.0, LO.as_ptr(), HI.as_ptr(), 1, LcSide::Upper, LcShape::Hyperbolic, 1.5, &mut c);
        assert_eq!(st, LcStatus::InvalidArgument);

        let fit = toxicity_fit();
        assert_eq!(
            lc_constant_fixed(2.0, LO.as_ptr(), HI.as_ptr(), 1, LcSide::Upper, LcShape::Hyperbolic, 0.05, &mut c),
            LcStatus::Ok
        );
        let mut set = ptr::null_mut();
        assert_eq!(lc_level_set(fit, c, 0.0, LcSetKind::G2u, 0, &mut set), LcStatus::KindMismatch);
        assert_eq!(lc_level_set(fit, c, 0.0, LcSetKind::G1u, 0, &mut set), LcStatus::Ok);
        let (mut a, mut b) = (0.0, 0.0);
        assert_eq!(lc_level_set_interval(set, 3, &mut a, &mut b), LcStatus::InvalidArgument);
        let mut empty = -1;
        assert_eq!(lc_level_set_is_empty(set, &mut empty), LcStatus::Ok);
        assert_eq!(empty, 0);
        lc_level_set_free(set);
        lc_constant_free(c);
        lc_fit_free(fit);

        lc_fit_free(ptr::null_mut());
        lc_constant_free(ptr::null_mut());
        lc_level_set_free(ptr::null_mut());
    }
}

#[test]
fn sublevel_set_through_the_c_api() {
    let fit = toxicity_fit();
    unsafe {
        let mut c = ptr::null_mut();
        lc_constant_fixed(2.14, LO.as_ptr(), HI.as_ptr(), 1, LcSide::Upper, LcShape::Hyperbolic, 0.05, &mut c);
        let mut set = ptr::null_mut();
        assert_eq!(lc_level_set(fit, c, 0.0, LcSetKind::G1u, 1, &mut set), LcStatus::Ok);
        let (mut a, mut b) = (0.0, 0.0);
        assert_eq!(lc_level_set_interval(set, 0, &mut a, &mut b), LcStatus::Ok);
        assert_eq!(a, -2.30);
        assert!(b > -1.5 && b < -1.2, "{b}");
        lc_level_set_free(set);
        lc_constant_free(c);
        lc_fit_free(fit);
    }
}
