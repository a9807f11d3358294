use levelconf::level_set::{nesting_check_with, probe_grid, SetFamily};
use levelconf::model::design_matrix;
use levelconf::band::ConstantSet;
use levelconf::{
    confidence_set, fit_ols, sublevel_set, BandSpec, BasisMap, BoxRegion, CriticalConstant, Dataset, RegressionFit,
    SetKind, Shape, Side,
};
use nalgebra::DVector;
use proptest::prelude::*;

fn data(ys: &[f64], xs: &[f64]) -> Dataset {
    let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    Dataset::from_rows(ys.to_vec(), &rows).unwrap()
}

fn sample() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (8usize..25).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0f64..5.0, n),
            // Distinct, spread covariates keep the design well conditioned.
            prop::collection::vec(-0.2f64..0.2, n).prop_map(|jitter| {
                jitter.iter().enumerate().map(|(i, j)| i as f64 * 0.5 + j).collect()
            }),
        )
    })
}

fn constant(side: Side, value: f64, region: &BoxRegion) -> CriticalConstant {
    CriticalConstant::fixed(value, BandSpec::new(side, Shape::Hyperbolic, 0.05, region.clone()).unwrap()).unwrap()
}

fn members(fit: &RegressionFit, c: &CriticalConstant, lambda: f64, kind: SetKind, sub: bool, nodes: &[Vec<f64>]) -> Vec<bool> {
    let set = if sub { sublevel_set(fit, c, lambda, kind) } else { confidence_set(fit, c, lambda, kind) }.unwrap();
    nodes.iter().map(|x| set.contains(x).unwrap()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn residuals_are_orthogonal_to_the_design((ys, xs) in sample(), degree in 1usize..=3) {
        let d = data(&ys, &xs);
        let basis = if degree == 1 { BasisMap::affine(1).unwrap() } else { BasisMap::polynomial(degree).unwrap() };
        let fit = fit_ols(&d, basis).unwrap();
        let x = design_matrix(d.covariates(), &basis).unwrap();
        let r = DVector::from_vec(ys.clone()) - &x * fit.beta_hat();
        let scale = x.amax() * r.amax().max(1.0) * ys.len() as f64;
        prop_assert!((x.transpose() * &r).amax() <= 1e-9 * scale);
        let trace = (&x * fit.xtx_inv() * x.transpose()).trace();
        prop_assert!((trace - (degree + 1) as f64).abs() <= 1e-8);
        let rss = r.norm_squared();
        let nu = (ys.len() - degree - 1) as f64;
        prop_assert!((fit.sigma_hat_sq() - rss / nu).abs() <= 1e-9 * (1.0 + rss / nu));
    }

    #[test]
    fn sets_shrink_as_lambda_rises((ys, xs) in sample(), lambda in -3.0f64..3.0, step in 0.01f64..2.0, c in 1.0f64..3.5) {
        let fit = fit_ols(&data(&ys, &xs), BasisMap::affine(1).unwrap()).unwrap();
        let region = BoxRegion::interval(xs[0], xs[xs.len() - 1]).unwrap();
        let nodes = probe_grid(&region, 400);
        for (kind, side) in [(SetKind::G1u, Side::Upper), (SetKind::G1l, Side::Lower), (SetKind::G2u, Side::TwoSided), (SetKind::G2l, Side::TwoSided)] {
            let k = constant(side, c, &region);
            let low = members(&fit, &k, lambda, kind, false, &nodes);
            let high = members(&fit, &k, lambda + step, kind, false, &nodes);
            prop_assert!(low.iter().zip(&high).all(|(l, h)| !h || *l), "{}", kind);
            // Sublevel sets grow instead.
            let low = members(&fit, &k, lambda, kind, true, &nodes);
            let high = members(&fit, &k, lambda + step, kind, true, &nodes);
            prop_assert!(low.iter().zip(&high).all(|(l, h)| !l || *h), "{}", kind);
        }
    }

    #[test]
    fn sublevel_is_superlevel_of_negation((ys, xs) in sample(), lambda in -3.0f64..3.0, c in 1.0f64..3.5) {
        let fit = fit_ols(&data(&ys, &xs), BasisMap::affine(1).unwrap()).unwrap();
        let region = BoxRegion::interval(xs[0], xs[xs.len() - 1]).unwrap();
        let nodes = probe_grid(&region, 400);
        let k = constant(Side::Upper, c, &region);
        prop_assert_eq!(
            members(&fit, &k, lambda, SetKind::G1u, true, &nodes),
            members(&fit.negated(), &k, -lambda, SetKind::G1u, false, &nodes)
        );
        prop_assert_eq!(
            members(&fit.negated().negated(), &k, lambda, SetKind::G1u, false, &nodes),
            members(&fit, &k, lambda, SetKind::G1u, false, &nodes)
        );
    }

    #[test]
    fn chain_holds_whenever_c1_is_below_c2((ys, xs) in sample(), lambda in -3.0f64..3.0, c1 in 1.0f64..3.0, gap in 0.0f64..1.0, sub in any::<bool>()) {
        let fit = fit_ols(&data(&ys, &xs), BasisMap::affine(1).unwrap()).unwrap();
        let region = BoxRegion::interval(xs[0], xs[xs.len() - 1]).unwrap();
        let constants = ConstantSet {
            upper: constant(Side::Upper, c1, &region),
            lower: constant(Side::Lower, c1, &region),
            two_sided: constant(Side::TwoSided, c1 + gap, &region),
        };
        let family = SetFamily::build(&fit, &constants, lambda, sub).unwrap();
        prop_assert!(nesting_check_with(&family, 1000).unwrap());
    }

    #[test]
    fn extreme_thresholds((ys, xs) in sample(), c in 0.0f64..3.5) {
        let fit = fit_ols(&data(&ys, &xs), BasisMap::affine(1).unwrap()).unwrap();
        let region = BoxRegion::interval(xs[0], xs[xs.len() - 1]).unwrap();
        let k = constant(Side::TwoSided, c, &region);
        for kind in [SetKind::G2u, SetKind::G2l] {
            let none = confidence_set(&fit, &k, 1e12, kind).unwrap();
            let all = confidence_set(&fit, &k, -1e12, kind).unwrap();
            prop_assert!(none.is_empty && none.intervals().unwrap().is_empty());
            prop_assert!(all.is_all_of_region);
            prop_assert_eq!(all.intervals().unwrap(), &[(xs[0], xs[xs.len() - 1])][..]);
        }
    }
}
