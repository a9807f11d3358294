//! Closed-form reference quantiles (normal, Student t, F).
//!
//! These are independent of the Monte Carlo band engine and serve as its
//! limiting-case oracles: a single-point region reproduces a t quantile and
//! an unbounded region reproduces the Scheffé constant.

use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal, StudentsT};

pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probability must lie in (0, 1)");
    Normal::standard().inverse_cdf(p)
}

/// Lower-tail quantile `t` with `P(T ≤ t) = p`; `nu = ∞` gives the normal.
pub fn t_quantile(p: f64, nu: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probability must lie in (0, 1)");
    if nu.is_infinite() {
        return normal_quantile(p);
    }
    StudentsT::new(0.0, 1.0, nu).expect("positive degrees of freedom").inverse_cdf(p)
}

/// Lower-tail quantile of `F(d1, d2)`; `d2 = ∞` gives `χ²_{d1}/d1`.
pub fn f_quantile(p: f64, d1: f64, d2: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probability must lie in (0, 1)");
    if d2.is_infinite() {
        return ChiSquared::new(d1).expect("positive degrees of freedom").inverse_cdf(p) / d1;
    }
    FisherSnedecor::new(d1, d2).expect("positive degrees of freedom").inverse_cdf(p)
}

/// The Scheffé constant `sqrt(k · F_{1-α; k, ν})`, the two-sided critical
/// constant of a hyperbolic band over the whole covariate space.
pub fn scheffe_constant(k: usize, nu: f64, alpha: f64) -> f64 {
    let k = k as f64;
    (k * f_quantile(1.0 - alpha, k, nu)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_quantile_known_values() {
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((normal_quantile(0.95) - 1.644_853_626_951_472_2).abs() < 1e-12);
        assert!((normal_quantile(1e-10) + 6.361_340_902_404_056).abs() < 1e-9);
    }

    #[test]
    fn t_quantile_table_values() {
        // Standard printed table values.
        assert!((t_quantile(0.95, 5.0) - 2.015_048).abs() < 1e-6);
        assert!((t_quantile(0.975, 14.0) - 2.144_787).abs() < 1e-6);
        assert!((t_quantile(0.975, 30.0) - 2.042_272).abs() < 1e-6);
        assert!((t_quantile(0.05, 10.0) + 1.812_461).abs() < 1e-6);
    }

    #[test]
    fn f_quantile_table_values() {
        assert!((f_quantile(0.95, 3.0, 14.0) - 3.343_889).abs() < 1e-5);
        assert!((f_quantile(0.95, 2.0, 10.0) - 4.102_821).abs() < 1e-5);
        // Chi-square limit: 2·F(2, ∞) is χ²₂ with 0.95 quantile −2 ln 0.05.
        assert!((2.0 * f_quantile(0.95, 2.0, f64::INFINITY) + 2.0 * 0.05f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn t_squared_is_f_one() {
        for nu in [3.0, 14.0, 50.0] {
            let t = t_quantile(0.975, nu);
            let f = f_quantile(0.95, 1.0, nu);
            assert!((t * t - f).abs() < 1e-8 * f);
        }
    }
}
