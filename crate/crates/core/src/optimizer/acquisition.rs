use statrs::function::erf::erfc;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Expected improvement of a Gaussian prediction over `best` when minimizing.
pub fn expected_improvement(mean: f64, variance: f64, best: f64) -> f64 {
    let gain = best - mean;
    let sigma = variance.max(0.0).sqrt();
    if sigma <= 0.0 {
        return gain.max(0.0);
    }
    let z = gain / sigma;
    let cdf = 0.5 * erfc(-z / std::f64::consts::SQRT_2);
    let pdf = INV_SQRT_2PI * (-0.5 * z * z).exp();
    (gain * cdf + sigma * pdf).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_prediction_at_incumbent_has_no_improvement() {
        assert_eq!(expected_improvement(1.0, 0.0, 1.0), 0.0);
        assert_eq!(expected_improvement(2.0, 0.0, 1.0), 0.0);
        assert_eq!(expected_improvement(0.25, 0.0, 1.0), 0.75);
    }

    #[test]
    fn unit_sigma_at_incumbent_is_normal_density_at_zero() {
        let ei = expected_improvement(3.0, 1.0, 3.0);
        assert!((ei - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
        assert!((ei - 0.3989).abs() < 1e-4);
    }

    #[test]
    fn grows_with_uncertainty_when_mean_is_worse() {
        let mut last = 0.0;
        for k in 1..200 {
            let sigma = k as f64 * 0.05;
            let ei = expected_improvement(1.5, sigma * sigma, 1.0);
            assert!(ei > last, "sigma {sigma}: {ei} <= {last}");
            last = ei;
        }
    }
}
