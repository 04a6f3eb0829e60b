//! Gaussian-process regression with a squared-exponential ARD kernel.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel hyperparameters and prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    /// One length scale per input dimension, in input units.
    pub length_scales: Vec<f64>,
    /// Prior (signal) variance of the latent function.
    pub signal_variance: f64,
    /// Constant prior mean.
    pub prior_mean: f64,
    /// Added to the kernel diagonal.
    pub jitter: f64,
}

impl GpConfig {
    pub fn isotropic(dim: usize, length_scale: f64, signal_variance: f64) -> Self {
        Self {
            length_scales: vec![length_scale; dim],
            signal_variance,
            prior_mean: 0.0,
            jitter: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.jitter > 0.0) {
            return Err(Error::InvalidDomain("GP jitter must be positive".into()));
        }
        if self.length_scales.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::InvalidDomain(
                "GP length scales must be positive".into(),
            ));
        }
        if !(self.signal_variance > 0.0) {
            return Err(Error::InvalidDomain(
                "GP signal variance must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.length_scales)
            .map(|((x, y), l)| {
                let d = (x - y) / l;
                d * d
            })
            .sum();
        self.signal_variance * (-0.5 * r2).exp()
    }
}

/// A GP conditioned on a fixed set of observations.
#[derive(Debug, Clone)]
pub struct GaussianProcess {
    config: GpConfig,
    points: Vec<Vec<f64>>,
    /// Lower Cholesky factor of `K + jitter I`; `None` without data.
    lower: Option<DMatrix<f64>>,
    alpha: DVector<f64>,
}

impl GaussianProcess {
    pub fn fit(config: GpConfig, points: Vec<Vec<f64>>, values: &[f64]) -> Result<Self> {
        config.validate()?;
        assert_eq!(points.len(), values.len(), "one value per point");
        let n = points.len();
        if n == 0 {
            return Ok(Self {
                config,
                points,
                lower: None,
                alpha: DVector::zeros(0),
            });
        }
        let k = DMatrix::from_fn(n, n, |i, j| {
            let v = config.kernel(&points[i], &points[j]);
            if i == j {
                v + config.jitter
            } else {
                v
            }
        });
        let chol = k.cholesky().ok_or(Error::Factorization)?;
        let centered = DVector::from_iterator(n, values.iter().map(|y| y - config.prior_mean));
        let alpha = chol.solve(&centered);
        Ok(Self {
            config,
            points,
            lower: Some(chol.unpack()),
            alpha,
        })
    }

    pub fn config(&self) -> &GpConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Posterior mean and variance of the latent function at `x`.
    pub fn posterior(&self, x: &[f64]) -> (f64, f64) {
        let prior_var = self.config.signal_variance;
        let Some(lower) = &self.lower else {
            return (self.config.prior_mean, prior_var);
        };
        let kx = DVector::from_iterator(
            self.points.len(),
            self.points.iter().map(|p| self.config.kernel(p, x)),
        );
        let mean = self.config.prior_mean + kx.dot(&self.alpha);
        let v = lower
            .solve_lower_triangular(&kx)
            .unwrap_or_else(|| DVector::zeros(kx.len()));
        let var = (prior_var - v.norm_squared()).max(0.0);
        (mean, var)
    }

    /// Log marginal likelihood of the conditioning data.
    pub fn log_marginal_likelihood(&self, values: &[f64]) -> f64 {
        let Some(lower) = &self.lower else { return 0.0 };
        let n = values.len() as f64;
        let centered = DVector::from_iterator(
            values.len(),
            values.iter().map(|y| y - self.config.prior_mean),
        );
        let fit = centered.dot(&self.alpha);
        let log_det: f64 = lower.diagonal().iter().map(|d| d.ln()).sum();
        -0.5 * fit - log_det - 0.5 * n * (std::f64::consts::TAU).ln()
    }
}

/// Posterior mean and variance at `query` for a GP with `config` conditioned on
/// `(points, values)`.
pub fn gp_posterior(
    config: &GpConfig,
    points: &[Vec<f64>],
    values: &[f64],
    query: &[f64],
) -> Result<(f64, f64)> {
    let gp = GaussianProcess::fit(config.clone(), points.to_vec(), values)?;
    Ok(gp.posterior(query))
}
