//! Overhead roof profiles in world coordinates and the safety line below them.

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::shape::interpolate;

/// Width of the linear ramp that replaces the discontinuity of a step roof, m.
pub const STEP_RAMP_WIDTH: f64 = 0.001;

/// Roof height as a function of world `x`, metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RoofProfile {
    /// `left` height up to the transition, `right` height from it on. The drop
    /// happens over [`STEP_RAMP_WIDTH`] ending at `transition`.
    Step {
        left: f64,
        right: f64,
        transition: f64,
        start: f64,
        end: f64,
    },
    /// Linear between the two end heights.
    Slanted {
        left: f64,
        right: f64,
        start: f64,
        end: f64,
    },
    /// `mean + amplitude * sin(2 pi x / wavelength + phase)`.
    Sinusoidal {
        mean: f64,
        amplitude: f64,
        wavelength: f64,
        phase: f64,
        start: f64,
        end: f64,
    },
    /// Linear interpolation between knots.
    PiecewiseLinear { x: Vec<f64>, height: Vec<f64> },
}

impl RoofProfile {
    pub fn step(left: f64, right: f64, transition: f64, start: f64, end: f64) -> Result<Self> {
        let roof = RoofProfile::Step {
            left,
            right,
            transition,
            start,
            end,
        };
        roof.validate()?;
        Ok(roof)
    }

    pub fn slanted(left: f64, right: f64, start: f64, end: f64) -> Result<Self> {
        let roof = RoofProfile::Slanted {
            left,
            right,
            start,
            end,
        };
        roof.validate()?;
        Ok(roof)
    }

    pub fn sinusoidal(
        mean: f64,
        amplitude: f64,
        wavelength: f64,
        phase: f64,
        start: f64,
        end: f64,
    ) -> Result<Self> {
        let roof = RoofProfile::Sinusoidal {
            mean,
            amplitude,
            wavelength,
            phase,
            start,
            end,
        };
        roof.validate()?;
        Ok(roof)
    }

    pub fn piecewise_linear(x: Vec<f64>, height: Vec<f64>) -> Result<Self> {
        let roof = RoofProfile::PiecewiseLinear { x, height };
        roof.validate()?;
        Ok(roof)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidRoof(m.to_string()));
        let (lo, hi) = self.domain();
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return bad("domain must be a finite interval with start < end");
        }
        match self {
            RoofProfile::Step {
                left,
                right,
                transition,
                ..
            } => {
                if !(*left > 0.0 && *right > 0.0) {
                    return bad("step heights must be positive");
                }
                if !transition.is_finite() {
                    return bad("step transition must be finite");
                }
            }
            RoofProfile::Slanted { left, right, .. } => {
                if !(*left > 0.0 && *right > 0.0) {
                    return bad("slanted end heights must be positive");
                }
            }
            RoofProfile::Sinusoidal {
                mean,
                amplitude,
                wavelength,
                phase,
                ..
            } => {
                if !(*wavelength > 0.0) || !phase.is_finite() {
                    return bad("sinusoid needs a positive wavelength and finite phase");
                }
                if !(mean - amplitude.abs() > 0.0) {
                    return bad("sinusoid dips to or below zero height");
                }
            }
            RoofProfile::PiecewiseLinear { x, height } => {
                if x.len() != height.len() || x.len() < 2 {
                    return bad("need at least two knots with one height each");
                }
                if x.windows(2).any(|w| w[1] == w[0]) {
                    return bad("duplicate knot x");
                }
                if x.windows(2).any(|w| w[1] < w[0]) {
                    return bad("knots must be sorted by x");
                }
                if height.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
                    return bad("knot heights must be positive");
                }
            }
        }
        Ok(())
    }

    /// World-frame `[start, end]` over which the roof exists.
    pub fn domain(&self) -> (f64, f64) {
        match self {
            RoofProfile::Step { start, end, .. }
            | RoofProfile::Slanted { start, end, .. }
            | RoofProfile::Sinusoidal { start, end, .. } => (*start, *end),
            RoofProfile::PiecewiseLinear { x, .. } => (x[0], x[x.len() - 1]),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let (lo, hi) = self.domain();
        x >= lo && x <= hi
    }

    /// Height at `x`; errors outside the domain.
    pub fn height_at(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        if !self.contains(x) {
            return Err(Error::OutOfDomain { x, lo, hi });
        }
        Ok(self.eval(x))
    }

    /// Height at `x`, or infinity where there is no roof.
    pub fn height_or_open(&self, x: f64) -> f64 {
        if self.contains(x) {
            self.eval(x)
        } else {
            f64::INFINITY
        }
    }

    fn eval(&self, x: f64) -> f64 {
        match self {
            RoofProfile::Step {
                left,
                right,
                transition,
                ..
            } => {
                let ramp_start = transition - STEP_RAMP_WIDTH;
                if x >= *transition {
                    *right
                } else if x <= ramp_start {
                    *left
                } else {
                    left + (right - left) * (x - ramp_start) / STEP_RAMP_WIDTH
                }
            }
            RoofProfile::Slanted {
                left,
                right,
                start,
                end,
            } => left + (right - left) * (x - start) / (end - start),
            RoofProfile::Sinusoidal {
                mean,
                amplitude,
                wavelength,
                phase,
                ..
            } => mean + amplitude * (std::f64::consts::TAU * x / wavelength + phase).sin(),
            RoofProfile::PiecewiseLinear { x: xs, height } => interpolate(xs, height, x),
        }
    }

    /// Lowest height over the domain.
    pub fn min_height(&self) -> f64 {
        match self {
            RoofProfile::Step { left, right, .. } | RoofProfile::Slanted { left, right, .. } => {
                left.min(*right)
            }
            RoofProfile::Sinusoidal {
                mean,
                amplitude,
                wavelength,
                phase,
                start,
                end,
            } => {
                // Sample densely; the analytic minimum may fall outside the domain.
                let n = (((end - start) / wavelength) * 200.0).ceil().max(200.0) as usize;
                let mut lo = mean + amplitude.abs();
                for i in 0..=n {
                    let x = start + (end - start) * i as f64 / n as f64;
                    let h =
                        mean + amplitude * (std::f64::consts::TAU * x / wavelength + phase).sin();
                    lo = lo.min(h);
                }
                lo
            }
            RoofProfile::PiecewiseLinear { height, .. } => {
                height.iter().copied().fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Load an `x_cm,height_cm` CSV as a piecewise-linear roof.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file), path)
    }

    pub fn read_csv<R: BufRead>(r: R, origin: &Path) -> Result<Self> {
        let rows = crate::io::read_two_column_csv(r, origin)?;
        if rows.len() < 2 {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                message: format!("need at least 2 rows, got {}", rows.len()),
            });
        }
        let (x, height): (Vec<f64>, Vec<f64>) = rows
            .into_iter()
            .map(|(x, h)| (x / 100.0, h / 100.0))
            .unzip();
        Self::piecewise_linear(x, height).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Roof lowered by a fixed margin: the height the robot must stay under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyLine {
    pub roof: RoofProfile,
    pub margin: f64,
}

impl SafetyLine {
    pub fn new(roof: RoofProfile, margin: f64) -> Result<Self> {
        roof.validate()?;
        if !(margin >= 0.0) {
            return Err(Error::InvalidRoof(format!(
                "margin must be non-negative, got {margin}"
            )));
        }
        if margin >= roof.min_height() {
            return Err(Error::InvalidRoof(format!(
                "margin {margin} m leaves no room under a roof as low as {} m",
                roof.min_height()
            )));
        }
        Ok(Self { roof, margin })
    }

    pub fn height_at(&self, x: f64) -> Result<f64> {
        Ok(self.roof.height_at(x)? - self.margin)
    }

    /// Safety height, or infinity where there is no roof.
    pub fn height_or_open(&self, x: f64) -> f64 {
        self.roof.height_or_open(x) - self.margin
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn builtin_step() -> RoofProfile {
        RoofProfile::step(0.014, 0.009, 0.6, 0.0, 1.0).unwrap()
    }

    #[test]
    fn step_heights_either_side() {
        let roof = builtin_step();
        assert_eq!(roof.height_at(0.3).unwrap(), 0.014);
        assert_eq!(roof.height_at(0.8).unwrap(), 0.009);
        // right-continuous at the transition
        assert_eq!(roof.height_at(0.6).unwrap(), 0.009);
        let mid = roof.height_at(0.6 - 0.0005).unwrap();
        assert!((mid - 0.0115).abs() < 1e-12);
    }

    #[test]
    fn flat_sinusoid_is_constant() {
        let roof = RoofProfile::sinusoidal(0.012, 0.0, 0.3, 0.0, 0.0, 1.0).unwrap();
        for i in 0..=10 {
            assert_eq!(roof.height_at(i as f64 * 0.1).unwrap(), 0.012);
        }
    }

    #[test]
    fn out_of_domain_is_an_error_but_open_for_constraints() {
        let roof = builtin_step();
        assert!(matches!(
            roof.height_at(1.2),
            Err(Error::OutOfDomain { .. })
        ));
        assert_eq!(roof.height_or_open(-0.1), f64::INFINITY);
    }

    #[test]
    fn safety_line_subtracts_margin() {
        let line = SafetyLine::new(builtin_step(), 0.001).unwrap();
        assert!((line.height_at(0.3).unwrap() - 0.013).abs() < 1e-15);
        let zero = SafetyLine::new(builtin_step(), 0.0).unwrap();
        assert_eq!(zero.height_at(0.3).unwrap(), 0.014);
        let low =
            SafetyLine::new(RoofProfile::slanted(0.009, 0.009, 0.0, 1.0).unwrap(), 0.005).unwrap();
        assert!((low.height_at(0.5).unwrap() - 0.004).abs() < 1e-15);
    }

    #[test]
    fn margin_must_fit_under_roof() {
        assert!(SafetyLine::new(builtin_step(), 0.009).is_err());
        assert!(SafetyLine::new(builtin_step(), -0.001).is_err());
    }

    #[test]
    fn invalid_profiles_rejected() {
        assert!(RoofProfile::step(0.0, 0.01, 0.5, 0.0, 1.0).is_err());
        assert!(RoofProfile::sinusoidal(0.01, 0.02, 0.3, 0.0, 0.0, 1.0).is_err());
        assert!(RoofProfile::slanted(0.01, 0.01, 1.0, 0.0).is_err());
    }

    fn load(text: &str) -> Result<RoofProfile> {
        RoofProfile::read_csv(text.as_bytes(), Path::new("roof.csv"))
    }

    #[test]
    fn csv_constant_profile() {
        let roof = load("x_cm,height_cm\n0,1.4\n100,1.4\n").unwrap();
        assert_eq!(roof.domain(), (0.0, 1.0));
        assert!((roof.height_at(0.37).unwrap() - 0.014).abs() < 1e-15);
    }

    #[test]
    fn csv_step_like_profile() {
        let roof = load("x_cm,height_cm\n0,1.4\n50,1.4\n50.1,0.9\n100,0.9\n").unwrap();
        assert!((roof.height_at(0.25).unwrap() - 0.014).abs() < 1e-15);
        assert!((roof.height_at(0.75).unwrap() - 0.009).abs() < 1e-15);
        let RoofProfile::PiecewiseLinear { x, height } = &roof else {
            unreachable!()
        };
        for (xk, hk) in x.iter().zip(height) {
            assert_eq!(roof.height_at(*xk).unwrap(), *hk);
        }
    }

    #[test]
    fn csv_errors() {
        assert!(load("x_cm,height_cm\n0,1\n0,2\n").is_err());
        assert!(load("x_cm,height_cm\n1,1\n0,2\n").is_err());
        assert!(load("x_cm,height_cm\n0,1\n").is_err());
        assert!(load("x_cm,height_cm\n0,abc\n1,2\n").is_err());
    }
}
