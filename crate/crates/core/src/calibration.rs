//! Linear model correction `y_hat(x, V) = y_model(x, V) + alpha(x)' V`, learned
//! node by node with least-mean-squares updates from sensed shapes.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{solve_shape, RobotParams, ShapeCurve, VoltageVector};

/// Per-node correction coefficients, cm/V, and the LMS step size, 1/V².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionField {
    /// Grid positions, m.
    pub x: Vec<f64>,
    /// `alpha[node][actuator]`, cm/V.
    pub alpha: Vec<Vec<f64>>,
    pub learning_rate: f64,
}

/// One sensed shape with the voltages that produced it and the model's
/// prediction for the same voltages.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSample {
    pub v: VoltageVector,
    pub sensed: ShapeCurve,
    pub model_shape: ShapeCurve,
}

impl CalibrationSample {
    pub fn new(v: VoltageVector, sensed: ShapeCurve, model_shape: ShapeCurve) -> Result<Self> {
        sensed.same_grid(&model_shape)?;
        Ok(Self {
            v,
            sensed,
            model_shape,
        })
    }

    /// Sensed minus modeled height per node, cm.
    pub fn residual_cm(&self) -> Vec<f64> {
        self.sensed
            .y
            .iter()
            .zip(&self.model_shape.y)
            .map(|(s, m)| (s - m) * 100.0)
            .collect()
    }
}

impl CorrectionField {
    /// All-zero field on `x` for `n_actuators` inputs.
    pub fn zeros(x: Vec<f64>, n_actuators: usize, learning_rate: f64) -> Result<Self> {
        if !(learning_rate > 0.0) {
            return Err(Error::InvalidParams(
                "learning rate must be positive".into(),
            ));
        }
        let alpha = vec![vec![0.0; n_actuators]; x.len()];
        Ok(Self {
            x,
            alpha,
            learning_rate,
        })
    }

    /// `0.5 / max |V|^2` over the calibration voltages.
    pub fn default_learning_rate<'a>(
        voltages: impl IntoIterator<Item = &'a VoltageVector>,
    ) -> Result<f64> {
        let max = voltages
            .into_iter()
            .map(VoltageVector::norm_squared)
            .fold(0.0, f64::max);
        if !(max > 0.0) {
            return Err(Error::InvalidParams(
                "calibration voltages are all zero".into(),
            ));
        }
        Ok(0.5 / max)
    }

    pub fn n_actuators(&self) -> usize {
        self.alpha.first().map_or(0, Vec::len)
    }

    /// `alpha(x)' V` per node, cm.
    pub fn correction_cm(&self, v: &VoltageVector) -> Vec<f64> {
        self.alpha
            .iter()
            .map(|a| a.iter().zip(&v.0).map(|(a, v)| a * v).sum())
            .collect()
    }

    fn check(&self, shape: &ShapeCurve, v: &VoltageVector) -> Result<()> {
        if shape.len() != self.x.len() {
            return Err(Error::GridMismatch {
                left: self.x.len(),
                right: shape.len(),
            });
        }
        if v.len() != self.n_actuators() {
            return Err(Error::VoltageLength {
                expected: self.n_actuators(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Model shape plus the learned correction.
    pub fn corrected_shape(
        &self,
        model_shape: &ShapeCurve,
        v: &VoltageVector,
    ) -> Result<ShapeCurve> {
        self.check(model_shape, v)?;
        let dy: Vec<f64> = self
            .correction_cm(v)
            .into_iter()
            .map(|c| c / 100.0)
            .collect();
        model_shape.offset_by(&dy)
    }

    /// One LMS step per node: `alpha <- alpha - eta (alpha'V - dy) V`.
    pub fn lms_update(&mut self, sample: &CalibrationSample) -> Result<()> {
        self.check(&sample.sensed, &sample.v)?;
        let eta = self.learning_rate;
        let v = &sample.v.0;
        for (a, dy) in self.alpha.iter_mut().zip(sample.residual_cm()) {
            let err: f64 = a.iter().zip(v).map(|(a, v)| a * v).sum::<f64>() - dy;
            for (ak, vk) in a.iter_mut().zip(v) {
                *ak -= eta * err * vk;
            }
        }
        Ok(())
    }

    /// Sweep the samples in order, `epochs` times.
    pub fn calibrate_batch(&mut self, samples: &[CalibrationSample], epochs: usize) -> Result<()> {
        if samples.is_empty() {
            return Err(Error::InvalidParams(
                "calibration needs at least one sample".into(),
            ));
        }
        for _ in 0..epochs {
            for s in samples {
                self.lms_update(s)?;
            }
        }
        Ok(())
    }

    /// Mean squared residual (cm²) of the corrected model over the samples.
    pub fn residual_mse(&self, samples: &[CalibrationSample]) -> Result<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for s in samples {
            let pred = self.correction_cm(&s.v);
            for (p, r) in pred.iter().zip(s.residual_cm()) {
                total += (p - r) * (p - r);
                count += 1;
            }
        }
        Ok(total / count.max(1) as f64)
    }

    /// Write as `x_cm,a1..aN`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let cols: Vec<String> = (1..=self.n_actuators()).map(|i| format!("a{i}")).collect();
        writeln!(w, "x_cm,{}", cols.join(","))?;
        for (x, a) in self.x.iter().zip(&self.alpha) {
            let vals: Vec<String> = a.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},{}", x * 100.0, vals.join(","))?;
        }
        Ok(())
    }

    /// Read an `x_cm,a1..aN` CSV written by [`CorrectionField::write_csv`].
    pub fn read_csv<R: BufRead>(r: R, origin: &Path, learning_rate: f64) -> Result<Self> {
        let err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            message,
        };
        let mut x = Vec::new();
        let mut alpha = Vec::new();
        let mut width = None;
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            if idx == 0 || line.trim().is_empty() {
                continue;
            }
            let nums: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|f| f.trim().parse::<f64>()).collect();
            let nums = nums.map_err(|e| err(format!("line {}: {e}", idx + 1)))?;
            if nums.len() < 2 || width.is_some_and(|w| w != nums.len()) {
                return Err(err(format!("line {}: inconsistent column count", idx + 1)));
            }
            width = Some(nums.len());
            x.push(nums[0] / 100.0);
            alpha.push(nums[1..].to_vec());
        }
        if x.len() < 2 {
            return Err(err("need at least two rows".into()));
        }
        Ok(Self {
            x,
            alpha,
            learning_rate,
        })
    }
}

/// Anything that predicts the floor-supported body shape for given voltages.
pub trait ShapePredictor: Sync {
    fn params(&self) -> &RobotParams;
    fn predict(&self, v: &VoltageVector) -> Result<ShapeCurve>;
}

/// Physics model with an optional learned correction.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedModel {
    pub params: RobotParams,
    pub correction: Option<CorrectionField>,
}

impl CorrectedModel {
    pub fn new(params: RobotParams) -> Self {
        Self {
            params,
            correction: None,
        }
    }

    pub fn with_correction(params: RobotParams, correction: CorrectionField) -> Self {
        Self {
            params,
            correction: Some(correction),
        }
    }

    /// Uncorrected physics shape.
    pub fn model_shape(&self, v: &VoltageVector) -> Result<ShapeCurve> {
        Ok(solve_shape(&self.params, v, true)?.shape)
    }
}

impl ShapePredictor for CorrectedModel {
    fn params(&self) -> &RobotParams {
        &self.params
    }

    fn predict(&self, v: &VoltageVector) -> Result<ShapeCurve> {
        let base = self.model_shape(v)?;
        match &self.correction {
            Some(field) => field.corrected_shape(&base, v),
            None => Ok(base),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| 0.5 * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn zero_field_leaves_shape_alone() {
        let f = CorrectionField::zeros(grid(11), 5, 1e-6).unwrap();
        let s = ShapeCurve::new(grid(11), (0..11).map(|i| i as f64 * 1e-3).collect()).unwrap();
        let v = VoltageVector::from([100.0, -50.0, 3.0, 0.0, 7.0]);
        assert_eq!(f.corrected_shape(&s, &v).unwrap(), s);
    }

    #[test]
    fn single_coefficient_shifts_uniformly() {
        let mut f = CorrectionField::zeros(grid(11), 5, 1e-6).unwrap();
        for a in &mut f.alpha {
            a[0] = 0.001;
        }
        let s = ShapeCurve::flat(grid(11));
        let out = f
            .corrected_shape(&s, &VoltageVector::from([100.0, 0.0, 0.0, 0.0, 0.0]))
            .unwrap();
        for y in out.y {
            assert!((y - 0.001).abs() < 1e-15);
        }
        let zero = f.corrected_shape(&s, &VoltageVector::zeros(5)).unwrap();
        assert_eq!(zero, s);
    }

    #[test]
    fn one_step_update() {
        let x = grid(3);
        let mut f = CorrectionField::zeros(x.clone(), 5, 1e-6).unwrap();
        let model = ShapeCurve::flat(x.clone());
        let sensed = ShapeCurve::new(x, vec![0.0, 0.005, 0.0]).unwrap();
        let v = VoltageVector::from([100.0, 0.0, 0.0, 0.0, 0.0]);
        f.lms_update(&CalibrationSample::new(v, sensed, model).unwrap())
            .unwrap();
        assert!((f.alpha[1][0] - 5e-5).abs() < 1e-18);
        assert_eq!(&f.alpha[1][1..], &[0.0; 4]);
        assert_eq!(f.alpha[0], vec![0.0; 5]);
    }

    #[test]
    fn zero_residual_is_a_fixed_point() {
        let x = grid(3);
        let mut f = CorrectionField::zeros(x.clone(), 5, 1e-6).unwrap();
        f.alpha[1] = vec![1e-4, 0.0, 2e-4, 0.0, 0.0];
        let v = VoltageVector::from([100.0, 0.0, 50.0, 0.0, 0.0]);
        let model = ShapeCurve::flat(x.clone());
        let sensed = f.corrected_shape(&model, &v).unwrap();
        let before = f.clone();
        f.lms_update(&CalibrationSample::new(v, sensed, model).unwrap())
            .unwrap();
        for (a, b) in f.alpha.iter().flatten().zip(before.alpha.iter().flatten()) {
            assert!((a - b).abs() < 1e-18);
        }
    }

    #[test]
    fn zero_epochs_changes_nothing() {
        let x = grid(3);
        let mut f = CorrectionField::zeros(x.clone(), 5, 1e-6).unwrap();
        let s = CalibrationSample::new(
            VoltageVector::from([1.0; 5]),
            ShapeCurve::new(x.clone(), vec![0.01; 3]).unwrap(),
            ShapeCurve::flat(x),
        )
        .unwrap();
        let before = f.clone();
        f.calibrate_batch(&[s], 0).unwrap();
        assert_eq!(f, before);
        assert!(f.calibrate_batch(&[], 3).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut f = CorrectionField::zeros(grid(5), 5, 1e-6).unwrap();
        f.alpha[2] = vec![1e-4, -2e-5, 3.5e-6, 0.0, 7e-7];
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("x_cm,a1,a2,a3,a4,a5\n"));
        let back = CorrectionField::read_csv(&buf[..], Path::new("mem"), 1e-6).unwrap();
        assert_eq!(back.alpha, f.alpha);
    }
}
