//! Voltage selection: tracking a target shape, and bending as high as a roof
//! allows without crossing its safety line.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::calibration::ShapePredictor;
use crate::error::{Error, Result};
use crate::model::{shape_mse, ShapeCurve, VoltageVector};
use crate::optimizer::{minimize, minimize_from, BoSettings, OutputWarping, SearchSpace};
use crate::roofs::SafetyLine;

/// Default collision penalty, cm.
pub const DEFAULT_PENALTY_CM: f64 = 1000.0;

/// Desired body shape on the model grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetShape(pub ShapeCurve);

impl TargetShape {
    /// Resample `curve` onto `grid`.
    pub fn on_grid(curve: &ShapeCurve, grid: &[f64]) -> Self {
        Self(curve.resample(grid))
    }

    pub fn curve(&self) -> &ShapeCurve {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoofLossConfig {
    /// Collision penalty `c`, cm.
    pub penalty: f64,
    /// Footprint sample count.
    pub samples: usize,
    /// Loss transform used by the optimizer for this loss.
    pub warping: OutputWarping,
}

impl Default for RoofLossConfig {
    fn default() -> Self {
        Self {
            penalty: DEFAULT_PENALTY_CM,
            samples: 201,
            warping: OutputWarping::Rank,
        }
    }
}

impl RoofLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.penalty > 0.0 && self.penalty.is_finite()) {
            return Err(Error::InvalidParams("penalty must be positive".into()));
        }
        if self.samples < 2 {
            return Err(Error::InvalidParams(
                "need at least two footprint samples".into(),
            ));
        }
        Ok(())
    }
}

/// Roof loss and its two ingredients, cm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoofEvaluation {
    pub loss: f64,
    /// Largest excess over the safety line; `None` where no roof overlaps.
    pub dy_max: Option<f64>,
    /// Smallest distance to the safety line.
    pub dy_min: Option<f64>,
}

impl RoofEvaluation {
    pub fn violates(&self) -> bool {
        self.dy_max.is_some_and(|d| d > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlCommand {
    pub v: VoltageVector,
    pub predicted: ShapeCurve,
    pub loss: f64,
    /// Rear-end world position, m, for roof commands.
    pub x0: Option<f64>,
    pub dy_max: Option<f64>,
    pub dy_min: Option<f64>,
    /// Set when the command is a fallback rather than an optimized result.
    pub warning: Option<String>,
}

/// One JSON-lines record of a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub x0_cm: Option<f64>,
    pub v_volts: Vec<f64>,
    pub loss: f64,
    pub dy_max_cm: Option<f64>,
    pub dy_min_cm: Option<f64>,
    pub peak_cm: f64,
}

impl ControlCommand {
    pub fn record(&self) -> CommandRecord {
        CommandRecord {
            x0_cm: self.x0.map(|x| x * 100.0),
            v_volts: self.v.0.clone(),
            loss: self.loss,
            dy_max_cm: self.dy_max,
            dy_min_cm: self.dy_min,
            peak_cm: self.predicted.peak() * 100.0,
        }
    }

    pub fn write_json_line<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &self.record())?;
        writeln!(w)?;
        Ok(())
    }
}

fn trapezoid(x: &[f64], f: &[f64]) -> f64 {
    x.windows(2)
        .zip(f.windows(2))
        .map(|(x, f)| 0.5 * (x[1] - x[0]) * (f[0] + f[1]))
        .sum()
}

/// `integral (y_hat - y_target)^2 dx` over the body, cm³.
pub fn shape_loss<M: ShapePredictor + ?Sized>(
    v: &VoltageVector,
    target: &TargetShape,
    model: &M,
) -> Result<f64> {
    let predicted = model.predict(v)?;
    shape_loss_of(&predicted, target)
}

fn shape_loss_of(predicted: &ShapeCurve, target: &TargetShape) -> Result<f64> {
    predicted.same_grid(&target.0)?;
    let x_cm: Vec<f64> = predicted.x.iter().map(|x| x * 100.0).collect();
    let sq: Vec<f64> = predicted
        .y
        .iter()
        .zip(&target.0.y)
        .map(|(a, b)| ((a - b) * 100.0).powi(2))
        .collect();
    Ok(trapezoid(&x_cm, &sq))
}

/// Roof loss of a predicted shape with its rear end at world `x0`.
///
/// Only footprint samples under the roof count; with no overlap at all the
/// loss is zero and both diagnostics are `None`.
pub fn roof_loss_of(
    shape: &ShapeCurve,
    line: &SafetyLine,
    x0: f64,
    cfg: &RoofLossConfig,
) -> RoofEvaluation {
    let length = shape.length();
    let mut dy_max = f64::NEG_INFINITY;
    let mut gap_min = f64::INFINITY;
    for i in 0..cfg.samples {
        let s = length * i as f64 / (cfg.samples - 1) as f64;
        let safe = line.height_or_open(x0 + s);
        if !safe.is_finite() {
            continue;
        }
        let dy = (shape.interpolate(s) - safe) * 100.0;
        dy_max = dy_max.max(dy);
        gap_min = gap_min.min(dy.abs());
    }
    if !dy_max.is_finite() {
        return RoofEvaluation {
            loss: 0.0,
            dy_max: None,
            dy_min: None,
        };
    }
    let loss = if dy_max > 0.0 {
        dy_max + cfg.penalty
    } else {
        gap_min
    };
    RoofEvaluation {
        loss,
        dy_max: Some(dy_max),
        dy_min: Some(gap_min),
    }
}

pub fn roof_loss<M: ShapePredictor + ?Sized>(
    v: &VoltageVector,
    line: &SafetyLine,
    x0: f64,
    model: &M,
    cfg: &RoofLossConfig,
) -> Result<RoofEvaluation> {
    Ok(roof_loss_of(&model.predict(v)?, line, x0, cfg))
}

/// Voltages whose predicted shape best matches `target`.
pub fn solve_target_shape<M: ShapePredictor + ?Sized, D: SearchSpace + ?Sized>(
    target: &TargetShape,
    model: &M,
    domain: &D,
    settings: &BoSettings,
) -> Result<ControlCommand> {
    solve_target_shape_from(target, model, domain, settings, &[])
}

/// [`solve_target_shape`] seeded with previously good voltages.
pub fn solve_target_shape_from<M: ShapePredictor + ?Sized, D: SearchSpace + ?Sized>(
    target: &TargetShape,
    model: &M,
    domain: &D,
    settings: &BoSettings,
    warm: &[VoltageVector],
) -> Result<ControlCommand> {
    let result = minimize_from(|v| shape_loss(v, target, model), domain, settings, warm)?;
    let predicted = model.predict(&result.best_v)?;
    Ok(ControlCommand {
        v: result.best_v,
        predicted,
        loss: result.best_loss,
        x0: None,
        dy_max: None,
        dy_min: None,
        warning: None,
    })
}

/// Voltages that bring the body as close to the safety line as possible
/// without crossing it. Falls back to zero voltage with a warning when no
/// evaluated candidate is collision-free.
pub fn solve_roof_shape<M: ShapePredictor + ?Sized, D: SearchSpace + ?Sized>(
    line: &SafetyLine,
    x0: f64,
    model: &M,
    domain: &D,
    settings: &BoSettings,
    cfg: &RoofLossConfig,
) -> Result<ControlCommand> {
    cfg.validate()?;
    let settings = BoSettings {
        warping: cfg.warping,
        ..settings.clone()
    };
    let result = minimize(
        |v| Ok(roof_loss(v, line, x0, model, cfg)?.loss),
        domain,
        &settings,
    )?;
    let predicted = model.predict(&result.best_v)?;
    let eval = roof_loss_of(&predicted, line, x0, cfg);
    if !eval.violates() {
        return Ok(ControlCommand {
            v: result.best_v,
            predicted,
            loss: eval.loss,
            x0: Some(x0),
            dy_max: eval.dy_max,
            dy_min: eval.dy_min,
            warning: None,
        });
    }
    let v = VoltageVector::zeros(domain.n_actuators());
    let predicted = model.predict(&v)?;
    let eval = roof_loss_of(&predicted, line, x0, cfg);
    Ok(ControlCommand {
        v,
        predicted,
        loss: eval.loss,
        x0: Some(x0),
        dy_max: eval.dy_max,
        dy_min: eval.dy_min,
        warning: Some(format!(
            "no collision-free candidate among {} evaluations",
            result.history.len()
        )),
    })
}

/// Mean squared error of a command's predicted shape against a target, cm².
pub fn command_mse(cmd: &ControlCommand, target: &TargetShape) -> Result<f64> {
    shape_mse(&cmd.predicted, &target.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::CorrectedModel;
    use crate::model::RobotParams;
    use crate::optimizer::BoxDomain;
    use crate::roofs::RoofProfile;

    fn grid() -> Vec<f64> {
        RobotParams::default().grid()
    }

    fn flat_at(h: f64) -> ShapeCurve {
        let x = grid();
        let n = x.len();
        ShapeCurve::new(x, vec![h; n]).unwrap()
    }

    fn constant_line(roof: f64, margin: f64) -> SafetyLine {
        SafetyLine::new(RoofProfile::slanted(roof, roof, -1.0, 2.0).unwrap(), margin).unwrap()
    }

    #[test]
    fn shape_loss_cases() {
        let t = TargetShape(flat_at(0.0));
        assert_eq!(shape_loss_of(&flat_at(0.0), &t).unwrap(), 0.0);
        let l = shape_loss_of(&flat_at(0.001), &t).unwrap();
        assert!((l - 0.5).abs() < 1e-12, "{l}");
    }

    #[test]
    fn shape_loss_is_length_times_mse() {
        let x = grid();
        let a = ShapeCurve::new(
            x.clone(),
            x.iter().map(|x| 0.01 * (6.0 * x).sin().abs()).collect(),
        )
        .unwrap();
        let b = ShapeCurve::new(x.clone(), x.iter().map(|x| 0.004 * x).collect()).unwrap();
        let l = shape_loss_of(&a, &TargetShape(b.clone())).unwrap();
        let m = 50.0 * shape_mse(&a, &b).unwrap();
        assert!((l - m).abs() <= 0.01 * m, "{l} vs {m}");
    }

    #[test]
    fn roof_loss_three_cases() {
        let cfg = RoofLossConfig::default();
        let line = constant_line(0.015, 0.0);
        let below = roof_loss_of(&flat_at(0.010), &line, 0.0, &cfg);
        assert!((below.loss - 0.5).abs() < 1e-9);
        let mut over = flat_at(0.010);
        over.y[100] = 0.017;
        let e = roof_loss_of(&over, &line, 0.0, &cfg);
        assert!((e.loss - (0.2 + 1000.0)).abs() < 1e-9);
        assert!(e.violates());
        let mut touch = flat_at(0.010);
        touch.y[100] = 0.015;
        assert_eq!(roof_loss_of(&touch, &line, 0.0, &cfg).loss, 0.0);
    }

    #[test]
    fn roof_loss_ignores_open_sky() {
        let cfg = RoofLossConfig::default();
        let line =
            SafetyLine::new(RoofProfile::slanted(0.015, 0.015, 0.3, 0.4).unwrap(), 0.0).unwrap();
        let mut s = flat_at(0.0);
        s.y[0] = 0.5;
        let e = roof_loss_of(&s, &line, 0.0, &cfg);
        assert_eq!(e.dy_max, Some(-1.5));
        let away = roof_loss_of(&s, &line, 5.0, &cfg);
        assert_eq!(
            away,
            RoofEvaluation {
                loss: 0.0,
                dy_max: None,
                dy_min: None
            }
        );
    }

    #[test]
    fn infeasible_margin_falls_back_to_flat() {
        let p = RobotParams {
            grid_nodes: 101,
            ..RobotParams::default()
        };
        let model = CorrectedModel::new(p);
        // Tips alone rise above this line for any pad voltage in the box.
        let line = constant_line(0.0002, 0.0001);
        let domain = BoxDomain::new(
            vec![300.0, 0.0, -1500.0, 0.0, 300.0],
            vec![500.0, 500.0, 0.0, 500.0, 500.0],
            true,
        )
        .unwrap();
        let settings = BoSettings {
            budget: 15,
            ..BoSettings::with_seed(1)
        };
        let cmd = solve_roof_shape(
            &line,
            0.0,
            &model,
            &domain,
            &settings,
            &RoofLossConfig::default(),
        )
        .unwrap();
        assert!(cmd.warning.is_some());
        assert_eq!(cmd.v, VoltageVector::zeros(5));
        assert!(cmd.predicted.y.iter().all(|y| *y == 0.0));
    }

    #[test]
    fn json_line_record() {
        let cmd = ControlCommand {
            v: VoltageVector::from([300.0, 1.0, 2.0, 1.0, 300.0]),
            predicted: flat_at(0.01),
            loss: 0.04,
            x0: Some(0.25),
            dy_max: Some(-0.04),
            dy_min: Some(0.04),
            warning: None,
        };
        let mut buf = Vec::new();
        cmd.write_json_line(&mut buf).unwrap();
        let back: CommandRecord = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back.x0_cm, Some(25.0));
        assert!((back.peak_cm - 1.0).abs() < 1e-12);
        assert!(buf.ends_with(b"\n"));
    }
}
