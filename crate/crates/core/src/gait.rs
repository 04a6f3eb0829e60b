//! Four-phase inchworm cycle and the stride it produces.
//!
//! Lift phases only swap which end is anchored; the body moves forward by
//! the difference in chord shortening between the bent and straight
//! postures.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::calibration::ShapePredictor;
use crate::controller::ControlCommand;
use crate::error::{Error, Result};
use crate::model::{chord_shortening, ShapeCurve, VoltageVector};
use crate::optimizer::SearchSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchoredEnd {
    Front,
    Rear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Posture {
    Straight,
    Bent,
    RearLift,
    FrontLift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaitPhase {
    pub index: u8,
    pub anchored: AnchoredEnd,
    pub posture: Posture,
}

impl GaitPhase {
    /// The four phases in execution order.
    pub const CYCLE: [GaitPhase; 4] = [
        GaitPhase {
            index: 1,
            anchored: AnchoredEnd::Front,
            posture: Posture::RearLift,
        },
        GaitPhase {
            index: 2,
            anchored: AnchoredEnd::Front,
            posture: Posture::Bent,
        },
        GaitPhase {
            index: 3,
            anchored: AnchoredEnd::Rear,
            posture: Posture::FrontLift,
        },
        GaitPhase {
            index: 4,
            anchored: AnchoredEnd::Rear,
            posture: Posture::Straight,
        },
    ];

    pub fn next(self) -> GaitPhase {
        Self::CYCLE[self.index as usize % 4]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleResult {
    /// Forward displacement, m.
    pub stride: f64,
    /// Rear-end world position after the cycle, m.
    pub x0: f64,
    pub bent: ShapeCurve,
    pub straight: ShapeCurve,
}

/// Forward displacement of one cycle, m, never negative.
pub fn stride_per_cycle(bent: &ShapeCurve, straight: &ShapeCurve) -> f64 {
    (chord_shortening(bent) - chord_shortening(straight)).max(0.0)
}

fn reject_violation(cmd: &ControlCommand) -> Result<()> {
    match cmd.dy_max {
        Some(d) if d > 0.0 => Err(Error::Violation { excess_cm: d }),
        _ => Ok(()),
    }
}

/// Run one cycle from rear-end position `x0`.
pub fn advance_cycle(
    x0: f64,
    bent: &ControlCommand,
    straight: &ControlCommand,
) -> Result<CycleResult> {
    reject_violation(bent)?;
    reject_violation(straight)?;
    let stride = stride_per_cycle(&bent.predicted, &straight.predicted);
    Ok(CycleResult {
        stride,
        x0: x0 + stride,
        bent: bent.predicted.clone(),
        straight: straight.predicted.clone(),
    })
}

/// One-parameter posture family `(p, r*s, s, r*s, p)` used for crawling and
/// for the speed-height map; `s` is the middle voltage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaitFamily {
    pub pad_voltage: f64,
    pub flank_ratio: f64,
    /// Most negative middle voltage allowed.
    pub middle_min: f64,
}

impl Default for GaitFamily {
    fn default() -> Self {
        Self {
            pad_voltage: 300.0,
            flank_ratio: -0.2,
            middle_min: -1500.0,
        }
    }
}

impl GaitFamily {
    pub fn voltages(&self, n: usize, middle: f64) -> VoltageVector {
        let mut v = vec![self.flank_ratio * middle; n];
        v[0] = self.pad_voltage;
        v[n - 1] = self.pad_voltage;
        v[n / 2] = middle;
        VoltageVector(v)
    }

    /// Pads kept, everything else at zero.
    pub fn straight(&self, n: usize) -> VoltageVector {
        self.voltages(n, 0.0)
    }
}

/// The family as a one-dimensional search space over the middle voltage.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilySpace {
    pub family: GaitFamily,
    pub n_actuators: usize,
}

impl SearchSpace for FamilySpace {
    fn validate(&self) -> Result<()> {
        let f = &self.family;
        if self.n_actuators < 3 || self.n_actuators.is_multiple_of(2) {
            return Err(Error::InvalidDomain(
                "posture family needs an odd actuator count >= 3".into(),
            ));
        }
        if !(f.middle_min < 0.0
            && f.middle_min.is_finite()
            && f.pad_voltage.is_finite()
            && f.flank_ratio.is_finite())
        {
            return Err(Error::InvalidDomain(
                "posture family needs a finite negative middle_min".into(),
            ));
        }
        Ok(())
    }

    fn n_actuators(&self) -> usize {
        self.n_actuators
    }

    fn dim(&self) -> usize {
        1
    }

    fn expand(&self, unit: &[f64]) -> VoltageVector {
        let u = unit[0].clamp(0.0, 1.0);
        self.family
            .voltages(self.n_actuators, self.family.middle_min * u)
    }

    fn to_unit(&self, v: &VoltageVector) -> Vec<f64> {
        vec![(v.0[self.n_actuators / 2] / self.family.middle_min).clamp(0.0, 1.0)]
    }
}

/// Height of the body centre above the floor, m.
pub fn center_height(shape: &ShapeCurve) -> f64 {
    shape.interpolate(0.5 * shape.length())
}

/// Middle voltage of `family` that lifts the centre to `height`, by bisection.
pub fn middle_voltage_for_height<M: ShapePredictor + ?Sized>(
    model: &M,
    family: &GaitFamily,
    height: f64,
) -> Result<f64> {
    let n = model.params().n_actuators;
    let h = |s: f64| -> Result<f64> { Ok(center_height(&model.predict(&family.voltages(n, s))?)) };
    if height <= h(0.0)? {
        return Ok(0.0);
    }
    let reach = h(family.middle_min)?;
    if height > reach {
        return Err(Error::Unreachable {
            height_cm: height * 100.0,
        });
    }
    let (mut lo, mut hi) = (family.middle_min, 0.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if h(mid)? >= height {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-6 {
            break;
        }
    }
    Ok(lo)
}

/// Stride against centre height over `heights` (m); rows are `(height, stride)`.
pub fn speed_vs_height_curve<M: ShapePredictor + ?Sized>(
    model: &M,
    family: &GaitFamily,
    heights: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if heights.is_empty() {
        return Err(Error::InvalidParams("height grid is empty".into()));
    }
    let n = model.params().n_actuators;
    let straight = model.predict(&family.straight(n))?;
    heights
        .iter()
        .map(|&h| {
            let s = middle_voltage_for_height(model, family, h)?;
            let bent = model.predict(&family.voltages(n, s))?;
            Ok((h, stride_per_cycle(&bent, &straight)))
        })
        .collect()
}

/// Least-squares `stride = k h^2` through the origin; returns `(k, r_squared)`.
pub fn quadratic_fit(table: &[(f64, f64)]) -> (f64, f64) {
    let num: f64 = table.iter().map(|(h, s)| h * h * s).sum();
    let den: f64 = table.iter().map(|(h, _)| h.powi(4)).sum();
    let k = if den > 0.0 { num / den } else { 0.0 };
    let mean = table.iter().map(|(_, s)| s).sum::<f64>() / table.len().max(1) as f64;
    let ss_res: f64 = table.iter().map(|(h, s)| (s - k * h * h).powi(2)).sum();
    let ss_tot: f64 = table.iter().map(|(_, s)| (s - mean).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    (k, r2)
}

/// Write a `(height, stride)` table as `height_cm,stride_cm`.
pub fn write_speed_csv<W: Write>(table: &[(f64, f64)], mut w: W) -> Result<()> {
    writeln!(w, "height_cm,stride_cm")?;
    for (h, s) in table {
        writeln!(w, "{},{}", h * 100.0, s * 100.0)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::CorrectedModel;
    use crate::model::RobotParams;

    fn parabola(h: f64) -> ShapeCurve {
        let x = RobotParams::default().grid();
        let y = x.iter().map(|x| 4.0 * h * x * (0.5 - x) / 0.25).collect();
        ShapeCurve::new(x, y).unwrap()
    }

    fn command(shape: ShapeCurve, dy_max: Option<f64>) -> ControlCommand {
        ControlCommand {
            v: VoltageVector::zeros(5),
            predicted: shape,
            loss: 0.0,
            x0: None,
            dy_max,
            dy_min: None,
            warning: None,
        }
    }

    #[test]
    fn phase_order() {
        let mut p = GaitPhase::CYCLE[0];
        let mut seen = vec![p.posture];
        for _ in 0..4 {
            p = p.next();
            seen.push(p.posture);
        }
        assert_eq!(
            seen,
            [
                Posture::RearLift,
                Posture::Bent,
                Posture::FrontLift,
                Posture::Straight,
                Posture::RearLift
            ]
        );
    }

    #[test]
    fn stride_of_parabolic_arch() {
        let flat = parabola(0.0);
        assert_eq!(stride_per_cycle(&flat, &flat), 0.0);
        let s = stride_per_cycle(&parabola(0.0135), &flat);
        assert!((s - 9.72e-4).abs() < 0.01 * 9.72e-4, "{s}");
        assert_eq!(stride_per_cycle(&flat, &parabola(0.01)), 0.0);
    }

    #[test]
    fn advance_adds_stride_and_rejects_violations() {
        let bent = command(parabola(0.0135), Some(-0.04));
        let straight = command(parabola(0.0), Some(-1.0));
        let r = advance_cycle(0.1, &bent, &straight).unwrap();
        assert!((r.x0 - 0.1 - r.stride).abs() < 1e-15);
        let same = advance_cycle(0.1, &straight, &straight).unwrap();
        assert_eq!(same.x0, 0.1);
        let bad = command(parabola(0.0135), Some(0.01));
        assert!(matches!(
            advance_cycle(0.1, &bad, &straight),
            Err(Error::Violation { .. })
        ));
    }

    #[test]
    fn family_layout() {
        let f = GaitFamily::default();
        assert_eq!(
            f.voltages(5, -1000.0).0,
            vec![300.0, 200.0, -1000.0, 200.0, 300.0]
        );
        assert_eq!(f.straight(5).0, vec![300.0, 0.0, 0.0, 0.0, 300.0]);
    }

    #[test]
    fn height_zero_gives_zero_stride_and_unreachable_errors() {
        let model = CorrectedModel::new(RobotParams {
            grid_nodes: 101,
            ..RobotParams::default()
        });
        let f = GaitFamily::default();
        let t = speed_vs_height_curve(&model, &f, &[0.0]).unwrap();
        assert_eq!(t, vec![(0.0, 0.0)]);
        assert!(matches!(
            speed_vs_height_curve(&model, &f, &[0.2]),
            Err(Error::Unreachable { .. })
        ));
        assert!(speed_vs_height_curve(&model, &f, &[]).is_err());
    }

    #[test]
    fn bisection_hits_height() {
        let model = CorrectedModel::new(RobotParams {
            grid_nodes: 101,
            ..RobotParams::default()
        });
        let f = GaitFamily::default();
        let s = middle_voltage_for_height(&model, &f, 0.01).unwrap();
        let h = center_height(&model.predict(&f.voltages(5, s)).unwrap());
        assert!((h - 0.01).abs() < 1e-7, "{h}");
    }

    #[test]
    fn quadratic_fit_exact() {
        let t: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 3.0 * (i * i) as f64)).collect();
        let (k, r2) = quadratic_fit(&t);
        assert!((k - 3.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }
}
