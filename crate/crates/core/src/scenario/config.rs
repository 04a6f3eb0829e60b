//! Scenario configuration as read from JSON. Lengths are in cm and voltages
//! in volts; everything is converted to SI before it reaches the library.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::RoofLossConfig;
use crate::error::{Error, Result};
use crate::gait::GaitFamily;
use crate::model::{RobotParams, VoltageVector};
use crate::optimizer::{BoSettings, BoxDomain, OutputWarping};
use crate::roofs::{RoofProfile, SafetyLine};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub robot: RobotSection,
    pub plant: PlantSection,
    pub optimizer: OptimizerSection,
    pub calibration: CalibrationSection,
    pub shape_control: ShapeControlSection,
    pub roof: Option<RoofSection>,
    pub roof_loss: RoofLossConfig,
    pub gait: GaitFamily,
    pub run: RunSection,
    pub speed_map: SpeedMapSection,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_json(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Override every seed in the scenario.
    pub fn set_seed(&mut self, seed: u64) {
        self.optimizer.seed = seed;
        self.plant.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        let params = self.robot.params();
        params.validate()?;
        self.domain()?;
        check_budget(&self.bo_settings())?;
        self.roof_loss.validate()?;
        if !(self.plant.noise_std_cm >= 0.0) {
            return Err(Error::Config("plant.noise_std_cm must be >= 0".into()));
        }
        let n = params.n_actuators;
        let check = |what: &str, vs: &[Vec<f64>]| match vs.iter().find(|v| v.len() != n) {
            Some(v) => Err(Error::Config(format!(
                "{what}: expected {n} voltages, got {}",
                v.len()
            ))),
            None => Ok(()),
        };
        check("calibration.references", &self.calibration.references)?;
        check("shape_control.targets", &self.shape_control.targets)?;
        if let Some(roof) = &self.roof {
            roof.safety_line()?;
        }
        if self.run.max_cycles == 0 {
            return Err(Error::Config("run.max_cycles must be positive".into()));
        }
        if !(self.speed_map.position_step_cm > 0.0) {
            return Err(Error::Config(
                "speed_map.position_step_cm must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn params(&self) -> RobotParams {
        self.robot.params()
    }

    pub fn domain(&self) -> Result<BoxDomain> {
        let o = &self.optimizer;
        BoxDomain::uniform(
            self.robot.n_actuators,
            o.lower_v,
            o.upper_v,
            o.symmetric_mode,
        )
        .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn bo_settings(&self) -> BoSettings {
        let o = &self.optimizer;
        BoSettings {
            budget: o.budget,
            init_samples: o.init_samples,
            candidates: o.candidates,
            refine_starts: o.refine_starts,
            warping: o.warping,
            trust_region: o.trust_region,
            seed: o.seed,
            ..BoSettings::default()
        }
    }

    pub fn target_voltages(&self) -> Vec<VoltageVector> {
        to_voltages(&self.shape_control.targets)
    }

    pub fn reference_voltages(&self) -> Vec<VoltageVector> {
        to_voltages(&self.calibration.references)
    }

    /// Stop position for crawls: the configured one, or where the footprint
    /// reaches the far end of the roof.
    pub fn end_x0(&self, line: &SafetyLine) -> f64 {
        match self.run.end_x0_cm {
            Some(x) => x / 100.0,
            None => line.roof.domain().1 - self.params().length,
        }
    }
}

/// Leaves room for one warm start on top of the space-filling design.
fn check_budget(s: &BoSettings) -> Result<()> {
    if s.init_samples == 0 || s.budget <= s.init_samples {
        return Err(Error::Config(format!(
            "optimizer.budget {} must exceed init_samples {} (> 0)",
            s.budget, s.init_samples
        )));
    }
    Ok(())
}

fn to_voltages(rows: &[Vec<f64>]) -> Vec<VoltageVector> {
    rows.iter().cloned().map(VoltageVector).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotSection {
    pub length_cm: f64,
    pub width_cm: f64,
    pub n_actuators: usize,
    pub actuator_span_cm: f64,
    /// N·m².
    pub bending_stiffness: f64,
    /// N/m.
    pub weight_per_length: f64,
    /// N·m/V.
    pub moment_per_volt: f64,
    pub pad_span_cm: f64,
    pub grid_nodes: usize,
}

impl Default for RobotSection {
    fn default() -> Self {
        let p = RobotParams::default();
        Self {
            length_cm: p.length * 100.0,
            width_cm: p.width * 100.0,
            n_actuators: p.n_actuators,
            actuator_span_cm: p.actuator_span * 100.0,
            bending_stiffness: p.bending_stiffness,
            weight_per_length: p.weight_per_length,
            moment_per_volt: p.moment_per_volt,
            pad_span_cm: p.pad_span * 100.0,
            grid_nodes: p.grid_nodes,
        }
    }
}

impl RobotSection {
    pub fn params(&self) -> RobotParams {
        RobotParams {
            length: self.length_cm / 100.0,
            width: self.width_cm / 100.0,
            n_actuators: self.n_actuators,
            actuator_span: self.actuator_span_cm / 100.0,
            bending_stiffness: self.bending_stiffness,
            weight_per_length: self.weight_per_length,
            moment_per_volt: self.moment_per_volt,
            pad_span: self.pad_span_cm / 100.0,
            grid_nodes: self.grid_nodes,
        }
    }
}

/// Shape of the plant's linear deviation `beta(x)' V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DeviationSpec {
    None,
    /// Per-actuator gain error (fraction) linearized about the shape-control
    /// targets.
    Gain {
        amplitude: f64,
        seed: u64,
    },
    /// Random smooth profiles, peak coefficient in cm/V.
    Smooth {
        amplitude_cm_per_v: f64,
        seed: u64,
    },
    /// `x_cm,a1..aN` table as written by `calibrate`.
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantSection {
    pub deviation: DeviationSpec,
    /// Rescale the deviation so uncalibrated control of the targets misses
    /// them by this mean MSE, cm².
    pub pre_mse_cm2: Option<f64>,
    pub stiffness_scale: f64,
    pub gain_scale: f64,
    pub noise_std_cm: f64,
    pub seed: u64,
}

impl Default for PlantSection {
    fn default() -> Self {
        Self {
            deviation: DeviationSpec::None,
            pre_mse_cm2: None,
            stiffness_scale: 1.0,
            gain_scale: 1.0,
            noise_std_cm: 0.02,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub lower_v: f64,
    pub upper_v: f64,
    pub symmetric_mode: bool,
    pub budget: usize,
    pub init_samples: usize,
    pub candidates: usize,
    pub refine_starts: usize,
    /// Defaults to `log`: the tracking loss spans several decades.
    pub warping: OutputWarping,
    pub trust_region: bool,
    pub seed: u64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let s = BoSettings::default();
        Self {
            lower_v: -1500.0,
            upper_v: 500.0,
            symmetric_mode: false,
            budget: s.budget,
            init_samples: s.init_samples,
            candidates: s.candidates,
            refine_starts: s.refine_starts,
            warping: OutputWarping::Log,
            trust_region: s.trust_region,
            seed: s.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    /// LMS step; `None` uses `0.5 / max |V|^2` over the references.
    pub learning_rate: Option<f64>,
    pub epochs: usize,
    /// Camera frames taken per reference posture.
    pub repeats: usize,
    pub references: Vec<Vec<f64>>,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        let n = RobotParams::default().n_actuators;
        let references = (0..n)
            .map(|k| {
                let mut v = vec![0.0; n];
                v[k] = -1500.0;
                v
            })
            .collect();
        Self {
            learning_rate: None,
            epochs: 200,
            repeats: 4,
            references,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapeControlSection {
    /// Targets are the model shapes at these voltages unless a target file is
    /// given.
    pub targets: Vec<Vec<f64>>,
    /// Seed the calibrated solve with the uncalibrated command.
    pub warm_start: bool,
}

impl Default for ShapeControlSection {
    fn default() -> Self {
        Self {
            targets: default_phase_targets(),
            warm_start: true,
        }
    }
}

/// Rear lift, full arch, front lift, flat with lifted pads, half arch.
pub fn default_phase_targets() -> Vec<Vec<f64>> {
    vec![
        vec![400.0, 0.0, 0.0, 0.0, 0.0],
        vec![250.0, 200.0, -1000.0, 200.0, 250.0],
        vec![0.0, 0.0, 0.0, 0.0, 400.0],
        vec![250.0, 0.0, 0.0, 0.0, 250.0],
        vec![250.0, 130.0, -650.0, 130.0, 250.0],
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RoofSpec {
    Step {
        left_cm: f64,
        right_cm: f64,
        transition_cm: f64,
        start_cm: f64,
        end_cm: f64,
    },
    Slanted {
        left_cm: f64,
        right_cm: f64,
        start_cm: f64,
        end_cm: f64,
    },
    Sinusoidal {
        mean_cm: f64,
        amplitude_cm: f64,
        wavelength_cm: f64,
        #[serde(default)]
        phase_rad: f64,
        start_cm: f64,
        end_cm: f64,
    },
    /// `x_cm,height_cm` CSV.
    File { path: PathBuf },
}

impl RoofSpec {
    pub fn profile(&self) -> Result<RoofProfile> {
        let m = |cm: f64| cm / 100.0;
        match self {
            RoofSpec::Step {
                left_cm,
                right_cm,
                transition_cm,
                start_cm,
                end_cm,
            } => RoofProfile::step(
                m(*left_cm),
                m(*right_cm),
                m(*transition_cm),
                m(*start_cm),
                m(*end_cm),
            ),
            RoofSpec::Slanted {
                left_cm,
                right_cm,
                start_cm,
                end_cm,
            } => RoofProfile::slanted(m(*left_cm), m(*right_cm), m(*start_cm), m(*end_cm)),
            RoofSpec::Sinusoidal {
                mean_cm,
                amplitude_cm,
                wavelength_cm,
                phase_rad,
                start_cm,
                end_cm,
            } => RoofProfile::sinusoidal(
                m(*mean_cm),
                m(*amplitude_cm),
                m(*wavelength_cm),
                *phase_rad,
                m(*start_cm),
                m(*end_cm),
            ),
            RoofSpec::File { path } => RoofProfile::load_csv(path),
        }
    }

    /// 1.4 cm dropping to 0.9 cm at 60 cm, over [0, 120] cm.
    pub fn builtin_step() -> Self {
        RoofSpec::Step {
            left_cm: 1.4,
            right_cm: 0.9,
            transition_cm: 60.0,
            start_cm: 0.0,
            end_cm: 120.0,
        }
    }

    /// 1.5 cm falling linearly to 1.0 cm over [0, 100] cm.
    pub fn builtin_slant() -> Self {
        RoofSpec::Slanted {
            left_cm: 1.5,
            right_cm: 1.0,
            start_cm: 0.0,
            end_cm: 100.0,
        }
    }

    /// 1.2 ± 0.2 cm with a 30 cm wavelength over [0, 100] cm.
    pub fn builtin_sine() -> Self {
        RoofSpec::Sinusoidal {
            mean_cm: 1.2,
            amplitude_cm: 0.2,
            wavelength_cm: 30.0,
            phase_rad: 0.0,
            start_cm: 0.0,
            end_cm: 100.0,
        }
    }

    /// Parse a `--roof` value: `step`, `slant`, `sine` or `file:PATH`.
    pub fn from_flag(flag: &str) -> Result<Self> {
        match flag {
            "step" => Ok(Self::builtin_step()),
            "slant" => Ok(Self::builtin_slant()),
            "sine" => Ok(Self::builtin_sine()),
            _ => match flag.strip_prefix("file:") {
                Some(path) if !path.is_empty() => Ok(RoofSpec::File { path: path.into() }),
                _ => Err(Error::Config(format!(
                    "unknown roof {flag:?}; expected step, slant, sine or file:PATH"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoofSection {
    pub margin_cm: f64,
    pub profile: RoofSpec,
}

impl Default for RoofSection {
    fn default() -> Self {
        Self {
            margin_cm: 0.1,
            profile: RoofSpec::builtin_step(),
        }
    }
}

impl RoofSection {
    pub fn safety_line(&self) -> Result<SafetyLine> {
        SafetyLine::new(self.profile.profile()?, self.margin_cm / 100.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub start_x0_cm: f64,
    /// Stop crawling once the rear end passes this; `None` means when the
    /// footprint reaches the far end of the roof.
    pub end_x0_cm: Option<f64>,
    pub max_cycles: usize,
    pub out_dir: PathBuf,
    /// Write a shape snapshot every this many cycles (0 disables).
    pub snapshot_every: usize,
    /// Per-control-step wall-clock budget, ms; overruns are counted, not fatal.
    pub step_budget_ms: Option<f64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            start_x0_cm: 0.0,
            end_x0_cm: None,
            max_cycles: 5000,
            out_dir: PathBuf::from("out"),
            snapshot_every: 10,
            step_budget_ms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeedMapSection {
    pub heights_cm: Vec<f64>,
    pub position_step_cm: f64,
}

impl Default for SpeedMapSection {
    fn default() -> Self {
        Self {
            heights_cm: (0..=15).map(|i| i as f64 * 0.1).collect(),
            position_step_cm: 2.0,
        }
    }
}
