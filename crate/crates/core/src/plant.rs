//! Simulated robot and camera: the physics model with perturbed stiffness and
//! gain, an additive linear shape deviation, and Gaussian sensor noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::calibration::ShapePredictor;
use crate::error::{Error, Result};
use crate::model::{solve_shape, RobotParams, ShapeCurve, VoltageVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    pub base: RobotParams,
    /// `beta[node][actuator]`, cm/V; empty means no deviation.
    pub beta: Vec<Vec<f64>>,
    pub stiffness_scale: f64,
    pub gain_scale: f64,
    /// Sensor noise standard deviation, cm.
    pub noise_std: f64,
    pub seed: u64,
    /// Floor present (always true for the real robot).
    pub ground: bool,
}

impl PlantParams {
    /// Plant identical to the model, noise-free.
    pub fn ideal(base: RobotParams) -> Self {
        Self {
            base,
            beta: Vec::new(),
            stiffness_scale: 1.0,
            gain_scale: 1.0,
            noise_std: 0.0,
            seed: 0,
            ground: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if !(self.stiffness_scale > 0.0 && self.gain_scale > 0.0) {
            return Err(Error::InvalidParams("plant scales must be positive".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::InvalidParams(
                "sensor noise must be non-negative".into(),
            ));
        }
        if !self.beta.is_empty()
            && (self.beta.len() != self.base.grid_nodes
                || self.beta.iter().any(|b| b.len() != self.base.n_actuators))
        {
            return Err(Error::InvalidParams(format!(
                "deviation table must be {} x {}",
                self.base.grid_nodes, self.base.n_actuators
            )));
        }
        Ok(())
    }

    /// Physical parameters after stiffness and gain scaling.
    pub fn physical(&self) -> RobotParams {
        RobotParams {
            bending_stiffness: self.base.bending_stiffness * self.stiffness_scale,
            moment_per_volt: self.base.moment_per_volt * self.gain_scale,
            ..self.base.clone()
        }
    }
}

/// Seeded smooth deviation field: each actuator's coefficient profile is a
/// sum of three low sine modes with random amplitudes and phases, scaled so
/// its largest magnitude is `amplitude` cm/V.
pub fn smooth_deviation(params: &RobotParams, amplitude: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = params.grid();
    let n = params.n_actuators;
    let mut beta = vec![vec![0.0; n]; grid.len()];
    for k in 0..n {
        let modes: Vec<(f64, f64)> = (1..=3)
            .map(|m| {
                (
                    rng.random_range(-1.0..1.0) / m as f64,
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        let profile: Vec<f64> = grid
            .iter()
            .map(|x| {
                modes
                    .iter()
                    .enumerate()
                    .map(|(m, (a, ph))| {
                        a * ((m + 1) as f64 * std::f64::consts::PI * x / params.length + ph).sin()
                    })
                    .sum()
            })
            .collect();
        let peak = profile
            .iter()
            .fold(0.0f64, |a, b| a.max(b.abs()))
            .max(f64::MIN_POSITIVE);
        for (row, p) in beta.iter_mut().zip(profile) {
            row[k] = amplitude * p / peak;
        }
    }
    beta
}

/// Seeded gain-like deviation: actuator `k` acts as if its gain were off by
/// a fraction `eps_k`, linearized about the `operating` postures. Column `k`
/// is `eps_k` times the floor-contact sensitivity of the shape to `V_k`,
/// averaged over the postures. `|eps_k|` is drawn from
/// `[amplitude / 2, amplitude]` with random sign. Coefficients in cm/V.
pub fn actuator_deviation(
    params: &RobotParams,
    amplitude: f64,
    seed: u64,
    operating: &[VoltageVector],
) -> Result<Vec<Vec<f64>>> {
    const STEP: f64 = 10.0;
    if operating.is_empty() {
        return Err(Error::InvalidParams(
            "gain deviation needs at least one operating posture".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.n_actuators;
    let mut beta = vec![vec![0.0; n]; params.grid_nodes];
    for k in 0..n {
        let eps = rng.random_range(0.5..=1.0) * amplitude;
        let eps = if rng.random::<bool>() { eps } else { -eps };
        for v in operating {
            let mut up = v.clone();
            let mut down = v.clone();
            up.0[k] += STEP;
            down.0[k] -= STEP;
            let hi = solve_shape(params, &up, true)?.shape.y;
            let lo = solve_shape(params, &down, true)?.shape.y;
            let w = eps * 100.0 / (2.0 * STEP * operating.len() as f64);
            for ((row, h), l) in beta.iter_mut().zip(hi).zip(lo) {
                row[k] += w * (h - l);
            }
        }
    }
    Ok(beta)
}

/// Rescale `beta` so the mean over `voltages` of the node-mean `(beta'V)^2`
/// equals `target_mse` cm².
pub fn scale_deviation_to_mse(beta: &mut [Vec<f64>], voltages: &[VoltageVector], target_mse: f64) {
    let mut total = 0.0;
    for v in voltages {
        let mean: f64 = beta
            .iter()
            .map(|b| {
                let d: f64 = b.iter().zip(&v.0).map(|(b, v)| b * v).sum();
                d * d
            })
            .sum::<f64>()
            / beta.len() as f64;
        total += mean;
    }
    let current = total / voltages.len().max(1) as f64;
    if current > 0.0 {
        let s = (target_mse / current).sqrt();
        beta.iter_mut().flatten().for_each(|b| *b *= s);
    }
}

/// A sensed shape and where the robot is.
#[derive(Debug, Clone, PartialEq)]
pub struct SensedShape {
    pub shape: ShapeCurve,
    pub x0: f64,
}

#[derive(Debug, Clone)]
pub struct Plant {
    params: PlantParams,
    draws: u64,
}

impl Plant {
    pub fn new(params: PlantParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, draws: 0 })
    }

    pub fn params(&self) -> &PlantParams {
        &self.params
    }

    /// Noise draws consumed so far.
    pub fn draw_counter(&self) -> u64 {
        self.draws
    }

    /// True (noise-free) shape for `v`.
    pub fn plant_shape(&self, v: &VoltageVector) -> Result<ShapeCurve> {
        let physical = self.params.physical();
        let physical = if self.params.ground {
            physical
        } else {
            physical.weightless()
        };
        let shape = solve_shape(&physical, v, self.params.ground)?.shape;
        if self.params.beta.is_empty() {
            return Ok(shape);
        }
        let dy: Vec<f64> = self
            .params
            .beta
            .iter()
            .map(|b| b.iter().zip(&v.0).map(|(b, v)| b * v).sum::<f64>() / 100.0)
            .collect();
        shape.offset_by(&dy)
    }

    /// Shape as the camera would report it for draw number `counter`.
    pub fn sense_at(&self, v: &VoltageVector, x0: f64, counter: u64) -> Result<SensedShape> {
        let mut shape = self.plant_shape(v)?;
        if self.params.noise_std > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.params.seed);
            rng.set_stream(counter);
            let normal = Normal::new(0.0, self.params.noise_std / 100.0)
                .map_err(|e| Error::InvalidParams(e.to_string()))?;
            for y in &mut shape.y {
                *y += normal.sample(&mut rng);
            }
        }
        Ok(SensedShape { shape, x0 })
    }

    /// Sense and advance the draw counter.
    pub fn sense(&mut self, v: &VoltageVector, x0: f64) -> Result<SensedShape> {
        let out = self.sense_at(v, x0, self.draws)?;
        self.draws += 1;
        Ok(out)
    }
}

impl ShapePredictor for Plant {
    fn params(&self) -> &RobotParams {
        &self.params.base
    }

    fn predict(&self, v: &VoltageVector) -> Result<ShapeCurve> {
        self.plant_shape(v)
    }
}
