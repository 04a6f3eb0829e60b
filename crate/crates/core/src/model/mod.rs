//! Static planar shape of the robot body.
//!
//! The body is a small-deflection Euler-Bernoulli beam discretized on a
//! uniform grid. Piezoelectric actuation enters as a piecewise-constant
//! internal moment, gravity as a uniform distributed load, and the floor as a
//! unilateral constraint `y >= 0`. With the floor present the static shape is
//! the minimizer of the discrete energy
//!
//! ```text
//! U(y) = dx * sum_i [ EI/2 * (D2 y)_i^2 - M_i * (D2 y)_i ] + sum_j w * dx_j * y_j
//! ```
//!
//! over `y >= 0`; the contact pressures are the multipliers of that bound, so
//! which part of the body rests on the floor falls out of the solve rather
//! than being assumed.

mod contact;
pub(crate) mod shape;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use contact::{solve_nonnegative_qp, solve_nonnegative_qp_from, BandedQp, QpSolution};
pub use shape::{chord_shortening, shape_mse, ShapeCurve};

/// Default bending stiffness of the laminated body, N·m².
pub const DEFAULT_BENDING_STIFFNESS: f64 = 0.01;
/// Default weight per unit length, N/m.
pub const DEFAULT_WEIGHT_PER_LENGTH: f64 = 0.39;
/// Moment gain that lifts the (300, 258, -1292, 258, 300) V posture to a
/// 1.35 cm peak with the other defaults (see [`fit_moment_gain`]).
pub const DEFAULT_MOMENT_PER_VOLT: f64 = 2.8186e-5;

/// Geometry, stiffness and actuation constants of the robot body (SI units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotParams {
    pub length: f64,
    pub width: f64,
    pub n_actuators: usize,
    pub actuator_span: f64,
    pub bending_stiffness: f64,
    pub weight_per_length: f64,
    pub moment_per_volt: f64,
    pub pad_span: f64,
    pub grid_nodes: usize,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            length: 0.5,
            width: 0.02,
            n_actuators: 5,
            actuator_span: 0.1,
            bending_stiffness: DEFAULT_BENDING_STIFFNESS,
            weight_per_length: DEFAULT_WEIGHT_PER_LENGTH,
            moment_per_volt: DEFAULT_MOMENT_PER_VOLT,
            pad_span: 0.05,
            grid_nodes: 201,
        }
    }
}

impl RobotParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.length > 0.0) {
            return bad(format!("length must be positive, got {}", self.length));
        }
        if self.n_actuators == 0 {
            return bad("at least one actuator is required".into());
        }
        let cover = self.n_actuators as f64 * self.actuator_span;
        if (cover - self.length).abs() > 1e-9 * self.length {
            return bad(format!(
                "{} actuators of {} m do not cover the {} m body",
                self.n_actuators, self.actuator_span, self.length
            ));
        }
        if !(self.bending_stiffness > 0.0) {
            return bad("bending stiffness must be positive".into());
        }
        if !(self.weight_per_length >= 0.0) {
            return bad("weight per length must be non-negative".into());
        }
        if !(self.moment_per_volt > 0.0) {
            return bad("moment per volt must be positive".into());
        }
        if self.grid_nodes < 51 {
            return bad(format!(
                "need at least 51 grid nodes, got {}",
                self.grid_nodes
            ));
        }
        if !(self.pad_span >= 0.0 && self.pad_span <= self.actuator_span) {
            return bad("pad span must lie in [0, actuator span]".into());
        }
        Ok(())
    }

    /// Node spacing, m.
    pub fn dx(&self) -> f64 {
        self.length / (self.grid_nodes - 1) as f64
    }

    /// Grid node positions over `[0, length]`.
    pub fn grid(&self) -> Vec<f64> {
        let dx = self.dx();
        let last = self.grid_nodes - 1;
        (0..self.grid_nodes)
            .map(|i| {
                if i == last {
                    self.length
                } else {
                    i as f64 * dx
                }
            })
            .collect()
    }

    /// Copy with gravity removed, for free-shape solves.
    pub fn weightless(&self) -> Self {
        Self {
            weight_per_length: 0.0,
            ..self.clone()
        }
    }
}

/// Voltages applied to the actuators, ordered from the rear (x = 0) end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VoltageVector(pub Vec<f64>);

impl VoltageVector {
    pub fn new(v: impl Into<Vec<f64>>) -> Self {
        Self(v.into())
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm_squared(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn is_palindromic(&self) -> bool {
        let n = self.0.len();
        (0..n / 2).all(|i| self.0[i] == self.0[n - 1 - i])
    }

    fn check_len(&self, expected: usize) -> Result<()> {
        if self.0.len() != expected {
            return Err(Error::VoltageLength {
                expected,
                got: self.0.len(),
            });
        }
        Ok(())
    }
}

impl From<Vec<f64>> for VoltageVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl<const N: usize> From<[f64; N]> for VoltageVector {
    fn from(v: [f64; N]) -> Self {
        Self(v.to_vec())
    }
}

/// Static shape plus floor reaction.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactSolution {
    pub shape: ShapeCurve,
    /// Floor reaction per node, N/m (node force divided by `dx`).
    pub pressure: Vec<f64>,
    /// Indices of nodes resting on the floor.
    pub contact_set: Vec<usize>,
}

impl ContactSolution {
    /// Total upward reaction, N.
    pub fn total_reaction(&self, dx: f64) -> f64 {
        self.pressure.iter().sum::<f64>() * dx
    }
}

/// Internal actuation moment at each grid node, N·m.
///
/// Each actuator contributes `m_V * V_i` over its span. A node's value is the
/// average over its dual cell, so nodes sitting exactly on an actuator seam
/// take the mean of the two neighbours.
pub fn actuation_moment_profile(params: &RobotParams, v: &VoltageVector) -> Result<Vec<f64>> {
    params.validate()?;
    v.check_len(params.n_actuators)?;
    let dx = params.dx();
    let span = params.actuator_span;
    let grid = params.grid();
    let moment = |k: usize| params.moment_per_volt * v.0[k];
    let profile = grid
        .iter()
        .map(|&x| {
            let lo = (x - 0.5 * dx).max(0.0);
            let hi = (x + 0.5 * dx).min(params.length);
            let first = ((lo / span).floor() as usize).min(params.n_actuators - 1);
            let last = ((hi / span).ceil() as usize).clamp(first + 1, params.n_actuators);
            let mut acc = 0.0;
            for k in first..last {
                let a = (k as f64 * span).max(lo);
                let b = ((k + 1) as f64 * span).min(hi);
                if b > a {
                    acc += moment(k) * (b - a);
                }
            }
            acc / (hi - lo)
        })
        .collect();
    Ok(profile)
}

/// Discrete energy of a candidate profile `y` (floor constraint not applied).
pub fn discrete_energy(params: &RobotParams, v: &VoltageVector, y: &[f64]) -> Result<f64> {
    let moments = actuation_moment_profile(params, v)?;
    if y.len() != params.grid_nodes {
        return Err(Error::GridMismatch {
            left: y.len(),
            right: params.grid_nodes,
        });
    }
    let dx = params.dx();
    let ei = params.bending_stiffness;
    let n = y.len();
    let mut energy = 0.0;
    for i in 1..n - 1 {
        let curvature = (y[i - 1] - 2.0 * y[i] + y[i + 1]) / (dx * dx);
        energy += dx * (0.5 * ei * curvature * curvature - moments[i] * curvature);
    }
    for (j, yj) in y.iter().enumerate() {
        energy += params.weight_per_length * node_weight(j, n) * dx * yj;
    }
    Ok(energy)
}

/// Trapezoid weight of node `j`: 1/2 at the ends, 1 inside.
fn node_weight(j: usize, n: usize) -> f64 {
    if j == 0 || j == n - 1 {
        0.5
    } else {
        1.0
    }
}

/// Build the energy as a banded quadratic `1/2 y'Hy + g'y`.
fn energy_qp(params: &RobotParams, moments: &[f64]) -> BandedQp {
    let n = params.grid_nodes;
    let dx = params.dx();
    let k = params.bending_stiffness / (dx * dx * dx);
    let mut qp = BandedQp::zeros(n);
    let stencil = [1.0, -2.0, 1.0];
    for r in 1..n - 1 {
        for (a, sa) in stencil.iter().enumerate() {
            let i = r - 1 + a;
            qp.g[i] -= sa * moments[r] / dx;
            for (b, sb) in stencil.iter().enumerate().skip(a) {
                let j = r - 1 + b;
                qp.add(i, j, k * sa * sb);
            }
        }
    }
    for j in 0..n {
        qp.g[j] += params.weight_per_length * node_weight(j, n) * dx;
    }
    qp
}

/// Solve the static shape.
///
/// With `ground` the floor constraint is active and gravity applies. Without
/// it the body is weightless and clamped flat at the rear end
/// (`y(0) = y'(0) = 0`), which fixes the rigid-body modes; the shape is then
/// the double integral of `M / EI`.
pub fn solve_shape(
    params: &RobotParams,
    v: &VoltageVector,
    ground: bool,
) -> Result<ContactSolution> {
    let moments = actuation_moment_profile(params, v)?;
    let n = params.grid_nodes;
    let dx = params.dx();
    let x = params.grid();

    if !ground {
        if params.weight_per_length != 0.0 {
            return Err(Error::Unbounded(
                "free-shape solve requires zero weight; use RobotParams::weightless".into(),
            ));
        }
        let ei = params.bending_stiffness;
        let mut y = vec![0.0; n];
        y[1] = 0.5 * dx * dx * moments[0] / ei;
        for i in 1..n - 1 {
            y[i + 1] = 2.0 * y[i] - y[i - 1] + dx * dx * moments[i] / ei;
        }
        return Ok(ContactSolution {
            shape: ShapeCurve::new(x, y)?,
            pressure: vec![0.0; n],
            contact_set: Vec::new(),
        });
    }

    let qp = energy_qp(params, &moments);
    let guess = coarse_contact_guess(params, v)?;
    let sol = solve_nonnegative_qp_from(&qp, &guess, 20 * n)?;
    let pressure = sol.multipliers.iter().map(|l| l / dx).collect();
    Ok(ContactSolution {
        shape: ShapeCurve::new(x, sol.x)?,
        pressure,
        contact_set: sol.active,
    })
}

/// Initial working set for the floor solve: the contact set of the same
/// problem on a grid about four times coarser, mapped onto this grid. Grids
/// too small to coarsen start with every node on the floor.
fn coarse_contact_guess(params: &RobotParams, v: &VoltageVector) -> Result<Vec<bool>> {
    let n = params.grid_nodes;
    let coarse_nodes = (n - 1) / 4 + 1;
    if coarse_nodes < 51 {
        return Ok(vec![true; n]);
    }
    let coarse = RobotParams {
        grid_nodes: coarse_nodes,
        ..params.clone()
    };
    let sol = solve_shape(&coarse, v, true)?;
    let mut on_floor = vec![false; coarse_nodes];
    for &i in &sol.contact_set {
        on_floor[i] = true;
    }
    let coarse_dx = coarse.dx();
    Ok(params
        .grid()
        .iter()
        .map(|&x| {
            let s = x / coarse_dx;
            let lo = (s.floor() as usize).min(coarse_nodes - 1);
            let hi = (s.ceil() as usize).min(coarse_nodes - 1);
            on_floor[lo] && on_floor[hi]
        })
        .collect())
}

/// Find the moment gain `m_V` for which `v_ref` lifts the body (floor on) to
/// `target_peak` metres. Bisection in log-space over `[lo, hi]` N·m/V.
pub fn fit_moment_gain_in(
    params: &RobotParams,
    v_ref: &VoltageVector,
    target_peak: f64,
    lo: f64,
    hi: f64,
) -> Result<f64> {
    if !(target_peak > 0.0) {
        return Err(Error::NoBracket(format!(
            "target peak must be positive, got {target_peak}"
        )));
    }
    let peak_at = |gain: f64| -> Result<f64> {
        let p = RobotParams {
            moment_per_volt: gain,
            ..params.clone()
        };
        Ok(solve_shape(&p, v_ref, true)?.shape.peak())
    };
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let (pa, pb) = (peak_at(lo)?, peak_at(hi)?);
    if !(pa < target_peak && target_peak < pb) {
        return Err(Error::NoBracket(format!(
            "peak spans [{pa:.3e}, {pb:.3e}] m over gains [{lo:.1e}, {hi:.1e}], target {target_peak:.3e} m"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let peak = peak_at(mid.exp())?;
        if (peak - target_peak).abs() <= 1e-4 * target_peak {
            return Ok(mid.exp());
        }
        if peak < target_peak {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok((0.5 * (a + b)).exp())
}

/// [`fit_moment_gain_in`] over the default gain range `[1e-9, 1e-2]` N·m/V.
pub fn fit_moment_gain(
    params: &RobotParams,
    v_ref: &VoltageVector,
    target_peak: f64,
) -> Result<f64> {
    fit_moment_gain_in(params, v_ref, target_peak, 1e-9, 1e-2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch() -> VoltageVector {
        VoltageVector::new([300.0, 258.0, -1292.0, 258.0, 300.0])
    }

    /// Continuous double integral of a piecewise-constant `M / EI` from a
    /// clamped rear end.
    fn closed_form_free(params: &RobotParams, v: &VoltageVector, x: f64) -> f64 {
        let (mut y, mut slope) = (0.0, 0.0);
        for (k, vk) in v.0.iter().enumerate() {
            let a = k as f64 * params.actuator_span;
            let b = a + params.actuator_span;
            let c = params.moment_per_volt * vk / params.bending_stiffness;
            let h = (x.min(b) - a).max(0.0);
            y += slope * h + 0.5 * c * h * h;
            slope += c * h;
            if x <= b {
                break;
            }
        }
        y
    }

    #[test]
    fn moment_profile_examples() {
        let p = RobotParams::default();
        let g = p.moment_per_volt;
        let zero = actuation_moment_profile(&p, &VoltageVector::zeros(5)).unwrap();
        assert!(zero.iter().all(|&m| m == 0.0));

        let v = VoltageVector::new([0.0, 0.0, -1292.0, 0.0, 0.0]);
        let m = actuation_moment_profile(&p, &v).unwrap();
        for (x, mi) in p.grid().iter().zip(&m) {
            if *x > 0.2 + 1e-9 && *x < 0.3 - 1e-9 {
                assert!((mi + 1292.0 * g).abs() < 1e-15);
            } else if *x < 0.2 - 1e-9 || *x > 0.3 + 1e-9 {
                assert_eq!(*mi, 0.0);
            }
        }

        let uniform = actuation_moment_profile(&p, &VoltageVector::new([100.0; 5])).unwrap();
        assert!(uniform.iter().all(|mi| (mi - 100.0 * g).abs() < 1e-15));

        assert!(matches!(
            actuation_moment_profile(&p, &VoltageVector::zeros(4)),
            Err(Error::VoltageLength { .. })
        ));
    }

    #[test]
    fn rest_state_is_flat_and_carries_the_weight() {
        let p = RobotParams::default();
        let sol = solve_shape(&p, &VoltageVector::zeros(5), true).unwrap();
        assert!(sol.shape.y.iter().all(|y| y.abs() < 1e-12));
        let weight = p.weight_per_length * p.length;
        assert!((sol.total_reaction(p.dx()) - weight).abs() < 1e-9);
    }

    #[test]
    fn free_shape_matches_double_integration() {
        let p = RobotParams::default().weightless();
        let v = VoltageVector::new([0.0, 0.0, -1292.0, 0.0, 0.0]);
        let sol = solve_shape(&p, &v, false).unwrap();
        let worst = p
            .grid()
            .iter()
            .zip(&sol.shape.y)
            .map(|(x, y)| (y - closed_form_free(&p, &v, *x)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-5, "max deviation {worst} m");
    }

    #[test]
    fn free_shape_needs_zero_weight() {
        let p = RobotParams::default();
        assert!(matches!(
            solve_shape(&p, &arch(), false),
            Err(Error::Unbounded(_))
        ));
    }

    #[test]
    fn palindromic_arch_is_mirror_symmetric() {
        let p = RobotParams::default();
        let y = solve_shape(&p, &arch(), true).unwrap().shape.y;
        let n = y.len();
        for i in 0..n {
            assert!((y[i] - y[n - 1 - i]).abs() < 1e-9, "node {i}");
        }
    }

    #[test]
    fn arch_touches_down_only_near_the_ends() {
        let p = RobotParams::default();
        let sol = solve_shape(&p, &arch(), true).unwrap();
        let x = p.grid();
        assert!(!sol.contact_set.is_empty());
        assert!(sol.contact_set.iter().all(|&i| x[i] < 0.1 || x[i] > 0.4));
        assert!((sol.total_reaction(p.dx()) - p.weight_per_length * p.length).abs() < 1e-6);
    }

    #[test]
    fn balanced_u_posture_converges() {
        // Every node but one lifts off; the body balances on a single node.
        let p = RobotParams::default();
        let v = VoltageVector::new([300.0, 500.0, 500.0, 500.0, 300.0]);
        let sol = solve_shape(&p, &v, true).unwrap();
        assert!(sol.shape.y.iter().all(|&y| y >= -1e-9));
        assert!((sol.total_reaction(p.dx()) - p.weight_per_length * p.length).abs() < 1e-6);
    }

    #[test]
    fn peak_converges_with_grid_refinement() {
        let coarse = RobotParams::default();
        let fine = RobotParams {
            grid_nodes: 401,
            ..coarse.clone()
        };
        let a = solve_shape(&coarse, &arch(), true).unwrap().shape.peak();
        let b = solve_shape(&fine, &arch(), true).unwrap().shape.peak();
        assert!((a - b).abs() / b < 0.01, "{a} vs {b}");
    }

    #[test]
    fn default_gain_reproduces_operating_point() {
        let p = RobotParams::default();
        let gain = fit_moment_gain(&p, &arch(), 0.0135).unwrap();
        let fitted = RobotParams {
            moment_per_volt: gain,
            ..p.clone()
        };
        let peak = solve_shape(&fitted, &arch(), true).unwrap().shape.peak();
        assert!((peak - 0.0135).abs() < 1e-4);
        assert!((gain - DEFAULT_MOMENT_PER_VOLT).abs() / DEFAULT_MOMENT_PER_VOLT < 0.01);
        assert!(matches!(
            fit_moment_gain(&p, &arch(), 0.0),
            Err(Error::NoBracket(_))
        ));
    }

    #[test]
    fn stiffer_body_needs_proportionally_more_gain() {
        let p = RobotParams::default().weightless();
        let stiff = RobotParams {
            bending_stiffness: 2.0 * p.bending_stiffness,
            moment_per_volt: 2.0 * p.moment_per_volt,
            ..p.clone()
        };
        let a = solve_shape(&p, &arch(), false).unwrap().shape.y;
        let b = solve_shape(&stiff, &arch(), false).unwrap().shape.y;
        for (a, b) in a.iter().zip(&b) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let ok = RobotParams::default();
        assert!(ok.validate().is_ok());
        let cases = [
            RobotParams {
                actuator_span: 0.09,
                ..ok.clone()
            },
            RobotParams {
                bending_stiffness: 0.0,
                ..ok.clone()
            },
            RobotParams {
                weight_per_length: -1.0,
                ..ok.clone()
            },
            RobotParams {
                moment_per_volt: 0.0,
                ..ok.clone()
            },
            RobotParams {
                grid_nodes: 50,
                ..ok.clone()
            },
            RobotParams {
                pad_span: 0.2,
                ..ok.clone()
            },
        ];
        for p in cases {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }
}
