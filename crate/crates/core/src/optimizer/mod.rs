//! Derivative-free global minimization over a box of actuator voltages.
//!
//! Bayesian optimization: a Latin-hypercube design seeds a Gaussian-process
//! surrogate of the (standardized) loss, and each further evaluation goes to
//! the point of maximum expected improvement. Everything is driven by one
//! seeded RNG, so a run replays exactly given the same seed, domain and loss.

mod acquisition;
mod gp;
mod nelder_mead;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::VoltageVector;
use crate::par;

pub use acquisition::expected_improvement;
pub use gp::{gp_posterior, GaussianProcess, GpConfig};

/// Admissible voltages: per-actuator bounds, optionally tied symmetric
/// (`V1 = V5`, `V2 = V4`, ...), which halves the search dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub symmetric: bool,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, symmetric: bool) -> Result<Self> {
        let domain = Self {
            lower,
            upper,
            symmetric,
        };
        domain.validate()?;
        Ok(domain)
    }

    /// Same bounds on every actuator.
    pub fn uniform(n: usize, lower: f64, upper: f64, symmetric: bool) -> Result<Self> {
        Self::new(vec![lower; n], vec![upper; n], symmetric)
    }

    /// The default `[-1500, 500]` V box.
    pub fn default_voltages(n: usize, symmetric: bool) -> Self {
        Self::uniform(n, -1500.0, 500.0, symmetric).expect("default box is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.lower.len();
        if n == 0 || self.upper.len() != n {
            return Err(Error::InvalidDomain(
                "bounds must be non-empty and equally long".into(),
            ));
        }
        for (i, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidDomain(format!(
                    "dimension {i}: need lower <= upper"
                )));
            }
        }
        if self.symmetric {
            for i in 0..n / 2 {
                let j = n - 1 - i;
                if self.lower[i] != self.lower[j] || self.upper[i] != self.upper[j] {
                    return Err(Error::InvalidDomain(
                        "symmetric mode needs mirror-symmetric bounds".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Number of actuators.
    pub fn n_actuators(&self) -> usize {
        self.lower.len()
    }

    /// Dimension actually searched.
    pub fn dim(&self) -> usize {
        let n = self.lower.len();
        if self.symmetric {
            n.div_ceil(2)
        } else {
            n
        }
    }

    /// Map a point of the unit cube `[0, 1]^dim` to voltages.
    pub fn expand(&self, unit: &[f64]) -> VoltageVector {
        let n = self.lower.len();
        let v = (0..n)
            .map(|i| {
                let r = if self.symmetric { i.min(n - 1 - i) } else { i };
                let (lo, hi) = (self.lower[r], self.upper[r]);
                (lo + unit[r].clamp(0.0, 1.0) * (hi - lo)).clamp(lo, hi)
            })
            .collect();
        VoltageVector(v)
    }

    /// Inverse of [`BoxDomain::expand`] for voltages inside the box.
    pub fn to_unit(&self, v: &VoltageVector) -> Vec<f64> {
        (0..self.dim())
            .map(|r| {
                let width = self.upper[r] - self.lower[r];
                if width > 0.0 {
                    ((v.0[r] - self.lower[r]) / width).clamp(0.0, 1.0)
                } else {
                    0.5
                }
            })
            .collect()
    }

    pub fn contains(&self, v: &VoltageVector) -> bool {
        v.len() == self.lower.len()
            && v.0
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }
}

/// One loss evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub v: VoltageVector,
    pub loss: f64,
}

/// Knobs of the Bayesian-optimization loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoSettings {
    pub budget: usize,
    pub init_samples: usize,
    /// Random candidates scored per acquisition step.
    pub candidates: usize,
    /// Best candidates polished by coordinate search.
    pub refine_starts: usize,
    /// Refit hyperparameters after this many new evaluations.
    pub refit_every: usize,
    pub refit_restarts: usize,
    /// Initial length scale as a fraction of each box width.
    pub initial_length_scale: f64,
    pub jitter: f64,
    pub warping: OutputWarping,
    /// Propose points only inside a box around the incumbent that grows on
    /// success and shrinks on failure.
    pub trust_region: bool,
    pub seed: u64,
}

impl Default for BoSettings {
    fn default() -> Self {
        Self {
            budget: 60,
            init_samples: 10,
            candidates: 1024,
            refine_starts: 4,
            refit_every: 10,
            refit_restarts: 4,
            initial_length_scale: 0.3,
            jitter: 1e-6,
            warping: OutputWarping::Standardize,
            trust_region: true,
            seed: 0,
        }
    }
}

impl BoSettings {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeResult {
    pub best_v: VoltageVector,
    pub best_loss: f64,
    pub history: Vec<Observation>,
}

impl MinimizeResult {
    /// Best loss seen after each evaluation.
    pub fn incumbent_trace(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.history
            .iter()
            .map(|o| {
                if o.loss < best {
                    best = o.loss;
                }
                best
            })
            .collect()
    }

    /// Write the history as `eval_index,v1..vN,loss`.
    pub fn write_history_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.best_v.len();
        let cols: Vec<String> = (1..=n).map(|i| format!("v{i}")).collect();
        writeln!(w, "eval_index,{},loss", cols.join(","))?;
        for (i, o) in self.history.iter().enumerate() {
            let vs: Vec<String> = o.v.0.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{i},{},{}", vs.join(","), o.loss)?;
        }
        Ok(())
    }
}

/// Stratified design: one point per stratum in every dimension.
pub fn latin_hypercube<R: Rng>(rng: &mut R, samples: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; dim]; samples];
    for d in 0..dim {
        let mut strata: Vec<usize> = (0..samples).collect();
        // Fisher-Yates with our own RNG so the design is seed-determined.
        for i in (1..samples).rev() {
            let j = rng.random_range(0..=i);
            strata.swap(i, j);
        }
        for (p, s) in points.iter_mut().zip(strata) {
            p[d] = (s as f64 + rng.random::<f64>()) / samples as f64;
        }
    }
    points
}

/// How losses are transformed before the surrogate sees them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputWarping {
    /// Zero mean, unit variance.
    Standardize,
    /// Normal scores of the ranks: insensitive to scale breaks such as a
    /// large collision penalty.
    Rank,
    /// Standardized `ln(loss - min + floor)`, for non-negative losses
    /// spanning decades; `floor` is 1e-3 of the loss range.
    Log,
}

fn warp(values: &[f64], warping: OutputWarping) -> Vec<f64> {
    match warping {
        OutputWarping::Standardize => standardize(values),
        OutputWarping::Rank => rank_scores(values),
        OutputWarping::Log => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let floor = (1e-3 * (hi - lo)).max(f64::MIN_POSITIVE);
            let logs: Vec<f64> = values.iter().map(|v| (v - lo + floor).ln()).collect();
            standardize(&logs)
        }
    }
}

/// `Phi^-1((rank + 1/2) / n)`, ties sharing their mean rank.
fn rank_scores(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let normal = statrs::distribution::Normal::standard();
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = 0.5 * (i + j) as f64;
        let z = statrs::distribution::ContinuousCDF::inverse_cdf(&normal, (rank + 0.5) / n as f64);
        for &k in &order[i..=j] {
            out[k] = z;
        }
        i = j + 1;
    }
    out
}

fn standardize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = if var > 0.0 { var.sqrt() } else { 1.0 };
    values.iter().map(|v| (v - mean) / std).collect()
}

/// Maximum-likelihood refit of length scales and signal variance, in log
/// space, from the current values plus `restarts - 1` random starts.
fn refit_hyperparameters<R: Rng>(
    rng: &mut R,
    current: &GpConfig,
    points: &[Vec<f64>],
    values: &[f64],
    restarts: usize,
) -> GpConfig {
    const LOG_LEN: (f64, f64) = (-3.9, 1.6); // ~[0.02, 5]
    const LOG_VAR: (f64, f64) = (-3.0, 3.0);
    let dim = current.length_scales.len();
    let clamp = |theta: &[f64]| -> Vec<f64> {
        theta
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let (lo, hi) = if i < dim { LOG_LEN } else { LOG_VAR };
                t.clamp(lo, hi)
            })
            .collect()
    };
    let config_for = |theta: &[f64]| GpConfig {
        length_scales: theta[..dim].iter().map(|t| t.exp()).collect(),
        signal_variance: theta[dim].exp(),
        ..current.clone()
    };
    let objective = |theta: &[f64]| -> f64 {
        let theta = clamp(theta);
        match GaussianProcess::fit(config_for(&theta), points.to_vec(), values) {
            Ok(gp) => -gp.log_marginal_likelihood(values),
            Err(_) => f64::INFINITY,
        }
    };

    let mut starts = Vec::with_capacity(restarts.max(1));
    let mut first: Vec<f64> = current.length_scales.iter().map(|l| l.ln()).collect();
    first.push(current.signal_variance.ln());
    starts.push(clamp(&first));
    for _ in 1..restarts.max(1) {
        let mut theta: Vec<f64> = (0..dim)
            .map(|_| rng.random_range(LOG_LEN.0..LOG_LEN.1))
            .collect();
        theta.push(rng.random_range(LOG_VAR.0..LOG_VAR.1));
        starts.push(theta);
    }

    let fits = par::map(&starts, |s| nelder_mead::minimize(&objective, s, 0.5, 150));
    let mut best = (objective(&starts[0]), starts[0].clone());
    for (theta, value) in fits {
        if value < best.0 {
            best = (value, theta);
        }
    }
    config_for(&clamp(&best.1))
}

/// Coordinate search on expected improvement from `start` inside `bounds`.
fn polish(gp: &GaussianProcess, best: f64, start: &[f64], bounds: &Bounds) -> (Vec<f64>, f64) {
    let score = |u: &[f64]| {
        let (m, v) = gp.posterior(u);
        expected_improvement(m, v, best)
    };
    let mut x = start.to_vec();
    let mut fx = score(&x);
    let mut step = 0.05;
    for _ in 0..60 {
        if step < 1e-3 {
            break;
        }
        let mut improved = false;
        for d in 0..x.len() {
            for sign in [-1.0, 1.0] {
                let mut y = x.clone();
                y[d] = (y[d] + sign * step).clamp(bounds.lo[d], bounds.hi[d]);
                let fy = score(&y);
                if fy > fx {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, fx)
}

/// Sub-box of the unit cube.
struct Bounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Bounds {
    fn unit(dim: usize) -> Self {
        Self {
            lo: vec![0.0; dim],
            hi: vec![1.0; dim],
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
            .collect()
    }
}

/// Trust region around the incumbent, sized by success and failure streaks.
struct TrustRegion {
    length: f64,
    successes: usize,
    failures: usize,
    failure_limit: usize,
}

impl TrustRegion {
    const INITIAL: f64 = 0.8;
    const MIN: f64 = 1.0 / 128.0;
    const MAX: f64 = 1.6;
    const SUCCESS_LIMIT: usize = 3;

    fn new(dim: usize) -> Self {
        Self {
            length: Self::INITIAL,
            successes: 0,
            failures: 0,
            failure_limit: dim.max(4),
        }
    }

    fn record(&mut self, improved: bool) {
        if improved {
            self.successes += 1;
            self.failures = 0;
        } else {
            self.failures += 1;
            self.successes = 0;
        }
        if self.successes >= Self::SUCCESS_LIMIT {
            self.length = (2.0 * self.length).min(Self::MAX);
            self.successes = 0;
        } else if self.failures >= self.failure_limit {
            self.length /= 2.0;
            self.failures = 0;
        }
        if self.length < Self::MIN {
            self.length = Self::INITIAL;
        }
    }

    /// Box around `center`, stretched along long length scales.
    fn bounds(&self, center: &[f64], length_scales: &[f64]) -> Bounds {
        let log_mean =
            length_scales.iter().map(|l| l.ln()).sum::<f64>() / length_scales.len() as f64;
        let (lo, hi) = center
            .iter()
            .zip(length_scales)
            .map(|(c, l)| {
                let half = 0.5 * self.length * (l.ln() - log_mean).exp();
                ((c - half).max(0.0), (c + half).min(1.0))
            })
            .unzip();
        Bounds { lo, hi }
    }
}

/// A set of voltage vectors parameterized by the unit cube.
pub trait SearchSpace {
    fn validate(&self) -> Result<()>;
    /// Number of actuators in the produced voltage vectors.
    fn n_actuators(&self) -> usize;
    /// Dimension of the unit cube searched.
    fn dim(&self) -> usize;
    fn expand(&self, unit: &[f64]) -> VoltageVector;
    /// Unit-cube point whose expansion is closest to `v`.
    fn to_unit(&self, v: &VoltageVector) -> Vec<f64>;
}

impl SearchSpace for BoxDomain {
    fn validate(&self) -> Result<()> {
        BoxDomain::validate(self)
    }

    fn n_actuators(&self) -> usize {
        BoxDomain::n_actuators(self)
    }

    fn dim(&self) -> usize {
        BoxDomain::dim(self)
    }

    fn expand(&self, unit: &[f64]) -> VoltageVector {
        BoxDomain::expand(self, unit)
    }

    fn to_unit(&self, v: &VoltageVector) -> Vec<f64> {
        BoxDomain::to_unit(self, v)
    }
}

/// Minimize `loss` over `domain` with at most `settings.budget` evaluations.
///
/// The loss may return non-finite values (treated as failed evaluations and
/// kept out of the surrogate); more than half of them is an error. Errors
/// returned by the loss abort the run.
pub fn minimize<D, F>(loss: F, domain: &D, settings: &BoSettings) -> Result<MinimizeResult>
where
    D: SearchSpace + ?Sized,
    F: FnMut(&VoltageVector) -> Result<f64>,
{
    minimize_from(loss, domain, settings, &[])
}

/// [`minimize`] that first evaluates the `warm` voltages (projected into the
/// domain); they count against the budget.
pub fn minimize_from<D, F>(
    mut loss: F,
    domain: &D,
    settings: &BoSettings,
    warm: &[VoltageVector],
) -> Result<MinimizeResult>
where
    D: SearchSpace + ?Sized,
    F: FnMut(&VoltageVector) -> Result<f64>,
{
    domain.validate()?;
    if settings.init_samples == 0 || settings.budget < settings.init_samples + warm.len() {
        return Err(Error::InvalidDomain(format!(
            "budget {} must cover init_samples {} (> 0) plus {} warm starts",
            settings.budget,
            settings.init_samples,
            warm.len()
        )));
    }
    for v in warm {
        if v.len() != domain.n_actuators() {
            return Err(Error::VoltageLength {
                expected: domain.n_actuators(),
                got: v.len(),
            });
        }
    }
    let dim = domain.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut units: Vec<Vec<f64>> = Vec::with_capacity(settings.budget);
    let mut history: Vec<Observation> = Vec::with_capacity(settings.budget);

    let mut evaluate = |u: Vec<f64>, units: &mut Vec<Vec<f64>>, history: &mut Vec<Observation>| {
        let v = domain.expand(&u);
        let value = loss(&v)?;
        units.push(u);
        history.push(Observation { v, loss: value });
        Ok::<(), Error>(())
    };

    for v in warm {
        evaluate(domain.to_unit(v), &mut units, &mut history)?;
    }
    for u in latin_hypercube(&mut rng, settings.init_samples, dim) {
        evaluate(u, &mut units, &mut history)?;
    }

    let mut config = GpConfig {
        length_scales: vec![settings.initial_length_scale; dim],
        signal_variance: 1.0,
        prior_mean: 0.0,
        jitter: settings.jitter,
    };
    let mut fitted_at = 0usize;
    let mut region = TrustRegion::new(dim);
    let incumbent = |history: &[Observation]| {
        history
            .iter()
            .enumerate()
            .filter(|(_, o)| o.loss.is_finite())
            .fold(None::<(usize, f64)>, |acc, (i, o)| match acc {
                Some((_, b)) if b <= o.loss => acc,
                _ => Some((i, o.loss)),
            })
    };

    while history.len() < settings.budget {
        let finite: Vec<usize> = (0..history.len())
            .filter(|&i| history[i].loss.is_finite())
            .collect();
        let next = if finite.len() < 2 {
            (0..dim).map(|_| rng.random::<f64>()).collect()
        } else {
            let points: Vec<Vec<f64>> = finite.iter().map(|&i| units[i].clone()).collect();
            let raw: Vec<f64> = finite.iter().map(|&i| history[i].loss).collect();
            let values = warp(&raw, settings.warping);
            if fitted_at == 0 || history.len() - fitted_at >= settings.refit_every {
                config = refit_hyperparameters(
                    &mut rng,
                    &config,
                    &points,
                    &values,
                    settings.refit_restarts,
                );
                fitted_at = history.len();
            }
            let best = values.iter().copied().fold(f64::INFINITY, f64::min);
            let bounds = match (settings.trust_region, incumbent(&history)) {
                (true, Some((i, _))) => region.bounds(&units[i], &config.length_scales),
                _ => Bounds::unit(dim),
            };
            let candidates: Vec<Vec<f64>> = (0..settings.candidates)
                .map(|_| bounds.sample(&mut rng))
                .collect();
            match GaussianProcess::fit(config.clone(), points, &values) {
                Ok(gp) => choose_next(
                    &gp,
                    best,
                    candidates,
                    settings.refine_starts,
                    &units,
                    &bounds,
                ),
                Err(_) => candidates
                    .into_iter()
                    .next()
                    .expect("at least one candidate"),
            }
        };
        let before = incumbent(&history).map(|(_, b)| b);
        evaluate(next, &mut units, &mut history)?;
        let latest = history.last().map_or(f64::NAN, |o| o.loss);
        region.record(before.is_none_or(|b| latest < b - 1e-3 * b.abs()));
    }

    let bad = history.iter().filter(|o| !o.loss.is_finite()).count();
    if 2 * bad > history.len() {
        return Err(Error::NonFiniteLoss {
            bad,
            total: history.len(),
        });
    }
    let best = history
        .iter()
        .filter(|o| o.loss.is_finite())
        .fold(None::<&Observation>, |acc, o| match acc {
            Some(b) if b.loss <= o.loss => Some(b),
            _ => Some(o),
        })
        .expect("at least one finite evaluation");
    Ok(MinimizeResult {
        best_v: best.v.clone(),
        best_loss: best.loss,
        history,
    })
}

/// Highest-EI point: score every candidate, polish the best few, and fall back
/// to the best unpolished candidate if polishing lands on an existing sample.
fn choose_next(
    gp: &GaussianProcess,
    best: f64,
    candidates: Vec<Vec<f64>>,
    refine_starts: usize,
    seen: &[Vec<f64>],
    bounds: &Bounds,
) -> Vec<f64> {
    let scores = par::map(&candidates, |u| {
        let (m, v) = gp.posterior(u);
        expected_improvement(m, v, best)
    });
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let starts: Vec<&Vec<f64>> = order
        .iter()
        .take(refine_starts.max(1))
        .map(|&i| &candidates[i])
        .collect();
    let polished = par::map(&starts, |s| polish(gp, best, s, bounds));

    let is_new = |u: &[f64]| {
        seen.iter()
            .all(|s| s.iter().zip(u).any(|(a, b)| (a - b).abs() > 1e-9))
    };
    let mut choice: Option<(Vec<f64>, f64)> = None;
    for (u, ei) in polished {
        if is_new(&u) && choice.as_ref().is_none_or(|c| ei > c.1) {
            choice = Some((u, ei));
        }
    }
    match choice {
        Some((u, _)) => u,
        None => order
            .iter()
            .map(|&i| &candidates[i])
            .find(|u| is_new(u))
            .cloned()
            .unwrap_or_else(|| candidates[order[0]].clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_domain_expands_palindromically() {
        let d = BoxDomain::default_voltages(5, true);
        assert_eq!(d.dim(), 3);
        let v = d.expand(&[0.0, 0.5, 1.0]);
        assert_eq!(v.0, vec![-1500.0, -500.0, 500.0, -500.0, -1500.0]);
        assert!(v.is_palindromic());
        assert_eq!(d.to_unit(&v), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn domain_validation() {
        assert!(BoxDomain::uniform(5, 2.0, 1.0, false).is_err());
        assert!(BoxDomain::uniform(5, 1.0, 1.0, false).is_ok());
        assert!(BoxDomain::new(vec![0.0, 0.0], vec![1.0], false).is_err());
        assert!(BoxDomain::new(vec![0.0, -1.0], vec![1.0, 1.0], true).is_err());
    }

    #[test]
    fn latin_hypercube_hits_every_stratum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts = latin_hypercube(&mut rng, 10, 3);
        for d in 0..3 {
            let mut strata: Vec<usize> =
                pts.iter().map(|p| (p[d] * 10.0).floor() as usize).collect();
            strata.sort();
            assert_eq!(strata, (0..10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn constant_loss_uses_whole_budget() {
        let d = BoxDomain::default_voltages(5, true);
        let r = minimize(|_| Ok(3.0), &d, &BoSettings::with_seed(1)).unwrap();
        assert_eq!(r.history.len(), 60);
        assert_eq!(r.best_loss, 3.0);
        assert!(d.contains(&r.best_v));
    }

    #[test]
    fn budget_below_design_size_is_rejected() {
        let d = BoxDomain::default_voltages(5, true);
        let s = BoSettings {
            budget: 5,
            ..BoSettings::default()
        };
        assert!(minimize(|_| Ok(0.0), &d, &s).is_err());
    }

    #[test]
    fn mostly_non_finite_loss_is_an_error() {
        let d = BoxDomain::default_voltages(5, true);
        let s = BoSettings {
            budget: 20,
            ..BoSettings::default()
        };
        let mut calls = 0;
        let r = minimize(
            |_| {
                calls += 1;
                Ok(if calls % 4 == 0 { 1.0 } else { f64::NAN })
            },
            &d,
            &s,
        );
        assert!(matches!(r, Err(Error::NonFiniteLoss { .. })));
    }

    #[test]
    fn loss_errors_propagate() {
        let d = BoxDomain::default_voltages(5, false);
        let r = minimize(|_| Err(Error::Factorization), &d, &BoSettings::default());
        assert!(matches!(r, Err(Error::Factorization)));
    }

    #[test]
    fn history_csv_layout() {
        let d = BoxDomain::default_voltages(5, false);
        let s = BoSettings {
            budget: 10,
            ..BoSettings::default()
        };
        let r = minimize(|v| Ok(v.0[0].abs()), &d, &s).unwrap();
        let mut buf = Vec::new();
        r.write_history_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("eval_index,v1,v2,v3,v4,v5,loss"));
        assert_eq!(lines.count(), 10);
    }
}
