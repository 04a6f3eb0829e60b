//! Reproducible scenario runs: shape control with prior calibration, roof
//! crawling, speed maps and standalone calibration. Each run writes CSV data
//! and a `metrics.json` into an output directory.

mod config;

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

pub use config::{
    default_phase_targets, CalibrationSection, DeviationSpec, OptimizerSection, PlantSection,
    RobotSection, RoofSection, RoofSpec, RunSection, ScenarioConfig, ShapeControlSection,
    SpeedMapSection,
};

use crate::calibration::{CalibrationSample, CorrectedModel, CorrectionField, ShapePredictor};
use crate::controller::{
    roof_loss_of, solve_roof_shape, solve_target_shape, solve_target_shape_from, ControlCommand,
    TargetShape,
};
use crate::error::{Error, Result};
use crate::gait::{
    advance_cycle, quadratic_fit, speed_vs_height_curve, stride_per_cycle, write_speed_csv,
    FamilySpace,
};
use crate::model::{shape_mse, ShapeCurve, VoltageVector};
use crate::plant::{
    actuator_deviation, scale_deviation_to_mse, smooth_deviation, Plant, PlantParams,
};

/// `git describe` of the build, or the crate version outside a checkout.
pub const VERSION: &str = env!("SOFTCRAWL_VERSION");

#[derive(Serialize)]
struct MetricsFile<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a ScenarioConfig,
    results: &'a T,
}

fn write_metrics<T: Serialize>(
    out: &Path,
    command: &str,
    cfg: &ScenarioConfig,
    results: &T,
) -> Result<()> {
    let file = MetricsFile {
        command,
        version: VERSION,
        seed: cfg.optimizer.seed,
        config: cfg,
        results,
    };
    let mut w = create(&out.join("metrics.json"))?;
    serde_json::to_writer_pretty(&mut w, &file)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn voltage_header(n: usize) -> String {
    (1..=n)
        .map(|i| format!("v{i}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// Build the simulated robot. `operating` are the postures a gain deviation
/// is linearized about and, with `pre_mse_cm2` set, the commands whose
/// uncorrected error the deviation is scaled to.
pub fn build_plant(cfg: &ScenarioConfig, operating: &[VoltageVector]) -> Result<Plant> {
    let base = cfg.params();
    let p = &cfg.plant;
    let mut beta = match &p.deviation {
        DeviationSpec::None => Vec::new(),
        DeviationSpec::Gain { amplitude, seed } => {
            actuator_deviation(&base, *amplitude, *seed, operating)?
        }
        DeviationSpec::Smooth {
            amplitude_cm_per_v,
            seed,
        } => smooth_deviation(&base, *amplitude_cm_per_v, *seed),
        DeviationSpec::File { path } => {
            let file = File::open(path).map_err(|e| Error::Parse {
                path: path.clone(),
                message: e.to_string(),
            })?;
            let field = CorrectionField::read_csv(BufReader::new(file), path, 1.0)?;
            if field.x.len() != base.grid_nodes {
                return Err(Error::Parse {
                    path: path.clone(),
                    message: format!("expected {} rows, got {}", base.grid_nodes, field.x.len()),
                });
            }
            field.alpha
        }
    };
    if let (Some(target), false) = (p.pre_mse_cm2, beta.is_empty()) {
        if operating.is_empty() {
            return Err(Error::Config(
                "plant.pre_mse_cm2 needs postures to scale against".into(),
            ));
        }
        let noise = p.noise_std_cm * p.noise_std_cm;
        scale_deviation_to_mse(&mut beta, operating, (target - noise).max(0.0));
    }
    Plant::new(PlantParams {
        base,
        beta,
        stiffness_scale: p.stiffness_scale,
        gain_scale: p.gain_scale,
        noise_std: p.noise_std_cm,
        seed: p.seed,
        ground: true,
    })
    .map_err(|e| Error::Config(e.to_string()))
}

/// Sense every reference posture `repeats` times against the uncorrected
/// model.
pub fn collect_samples(
    cfg: &ScenarioConfig,
    plant: &mut Plant,
    model: &CorrectedModel,
) -> Result<Vec<CalibrationSample>> {
    let refs = cfg.reference_voltages();
    let mut samples = Vec::with_capacity(refs.len() * cfg.calibration.repeats);
    for _ in 0..cfg.calibration.repeats {
        for v in &refs {
            let sensed = plant.sense(v, 0.0)?.shape;
            samples.push(CalibrationSample::new(
                v.clone(),
                sensed,
                model.model_shape(v)?,
            )?);
        }
    }
    Ok(samples)
}

/// LMS fit of a fresh correction field to `samples`.
pub fn fit_correction(
    cfg: &ScenarioConfig,
    samples: &[CalibrationSample],
) -> Result<CorrectionField> {
    if samples.is_empty() {
        return Err(Error::Config(
            "calibration needs at least one sample".into(),
        ));
    }
    let lr = match cfg.calibration.learning_rate {
        Some(lr) => lr,
        None => CorrectionField::default_learning_rate(samples.iter().map(|s| &s.v))?,
    };
    let params = cfg.params();
    let mut field = CorrectionField::zeros(params.grid(), params.n_actuators, lr)?;
    field.calibrate_batch(samples, cfg.calibration.epochs)?;
    Ok(field)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetOutcome {
    pub index: usize,
    pub pre_mse_cm2: f64,
    pub post_mse_cm2: f64,
    pub pre_v: Vec<f64>,
    pub post_v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeControlOutcome {
    pub targets: Vec<TargetOutcome>,
    pub pre_mse_mean_cm2: f64,
    pub post_mse_mean_cm2: f64,
    pub calibration_samples: usize,
    pub calibration_residual_before_cm2: f64,
    pub calibration_residual_after_cm2: f64,
}

/// Control each target with the bare model, calibrate on the reference
/// postures, control again with the corrected model. Errors are measured on
/// sensed shapes.
pub fn run_shape_control(
    cfg: &ScenarioConfig,
    target_file: Option<&Path>,
    out: &Path,
) -> Result<ShapeControlOutcome> {
    let params = cfg.params();
    let grid = params.grid();
    let model = CorrectedModel::new(params.clone());
    let targets: Vec<TargetShape> = match target_file {
        Some(path) => {
            let file = File::open(path).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
            let curve = ShapeCurve::read_csv(BufReader::new(file), path)?;
            vec![TargetShape::on_grid(&curve, &grid)]
        }
        None => cfg
            .target_voltages()
            .iter()
            .map(|v| Ok(TargetShape(model.predict(v)?)))
            .collect::<Result<_>>()?,
    };
    if targets.is_empty() {
        return Err(Error::Config("no shape-control targets".into()));
    }
    let domain = cfg.domain()?;
    let settings = cfg.bo_settings();
    let seeded = |offset: u64| crate::optimizer::BoSettings {
        seed: settings.seed.wrapping_add(offset),
        ..settings.clone()
    };

    let pre_cmds: Vec<ControlCommand> = targets
        .iter()
        .enumerate()
        .map(|(i, t)| solve_target_shape(t, &model, &domain, &seeded(i as u64)))
        .collect::<Result<_>>()?;
    let pre_v: Vec<VoltageVector> = pre_cmds.iter().map(|c| c.v.clone()).collect();
    let operating = if target_file.is_some() {
        cfg.target_voltages()
    } else {
        pre_v.clone()
    };
    let mut plant = build_plant(cfg, &operating)?;
    let mut pre_sensed = Vec::with_capacity(targets.len());
    for c in &pre_cmds {
        pre_sensed.push(plant.sense(&c.v, 0.0)?.shape);
    }

    let samples = collect_samples(cfg, &mut plant, &model)?;
    let field = fit_correction(cfg, &samples)?;
    let zero = CorrectionField::zeros(params.grid(), params.n_actuators, 1.0)?;
    let residual_before = zero.residual_mse(&samples)?;
    let residual_after = field.residual_mse(&samples)?;
    let corrected = CorrectedModel::with_correction(params.clone(), field.clone());

    let offset = targets.len() as u64;
    let mut post_cmds = Vec::with_capacity(targets.len());
    for (i, t) in targets.iter().enumerate() {
        let warm = if cfg.shape_control.warm_start {
            std::slice::from_ref(&pre_v[i])
        } else {
            &[]
        };
        post_cmds.push(solve_target_shape_from(
            t,
            &corrected,
            &domain,
            &seeded(offset + i as u64),
            warm,
        )?);
    }
    let mut post_sensed = Vec::with_capacity(targets.len());
    for c in &post_cmds {
        post_sensed.push(plant.sense(&c.v, 0.0)?.shape);
    }

    let mut outcomes = Vec::with_capacity(targets.len());
    for (i, t) in targets.iter().enumerate() {
        outcomes.push(TargetOutcome {
            index: i,
            pre_mse_cm2: shape_mse(&pre_sensed[i], &t.0)?,
            post_mse_cm2: shape_mse(&post_sensed[i], &t.0)?,
            pre_v: pre_cmds[i].v.0.clone(),
            post_v: post_cmds[i].v.0.clone(),
        });
    }
    let mean =
        |f: fn(&TargetOutcome) -> f64| outcomes.iter().map(f).sum::<f64>() / outcomes.len() as f64;
    let outcome = ShapeControlOutcome {
        pre_mse_mean_cm2: mean(|t| t.pre_mse_cm2),
        post_mse_mean_cm2: mean(|t| t.post_mse_cm2),
        targets: outcomes,
        calibration_samples: samples.len(),
        calibration_residual_before_cm2: residual_before,
        calibration_residual_after_cm2: residual_after,
    };

    let mut w = create(&out.join("shapes.csv"))?;
    writeln!(w, "target,x_cm,target_cm,pre_cm,post_cm")?;
    for (i, t) in targets.iter().enumerate() {
        for (j, x) in t.0.x.iter().enumerate() {
            writeln!(
                w,
                "{i},{},{},{},{}",
                x * 100.0,
                t.0.y[j] * 100.0,
                pre_sensed[i].y[j] * 100.0,
                post_sensed[i].y[j] * 100.0
            )?;
        }
    }
    w.flush()?;
    let mut w = create(&out.join("mse.csv"))?;
    writeln!(w, "target,pre_mse_cm2,post_mse_cm2")?;
    for t in &outcome.targets {
        writeln!(w, "{},{},{}", t.index, t.pre_mse_cm2, t.post_mse_cm2)?;
    }
    w.flush()?;
    let mut w = create(&out.join("commands.jsonl"))?;
    for c in pre_cmds.iter().chain(&post_cmds) {
        c.write_json_line(&mut w)?;
    }
    w.flush()?;
    let mut w = create(&out.join("correction.csv"))?;
    field.write_csv(&mut w)?;
    w.flush()?;
    write_metrics(out, "shape-control", cfg, &outcome)?;
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Rear end reached the configured end position.
    Reached,
    /// Footprint is past the roof.
    Cleared,
    MaxCycles,
    Violation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleRecord {
    pub cycle: usize,
    pub x0_cm: f64,
    pub stride_cm: f64,
    /// Closest executed approach to the safety line, either posture.
    pub dy_min_cm: Option<f64>,
    /// Largest executed excess over the safety line, either posture.
    pub dy_max_cm: Option<f64>,
    pub peak_cm: f64,
    pub v: Vec<f64>,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrawlOutcome {
    pub stop: StopReason,
    pub cycles: usize,
    pub start_x0_cm: f64,
    pub end_x0_cm: f64,
    pub final_x0_cm: f64,
    pub violations: usize,
    pub fallbacks: usize,
    pub step_overruns: usize,
    pub mean_stride_cm: f64,
    pub max_dy_min_cm: Option<f64>,
    pub calibrated: bool,
    #[serde(skip)]
    pub trajectory: Vec<CycleRecord>,
}

fn min_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, None) => a,
        (None, b) => b,
    }
}

fn max_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, None) => a,
        (None, b) => b,
    }
}

/// Sense, plan the bent posture under the roof, execute bent then straight
/// on the plant, advance; repeat until the end position, the roof is
/// cleared, a cycle violates the safety line, or the cycle limit.
pub fn run_crawl(cfg: &ScenarioConfig, out: &Path) -> Result<CrawlOutcome> {
    let section = cfg
        .roof
        .as_ref()
        .ok_or_else(|| Error::Config("crawl needs a roof".into()))?;
    let line = section.safety_line()?;
    let params = cfg.params();
    let n = params.n_actuators;
    let bare = CorrectedModel::new(params.clone());
    let mut plant = build_plant(cfg, &cfg.target_voltages())?;
    let calibrated = !plant.params().beta.is_empty();
    let model = if calibrated {
        let samples = collect_samples(cfg, &mut plant, &bare)?;
        CorrectedModel::with_correction(params.clone(), fit_correction(cfg, &samples)?)
    } else {
        bare
    };

    let space = FamilySpace {
        family: cfg.gait.clone(),
        n_actuators: n,
    };
    let settings = cfg.bo_settings();
    let straight_v = cfg.gait.straight(n);
    let straight_shape = plant.plant_shape(&straight_v)?;
    let end_x0 = cfg.end_x0(&line);
    let roof_end = line.roof.domain().1;
    let start = cfg.run.start_x0_cm / 100.0;

    let mut traj_w = create(&out.join("trajectory.csv"))?;
    writeln!(
        traj_w,
        "cycle,x0_cm,stride_cm,dy_min_cm,peak_cm,{}",
        voltage_header(n)
    )?;
    let mut snap_w = create(&out.join("snapshots.csv"))?;
    writeln!(snap_w, "cycle,x_world_cm,y_cm")?;
    let mut cmd_w = create(&out.join("commands.jsonl"))?;

    let mut x0 = start;
    let mut v_prev = straight_v.clone();
    let mut trajectory = Vec::new();
    let mut stop = StopReason::MaxCycles;
    let (mut violations, mut fallbacks, mut overruns) = (0, 0, 0);
    for cycle in 0..cfg.run.max_cycles {
        if x0 >= end_x0 {
            stop = StopReason::Reached;
            break;
        }
        if x0 >= roof_end {
            stop = StopReason::Cleared;
            break;
        }
        let sensed = plant.sense(&v_prev, x0)?;
        let began = Instant::now();
        let cmd = solve_roof_shape(
            &line,
            sensed.x0,
            &model,
            &space,
            &crate::optimizer::BoSettings {
                seed: settings.seed.wrapping_add(cycle as u64),
                ..settings.clone()
            },
            &cfg.roof_loss,
        )?;
        if let Some(budget) = cfg.run.step_budget_ms {
            if began.elapsed().as_secs_f64() * 1000.0 > budget {
                overruns += 1;
            }
        }
        cmd.write_json_line(&mut cmd_w)?;
        if cmd.warning.is_some() {
            fallbacks += 1;
        }

        let bent_shape = plant.plant_shape(&cmd.v)?;
        let stride = stride_per_cycle(&bent_shape, &straight_shape);
        let bent_eval = roof_loss_of(&bent_shape, &line, sensed.x0, &cfg.roof_loss);
        let straight_eval =
            roof_loss_of(&straight_shape, &line, sensed.x0 + stride, &cfg.roof_loss);
        let executed = |v: &VoltageVector,
                        shape: &ShapeCurve,
                        at: f64,
                        e: &crate::controller::RoofEvaluation| {
            ControlCommand {
                v: v.clone(),
                predicted: shape.clone(),
                loss: e.loss,
                x0: Some(at),
                dy_max: e.dy_max,
                dy_min: e.dy_min,
                warning: None,
            }
        };
        let result = advance_cycle(
            sensed.x0,
            &executed(&cmd.v, &bent_shape, sensed.x0, &bent_eval),
            &executed(
                &straight_v,
                &straight_shape,
                sensed.x0 + stride,
                &straight_eval,
            ),
        );
        let record = CycleRecord {
            cycle,
            x0_cm: sensed.x0 * 100.0,
            stride_cm: stride * 100.0,
            dy_min_cm: min_opt(bent_eval.dy_min, straight_eval.dy_min),
            dy_max_cm: max_opt(bent_eval.dy_max, straight_eval.dy_max),
            peak_cm: bent_shape.peak() * 100.0,
            v: cmd.v.0.clone(),
            fallback: cmd.warning.is_some(),
        };
        writeln!(
            traj_w,
            "{},{},{},{},{},{}",
            record.cycle,
            record.x0_cm,
            record.stride_cm,
            record.dy_min_cm.map_or(String::new(), |d| d.to_string()),
            record.peak_cm,
            join(&record.v)
        )?;
        let snapshot = cfg.run.snapshot_every > 0 && cycle % cfg.run.snapshot_every == 0;
        trajectory.push(record);
        match result {
            Ok(r) => {
                if snapshot {
                    let seen = plant.sense(&cmd.v, sensed.x0)?;
                    for (x, y) in seen.shape.x.iter().zip(&seen.shape.y) {
                        writeln!(snap_w, "{cycle},{},{}", (sensed.x0 + x) * 100.0, y * 100.0)?;
                    }
                }
                x0 = r.x0;
                v_prev = straight_v.clone();
            }
            Err(Error::Violation { .. }) => {
                violations += 1;
                stop = StopReason::Violation;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if stop == StopReason::MaxCycles && x0 >= end_x0 {
        stop = StopReason::Reached;
    }
    traj_w.flush()?;
    snap_w.flush()?;
    cmd_w.flush()?;

    let mean_stride = if trajectory.is_empty() {
        0.0
    } else {
        trajectory.iter().map(|c| c.stride_cm).sum::<f64>() / trajectory.len() as f64
    };
    let outcome = CrawlOutcome {
        stop,
        cycles: trajectory.len(),
        start_x0_cm: start * 100.0,
        end_x0_cm: end_x0 * 100.0,
        final_x0_cm: x0 * 100.0,
        violations,
        fallbacks,
        step_overruns: overruns,
        mean_stride_cm: mean_stride,
        max_dy_min_cm: trajectory
            .iter()
            .filter_map(|c| c.dy_min_cm)
            .fold(None, |a, b| Some(a.map_or(b, |a: f64| a.max(b)))),
        calibrated,
        trajectory,
    };
    write_metrics(out, "crawl", cfg, &outcome)?;
    Ok(outcome)
}

/// Crawl the built-in slanted and sinusoidal roofs into `out/slant` and
/// `out/sine`.
pub fn run_simulate_roofs(cfg: &ScenarioConfig, out: &Path) -> Result<Vec<(String, CrawlOutcome)>> {
    let margin = cfg.roof.as_ref().map_or(0.1, |r| r.margin_cm);
    let mut results = Vec::new();
    for (name, spec) in [
        ("slant", RoofSpec::builtin_slant()),
        ("sine", RoofSpec::builtin_sine()),
    ] {
        let cfg = ScenarioConfig {
            roof: Some(RoofSection {
                margin_cm: margin,
                profile: spec,
            }),
            ..cfg.clone()
        };
        let outcome = run_crawl(&cfg, &out.join(name))?;
        let stop = outcome.stop;
        results.push((name.to_string(), outcome));
        if stop == StopReason::Violation {
            break;
        }
    }
    Ok(results)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositionRow {
    pub x0_cm: f64,
    pub stride_cm: f64,
    pub dy_min_cm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedMapOutcome {
    /// `(height_cm, stride_cm)`.
    pub height_table: Vec<(f64, f64)>,
    /// `stride = k h^2`, 1/cm.
    pub quadratic_k_per_cm: f64,
    pub quadratic_r2: f64,
    pub positions: Option<Vec<PositionRow>>,
}

/// Stride against bending height and, with a roof, against position.
pub fn run_speed_map(cfg: &ScenarioConfig, out: &Path) -> Result<SpeedMapOutcome> {
    if cfg.speed_map.heights_cm.is_empty() {
        return Err(Error::Config("speed_map.heights_cm is empty".into()));
    }
    let params = cfg.params();
    let model = CorrectedModel::new(params.clone());
    let heights: Vec<f64> = cfg.speed_map.heights_cm.iter().map(|h| h / 100.0).collect();
    let table = speed_vs_height_curve(&model, &cfg.gait, &heights)?;
    let (k, r2) = quadratic_fit(&table);
    let mut w = create(&out.join("speed_vs_height.csv"))?;
    write_speed_csv(&table, &mut w)?;
    w.flush()?;

    let positions = match &cfg.roof {
        None => None,
        Some(section) => {
            let line = section.safety_line()?;
            let n = params.n_actuators;
            let space = FamilySpace {
                family: cfg.gait.clone(),
                n_actuators: n,
            };
            let straight = model.predict(&cfg.gait.straight(n))?;
            let settings = cfg.bo_settings();
            let end = cfg.end_x0(&line);
            let step = cfg.speed_map.position_step_cm / 100.0;
            let mut rows = Vec::new();
            let mut w = create(&out.join("speed_vs_position.csv"))?;
            writeln!(w, "x0_cm,stride_cm,dy_min_cm")?;
            let mut i = 0usize;
            loop {
                let x0 = cfg.run.start_x0_cm / 100.0 + i as f64 * step;
                if x0 > end + 1e-12 {
                    break;
                }
                let cmd = solve_roof_shape(
                    &line,
                    x0,
                    &model,
                    &space,
                    &crate::optimizer::BoSettings {
                        seed: settings.seed.wrapping_add(i as u64),
                        ..settings.clone()
                    },
                    &cfg.roof_loss,
                )?;
                let row = PositionRow {
                    x0_cm: x0 * 100.0,
                    stride_cm: stride_per_cycle(&cmd.predicted, &straight) * 100.0,
                    dy_min_cm: cmd.dy_min,
                };
                writeln!(
                    w,
                    "{},{},{}",
                    row.x0_cm,
                    row.stride_cm,
                    row.dy_min_cm.map_or(String::new(), |d| d.to_string())
                )?;
                rows.push(row);
                i += 1;
            }
            w.flush()?;
            Some(rows)
        }
    };
    let outcome = SpeedMapOutcome {
        height_table: table.iter().map(|(h, s)| (h * 100.0, s * 100.0)).collect(),
        quadratic_k_per_cm: k / 100.0,
        quadratic_r2: r2,
        positions,
    };
    write_metrics(out, "speed-map", cfg, &outcome)?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleResidual {
    pub name: String,
    pub v: Vec<f64>,
    pub before_mse_cm2: f64,
    pub after_mse_cm2: f64,
    pub max_abs_after_cm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrateOutcome {
    pub samples: Vec<SampleResidual>,
    pub before_mse_cm2: f64,
    pub after_mse_cm2: f64,
    pub max_abs_after_cm: f64,
    pub learning_rate: f64,
    pub epochs: usize,
}

/// Name of the sample manifest inside a samples directory.
pub const SAMPLE_MANIFEST: &str = "voltages.csv";

/// Read a samples directory: a `file,v1..vN` manifest next to `x_cm,y_cm`
/// sensed-shape files. Shapes are resampled onto the model grid.
pub fn read_samples(cfg: &ScenarioConfig, dir: &Path) -> Result<Vec<(String, CalibrationSample)>> {
    let params = cfg.params();
    let grid = params.grid();
    let model = CorrectedModel::new(params.clone());
    let manifest = dir.join(SAMPLE_MANIFEST);
    let parse_err = |path: &Path, message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let file = File::open(&manifest).map_err(|e| parse_err(&manifest, e.to_string()))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != params.n_actuators + 1 {
            return Err(parse_err(
                &manifest,
                format!(
                    "line {}: expected file and {} voltages",
                    idx + 1,
                    params.n_actuators
                ),
            ));
        }
        let v: std::result::Result<Vec<f64>, _> =
            fields[1..].iter().map(|f| f.parse::<f64>()).collect();
        let v =
            VoltageVector(v.map_err(|e| parse_err(&manifest, format!("line {}: {e}", idx + 1)))?);
        let path: PathBuf = dir.join(fields[0]);
        let shape_file = File::open(&path).map_err(|e| parse_err(&path, e.to_string()))?;
        let sensed = ShapeCurve::read_csv(BufReader::new(shape_file), &path)?.resample(&grid);
        let sample = CalibrationSample::new(v.clone(), sensed, model.model_shape(&v)?)?;
        out.push((fields[0].to_string(), sample));
    }
    if out.is_empty() {
        return Err(parse_err(&manifest, "no samples listed".into()));
    }
    Ok(out)
}

/// Write samples in the layout [`read_samples`] reads.
pub fn write_samples(dir: &Path, samples: &[(String, CalibrationSample)]) -> Result<()> {
    let n = samples.first().map_or(0, |(_, s)| s.v.len());
    let mut w = create(&dir.join(SAMPLE_MANIFEST))?;
    writeln!(w, "file,{}", voltage_header(n))?;
    for (name, s) in samples {
        writeln!(w, "{name},{}", join(&s.v.0))?;
        let mut f = create(&dir.join(name))?;
        s.sensed.write_csv(&mut f)?;
        f.flush()?;
    }
    w.flush()?;
    Ok(())
}

/// Fit a correction field from a samples directory, or from the configured
/// plant sensed at the reference postures when no directory is given (the
/// synthesized samples are written to `out/samples`).
pub fn run_calibrate(
    cfg: &ScenarioConfig,
    samples_dir: Option<&Path>,
    out: &Path,
) -> Result<CalibrateOutcome> {
    let named = match samples_dir {
        Some(dir) => read_samples(cfg, dir)?,
        None => {
            let model = CorrectedModel::new(cfg.params());
            let mut plant = build_plant(cfg, &cfg.target_voltages())?;
            let named: Vec<(String, CalibrationSample)> = collect_samples(cfg, &mut plant, &model)?
                .into_iter()
                .enumerate()
                .map(|(i, s)| (format!("sample_{i:03}.csv"), s))
                .collect();
            write_samples(&out.join("samples"), &named)?;
            named
        }
    };
    let samples: Vec<CalibrationSample> = named.iter().map(|(_, s)| s.clone()).collect();
    let field = fit_correction(cfg, &samples)?;
    let rows: Vec<SampleResidual> = named
        .iter()
        .map(|(name, s)| {
            let residual = s.residual_cm();
            let left: Vec<f64> = field
                .correction_cm(&s.v)
                .iter()
                .zip(&residual)
                .map(|(p, r)| r - p)
                .collect();
            let ms = |d: &[f64]| d.iter().map(|d| d * d).sum::<f64>() / d.len() as f64;
            SampleResidual {
                name: name.clone(),
                v: s.v.0.clone(),
                before_mse_cm2: ms(&residual),
                after_mse_cm2: ms(&left),
                max_abs_after_cm: left.iter().fold(0.0, |a, d| a.max(d.abs())),
            }
        })
        .collect();
    let mean = |f: fn(&SampleResidual) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
    let outcome = CalibrateOutcome {
        before_mse_cm2: mean(|r| r.before_mse_cm2),
        after_mse_cm2: mean(|r| r.after_mse_cm2),
        max_abs_after_cm: rows.iter().fold(0.0, |a, r| a.max(r.max_abs_after_cm)),
        learning_rate: field.learning_rate,
        epochs: cfg.calibration.epochs,
        samples: rows,
    };
    let mut w = create(&out.join("correction.csv"))?;
    field.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&out.join("residuals.csv"))?;
    writeln!(w, "sample,before_mse_cm2,after_mse_cm2,max_abs_after_cm")?;
    for r in &outcome.samples {
        writeln!(
            w,
            "{},{},{},{}",
            r.name, r.before_mse_cm2, r.after_mse_cm2, r.max_abs_after_cm
        )?;
    }
    w.flush()?;
    write_metrics(out, "calibrate", cfg, &outcome)?;
    Ok(outcome)
}
