//! `softcrawl` scenario runner.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use softcrawl::scenario::{self, RoofSection, RoofSpec, ScenarioConfig, StopReason};
use softcrawl::Error;

#[derive(Parser)]
#[command(name = "softcrawl", version = scenario::VERSION, about = "Shape control and roof crawling for a piezoelectric inchworm robot")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track target shapes before and after prior calibration.
    ShapeControl {
        #[command(flatten)]
        common: Common,
        /// Target shape CSV (`x_cm,y_cm`); defaults to the configured phase targets.
        #[arg(long)]
        target: Option<PathBuf>,
    },
    /// Crawl under the configured roof.
    Crawl(Common),
    /// Stride against bending height, and against position under a roof.
    SpeedMap(Common),
    /// Fit a correction field from sensed reference shapes.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Directory with `voltages.csv` and sensed shape CSVs; sampled from
        /// the simulated plant when omitted.
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Crawl the built-in slanted and sinusoidal roofs.
    SimulateRoofs(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario JSON; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `run.out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the optimizer and the plant (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Roof: step, slant, sine or file:PATH (overrides the config).
    #[arg(long)]
    roof: Option<String>,
}

const CONFIG_ERROR: u8 = 2;
const SOLVER_FAILURE: u8 = 3;
const SAFETY_VIOLATION: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonConvergence { .. }
        | Error::Unbounded(_)
        | Error::NoBracket(_)
        | Error::Factorization
        | Error::NonFiniteLoss { .. } => SOLVER_FAILURE,
        Error::Violation { .. } => SAFETY_VIOLATION,
        _ => CONFIG_ERROR,
    }
}

impl Common {
    fn load(&self) -> softcrawl::Result<(ScenarioConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::load(path)?,
            None => ScenarioConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.set_seed(seed);
        }
        if let Some(flag) = &self.roof {
            let profile = RoofSpec::from_flag(flag)?;
            let margin_cm = cfg.roof.as_ref().map_or(0.1, |r| r.margin_cm);
            cfg.roof = Some(RoofSection { margin_cm, profile });
        }
        cfg.validate()?;
        let out = self.out.clone().unwrap_or_else(|| cfg.run.out_dir.clone());
        Ok((cfg, out))
    }
}

fn crawl_summary(name: &str, o: &scenario::CrawlOutcome, out: &Path) {
    println!(
        "{name}: {} cycles, x0 {:.2} -> {:.2} cm, mean stride {:.4} cm/cycle, stop {:?}, violations {}, fallbacks {} ({})",
        o.cycles,
        o.start_x0_cm,
        o.final_x0_cm,
        o.mean_stride_cm,
        o.stop,
        o.violations,
        o.fallbacks,
        out.display()
    );
}

fn run(cli: Cli) -> softcrawl::Result<u8> {
    match cli.command {
        Command::ShapeControl { common, target } => {
            let (cfg, out) = common.load()?;
            let o = scenario::run_shape_control(&cfg, target.as_deref(), &out)?;
            for t in &o.targets {
                println!(
                    "target {}: pre {:.4} cm², post {:.4} cm²",
                    t.index, t.pre_mse_cm2, t.post_mse_cm2
                );
            }
            println!(
                "mean: pre {:.4} cm², post {:.4} cm² ({})",
                o.pre_mse_mean_cm2,
                o.post_mse_mean_cm2,
                out.display()
            );
            Ok(0)
        }
        Command::Crawl(common) => {
            let (cfg, out) = common.load()?;
            let o = scenario::run_crawl(&cfg, &out)?;
            crawl_summary("crawl", &o, &out);
            Ok(if o.stop == StopReason::Violation {
                SAFETY_VIOLATION
            } else {
                0
            })
        }
        Command::SpeedMap(common) => {
            let (cfg, out) = common.load()?;
            let o = scenario::run_speed_map(&cfg, &out)?;
            println!(
                "speed map: {} heights, stride = {:.5} h² (R² {:.5}){} ({})",
                o.height_table.len(),
                o.quadratic_k_per_cm,
                o.quadratic_r2,
                o.positions
                    .as_ref()
                    .map_or(String::new(), |p| format!(", {} positions", p.len())),
                out.display()
            );
            Ok(0)
        }
        Command::Calibrate { common, samples } => {
            let (cfg, out) = common.load()?;
            let o = scenario::run_calibrate(&cfg, samples.as_deref(), &out)?;
            println!(
                "calibrated on {} samples: residual {:.6} -> {:.6} cm², max {:.6} cm ({})",
                o.samples.len(),
                o.before_mse_cm2,
                o.after_mse_cm2,
                o.max_abs_after_cm,
                out.display()
            );
            Ok(0)
        }
        Command::SimulateRoofs(common) => {
            let (cfg, out) = common.load()?;
            let results = scenario::run_simulate_roofs(&cfg, &out)?;
            let mut code = 0;
            for (name, o) in &results {
                crawl_summary(name, o, &out.join(name));
                if o.stop == StopReason::Violation {
                    code = SAFETY_VIOLATION;
                }
            }
            Ok(code)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
