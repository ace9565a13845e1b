mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::{Outcome, RunFlags};
use config::ExperimentConfig;

/// Warm-water supply experiments: predictor fitting, closed-loop runs,
/// feasibility sweeps and predictor accuracy reports.
#[derive(Debug, Parser)]
#[command(name = "wws", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON experiment configuration; `WWS_*` variables override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate snapshot pairs and fit a predictor.
    Fit(FitArgs),
    /// Closed-loop simulation from a uniform initial temperature.
    Run(RunArgs),
    /// Feasibility over initial temperatures and supply-window starts.
    Sweep(SweepArgs),
    /// Predictor rollouts against the plant.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Number of snapshot pairs.
    #[arg(long = "K")]
    samples: Option<usize>,
    /// Sampling period, s.
    #[arg(long)]
    h: Option<f64>,
    /// Initial-state range, °C.
    #[arg(long, value_delimiter = ',', num_args = 2, value_names = ["LO", "HI"])]
    state_range: Option<Vec<f64>>,
    /// Band of the on-input, kW.
    #[arg(long, value_delimiter = ',', num_args = 2, value_names = ["LO", "HI"])]
    u_band: Option<Vec<f64>>,
    /// Probability of an off sample.
    #[arg(long)]
    p_off: Option<f64>,
    /// Ambient disturbance, °C.
    #[arg(long)]
    w0: Option<f64>,
    /// Linearize at an equilibrium instead of fitting EDMD.
    #[arg(long)]
    local: bool,
    /// Equilibrium output for `--local`, °C.
    #[arg(long)]
    target_y: Option<f64>,
}

#[derive(Debug, Args)]
struct PredictorArg {
    /// Predictor file; one is fitted from the configuration when absent.
    #[arg(long)]
    predictor: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    predictor: PredictorArg,
    /// Drop every temporal-logic constraint.
    #[arg(long)]
    no_stl: bool,
    /// Write the step-0 problem as `step0.lp`.
    #[arg(long)]
    dump_lp: bool,
    /// Write `trace.svg`.
    #[arg(long)]
    svg: bool,
    /// Uniform initial temperature, °C.
    #[arg(long)]
    initial_temp: Option<f64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    predictor: PredictorArg,
    /// Row values, °C.
    #[arg(long, value_delimiter = ',')]
    initial_temps: Option<Vec<f64>>,
    /// Column values, s.
    #[arg(long, value_delimiter = ',')]
    start_times: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    predictor: PredictorArg,
    /// Further predictor files reported side by side.
    #[arg(long)]
    compare: Vec<PathBuf>,
    #[arg(long)]
    rollouts: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
}

fn pair(v: &[f64]) -> [f64; 2] {
    [v[0], v[1]]
}

fn configure(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(cli.common.config.as_deref(), std::env::vars())?;
    if let Some(seed) = cli.common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.common.out {
        cfg.out = out.clone();
    }
    let set_predictor = |cfg: &mut ExperimentConfig, p: &PredictorArg| {
        if let Some(path) = &p.predictor {
            cfg.predictor = Some(path.clone());
        }
    };
    match &cli.command {
        Command::Fit(a) => {
            let ds = &mut cfg.fit.dataset;
            if let Some(v) = a.samples {
                ds.samples = v;
            }
            if let Some(v) = a.h {
                ds.h = v;
            }
            if let Some(v) = &a.state_range {
                ds.state_range = pair(v);
            }
            if let Some(v) = &a.u_band {
                ds.u_band = pair(v);
            }
            if let Some(v) = a.p_off {
                ds.p_off = v;
            }
            if let Some(v) = a.w0 {
                ds.w0 = v;
            }
            cfg.fit.local |= a.local;
            if let Some(v) = a.target_y {
                cfg.fit.target_y = v;
            }
        }
        Command::Run(a) => {
            set_predictor(&mut cfg, &a.predictor);
            if a.no_stl {
                cfg.controller.specs.clear();
                cfg.spec_file = None;
            }
            if let Some(v) = a.initial_temp {
                cfg.initial_temp = v;
            }
        }
        Command::Sweep(a) => {
            set_predictor(&mut cfg, &a.predictor);
            if let Some(v) = &a.initial_temps {
                cfg.sweep.initial_temps = v.clone();
            }
            if let Some(v) = &a.start_times {
                cfg.sweep.start_times = v.clone();
            }
        }
        Command::Bench(a) => {
            set_predictor(&mut cfg, &a.predictor);
            cfg.bench.compare.extend(a.compare.iter().cloned());
            if let Some(v) = a.rollouts {
                cfg.bench.rollouts = v;
            }
            if let Some(v) = a.steps {
                cfg.bench.steps = v;
            }
        }
    }
    cfg.finalize()
}

fn execute(cli: &Cli) -> Result<Outcome> {
    let cfg = configure(cli)?;
    match &cli.command {
        Command::Fit(_) => commands::fit(&cfg),
        Command::Run(a) => commands::run(
            &cfg,
            &RunFlags {
                dump_lp: a.dump_lp,
                svg: a.svg,
            },
        ),
        Command::Sweep(_) => commands::sweep(&cfg),
        Command::Bench(_) => commands::bench(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Infeasible) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
