use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use wws_core::mpc::{
    assemble_step, feasibility_sweep, is_monotone, run_closed_loop, History, RunOptions, RunSummary,
};
use wws_core::predictor::{
    find_equilibrium, fit_edmd, generate_dataset, linearize_local, Equilibrium, FitDiagnostics,
    LinearPredictor, ObservableSet,
};
use wws_core::{Plant, State};

use crate::config::ExperimentConfig;
use crate::svg::{self, Panel};

/// Process outcome of a subcommand that completed without error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Infeasible,
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn to_json(value: &impl Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[derive(Serialize)]
struct FitReport<'a> {
    method: &'a str,
    seed: u64,
    dataset: &'a wws_core::predictor::DatasetConfig,
    diagnostics: Option<FitDiagnostics>,
    equilibrium: Option<Equilibrium>,
    lifted_dim: usize,
}

fn fit_predictor(cfg: &ExperimentConfig) -> Result<(LinearPredictor, Option<FitDiagnostics>, Option<Equilibrium>)> {
    let model = cfg.plant_model()?;
    if cfg.fit.local {
        let eq = find_equilibrium(&model, cfg.fit.dataset.w0, cfg.fit.target_y)
            .with_context(|| format!("no equilibrium with output {} °C", cfg.fit.target_y))?;
        if !eq.input_in_range {
            eprintln!(
                "warning: the {} °C operating point needs u* = {:.4e} kW, outside the heat pump range",
                cfg.fit.target_y, eq.u
            );
        }
        let p = linearize_local(&model, &eq.x, eq.u, eq.w, cfg.fit.dataset.h).context("linearization failed")?;
        return Ok((p, None, Some(eq)));
    }
    let data = generate_dataset(&model, &cfg.fit.dataset).context("dataset generation failed")?;
    let (p, diag) = fit_edmd(&ObservableSet::default(), &data).context("EDMD fit failed")?;
    if diag.rank_deficient {
        eprintln!("warning: regressor is rank deficient ({diag:?})");
    }
    Ok((p, Some(diag), None))
}

fn predictor(cfg: &ExperimentConfig) -> Result<LinearPredictor> {
    match &cfg.predictor {
        Some(path) => LinearPredictor::load(path).with_context(|| format!("loading predictor {}", path.display())),
        None => {
            eprintln!("no predictor file given; fitting one with seed {}", cfg.seed);
            Ok(fit_predictor(cfg)?.0)
        }
    }
}

pub fn fit(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (p, diagnostics, equilibrium) = fit_predictor(cfg)?;
    let report = FitReport {
        method: p.meta.method.as_deref().unwrap_or("edmd"),
        seed: cfg.seed,
        dataset: &cfg.fit.dataset,
        diagnostics,
        equilibrium,
        lifted_dim: p.dim(),
    };
    write(&cfg.out, "fit_report.json", to_json(&report)?)?;
    let path = write(&cfg.out, "predictor.json", p.to_json())?;
    println!("{}", path.display());
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct RunReport<'a> {
    seed: u64,
    initial_temp: f64,
    predictor_method: Option<&'a str>,
    specs: &'a [String],
    #[serde(flatten)]
    summary: RunSummary,
}

pub struct RunFlags {
    pub dump_lp: bool,
    pub svg: bool,
}

pub fn run(cfg: &ExperimentConfig, flags: &RunFlags) -> Result<Outcome> {
    let plant = Plant::new(cfg.plant_model()?, cfg.integrator);
    let predictor = predictor(cfg)?;
    let x0: State = [cfg.initial_temp; 6];
    let ctrl = &cfg.controller;

    if flags.dump_lp {
        let formulas = ctrl.formulas()?;
        let history = History {
            y: vec![wws_core::output(&x0)],
            u: Vec::new(),
        };
        let step = assemble_step(ctrl, &formulas, &predictor, &history, &x0, 0)?;
        write(&cfg.out, "step0.lp", step.problem.to_lp_string())?;
    }

    let trace = run_closed_loop(&plant, ctrl, &predictor, &x0, RunOptions::default())?;
    // Written before anything else can fail so an aborted run leaves its rows.
    let trace_path = write(&cfg.out, "trace.csv", trace.to_csv())?;
    let summary = trace.summary(420.0)?;
    let timing = json!({
        "solve_seconds": trace.rows.iter().map(|r| r.solve_seconds).collect::<Vec<_>>(),
        "total_solve_seconds": trace.rows.iter().map(|r| r.solve_seconds).sum::<f64>(),
    });
    write(&cfg.out, "timing.json", to_json(&timing)?)?;
    let infeasible = !summary.infeasible_steps.is_empty() || summary.abort.is_some();
    let report = RunReport {
        seed: cfg.seed,
        initial_temp: cfg.initial_temp,
        predictor_method: predictor.meta.method.as_deref(),
        specs: &ctrl.specs,
        summary,
    };
    write(&cfg.out, "summary.json", to_json(&report)?)?;

    if flags.svg {
        let t: Vec<f64> = trace.rows.iter().map(|r| r.t).collect();
        let panels = [
            Panel {
                title: "output y (°C)",
                series: vec![("y", t.iter().copied().zip(trace.outputs()).collect())],
                guides: vec![40.0],
            },
            Panel {
                title: "input u (kW)",
                series: vec![("u", t.iter().copied().zip(trace.inputs()).collect())],
                guides: vec![21.2, 26.5],
            },
        ];
        write(&cfg.out, "trace.svg", svg::render(&panels))?;
    }

    println!("{}", trace_path.display());
    if infeasible {
        eprintln!(
            "run had steps without an optimal plan: {:?}{}",
            report.summary.infeasible_steps,
            report.summary.abort.as_deref().map(|a| format!(" ({a})")).unwrap_or_default()
        );
        return Ok(Outcome::Infeasible);
    }
    Ok(Outcome::Success)
}

pub fn sweep(cfg: &ExperimentConfig) -> Result<Outcome> {
    let plant = Plant::new(cfg.plant_model()?, cfg.integrator);
    let predictor = predictor(cfg)?;
    let table = feasibility_sweep(&plant, &cfg.controller, &predictor, &cfg.sweep)?;
    let path = write(&cfg.out, "sweep.csv", table.to_csv())?;
    let notes = json!({
        "seed": cfg.seed,
        "monotone": is_monotone(&table),
        "initial_temps": table.initial_temps,
        "start_times": table.start_times,
        "notes": table.notes,
    });
    write(&cfg.out, "sweep_notes.json", to_json(&notes)?)?;
    println!("{}", path.display());
    Ok(Outcome::Success)
}

#[derive(Debug, Serialize)]
struct PredictorAccuracy {
    name: String,
    method: Option<String>,
    /// Largest `‖Cψ(x) − x‖∞` over the sampled initial states.
    reconstruction_error: f64,
    /// `rmse[k][i]`: error of state `i` after `k` steps.
    rmse: Vec<[f64; 6]>,
    /// Distance of each initial state from the operating point (local
    /// predictors only) with that rollout's final output error.
    distance_vs_error: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Serialize)]
struct BenchReport {
    seed: u64,
    rollouts: usize,
    steps: usize,
    state_range: [f64; 2],
    predictors: Vec<PredictorAccuracy>,
}

pub fn bench(cfg: &ExperimentConfig) -> Result<Outcome> {
    let plant = Plant::new(cfg.plant_model()?, cfg.integrator);
    let mut named = vec![(
        cfg.predictor
            .as_ref()
            .map_or_else(|| "fitted".to_string(), |p| p.display().to_string()),
        predictor(cfg)?,
    )];
    for path in &cfg.bench.compare {
        let p = LinearPredictor::load(path).with_context(|| format!("loading predictor {}", path.display()))?;
        named.push((path.display().to_string(), p));
    }

    let ds = &cfg.fit.dataset;
    let (n, steps) = (cfg.bench.rollouts, cfg.bench.steps);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cases = Vec::with_capacity(n);
    for _ in 0..n {
        let x0: State = std::array::from_fn(|_| rng.random_range(ds.state_range[0]..=ds.state_range[1]));
        let u: Vec<f64> = (0..steps)
            .map(|_| {
                if rng.random_bool(ds.p_off) {
                    0.0
                } else {
                    rng.random_range(ds.u_band[0]..=ds.u_band[1])
                }
            })
            .collect();
        let w = vec![ds.w0; steps];
        let truth = plant.simulate(&x0, &u, &w, ds.h)?;
        cases.push((x0, u, w, truth));
    }

    let mut predictors = Vec::new();
    for (name, p) in named {
        let mut sq = vec![[0.0; 6]; steps + 1];
        let mut recon = 0.0f64;
        let mut dist = p.operating_point.as_ref().map(|_| Vec::with_capacity(n));
        for (x0, u, w, truth) in &cases {
            let lifted = p.lift(x0);
            let back = p.reconstruct(&lifted);
            recon = recon.max(x0.iter().zip(back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            let pred = p.predict(x0, u, w)?;
            for (k, (xp, xt)) in pred.iter().zip(truth).enumerate() {
                for i in 0..6 {
                    sq[k][i] += (xp[i] - xt[i]).powi(2);
                }
            }
            if let (Some(d), Some(op)) = (dist.as_mut(), p.operating_point.as_ref()) {
                let r = x0.iter().zip(op.x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let e = (pred[steps][4] - truth[steps][4]).abs();
                d.push([r, e]);
            }
        }
        let rmse = sq.iter().map(|row| row.map(|s| (s / n as f64).sqrt())).collect();
        predictors.push(PredictorAccuracy {
            name,
            method: p.meta.method.clone(),
            reconstruction_error: recon,
            rmse,
            distance_vs_error: dist,
        });
    }
    let report = BenchReport {
        seed: cfg.seed,
        rollouts: n,
        steps,
        state_range: ds.state_range,
        predictors,
    };
    let path = write(&cfg.out, "bench.json", to_json(&report)?)?;
    println!("{}", path.display());
    Ok(Outcome::Success)
}
