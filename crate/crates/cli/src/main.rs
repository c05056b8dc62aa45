mod config;
mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use saddlefree_core::analysis::{FinderConfig, SurveyConfig};
use saddlefree_core::data::{write_jsonl, Tabular};
use saddlefree_core::experiments::{
    load_data, mlp_objective, run_compare, run_landscape, run_survey, run_wigner, train_mlp,
    write_table, CompareConfig, DataConfig, LandscapeConfig, RunSpec, SurveyExperimentConfig,
    WignerConfig,
};
use saddlefree_core::optimizers::{CurvatureTracking, EpochRecord, Minibatch, RunStatus};
use saddlefree_core::TrainTrace;

use config::{CompareArgs, DataArgs, LandscapeArgs, SurveyArgs, TrainArgs, WignerArgs};
use plot::{Plot, Series, Style};

pub const DATA_DIR_ENV: &str = "SADDLEFREE_DATA_DIR";

#[derive(Parser)]
#[command(
    name = "saddlefree",
    version,
    about = "Saddle-free Newton experiments at desk scale"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one MLP and plot loss, error and extreme curvature per epoch.
    Train(TrainArgs),
    /// Compare methods across hidden sizes and seeds.
    Compare(CompareArgs),
    /// Find critical points and relate their index to the training error.
    Survey(SurveyArgs),
    /// Run every method on a low-dimensional test function.
    Landscape(LandscapeArgs),
    /// Check GOE spectra against the semicircle law.
    Wigner(WignerArgs),
}

/// Outcome of a command that ran to the end but had failing parts.
struct Partial(String);

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => config::resolve(&a, a.config.as_deref()).and_then(|a| cmd_train(&a)),
        Command::Compare(a) => {
            config::resolve(&a, a.config.as_deref()).and_then(|a| cmd_compare(&a))
        }
        Command::Survey(a) => config::resolve(&a, a.config.as_deref()).and_then(|a| cmd_survey(&a)),
        Command::Landscape(a) => {
            config::resolve(&a, a.config.as_deref()).and_then(|a| cmd_landscape(&a))
        }
        Command::Wigner(a) => config::resolve(&a, a.config.as_deref()).and_then(|a| cmd_wigner(&a)),
    };
    match result {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(Partial(msg))) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn data_config(a: &DataArgs) -> DataConfig {
    let d = DataConfig::default();
    DataConfig {
        kind: a.dataset.unwrap_or(d.kind),
        data_dir: a
            .data_dir
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from)),
        subsample: a.subsample.unwrap_or(d.subsample),
        seed: a.data_seed.unwrap_or(d.seed),
    }
}

fn out_dir(out: &Option<PathBuf>, command: &str) -> Result<PathBuf> {
    let dir = out
        .clone()
        .unwrap_or_else(|| Path::new("out").join(command));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_svg(dir: &Path, name: &str, plot: &Plot, provenance: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, plot.render(provenance)).with_context(|| format!("writing {}", path.display()))
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        log::info!("wrote {}", p.display());
    }
}

fn epoch_series(t: &TrainTrace, f: impl Fn(&EpochRecord) -> Option<f64>) -> Vec<(f64, f64)> {
    t.records
        .iter()
        .filter_map(|r| f(r).map(|v| (r.epoch as f64, v)))
        .collect()
}

fn cmd_train(a: &TrainArgs) -> Result<Option<Partial>> {
    let method = a.method.context("--method is required")?;
    let hidden = a.hidden.unwrap_or(5);
    let seed = a.seed.unwrap_or(0);
    let mut spec = RunSpec::new(method, hidden, seed, a.epochs.unwrap_or(50));
    if let Some(g) = &a.damping_grid {
        spec.step.damping_grid = g.clone();
    }
    if let Some(lr) = a.lr {
        spec.step.learning_rate = lr;
    }
    if let Some(mu) = a.momentum {
        spec.step.momentum = mu;
    }
    if let Some(mb) = a.minibatch {
        spec.step.minibatch = if mb == 0 {
            Minibatch::Full
        } else {
            Minibatch::Size(mb)
        };
    }
    spec.curvature = CurvatureTracking {
        every: a.curvature_every.unwrap_or(1),
        ..CurvatureTracking::default()
    };
    spec.step.validate()?;
    let data = data_config(&a.data);
    let dir = out_dir(&a.out, "train")?;

    let ds = load_data(&data)?;
    let obj = mlp_objective(&ds, hidden)?;
    log::info!(
        "training {method} with {hidden} hidden units on {} examples",
        ds.len()
    );
    let trace = train_mlp(&obj, &ds, &spec)?.trace;

    let provenance = serde_json::to_string(&serde_json::json!({
        "command": "train",
        "run": spec,
        "data": data,
        "dataset_checksum": ds.checksum(),
    }))?;
    let config_path = dir.join("config.json");
    fs::write(&config_path, format!("{provenance}\n"))?;
    let trace_path = dir.join("trace.jsonl");
    write_jsonl(&trace_path, std::slice::from_ref(&trace), false)?;
    let cols = EpochRecord::columns();
    let rows: Vec<Vec<String>> = trace
        .records
        .iter()
        .map(|r| {
            cols.iter()
                .map(|c| r.cell(c).expect("known column"))
                .collect()
        })
        .collect();
    let csv_path = dir.join("epochs.csv");
    write_table(&csv_path, &provenance, cols, &rows)?;
    report(&[config_path, trace_path, csv_path]);

    let name = method.to_string();
    write_svg(
        &dir,
        "loss.svg",
        &Plot::new("Training loss", "epoch", "loss")
            .log_y()
            .with(Series::line(&name, epoch_series(&trace, |r| Some(r.loss)))),
        &provenance,
    )?;
    write_svg(
        &dir,
        "error.svg",
        &Plot::new("Training error", "epoch", "error rate")
            .with(Series::line(&name, epoch_series(&trace, |r| r.error_rate))),
        &provenance,
    )?;
    write_svg(
        &dir,
        "curvature.svg",
        &Plot::new("Extreme Hessian eigenvalues", "epoch", "|lambda|")
            .log_y()
            .with(Series::line(
                "lambda_pos",
                epoch_series(&trace, |r| r.lambda_pos),
            ))
            .with(Series::line(
                "|lambda_neg|",
                epoch_series(&trace, |r| r.lambda_neg.map(f64::abs)),
            )),
        &provenance,
    )?;

    Ok(match &trace.status {
        RunStatus::Failed { epoch, reason } => {
            Some(Partial(format!("run failed at epoch {epoch}: {reason}")))
        }
        _ => None,
    })
}

fn cmd_compare(a: &CompareArgs) -> Result<Option<Partial>> {
    let d = CompareConfig::default();
    let config = CompareConfig {
        hidden: a.hidden.clone().unwrap_or(d.hidden),
        methods: a.methods.clone().unwrap_or(d.methods),
        seeds: a.seeds.unwrap_or(d.seeds),
        first_seed: a.seed.unwrap_or(d.first_seed),
        epochs: a.epochs.unwrap_or(d.epochs),
        damping_grid: a.damping_grid.clone().unwrap_or(d.damping_grid),
        curvature_every: a.curvature_every.unwrap_or(d.curvature_every),
        power: d.power,
        sgd_search_trials: a.sgd_search.or(d.sgd_search_trials),
        data: data_config(&a.data),
        workers: a.workers.unwrap_or(d.workers),
    };
    config.validate()?;
    let dir = out_dir(&a.out, "compare")?;
    log::info!(
        "comparing {} methods x {} sizes x {} seeds for {} epochs",
        config.methods.len(),
        config.hidden.len(),
        config.seeds,
        config.epochs
    );
    let result = run_compare(&config)?;
    report(&result.write(&dir)?);
    let provenance = serde_json::to_string(&serde_json::json!({
        "command": "compare",
        "config": config,
        "dataset_checksum": result.dataset_checksum,
    }))?;
    let mut plot = Plot::new(
        "Best training error by model size",
        "hidden units",
        "median min error",
    );
    for &m in &config.methods {
        let pts: Vec<(f64, f64)> = config
            .hidden
            .iter()
            .filter_map(|&h| result.cell(m, h)?.median_min_error.map(|e| (h as f64, e)))
            .collect();
        plot = plot.with(Series::line(m.to_string(), pts));
    }
    write_svg(&dir, "min_error.svg", &plot, &provenance)?;
    let mut plot = Plot::new(
        "Final negative curvature",
        "hidden units",
        "median |lambda_neg|",
    )
    .log_y();
    for &m in &config.methods {
        let pts: Vec<(f64, f64)> = config
            .hidden
            .iter()
            .filter_map(|&h| {
                result
                    .cell(m, h)?
                    .median_abs_lambda_neg
                    .map(|e| (h as f64, e))
            })
            .collect();
        plot = plot.with(Series::line(m.to_string(), pts));
    }
    write_svg(&dir, "lambda_neg.svg", &plot, &provenance)?;

    let failed = result.failures();
    Ok((!failed.is_empty()).then(|| {
        let cells: Vec<String> = failed
            .iter()
            .map(|r| format!("{} h={} seed={}: {}", r.method, r.hidden, r.seed, r.status))
            .collect();
        Partial(format!(
            "{} run(s) failed: {}",
            cells.len(),
            cells.join("; ")
        ))
    }))
}

fn cmd_survey(a: &SurveyArgs) -> Result<Option<Partial>> {
    let d = SurveyExperimentConfig::default();
    let jobs = a.jobs.unwrap_or(d.survey.n_trajectory_jobs);
    let uniform_range = match a.uniform_range.as_deref() {
        None => d.survey.uniform_range,
        Some([lo, hi]) => (*lo, *hi),
        Some(_) => bail!("--uniform-range takes two values: LO,HI"),
    };
    let config = SurveyExperimentConfig {
        hidden: a.hidden.unwrap_or(d.hidden),
        runs: a.runs.unwrap_or(d.runs),
        run_method: a.run_method.unwrap_or(d.run_method),
        first_seed: a.seed.unwrap_or(d.first_seed),
        damping_grid: a.damping_grid.clone().unwrap_or(d.damping_grid),
        survey: SurveyConfig {
            n_trajectory_jobs: jobs,
            n_uniform_jobs: a.uniform_jobs.unwrap_or(jobs),
            amplitudes: a.amplitudes.clone().unwrap_or(d.survey.amplitudes),
            epoch_range: (0, a.epochs.unwrap_or(d.survey.epoch_range.1)),
            uniform_range,
            seed: a.seed.unwrap_or(d.survey.seed),
            finder: FinderConfig {
                max_iters: a.max_iters.unwrap_or(d.survey.finder.max_iters),
                grad_tol: a.grad_tol.unwrap_or(d.survey.finder.grad_tol),
                ..d.survey.finder
            },
            workers: a.workers.unwrap_or(d.survey.workers),
        },
        converged_tol: a.converged_tol.unwrap_or(d.converged_tol),
        histogram_bins: a.bins.unwrap_or(d.histogram_bins),
        quantiles: d.quantiles,
        data: data_config(&a.data),
    };
    let dir = out_dir(&a.out, "survey")?;
    log::info!(
        "surveying {}+{} jobs around {} runs",
        config.survey.n_trajectory_jobs,
        config.survey.n_uniform_jobs,
        config.runs
    );
    let result = run_survey(&config)?;
    report(&result.write(&dir)?);
    let provenance = serde_json::to_string(&serde_json::json!({
        "command": "survey",
        "config": config,
        "dataset_checksum": result.dataset_checksum,
    }))?;

    let pts = &result.outcome.points;
    let logs: Vec<f64> = pts
        .iter()
        .map(|p| p.grad_norm.max(1e-300).log10())
        .collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shades: Vec<f64> = logs
        .iter()
        .map(|l| if hi > lo { (l - lo) / (hi - lo) } else { 0.0 })
        .collect();
    let scatter = Series {
        label: "darker = smaller gradient".into(),
        style: Style::Points,
        points: pts
            .iter()
            .map(|p| (p.index, p.error_rate.unwrap_or(f64::NAN)))
            .collect(),
        shades: Some(shades),
    };
    write_svg(
        &dir,
        "index_vs_error.svg",
        &Plot::new("Training error versus index", "index", "training error").with(scatter),
        &provenance,
    )?;
    for s in &result.spectra {
        let h = &s.histogram;
        let mut steps: Vec<(f64, f64)> = h
            .edges
            .iter()
            .copied()
            .zip(h.heights.iter().copied())
            .collect();
        steps.push((*h.edges.last().expect("edges"), 0.0));
        let series = Series {
            label: format!("loss {:.4}", s.loss),
            style: Style::Steps,
            points: steps,
            shades: None,
        };
        let name = format!("spectrum_q{:02}.svg", (s.quantile * 100.0).round() as u32);
        let title = format!(
            "Hessian spectrum at loss quantile {} (index {:.3})",
            s.quantile, s.index
        );
        write_svg(
            &dir,
            &name,
            &Plot::new(title, "eigenvalue", "log10(count + 1)").with(series),
            &provenance,
        )?;
    }
    match &result.correlation_converged {
        Ok(r) => log::info!(
            "spearman(index, loss) over {} converged points: {r:.3}",
            result.converged().len()
        ),
        Err(e) => log::info!("no correlation over converged points: {e}"),
    }

    let failures = &result.outcome.failures;
    let failed_runs: Vec<String> = result
        .run_traces
        .iter()
        .enumerate()
        .filter_map(|(k, t)| match &t.status {
            RunStatus::Failed { epoch, reason } => {
                Some(format!("run {k} at epoch {epoch}: {reason}"))
            }
            _ => None,
        })
        .collect();
    Ok((!failures.is_empty() || !failed_runs.is_empty()).then(|| {
        let mut msgs = failed_runs;
        msgs.extend(
            failures
                .iter()
                .map(|f| format!("job {}: {}", f.job_id, f.reason)),
        );
        Partial(format!("{} failure(s): {}", msgs.len(), msgs.join("; ")))
    }))
}

fn cmd_landscape(a: &LandscapeArgs) -> Result<Option<Partial>> {
    let d = LandscapeConfig::default();
    let config = LandscapeConfig {
        function: a.function.unwrap_or(d.function),
        start: a.start.clone(),
        steps: a.steps.unwrap_or(d.steps),
        methods: a.methods.clone().unwrap_or(d.methods),
        learning_rate: a.lr.unwrap_or(d.learning_rate),
        momentum: a.momentum.unwrap_or(d.momentum),
        damping_grid: a.damping_grid.clone().unwrap_or(d.damping_grid),
    };
    let dir = out_dir(&a.out, "landscape")?;
    let result = run_landscape(&config)?;
    report(&result.write(&dir)?);
    let provenance =
        serde_json::to_string(&serde_json::json!({ "command": "landscape", "config": config }))?;
    let dim = result.start.theta.len();
    let mut plot = if dim == 2 {
        Plot::new(format!("Trajectories on {}", config.function), "x", "y")
    } else {
        Plot::new(
            format!("Trajectories on {}", config.function),
            "step",
            "theta",
        )
    };
    for t in &result.trajectories {
        let pts = t
            .points
            .iter()
            .enumerate()
            .map(|(k, p)| {
                if dim == 2 {
                    (p[0], p[1])
                } else {
                    (k as f64, p[0])
                }
            })
            .collect();
        plot = plot.with(Series::line(t.method.to_string(), pts));
    }
    write_svg(&dir, "trajectories.svg", &plot, &provenance)?;
    if result.start.critical {
        log::info!(
            "start {:?} is a critical point (eigenvalues {:?})",
            result.start.theta,
            result.start.eigenvalues
        );
    }
    let failed: Vec<String> = result
        .trajectories
        .iter()
        .filter_map(|t| match &t.status {
            RunStatus::Failed { epoch, reason } => {
                Some(format!("{} at step {epoch}: {reason}", t.method))
            }
            _ => None,
        })
        .collect();
    Ok((!failed.is_empty()).then(|| Partial(format!("method(s) failed: {}", failed.join("; ")))))
}

fn cmd_wigner(a: &WignerArgs) -> Result<Option<Partial>> {
    let d = WignerConfig::default();
    let config = WignerConfig {
        n: a.n.unwrap_or(d.n),
        seed: a.seed.unwrap_or(d.seed),
        draws: a.draws.unwrap_or(d.draws),
        small_sizes: a.small_sizes.clone().unwrap_or(d.small_sizes),
    };
    let dir = out_dir(&a.out, "wigner")?;
    let result = run_wigner(&config)?;
    report(&result.write(&dir)?);
    let provenance =
        serde_json::to_string(&serde_json::json!({ "command": "wigner", "config": config }))?;
    let n = result.eigenvalues.len() as f64;
    let empirical = result
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &l)| (l, (i + 1) as f64 / n))
        .collect();
    let theory = (0..=200)
        .map(|k| {
            let x = -2.2 + 4.4 * k as f64 / 200.0;
            (x, saddlefree_core::landscapes::semicircle_cdf(x, 2.0))
        })
        .collect();
    write_svg(
        &dir,
        "semicircle.svg",
        &Plot::new(
            format!(
                "GOE spectrum, n = {} (KS {:.4})",
                config.n, result.ks_distance
            ),
            "eigenvalue",
            "CDF",
        )
        .with(Series::line("empirical", empirical))
        .with(Series::line("semicircle", theory)),
        &provenance,
    )?;
    log::info!(
        "KS {:.4}, fraction negative {:.4}, mean {:.4}",
        result.ks_distance,
        result.fraction_negative,
        result.mean
    );
    Ok(None)
}
