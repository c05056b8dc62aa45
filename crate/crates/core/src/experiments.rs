//! Experiment drivers: each takes a serializable config, returns its results
//! and can write them as deterministic data files.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    critical_point_survey, index_error_correlation, spectrum_histogram, CriticalPoint, Histogram,
    RunCheckpoints, SurveyConfig, SurveyOutcome, SurveyRecord,
};
use crate::data::{load_mnist10, synthetic_dataset, write_jsonl, Dataset, Tabular};
use crate::error::{Error, Result};
use crate::landscapes::{ks_distance, sample_goe, semicircle_cdf, Landscape, ZooFunction};
use crate::linalg::{sym_eig, PowerOptions};
use crate::mlp::{init_params, Mlp, MlpObjective, MlpShape};
use crate::optimizers::{
    train, CurvatureTracking, Method, Minibatch, RunStatus, StepConfig, TrainConfig, TrainOutcome,
    TrainTrace, DEFAULT_DAMPING_GRID,
};
use crate::param::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Mnist10,
    Synthetic,
}

impl DatasetKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mnist10" => Ok(Self::Mnist10),
            "synthetic" => Ok(Self::Synthetic),
            _ => Err(Error::InvalidInput(format!(
                "unknown dataset `{s}` (expected mnist10 or synthetic)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mnist10 => "mnist10",
            Self::Synthetic => "synthetic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub kind: DatasetKind,
    /// Directory holding the MNIST IDX files.
    pub data_dir: Option<PathBuf>,
    /// Training examples used; synthetic data is generated at this size.
    pub subsample: usize,
    /// Seeds the subsample draw or the synthetic generator.
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Synthetic,
            data_dir: None,
            subsample: 5000,
            seed: 0,
        }
    }
}

pub fn load_data(cfg: &DataConfig) -> Result<Dataset> {
    if cfg.subsample == 0 {
        return Err(Error::InvalidInput("subsample must be >= 1".into()));
    }
    match cfg.kind {
        DatasetKind::Synthetic => synthetic_dataset(cfg.subsample, cfg.seed),
        DatasetKind::Mnist10 => {
            let dir = cfg
                .data_dir
                .as_deref()
                .ok_or_else(|| Error::InvalidInput("mnist10 needs a data directory".into()))?;
            Ok(load_mnist10(dir)?.subsample(cfg.subsample, cfg.seed))
        }
    }
}

pub fn mlp_objective(ds: &Dataset, hidden: usize) -> Result<MlpObjective> {
    Ok(MlpObjective::new(
        Mlp::new(MlpShape::new(hidden)),
        Arc::new(ds.to_batch()?),
    ))
}

/// One MLP training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub step: StepConfig,
    pub hidden: usize,
    /// Seeds the initial weights and the minibatch order.
    pub seed: u64,
    pub epochs: usize,
    pub curvature: CurvatureTracking,
    pub keep_checkpoints: bool,
}

impl RunSpec {
    pub fn new(method: Method, hidden: usize, seed: u64, epochs: usize) -> Self {
        Self {
            step: StepConfig::defaults_for(method, hidden),
            hidden,
            seed,
            epochs,
            curvature: CurvatureTracking::default(),
            keep_checkpoints: false,
        }
    }
}

/// Trains from `init_params(shape, seed)` and tags the trace with the data
/// and model provenance.
pub fn train_mlp(obj: &MlpObjective, ds: &Dataset, spec: &RunSpec) -> Result<TrainOutcome> {
    if obj.model.shape.n_hidden != spec.hidden {
        return Err(Error::InvalidInput(
            "objective and run disagree on the hidden size".into(),
        ));
    }
    let config = TrainConfig {
        step: spec.step.clone(),
        epochs: spec.epochs,
        seed: spec.seed,
        grad_tol: None,
        curvature: spec.curvature,
        record_wall_time: false,
        keep_checkpoints: spec.keep_checkpoints,
    };
    let mut out = train(obj, init_params(obj.model.shape, spec.seed), &config)?;
    let provenance = serde_json::to_string(&ds.provenance)?;
    out.trace = out
        .trace
        .with_tag("hidden", spec.hidden)
        .with_tag("init_seed", spec.seed)
        .with_tag("examples", ds.len())
        .with_tag("dataset", provenance)
        .with_tag("dataset_checksum", ds.checksum())
        .with_tag(
            "subsample_seed",
            ds.subsample_seed
                .map(|s| s.to_string())
                .unwrap_or_else(|| "none".into()),
        );
    Ok(out)
}

/// Median of the finite values; `None` when there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

fn run_pool<T: Send, R: Send>(
    workers: usize,
    jobs: Vec<T>,
    f: impl Fn(T) -> R + Send + Sync,
) -> Result<Vec<R>> {
    if workers <= 1 {
        return Ok(jobs.into_iter().map(f).collect());
    }
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    Ok(pool.install(|| jobs.into_par_iter().map(f).collect()))
}

/// Writes a CSV whose first line is `# config: <json>`.
pub fn write_table(
    path: &Path,
    config_json: &str,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let mut bytes = format!("# config: {config_json}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut bytes);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads a table written by [`write_table`]: `(header, rows)`.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| Ok(rec?.iter().map(str::to_string).collect()))
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

fn fmt(x: f64) -> String {
    format!("{x:?}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

fn trace_table<'a>(
    traces: impl Iterator<Item = &'a TrainTrace>,
) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let cols = crate::optimizers::EpochRecord::columns();
    let mut header = vec!["method", "hidden", "seed"];
    header.extend_from_slice(cols);
    let mut rows = Vec::new();
    for t in traces {
        for r in &t.records {
            let mut row = vec![
                t.meta.method.to_string(),
                t.tag("hidden").unwrap_or("").to_string(),
                t.meta.config.seed.to_string(),
            ];
            row.extend(cols.iter().map(|c| r.cell(c).expect("known column")));
            rows.push(row);
        }
    }
    (header, rows)
}

fn status_text(s: &RunStatus) -> String {
    match s {
        RunStatus::Completed => "completed".into(),
        RunStatus::Converged { epoch } => format!("converged@{epoch}"),
        RunStatus::Failed { epoch, reason } => format!("failed@{epoch}: {reason}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub hidden: Vec<usize>,
    pub methods: Vec<Method>,
    pub seeds: usize,
    pub first_seed: u64,
    pub epochs: usize,
    pub damping_grid: Vec<f64>,
    /// Curvature is tracked every this many epochs (and at the last).
    pub curvature_every: usize,
    pub power: PowerOptions,
    /// Random-search trials for SGD hyperparameters; `None` uses the table.
    pub sgd_search_trials: Option<usize>,
    pub data: DataConfig,
    pub workers: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            hidden: vec![5, 25, 50],
            methods: vec![
                Method::SaddleFree,
                Method::DampedNewton,
                Method::SgdMomentum,
            ],
            seeds: 3,
            first_seed: 0,
            epochs: 50,
            damping_grid: DEFAULT_DAMPING_GRID.to_vec(),
            curvature_every: 0,
            power: PowerOptions {
                max_iters: 1000,
                tol: 1e-6,
                seed: 0,
            },
            sgd_search_trials: None,
            data: DataConfig::default(),
            workers: 1,
        }
    }
}

impl CompareConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::InvalidInput(
                "hidden sizes must be nonempty and positive".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidInput("no methods to compare".into()));
        }
        if self.seeds == 0 {
            return Err(Error::InvalidInput("seeds must be >= 1".into()));
        }
        if self
            .hidden
            .iter()
            .any(|&h| MlpShape::new(h).param_count() > crate::mlp::DENSE_HESSIAN_LIMIT)
            && self.methods.iter().any(|m| m.is_second_order())
        {
            return Err(Error::InvalidInput(
                "a hidden size exceeds the dense Hessian limit".into(),
            ));
        }
        let probe = StepConfig {
            damping_grid: self.damping_grid.clone(),
            ..StepConfig::second_order(Method::SaddleFree)
        };
        probe.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub method: Method,
    pub hidden: usize,
    pub seed: u64,
    pub status: String,
    pub epochs_done: usize,
    pub final_loss: f64,
    pub final_error: Option<f64>,
    pub min_error: Option<f64>,
    pub lambda_pos: Option<f64>,
    pub lambda_neg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub method: Method,
    pub hidden: usize,
    pub runs: usize,
    pub failed: usize,
    pub median_final_error: Option<f64>,
    pub median_min_error: Option<f64>,
    pub median_abs_lambda_neg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareResult {
    pub config: CompareConfig,
    pub dataset_checksum: String,
    /// SGD configuration used per hidden size.
    pub sgd_configs: Vec<(usize, StepConfig)>,
    pub traces: Vec<TrainTrace>,
    pub rows: Vec<CompareRow>,
    pub summary: Vec<CompareSummary>,
}

impl CompareResult {
    pub fn cell(&self, method: Method, hidden: usize) -> Option<&CompareSummary> {
        self.summary
            .iter()
            .find(|s| s.method == method && s.hidden == hidden)
    }

    pub fn failures(&self) -> Vec<&CompareRow> {
        self.rows
            .iter()
            .filter(|r| r.status.starts_with("failed"))
            .collect()
    }

    /// Writes `traces.jsonl`, `epochs.csv`, `runs.csv`, `summary.csv` and
    /// `config.json`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let cfg = serde_json::to_string(&serde_json::json!({
            "command": "compare",
            "config": self.config,
            "dataset_checksum": self.dataset_checksum,
            "sgd_configs": self.sgd_configs,
        }))?;
        let mut written = Vec::new();
        let p = dir.join("config.json");
        fs::write(&p, format!("{cfg}\n"))?;
        written.push(p);

        let p = dir.join("traces.jsonl");
        write_jsonl(&p, &self.traces, false)?;
        written.push(p);

        let (header, rows) = trace_table(self.traces.iter());
        let p = dir.join("epochs.csv");
        write_table(&p, &cfg, &header, &rows)?;
        written.push(p);

        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.method.to_string(),
                    r.hidden.to_string(),
                    r.seed.to_string(),
                    r.status.clone(),
                    r.epochs_done.to_string(),
                    fmt(r.final_loss),
                    fmt_opt(r.final_error),
                    fmt_opt(r.min_error),
                    fmt_opt(r.lambda_pos),
                    fmt_opt(r.lambda_neg),
                ]
            })
            .collect();
        let p = dir.join("runs.csv");
        write_table(
            &p,
            &cfg,
            &[
                "method",
                "hidden",
                "seed",
                "status",
                "epochs_done",
                "final_loss",
                "final_error",
                "min_error",
                "lambda_pos",
                "lambda_neg",
            ],
            &rows,
        )?;
        written.push(p);

        let rows: Vec<Vec<String>> = self
            .summary
            .iter()
            .map(|s| {
                vec![
                    s.method.to_string(),
                    s.hidden.to_string(),
                    s.runs.to_string(),
                    s.failed.to_string(),
                    fmt_opt(s.median_final_error),
                    fmt_opt(s.median_min_error),
                    fmt_opt(s.median_abs_lambda_neg),
                ]
            })
            .collect();
        let p = dir.join("summary.csv");
        write_table(
            &p,
            &cfg,
            &[
                "method",
                "hidden",
                "runs",
                "failed",
                "median_final_error",
                "median_min_error",
                "median_abs_lambda_neg",
            ],
            &rows,
        )?;
        written.push(p);
        Ok(written)
    }
}

/// Random search over momentum SGD: learning rate and momentum log-uniform,
/// minibatch from {1, 10, 100}. Returns trials ordered by final training
/// error, best first.
pub fn sgd_search(
    obj: &MlpObjective,
    ds: &Dataset,
    hidden: usize,
    trials: usize,
    epochs: usize,
    seed: u64,
) -> Result<Vec<(StepConfig, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(trials);
    for t in 0..trials {
        let lr = 10f64.powf(rng.gen_range(-3.0..0.0));
        let mu = 10f64.powf(rng.gen_range(-3.0..(0.99f64).log10()));
        let mb = [1, 10, 100][rng.gen_range(0..3)];
        let mut spec = RunSpec::new(
            Method::SgdMomentum,
            hidden,
            seed.wrapping_add(t as u64),
            epochs,
        );
        spec.step = StepConfig::sgd(lr, mu, mb);
        spec.curvature = CurvatureTracking::off();
        let o = train_mlp(obj, ds, &spec)?;
        let err = o
            .trace
            .last()
            .and_then(|r| r.error_rate)
            .unwrap_or(f64::INFINITY);
        let err = if matches!(o.trace.status, RunStatus::Failed { .. }) {
            f64::INFINITY
        } else {
            err
        };
        out.push((spec.step, err));
    }
    out.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(out)
}

/// Trains every method × hidden size × seed and summarizes final errors and
/// final negative curvature.
pub fn run_compare(config: &CompareConfig) -> Result<CompareResult> {
    config.validate()?;
    let ds = load_data(&config.data)?;
    let checksum = ds.checksum();
    let mut objectives = Vec::new();
    let mut sgd_configs = Vec::new();
    for &h in &config.hidden {
        let obj = mlp_objective(&ds, h)?;
        if config.methods.contains(&Method::SgdMomentum) {
            let step = match config.sgd_search_trials {
                Some(n) if n > 0 => sgd_search(&obj, &ds, h, n, config.epochs, config.first_seed)?
                    .into_iter()
                    .next()
                    .map(|(s, _)| s)
                    .expect("at least one trial"),
                _ => StepConfig::defaults_for(Method::SgdMomentum, h),
            };
            sgd_configs.push((h, step));
        }
        objectives.push((h, obj));
    }

    let mut jobs = Vec::new();
    for (hi, &h) in config.hidden.iter().enumerate() {
        for &m in &config.methods {
            for s in 0..config.seeds as u64 {
                let seed = config.first_seed + s;
                let mut spec = RunSpec::new(m, h, seed, config.epochs);
                match m {
                    Method::SgdMomentum => {
                        spec.step = sgd_configs
                            .iter()
                            .find(|(k, _)| *k == h)
                            .expect("searched")
                            .1
                            .clone();
                    }
                    _ => spec.step.damping_grid = config.damping_grid.clone(),
                }
                spec.curvature = CurvatureTracking {
                    every: if config.curvature_every == 0 {
                        config.epochs.max(1)
                    } else {
                        config.curvature_every
                    },
                    power: PowerOptions {
                        seed: config.power.seed ^ seed,
                        ..config.power
                    },
                };
                jobs.push((hi, spec));
            }
        }
    }
    let results = run_pool(config.workers, jobs, |(hi, spec)| {
        let obj = &objectives[hi].1;
        train_mlp(obj, &ds, &spec).map(|o| (spec, o.trace))
    })?;

    let mut traces = Vec::new();
    let mut rows = Vec::new();
    for r in results {
        let (spec, trace) = r?;
        let last = trace.last().expect("epoch 0 is always recorded");
        rows.push(CompareRow {
            method: spec.step.method,
            hidden: spec.hidden,
            seed: spec.seed,
            status: status_text(&trace.status),
            epochs_done: last.epoch,
            final_loss: last.loss,
            final_error: last.error_rate,
            min_error: trace
                .records
                .iter()
                .filter_map(|r| r.error_rate)
                .min_by(f64::total_cmp),
            lambda_pos: last.lambda_pos,
            lambda_neg: last.lambda_neg,
        });
        traces.push(trace);
    }
    let mut summary = Vec::new();
    for &h in &config.hidden {
        for &m in &config.methods {
            let cell: Vec<&CompareRow> = rows
                .iter()
                .filter(|r| r.method == m && r.hidden == h)
                .collect();
            let pick = |f: &dyn Fn(&CompareRow) -> Option<f64>| -> Vec<f64> {
                cell.iter().filter_map(|r| f(r)).collect()
            };
            summary.push(CompareSummary {
                method: m,
                hidden: h,
                runs: cell.len(),
                failed: cell
                    .iter()
                    .filter(|r| r.status.starts_with("failed"))
                    .count(),
                median_final_error: median(&pick(&|r| r.final_error)),
                median_min_error: median(&pick(&|r| r.min_error)),
                median_abs_lambda_neg: median(&pick(&|r| r.lambda_neg.map(f64::abs))),
            });
        }
    }
    Ok(CompareResult {
        config: config.clone(),
        dataset_checksum: checksum,
        sgd_configs,
        traces,
        rows,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyExperimentConfig {
    pub hidden: usize,
    /// Number of training runs providing checkpoints.
    pub runs: usize,
    pub run_method: Method,
    pub first_seed: u64,
    pub damping_grid: Vec<f64>,
    pub survey: SurveyConfig,
    /// `grad_norm` at or below which a point counts as converged.
    pub converged_tol: f64,
    pub histogram_bins: usize,
    pub quantiles: Vec<f64>,
    pub data: DataConfig,
}

impl Default for SurveyExperimentConfig {
    fn default() -> Self {
        Self {
            hidden: 5,
            runs: 20,
            run_method: Method::SaddleFree,
            first_seed: 0,
            damping_grid: DEFAULT_DAMPING_GRID.to_vec(),
            survey: SurveyConfig {
                finder: crate::analysis::FinderConfig {
                    max_iters: 30,
                    ..Default::default()
                },
                ..Default::default()
            },
            converged_tol: 1e-5,
            histogram_bins: 50,
            quantiles: vec![0.1, 0.5, 0.9],
            data: DataConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedSpectrum {
    pub quantile: f64,
    pub job_id: Option<usize>,
    pub loss: f64,
    pub index: f64,
    pub grad_norm: f64,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurveyExperimentResult {
    pub config: SurveyExperimentConfig,
    pub dataset_checksum: String,
    pub run_traces: Vec<TrainTrace>,
    pub outcome: SurveyOutcome,
    pub spectra: Vec<SelectedSpectrum>,
    /// Index–loss rank correlation over all points, if defined.
    pub correlation_all: std::result::Result<f64, String>,
    /// The same over points with `grad_norm ≤ converged_tol`.
    pub correlation_converged: std::result::Result<f64, String>,
}

impl SurveyExperimentResult {
    pub fn converged(&self) -> Vec<&CriticalPoint> {
        self.outcome.converged(self.config.converged_tol)
    }

    /// Writes `runs.jsonl`, `survey.jsonl`, `points.csv`, `spectra.csv`
    /// and `summary.json`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let cfg_value = serde_json::json!({
            "command": "survey",
            "config": self.config,
            "dataset_checksum": self.dataset_checksum,
        });
        let cfg = serde_json::to_string(&cfg_value)?;
        let mut written = Vec::new();

        let p = dir.join("runs.jsonl");
        write_jsonl(&p, &self.run_traces, false)?;
        written.push(p);

        let p = dir.join("survey.jsonl");
        let mut records = vec![SurveyFileRecord::Config {
            config: cfg_value.clone(),
        }];
        records.extend(
            self.outcome
                .records()
                .into_iter()
                .map(SurveyFileRecord::from),
        );
        write_jsonl(&p, &records, false)?;
        written.push(p);

        let cols = CriticalPoint::columns();
        let rows: Vec<Vec<String>> = self
            .outcome
            .points
            .iter()
            .map(|pt| cols.iter().map(|c| pt.cell(c).expect("known")).collect())
            .collect();
        let p = dir.join("points.csv");
        write_table(&p, &cfg, cols, &rows)?;
        written.push(p);

        let mut rows = Vec::new();
        for s in &self.spectra {
            for (k, c) in s.histogram.counts.iter().enumerate() {
                rows.push(vec![
                    fmt(s.quantile),
                    s.job_id.map(|j| j.to_string()).unwrap_or_default(),
                    fmt(s.loss),
                    fmt(s.index),
                    fmt(s.histogram.edges[k]),
                    fmt(s.histogram.edges[k + 1]),
                    c.to_string(),
                    fmt(s.histogram.heights[k]),
                ]);
            }
        }
        let p = dir.join("spectra.csv");
        write_table(
            &p,
            &cfg,
            &[
                "quantile",
                "job_id",
                "loss",
                "index",
                "bin_lo",
                "bin_hi",
                "count",
                "log10_count_plus_1",
            ],
            &rows,
        )?;
        written.push(p);

        let summary = serde_json::json!({
            "config": cfg_value,
            "points": self.outcome.points.len(),
            "failures": self.outcome.failures.len(),
            "converged": self.converged().len(),
            "correlation_all": self.correlation_all.as_ref().map_err(|e| e.clone()),
            "correlation_converged": self.correlation_converged.as_ref().map_err(|e| e.clone()),
        });
        let p = dir.join("summary.json");
        fs::write(&p, format!("{}\n", serde_json::to_string_pretty(&summary)?))?;
        written.push(p);
        Ok(written)
    }
}

/// Line format of `survey.jsonl`: a config header, then one record per job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SurveyFileRecord {
    Config { config: serde_json::Value },
    Point(CriticalPoint),
    Failure(crate::analysis::JobFailure),
}

impl From<SurveyRecord> for SurveyFileRecord {
    fn from(r: SurveyRecord) -> Self {
        match r {
            SurveyRecord::Point(p) => Self::Point(p),
            SurveyRecord::Failure(f) => Self::Failure(f),
        }
    }
}

/// Points at the requested loss quantiles, by rank `round(q·(n−1))`.
pub fn select_by_loss_quantile<'a>(
    points: &'a [CriticalPoint],
    quantiles: &[f64],
) -> Vec<(f64, &'a CriticalPoint)> {
    if points.is_empty() {
        return Vec::new();
    }
    let mut order: Vec<&CriticalPoint> = points.iter().collect();
    order.sort_by(|a, b| a.loss.total_cmp(&b.loss).then(a.job_id.cmp(&b.job_id)));
    quantiles
        .iter()
        .map(|&q| {
            let k = (q.clamp(0.0, 1.0) * (order.len() - 1) as f64).round() as usize;
            (q, order[k])
        })
        .collect()
}

/// Trains the checkpoint runs, then surveys critical points around them and
/// in the uniform box.
pub fn run_survey(config: &SurveyExperimentConfig) -> Result<SurveyExperimentResult> {
    if config.runs == 0 && config.survey.n_trajectory_jobs > 0 {
        return Err(Error::InvalidInput(
            "trajectory jobs need at least one run".into(),
        ));
    }
    let ds = load_data(&config.data)?;
    let obj = mlp_objective(&ds, config.hidden)?;
    let epochs = config.survey.epoch_range.1;
    let jobs: Vec<u64> = (0..config.runs as u64)
        .map(|r| config.first_seed + r)
        .collect();
    let outcomes = run_pool(config.survey.workers, jobs, |seed| {
        let mut spec = RunSpec::new(config.run_method, config.hidden, seed, epochs);
        if config.run_method.is_second_order() {
            spec.step.damping_grid = config.damping_grid.clone();
        }
        spec.curvature = CurvatureTracking::off();
        spec.keep_checkpoints = true;
        train_mlp(&obj, &ds, &spec)
    })?;
    let mut run_traces = Vec::new();
    let mut runs = Vec::new();
    for (k, o) in outcomes.into_iter().enumerate() {
        let o = o?;
        if o.checkpoints.len() > epochs {
            runs.push(RunCheckpoints {
                run_id: k,
                checkpoints: o.checkpoints,
            });
        }
        run_traces.push(o.trace);
    }
    if runs.is_empty() && config.survey.n_trajectory_jobs > 0 {
        return Err(Error::StepFailure(
            "every checkpoint run stopped before the epoch range ended".into(),
        ));
    }
    let outcome = critical_point_survey(&obj, &runs, &config.survey)?;
    let spectra = select_by_loss_quantile(&outcome.points, &config.quantiles)
        .into_iter()
        .map(|(q, p)| {
            Ok(SelectedSpectrum {
                quantile: q,
                job_id: p.job_id,
                loss: p.loss,
                index: p.index,
                grad_norm: p.grad_norm,
                histogram: spectrum_histogram(&p.eigenvalues, config.histogram_bins, true)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let correlation_all = index_error_correlation(&outcome.points).map_err(|e| e.to_string());
    let conv: Vec<CriticalPoint> = outcome
        .converged(config.converged_tol)
        .into_iter()
        .cloned()
        .collect();
    let correlation_converged = index_error_correlation(&conv).map_err(|e| e.to_string());
    Ok(SurveyExperimentResult {
        config: config.clone(),
        dataset_checksum: ds.checksum(),
        run_traces,
        outcome,
        spectra,
        correlation_all,
        correlation_converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeConfig {
    pub function: ZooFunction,
    /// Defaults to all ones.
    pub start: Option<Vec<f64>>,
    pub steps: usize,
    pub methods: Vec<Method>,
    /// Step size for GD and momentum SGD.
    pub learning_rate: f64,
    pub momentum: f64,
    pub damping_grid: Vec<f64>,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        Self {
            function: ZooFunction::MinMax,
            start: None,
            steps: 10,
            methods: Method::ALL.to_vec(),
            learning_rate: 0.1,
            momentum: 0.5,
            damping_grid: DEFAULT_DAMPING_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartAnalysis {
    pub theta: Vec<f64>,
    pub loss: f64,
    pub grad_norm: f64,
    pub eigenvalues: Vec<f64>,
    pub critical: bool,
    pub negative_curvature: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub method: Method,
    pub status: RunStatus,
    /// Iterates, the start included.
    pub points: Vec<ParamVector>,
    pub losses: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub dampings: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeResult {
    pub config: LandscapeConfig,
    pub start: StartAnalysis,
    pub trajectories: Vec<Trajectory>,
}

impl LandscapeResult {
    pub fn trajectory(&self, m: Method) -> Option<&Trajectory> {
        self.trajectories.iter().find(|t| t.method == m)
    }

    /// Writes `trajectories.csv` and `start.json`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let cfg_value = serde_json::json!({ "command": "landscape", "config": self.config });
        let cfg = serde_json::to_string(&cfg_value)?;
        let dim = self.start.theta.len();
        let mut header: Vec<String> = vec!["method".into(), "step".into()];
        header.extend((0..dim).map(|i| format!("theta{i}")));
        header.extend(["loss", "grad_norm", "damping", "status"].map(String::from));
        let mut rows = Vec::new();
        for t in &self.trajectories {
            for (k, p) in t.points.iter().enumerate() {
                let mut row = vec![t.method.to_string(), k.to_string()];
                row.extend(p.iter().map(|x| fmt(*x)));
                row.push(fmt(t.losses[k]));
                row.push(fmt(t.grad_norms[k]));
                row.push(fmt_opt(t.dampings[k]));
                row.push(status_text(&t.status));
                rows.push(row);
            }
        }
        let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
        let p1 = dir.join("trajectories.csv");
        write_table(&p1, &cfg, &header_ref, &rows)?;
        let p2 = dir.join("start.json");
        let body = serde_json::json!({ "config": cfg_value, "start": self.start });
        fs::write(&p2, format!("{}\n", serde_json::to_string_pretty(&body)?))?;
        Ok(vec![p1, p2])
    }
}

/// Runs each method from a shared start on a zoo function.
pub fn run_landscape(config: &LandscapeConfig) -> Result<LandscapeResult> {
    let f = config.function;
    let start = config.start.clone().unwrap_or_else(|| vec![1.0; f.dim()]);
    if start.len() != f.dim() {
        return Err(Error::InvalidInput(format!(
            "{f} takes {} coordinates, got {}",
            f.dim(),
            start.len()
        )));
    }
    let g = f.gradient(&start)?;
    let d = sym_eig(&f.hessian(&start)?)?;
    let scale = d.values().iter().fold(1.0f64, |m, l| m.max(l.abs()));
    let start_info = StartAnalysis {
        theta: start.clone(),
        loss: f.loss(&start)?,
        grad_norm: g.norm(),
        eigenvalues: d.values().to_vec(),
        critical: g.norm() <= 1e-12,
        negative_curvature: d.min_value() < -1e-8 * scale,
    };
    let mut trajectories = Vec::new();
    for &m in &config.methods {
        let step = match m {
            Method::Gd => StepConfig::gd(config.learning_rate),
            Method::SgdMomentum => StepConfig {
                minibatch: Minibatch::Full,
                ..StepConfig::sgd(config.learning_rate, config.momentum, 1)
            },
            _ => StepConfig {
                damping_grid: config.damping_grid.clone(),
                ..StepConfig::second_order(m)
            },
        };
        let mut tc = TrainConfig::new(step, config.steps, 0);
        tc.curvature = CurvatureTracking::off();
        tc.keep_checkpoints = true;
        let out = train(&f, ParamVector::from(start.clone()), &tc)?;
        trajectories.push(Trajectory {
            method: m,
            status: out.trace.status.clone(),
            points: out.checkpoints,
            losses: out.trace.records.iter().map(|r| r.loss).collect(),
            grad_norms: out.trace.records.iter().map(|r| r.grad_norm).collect(),
            dampings: out.trace.records.iter().map(|r| r.damping).collect(),
        });
    }
    Ok(LandscapeResult {
        config: config.clone(),
        start: start_info,
        trajectories,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerConfig {
    pub n: usize,
    pub seed: u64,
    /// Draws per small size for the all-positive probability.
    pub draws: usize,
    pub small_sizes: Vec<usize>,
}

impl Default for WignerConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            seed: 0,
            draws: 2000,
            small_sizes: vec![2, 4, 6],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerResult {
    pub config: WignerConfig,
    pub eigenvalues: Vec<f64>,
    pub ks_distance: f64,
    pub fraction_negative: f64,
    pub mean: f64,
    /// `(n, fraction of draws with every eigenvalue positive)`.
    pub all_positive: Vec<(usize, f64)>,
}

/// Seed of draw `k` at size `n`, derived from the base seed.
fn draw_seed(seed: u64, n: usize, k: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((n as u64) << 32) | k as u64);
    rng.gen()
}

pub fn run_wigner(config: &WignerConfig) -> Result<WignerResult> {
    if config.n == 0 || config.small_sizes.contains(&0) {
        return Err(Error::InvalidInput("matrix sizes must be >= 1".into()));
    }
    let d = sym_eig(&sample_goe(config.n, config.seed)?)?;
    let eigenvalues = d.values().to_vec();
    let n = eigenvalues.len() as f64;
    let ks = ks_distance(&eigenvalues, |x| semicircle_cdf(x, 2.0));
    let fraction_negative = eigenvalues.iter().filter(|&&l| l < 0.0).count() as f64 / n;
    let mean = eigenvalues.iter().sum::<f64>() / n;
    let mut all_positive = Vec::new();
    for &s in &config.small_sizes {
        let mut hits = 0;
        for k in 0..config.draws {
            let e = sym_eig(&sample_goe(s, draw_seed(config.seed, s, k))?)?;
            if e.min_value() > 0.0 {
                hits += 1;
            }
        }
        all_positive.push((s, hits as f64 / config.draws.max(1) as f64));
    }
    Ok(WignerResult {
        config: config.clone(),
        eigenvalues,
        ks_distance: ks,
        fraction_negative,
        mean,
        all_positive,
    })
}

impl WignerResult {
    /// Writes `spectrum.csv`, `positivity.csv` and `summary.json`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let cfg_value = serde_json::json!({ "command": "wigner", "config": self.config });
        let cfg = serde_json::to_string(&cfg_value)?;
        let n = self.eigenvalues.len() as f64;
        let rows: Vec<Vec<String>> = self
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(i, &l)| vec![fmt(l), fmt((i + 1) as f64 / n), fmt(semicircle_cdf(l, 2.0))])
            .collect();
        let p1 = dir.join("spectrum.csv");
        write_table(
            &p1,
            &cfg,
            &["lambda", "empirical_cdf", "semicircle_cdf"],
            &rows,
        )?;
        let rows: Vec<Vec<String>> = self
            .all_positive
            .iter()
            .map(|(s, p)| vec![s.to_string(), fmt(*p)])
            .collect();
        let p2 = dir.join("positivity.csv");
        write_table(&p2, &cfg, &["n", "p_all_positive"], &rows)?;
        let p3 = dir.join("summary.json");
        let body = serde_json::json!({
            "config": cfg_value,
            "ks_distance": self.ks_distance,
            "fraction_negative": self.fraction_negative,
            "mean": self.mean,
            "all_positive": self.all_positive,
        });
        fs::write(&p3, format!("{}\n", serde_json::to_string_pretty(&body)?))?;
        Ok(vec![p1, p2, p3])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[f64::NAN]), None);
    }

    #[test]
    fn quantile_selection_by_rank() {
        let pts: Vec<CriticalPoint> = (0..11)
            .map(|k| CriticalPoint {
                theta: ParamVector::zeros(1),
                loss: (10 - k) as f64,
                error_rate: None,
                grad_norm: 0.0,
                eigenvalues: vec![1.0],
                index: 0.0,
                origin: crate::analysis::Origin::Given,
                source_run: None,
                source_epoch: None,
                perturb_amplitude: None,
                job_id: Some(k),
                start_grad_norm: 0.0,
                iterations: 0,
            })
            .collect();
        let sel = select_by_loss_quantile(&pts, &[0.1, 0.5, 0.9]);
        let losses: Vec<f64> = sel.iter().map(|(_, p)| p.loss).collect();
        assert_eq!(losses, vec![1.0, 5.0, 9.0]);
    }

    #[test]
    fn landscape_minmax_predictions() {
        let r = run_landscape(&LandscapeConfig::default()).unwrap();
        let newton = r.trajectory(Method::Newton).unwrap();
        assert_eq!(newton.points[1].as_slice(), &[0.0, 0.0]);
        let sfn = r.trajectory(Method::SaddleFree).unwrap();
        assert!(sfn.points.last().unwrap()[1].abs() > 10.0);
    }

    #[test]
    fn landscape_monkey_from_origin() {
        let cfg = LandscapeConfig {
            function: ZooFunction::Monkey,
            start: Some(vec![0.0, 0.0]),
            ..Default::default()
        };
        let r = run_landscape(&cfg).unwrap();
        assert!(r.start.critical);
        assert!(matches!(
            r.trajectory(Method::Newton).unwrap().status,
            RunStatus::Failed { epoch: 1, .. }
        ));
        for m in [Method::DampedNewton, Method::SaddleFree] {
            let t = r.trajectory(m).unwrap();
            assert!(t.points.iter().all(|p| p.norm() == 0.0));
        }
    }

    #[test]
    fn landscape_gutter_centre_is_a_maximum() {
        let cfg = LandscapeConfig {
            function: ZooFunction::Gutter,
            start: Some(vec![0.0, 0.0]),
            ..Default::default()
        };
        let r = run_landscape(&cfg).unwrap();
        assert!(r.start.critical && r.start.negative_curvature);
        assert_eq!(r.start.eigenvalues, vec![-4.0, -4.0]);
    }

    #[test]
    fn wigner_small_run() {
        let r = run_wigner(&WignerConfig {
            n: 200,
            seed: 1,
            draws: 200,
            small_sizes: vec![1, 2],
        })
        .unwrap();
        assert!(r.ks_distance < 0.1);
        assert!((r.all_positive[0].1 - 0.5).abs() < 0.1);
        assert!((r.all_positive[1].1 - (2.0 - 2f64.sqrt()) / 4.0).abs() < 0.06);
    }

    #[test]
    fn dataset_kind_names() {
        for k in [DatasetKind::Mnist10, DatasetKind::Synthetic] {
            assert_eq!(DatasetKind::parse(k.as_str()).unwrap(), k);
        }
        assert!(DatasetKind::parse("cifar").is_err());
    }
}
