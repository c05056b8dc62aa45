//! Flag structs and the TOML config file that mirrors them.
//!
//! Every flag has a key of the same name in the config file. A flag given on
//! the command line wins over the file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use saddlefree_core::experiments::DatasetKind;
use saddlefree_core::landscapes::ZooFunction;
use saddlefree_core::Method;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).map_err(|e| e.to_string())
}

fn parse_dataset(s: &str) -> Result<DatasetKind, String> {
    DatasetKind::parse(s).map_err(|e| e.to_string())
}

fn parse_function(s: &str) -> Result<ZooFunction, String> {
    ZooFunction::parse(s).map_err(|e| e.to_string())
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct DataArgs {
    /// Data source: mnist10 or synthetic.
    #[arg(long, value_parser = parse_dataset)]
    pub dataset: Option<DatasetKind>,
    /// Directory with the MNIST IDX files [env: SADDLEFREE_DATA_DIR].
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Number of training examples.
    #[arg(long)]
    pub subsample: Option<usize>,
    /// Seed of the subsample draw or of the synthetic generator.
    #[arg(long)]
    pub data_seed: Option<u64>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainArgs {
    /// gd, sgd, newton, damped-newton or saddle-free.
    #[arg(long, value_parser = parse_method)]
    pub method: Option<Method>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated damping values.
    #[arg(long, value_delimiter = ',')]
    pub damping_grid: Option<Vec<f64>>,
    /// Learning rate for gd and sgd.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Minibatch size for sgd; 0 means the full batch.
    #[arg(long)]
    pub minibatch: Option<usize>,
    /// Track extreme eigenvalues every N epochs; 0 only at the end.
    #[arg(long)]
    pub curvature_every: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CompareArgs {
    /// Comma-separated hidden sizes.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    pub methods: Option<Vec<Method>>,
    /// Number of seeds per cell.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// First seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub damping_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub curvature_every: Option<usize>,
    /// Pick SGD hyperparameters by random search with this many trials.
    #[arg(long)]
    pub sgd_search: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SurveyArgs {
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Training runs that provide checkpoints.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Method of the checkpoint runs.
    #[arg(long, value_parser = parse_method)]
    pub run_method: Option<Method>,
    /// Jobs started near checkpoints (also the uniform count unless given).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub uniform_jobs: Option<usize>,
    /// Last checkpoint epoch used for starts.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub amplitudes: Option<Vec<f64>>,
    /// LO,HI box for uniform starts.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub uniform_range: Option<Vec<f64>>,
    /// Iterations of the critical-point finder.
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    /// Gradient norm under which a point counts as converged.
    #[arg(long)]
    pub converged_tol: Option<f64>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub damping_grid: Option<Vec<f64>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct LandscapeArgs {
    /// cubic, minmax, monkey or gutter.
    #[arg(long, value_parser = parse_function)]
    pub function: Option<ZooFunction>,
    /// Comma-separated start point.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub start: Option<Vec<f64>>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    pub methods: Option<Vec<Method>>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub damping_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct WignerArgs {
    /// Matrix size.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Draws per small size.
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub small_sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

/// Overlays the flags given on the command line onto the config file.
pub fn resolve<T>(cli: &T, path: Option<&Path>) -> Result<T>
where
    T: Serialize + DeserializeOwned + Default + Clone,
{
    let Some(path) = path else {
        return Ok(cli.clone());
    };
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let table: toml::Table =
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    overlay(cli, table).with_context(|| format!("in {}", path.display()))
}

fn overlay<T>(cli: &T, table: toml::Table) -> Result<T>
where
    T: Serialize + DeserializeOwned + Default,
{
    let known = serde_json::to_value(T::default())?;
    let known = known.as_object().expect("flag structs serialize to maps");
    let mut merged = serde_json::to_value(&table)?;
    let merged_map = merged.as_object_mut().expect("tables serialize to maps");
    if let Some(k) = merged_map.keys().find(|k| !known.contains_key(*k)) {
        bail!("unknown config key `{k}`");
    }
    if let serde_json::Value::Object(flags) = serde_json::to_value(cli)? {
        for (k, v) in flags {
            if !v.is_null() {
                merged_map.insert(k, v);
            }
        }
    }
    Ok(serde_json::from_value(merged)?)
}
