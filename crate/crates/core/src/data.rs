//! Dataset ingestion and record persistence.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::CriticalPoint;
use crate::error::{Error, Result};
use crate::mlp::Batch;
use crate::optimizers::EpochRecord;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Side length of the downscaled images.
pub const SIDE: usize = 10;
pub const PIXELS: usize = SIDE * SIDE;

/// Images as read from an IDX pair, pixels scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImages {
    pub rows: usize,
    pub cols: usize,
    /// Image-major, row-major within an image.
    pub pixels: Vec<f64>,
    pub labels: Vec<u8>,
}

impl RawImages {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let s = self.rows * self.cols;
        &self.pixels[i * s..(i + 1) * s]
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    if path.extension().is_some_and(|e| e == "gz") {
        flate2::read::GzDecoder::new(File::open(path)?).read_to_end(&mut bytes)?;
    } else {
        File::open(path)?.read_to_end(&mut bytes)?;
    }
    Ok(bytes)
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated {
            path: path.into(),
            detail: format!("header ends before byte {}", at + 4),
        })
}

/// Parses an IDX image file body: `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<f64>)> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            found: magic,
            expected: IDX_IMAGES_MAGIC,
        });
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let need = n * rows * cols;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(Error::Truncated {
            path: path.into(),
            detail: format!(
                "{n} images of {rows}x{cols} need {need} bytes, found {}",
                body.len()
            ),
        });
    }
    Ok((
        n,
        rows,
        cols,
        body[..need].iter().map(|&b| b as f64 / 255.0).collect(),
    ))
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            found: magic,
            expected: IDX_LABELS_MAGIC,
        });
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let body = &bytes[8..];
    if body.len() < n {
        return Err(Error::Truncated {
            path: path.into(),
            detail: format!("{n} labels, found {} bytes", body.len()),
        });
    }
    Ok(body[..n].to_vec())
}

/// Reads an IDX image/label pair. Files ending in `.gz` are decompressed.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<RawImages> {
    let (n, rows, cols, pixels) = parse_idx_images(&read_all(images_path)?, images_path)?;
    let labels = parse_idx_labels(&read_all(labels_path)?, labels_path)?;
    if labels.len() != n {
        return Err(Error::CountMismatch {
            images: n,
            labels: labels.len(),
        });
    }
    Ok(RawImages {
        rows,
        cols,
        pixels,
        labels,
    })
}

/// Per target cell, the source pixels it covers and the overlap length.
///
/// Lengths are integers in units of `1/dst` source pixels, so every weight
/// and weight sum is exact in floating point. Each cell has total length `src`.
fn overlap_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    (0..dst)
        .map(|i| {
            let (a, b) = (i * src, (i + 1) * src);
            (a / dst..b.div_ceil(dst).min(src))
                .filter_map(|p| {
                    let w = b.min((p + 1) * dst).saturating_sub(a.max(p * dst));
                    (w > 0).then_some((p, w as f64))
                })
                .collect()
        })
        .collect()
}

/// Area-weighted average pooling of a square image to `dst × dst`.
///
/// Each cell is averaged as offsets from its first covered pixel, which keeps
/// constant regions exactly constant.
pub fn downscale(img: &[f64], src: usize, dst: usize) -> Result<Vec<f64>> {
    if img.len() != src * src || dst == 0 || dst > src {
        return Err(Error::InvalidInput(format!(
            "cannot pool {} pixels as {src}x{src} into {dst}x{dst}",
            img.len()
        )));
    }
    let w = overlap_weights(src, dst);
    let area = (src * src) as f64;
    let mut out = vec![0.0; dst * dst];
    for (i, wi) in w.iter().enumerate() {
        for (j, wj) in w.iter().enumerate() {
            let base = img[wi[0].0 * src + wj[0].0];
            let mut s = 0.0;
            for &(p, a) in wi {
                for &(q, b) in wj {
                    s += a * b * (img[p * src + q] - base);
                }
            }
            out[i * dst + j] = (base + s / area).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

/// 28×28 → 10×10 pooling over 2.8-pixel boxes.
pub fn downscale_10x10(img: &[f64]) -> Result<Vec<f64>> {
    downscale(img, 28, SIDE)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    MnistDownscaled { images: String, labels: String },
    Synthetic { seed: u64 },
}

/// Labelled 10×10 images ready for training.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `m × 100`, row-major.
    pub images: Vec<f64>,
    pub labels: Vec<u8>,
    pub provenance: Provenance,
    /// Seed of the subsample drawn from the source, if any.
    pub subsample_seed: Option<u64>,
}

impl Dataset {
    pub fn new(images: Vec<f64>, labels: Vec<u8>, provenance: Provenance) -> Result<Self> {
        if images.len() != labels.len() * PIXELS {
            return Err(Error::CountMismatch {
                images: images.len() / PIXELS,
                labels: labels.len(),
            });
        }
        if images.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidInput("pixels must lie in [0, 1]".into()));
        }
        if labels.iter().any(|&l| l > 9) {
            return Err(Error::InvalidInput("labels must lie in 0..=9".into()));
        }
        Ok(Self {
            images,
            labels,
            provenance,
            subsample_seed: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f64] {
        &self.images[i * PIXELS..(i + 1) * PIXELS]
    }

    /// SHA-256 over pixel bit patterns and labels, hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.images {
            h.update(p.to_le_bytes());
        }
        h.update(&self.labels);
        hex::encode(h.finalize())
    }

    /// `n` distinct examples drawn with `seed`, kept in source order.
    /// Returns a clone when `n ≥ len`.
    pub fn subsample(&self, n: usize, seed: u64) -> Dataset {
        if n >= self.len() {
            return self.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, self.len(), n).into_vec();
        idx.sort_unstable();
        let mut images = Vec::with_capacity(n * PIXELS);
        for &i in &idx {
            images.extend_from_slice(self.image(i));
        }
        Dataset {
            images,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            provenance: self.provenance.clone(),
            subsample_seed: Some(seed),
        }
    }

    pub fn to_batch(&self) -> Result<Batch> {
        Batch::new(PIXELS, &self.images, self.labels.clone())
    }

    pub fn from_raw(raw: &RawImages, provenance: Provenance) -> Result<Self> {
        if raw.rows != 28 || raw.cols != 28 {
            return Err(Error::InvalidInput(format!(
                "expected 28x28 images, got {}x{}",
                raw.rows, raw.cols
            )));
        }
        let mut images = Vec::with_capacity(raw.len() * PIXELS);
        for i in 0..raw.len() {
            images.extend(downscale_10x10(raw.image(i))?);
        }
        Dataset::new(images, raw.labels.clone(), provenance)
    }
}

const MNIST_TRAIN: [(&str, &str); 2] = [
    ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    ("train-images.idx3-ubyte", "train-labels.idx1-ubyte"),
];

/// Finds the MNIST training pair in `dir`, plain or gzipped.
pub fn find_mnist(dir: &Path) -> Option<(PathBuf, PathBuf)> {
    for (img, lab) in MNIST_TRAIN {
        for ext in ["", ".gz"] {
            let i = dir.join(format!("{img}{ext}"));
            let l = dir.join(format!("{lab}{ext}"));
            if i.is_file() && l.is_file() {
                return Some((i, l));
            }
        }
    }
    None
}

/// MNIST training images downscaled to 10×10.
pub fn load_mnist10(dir: &Path) -> Result<Dataset> {
    let (img, lab) = find_mnist(dir).ok_or_else(|| {
        Error::InvalidInput(format!(
            "no train-images-idx3-ubyte / train-labels-idx1-ubyte pair in {}",
            dir.display()
        ))
    })?;
    let raw = load_idx(&img, &lab)?;
    let name = |p: &Path| {
        p.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    Dataset::from_raw(
        &raw,
        Provenance::MnistDownscaled {
            images: name(&img),
            labels: name(&lab),
        },
    )
}

/// Spread of class means and per-pixel noise for [`synthetic_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub mean_spread: f64,
    pub noise: f64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            mean_spread: 0.12,
            noise: 0.3,
        }
    }
}

/// Ten Gaussian blobs in `[0, 1]^100` with the default [`BlobSpec`].
pub fn synthetic_dataset(m: usize, seed: u64) -> Result<Dataset> {
    synthetic_blobs(m, seed, BlobSpec::default())
}

/// Class means are `0.5 + mean_spread·z` per pixel; examples add
/// `N(0, noise²)` and are clipped to `[0, 1]`. Labels cycle `0, 1, …, 9`.
pub fn synthetic_blobs(m: usize, seed: u64, spec: BlobSpec) -> Result<Dataset> {
    if m < 10 {
        return Err(Error::InvalidInput(format!(
            "synthetic dataset needs m >= 10, got {m}"
        )));
    }
    let spread = Normal::new(0.5, spec.mean_spread)
        .map_err(|e| Error::InvalidInput(format!("mean spread: {e}")))?;
    let noise =
        Normal::new(0.0, spec.noise).map_err(|e| Error::InvalidInput(format!("noise: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..10)
        .map(|_| (0..PIXELS).map(|_| spread.sample(&mut rng)).collect())
        .collect();
    let mut images = Vec::with_capacity(m * PIXELS);
    let mut labels = Vec::with_capacity(m);
    for i in 0..m {
        let k = i % 10;
        labels.push(k as u8);
        images.extend(
            means[k]
                .iter()
                .map(|mu| (mu + noise.sample(&mut rng)).clamp(0.0, 1.0)),
        );
    }
    Dataset::new(images, labels, Provenance::Synthetic { seed })
}

/// Writes one JSON object per line. With `append`, existing lines are kept.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T], append: bool) -> Result<()> {
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads every non-blank line as one record.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// A record type that can be exported column by column.
pub trait Tabular {
    fn columns() -> &'static [&'static str];

    /// Cell text for `column`; `None` if the column does not exist.
    fn cell(&self, column: &str) -> Option<String>;
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt<T>(x: Option<T>, f: impl Fn(T) -> String) -> String {
    x.map(f).unwrap_or_default()
}

impl Tabular for EpochRecord {
    fn columns() -> &'static [&'static str] {
        &[
            "epoch",
            "loss",
            "error_rate",
            "lambda_pos",
            "lambda_neg",
            "damping",
            "step_norm",
            "grad_norm",
            "wall_time_s",
        ]
    }

    fn cell(&self, column: &str) -> Option<String> {
        Some(match column {
            "epoch" => self.epoch.to_string(),
            "loss" => num(self.loss),
            "error_rate" => opt(self.error_rate, num),
            "lambda_pos" => opt(self.lambda_pos, num),
            "lambda_neg" => opt(self.lambda_neg, num),
            "damping" => opt(self.damping, num),
            "step_norm" => num(self.step_norm),
            "grad_norm" => num(self.grad_norm),
            "wall_time_s" => opt(self.wall_time_s, num),
            _ => return None,
        })
    }
}

impl Tabular for CriticalPoint {
    fn columns() -> &'static [&'static str] {
        &[
            "job_id",
            "origin",
            "source_run",
            "source_epoch",
            "perturb_amplitude",
            "index",
            "loss",
            "error_rate",
            "grad_norm",
            "start_grad_norm",
            "iterations",
            "lambda_min",
            "lambda_max",
        ]
    }

    fn cell(&self, column: &str) -> Option<String> {
        Some(match column {
            "job_id" => opt(self.job_id, |x| x.to_string()),
            "origin" => serde_json::to_value(self.origin)
                .ok()?
                .as_str()?
                .to_string(),
            "source_run" => opt(self.source_run, |x| x.to_string()),
            "source_epoch" => opt(self.source_epoch, |x| x.to_string()),
            "perturb_amplitude" => opt(self.perturb_amplitude, num),
            "index" => num(self.index),
            "loss" => num(self.loss),
            "error_rate" => opt(self.error_rate, num),
            "grad_norm" => num(self.grad_norm),
            "start_grad_norm" => num(self.start_grad_norm),
            "iterations" => self.iterations.to_string(),
            "lambda_min" => opt(self.eigenvalues.first().copied(), num),
            "lambda_max" => opt(self.eigenvalues.last().copied(), num),
            _ => return None,
        })
    }
}

/// Writes the chosen columns of `rows` as CSV with a header line.
pub fn export_csv<T: Tabular>(rows: &[T], columns: &[&str], path: &Path) -> Result<()> {
    if let Some(bad) = columns.iter().find(|c| !T::columns().contains(c)) {
        return Err(Error::UnknownColumn(bad.to_string()));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(columns)?;
    for r in rows {
        w.write_record(columns.iter().map(|c| r.cell(c).expect("column checked")))?;
    }
    w.flush()?;
    Ok(())
}
