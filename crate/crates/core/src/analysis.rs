//! Critical-point discovery, index surveys and spectrum statistics.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscapes::Landscape;
use crate::linalg::{sym_eig, EigenDecomposition};
use crate::param::ParamVector;

/// Default relative threshold below which a negative eigenvalue counts as zero.
pub const INDEX_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    /// A training checkpoint plus uniform noise.
    TrajectoryPerturbed,
    /// A uniform sample from a box.
    UniformCube,
    /// A start point given directly by the caller.
    Given,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub theta: ParamVector,
    pub loss: f64,
    pub error_rate: Option<f64>,
    /// `‖∇L‖` at `theta`; nonzero values measure how far from exact the point is.
    pub grad_norm: f64,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub index: f64,
    pub origin: Origin,
    pub source_run: Option<usize>,
    pub source_epoch: Option<usize>,
    pub perturb_amplitude: Option<f64>,
    pub job_id: Option<usize>,
    pub start_grad_norm: f64,
    pub iterations: usize,
}

impl CriticalPoint {
    pub fn converged(&self, grad_tol: f64) -> bool {
        self.grad_norm <= grad_tol
    }
}

/// Step coordinates in the eigenbasis, `Δv_i = e⁽ⁱ⁾ᵀΔθ`.
///
/// No factor ½ is folded in, so the second-order model reads
/// `L(θ*) + ½ Σ λ_i Δv_i²`.
pub fn eigenbasis_coords(d: &EigenDecomposition, delta: &[f64]) -> Result<Vec<f64>> {
    if delta.len() != d.dim() {
        return Err(Error::InvalidInput(format!(
            "step has length {}, decomposition has dimension {}",
            delta.len(),
            d.dim()
        )));
    }
    Ok(d.project(delta))
}

/// Fraction of eigenvalues below `−scale_tol·max(1, max|λ|)`.
pub fn index_of(eigenvalues: &[f64], scale_tol: f64) -> Result<f64> {
    if eigenvalues.is_empty() {
        return Err(Error::InvalidInput("index of an empty spectrum".into()));
    }
    let scale = eigenvalues.iter().fold(1.0f64, |m, l| m.max(l.abs()));
    let eps = scale_tol * scale;
    let neg = eigenvalues.iter().filter(|&&l| l < -eps).count();
    Ok(neg as f64 / eigenvalues.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinderConfig {
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Starting `ν` for `(H² + νI)Δθ = −H∇L`.
    pub initial_damping: f64,
    pub index_tol: f64,
}

impl Default for FinderConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-10,
            max_iters: 100,
            initial_damping: 1e-4,
            index_tol: INDEX_TOL,
        }
    }
}

const NU_MAX: f64 = 1e8;
const NU_FLOOR: f64 = 1e-12;

/// Damped Newton iteration on `∇L = 0`.
///
/// Each step is the Levenberg–Marquardt step for the residual `∇L`, solving
/// `(H² + νI)Δθ = −H∇L` in the eigenbasis of `H`. It reduces to the Newton
/// step `−H⁻¹∇L` as `ν → 0` and stays bounded for either sign of `λ`. A step
/// is kept only if `‖∇L‖` strictly drops; `ν` shrinks tenfold after a
/// success and grows tenfold after a failure. The iteration stops at
/// `grad_tol`, after `max_iters` accepted steps, or when no `ν ≤ 1e8`
/// decreases the gradient. The point is returned in every case.
pub fn find_critical_point(
    landscape: &dyn Landscape,
    theta0: &[f64],
    config: &FinderConfig,
) -> Result<CriticalPoint> {
    if theta0.len() != landscape.dim() {
        return Err(Error::InvalidInput(format!(
            "start point has length {}, landscape dimension is {}",
            theta0.len(),
            landscape.dim()
        )));
    }
    let grad_at = |t: &[f64]| -> Result<(ParamVector, f64)> {
        let g = landscape.gradient(t)?;
        let n = g.norm();
        if !n.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        Ok((g, n))
    };
    let mut theta = ParamVector::from(theta0);
    let (mut g, mut gn) = grad_at(&theta)?;
    let start_grad_norm = gn;
    let mut nu = config.initial_damping;
    let mut eig: Option<EigenDecomposition> = None;
    let mut iterations = 0;

    while iterations < config.max_iters && gn > config.grad_tol {
        let d = match eig.take() {
            Some(d) => d,
            None => sym_eig(&landscape.hessian(&theta)?)?,
        };
        let b = d.project(&g);
        let try_coords = |coords: Vec<f64>| -> Option<(ParamVector, ParamVector, f64)> {
            let trial = theta.add_scaled(1.0, &d.combine(&coords));
            if !trial.is_finite() {
                return None;
            }
            match grad_at(&trial) {
                Ok((g2, n2)) if n2 < gn => Some((trial, g2, n2)),
                _ => None,
            }
        };

        let mut accepted = None;
        while nu <= NU_MAX {
            let coords = b
                .iter()
                .zip(d.values())
                .map(|(bi, l)| -l * bi / (l * l + nu))
                .collect();
            if let Some(hit) = try_coords(coords) {
                accepted = Some(hit);
                nu = if nu / 10.0 < NU_FLOOR { 0.0 } else { nu / 10.0 };
                break;
            }
            nu = if nu == 0.0 { NU_FLOOR } else { nu * 10.0 };
        }
        match accepted {
            Some((t, g2, n2)) => {
                theta = t;
                g = g2;
                gn = n2;
                iterations += 1;
            }
            None => {
                eig = Some(d);
                break;
            }
        }
    }

    let d = match eig {
        Some(d) => d,
        None => sym_eig(&landscape.hessian(&theta)?)?,
    };
    let loss = landscape.loss(&theta)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss at critical point".into()));
    }
    let error_rate = landscape.error_rate(&theta)?;
    let eigenvalues = d.values().to_vec();
    let index = index_of(&eigenvalues, config.index_tol)?;
    Ok(CriticalPoint {
        theta,
        loss,
        error_rate,
        grad_norm: gn,
        eigenvalues,
        index,
        origin: Origin::Given,
        source_run: None,
        source_epoch: None,
        perturb_amplitude: None,
        job_id: None,
        start_grad_norm,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyConfig {
    pub n_trajectory_jobs: usize,
    pub n_uniform_jobs: usize,
    pub amplitudes: Vec<f64>,
    /// Inclusive range of checkpoint epochs to start from.
    pub epoch_range: (usize, usize),
    /// Box for the uniform starts.
    pub uniform_range: (f64, f64),
    pub seed: u64,
    pub finder: FinderConfig,
    /// Threads used for jobs; results do not depend on it.
    pub workers: usize,
}

impl Default for SurveyConfig {
    fn default() -> Self {
        Self {
            n_trajectory_jobs: 100,
            n_uniform_jobs: 100,
            amplitudes: vec![1e-1, 1e-2, 1e-3, 1e-4],
            epoch_range: (0, 20),
            uniform_range: (0.0, 1.0),
            seed: 0,
            finder: FinderConfig::default(),
            workers: 1,
        }
    }
}

/// Checkpoints of one training run, indexed by epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCheckpoints {
    pub run_id: usize,
    pub checkpoints: Vec<ParamVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobFailure {
    pub job_id: usize,
    pub origin: Origin,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SurveyRecord {
    Point(CriticalPoint),
    Failure(JobFailure),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurveyOutcome {
    /// Sorted by job id.
    pub points: Vec<CriticalPoint>,
    pub failures: Vec<JobFailure>,
}

impl SurveyOutcome {
    pub fn records(&self) -> Vec<SurveyRecord> {
        let mut out: Vec<(usize, SurveyRecord)> = self
            .points
            .iter()
            .map(|p| {
                (
                    p.job_id.unwrap_or(usize::MAX),
                    SurveyRecord::Point(p.clone()),
                )
            })
            .chain(
                self.failures
                    .iter()
                    .map(|f| (f.job_id, SurveyRecord::Failure(f.clone()))),
            )
            .collect();
        out.sort_by_key(|(id, _)| *id);
        out.into_iter().map(|(_, r)| r).collect()
    }

    pub fn from_records(records: Vec<SurveyRecord>) -> Self {
        let mut out = Self::default();
        for r in records {
            match r {
                SurveyRecord::Point(p) => out.points.push(p),
                SurveyRecord::Failure(f) => out.failures.push(f),
            }
        }
        out
    }

    pub fn converged(&self, grad_tol: f64) -> Vec<&CriticalPoint> {
        self.points
            .iter()
            .filter(|p| p.converged(grad_tol))
            .collect()
    }
}

struct Job {
    id: usize,
    origin: Origin,
    start: ParamVector,
    run: Option<usize>,
    epoch: Option<usize>,
    amplitude: Option<f64>,
}

fn job_rng(seed: u64, id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id as u64);
    rng
}

fn plan_jobs(dim: usize, runs: &[RunCheckpoints], config: &SurveyConfig) -> Result<Vec<Job>> {
    let (lo, hi) = config.epoch_range;
    if config.n_trajectory_jobs > 0 {
        if runs.is_empty() {
            return Err(Error::InvalidInput(
                "trajectory jobs need at least one run".into(),
            ));
        }
        if lo > hi {
            return Err(Error::InvalidInput(format!(
                "empty epoch range {lo}..={hi}"
            )));
        }
        if config.amplitudes.is_empty() || config.amplitudes.iter().any(|a| a.is_nan() || *a <= 0.0)
        {
            return Err(Error::InvalidInput(
                "amplitudes must be nonempty and positive".into(),
            ));
        }
        for r in runs {
            if r.checkpoints.len() <= hi {
                return Err(Error::InvalidInput(format!(
                    "run {} has {} checkpoints, epoch range needs {}",
                    r.run_id,
                    r.checkpoints.len(),
                    hi + 1
                )));
            }
            if let Some(bad) = r.checkpoints.iter().find(|c| c.len() != dim) {
                return Err(Error::InvalidInput(format!(
                    "run {} checkpoint has length {}, expected {dim}",
                    r.run_id,
                    bad.len()
                )));
            }
        }
    }
    let (a, b) = config.uniform_range;
    if config.n_uniform_jobs > 0 && !(a < b && a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidInput(format!("bad uniform range [{a}, {b}]")));
    }

    let mut jobs = Vec::with_capacity(config.n_trajectory_jobs + config.n_uniform_jobs);
    for id in 0..config.n_trajectory_jobs {
        let mut rng = job_rng(config.seed, id);
        let run = &runs[rng.gen_range(0..runs.len())];
        let epoch = rng.gen_range(lo..=hi);
        let amp = *config.amplitudes.choose(&mut rng).expect("nonempty");
        let start: Vec<f64> = run.checkpoints[epoch]
            .iter()
            .map(|x| x + rng.gen_range(-amp..=amp))
            .collect();
        jobs.push(Job {
            id,
            origin: Origin::TrajectoryPerturbed,
            start: start.into(),
            run: Some(run.run_id),
            epoch: Some(epoch),
            amplitude: Some(amp),
        });
    }
    for k in 0..config.n_uniform_jobs {
        let id = config.n_trajectory_jobs + k;
        let mut rng = job_rng(config.seed, id);
        let start: Vec<f64> = (0..dim).map(|_| rng.gen_range(a..b)).collect();
        jobs.push(Job {
            id,
            origin: Origin::UniformCube,
            start: start.into(),
            run: None,
            epoch: None,
            amplitude: None,
        });
    }
    Ok(jobs)
}

fn run_job(
    landscape: &dyn Landscape,
    job: Job,
    finder: &FinderConfig,
) -> std::result::Result<CriticalPoint, JobFailure> {
    match find_critical_point(landscape, &job.start, finder) {
        Ok(mut p) => {
            p.origin = job.origin;
            p.source_run = job.run;
            p.source_epoch = job.epoch;
            p.perturb_amplitude = job.amplitude;
            p.job_id = Some(job.id);
            Ok(p)
        }
        Err(e) => Err(JobFailure {
            job_id: job.id,
            origin: job.origin,
            reason: e.to_string(),
        }),
    }
}

/// Runs the critical-point finder from perturbed checkpoints and from
/// uniform samples.
///
/// Job `k` draws its start from its own random stream, so assignments do not
/// depend on job order or worker count. Jobs `0..n_trajectory_jobs` perturb a
/// random checkpoint of a random run; the rest sample `uniform_range^n`.
pub fn critical_point_survey(
    landscape: &dyn Landscape,
    runs: &[RunCheckpoints],
    config: &SurveyConfig,
) -> Result<SurveyOutcome> {
    let jobs = plan_jobs(landscape.dim(), runs, config)?;
    let results: Vec<std::result::Result<CriticalPoint, JobFailure>> = if config.workers > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
        pool.install(|| {
            jobs.into_par_iter()
                .map(|j| run_job(landscape, j, &config.finder))
                .collect()
        })
    } else {
        jobs.into_iter()
            .map(|j| run_job(landscape, j, &config.finder))
            .collect()
    };
    let mut out = SurveyOutcome::default();
    for r in results {
        match r {
            Ok(p) => out.points.push(p),
            Err(f) => out.failures.push(f),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `n_bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// `counts`, or `log10(count + 1)` when requested.
    pub heights: Vec<f64>,
}

impl Histogram {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn mode_bin(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        best
    }
}

/// Equal-width histogram over `[min λ, max λ]`.
///
/// Bins are half-open `[a, b)` except the last, which is closed. A constant
/// input gets unit-width bins centred on its value. Non-finite values are
/// dropped first.
pub fn spectrum_histogram(
    eigenvalues: &[f64],
    n_bins: usize,
    log_counts: bool,
) -> Result<Histogram> {
    if n_bins == 0 {
        return Err(Error::InvalidInput(
            "histogram needs at least one bin".into(),
        ));
    }
    let vals: Vec<f64> = eigenvalues
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .collect();
    if vals.is_empty() {
        return Err(Error::InvalidInput("no finite values to histogram".into()));
    }
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    };
    let width = (hi - lo) / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins)
        .map(|i| {
            if i == n_bins {
                hi
            } else {
                lo + width * i as f64
            }
        })
        .collect();
    let mut counts = vec![0u64; n_bins];
    for v in vals {
        let mut k = (((v - lo) / width).floor() as isize).clamp(0, n_bins as isize - 1) as usize;
        // floating error can misplace values sitting on an edge
        while k > 0 && v < edges[k] {
            k -= 1;
        }
        while k + 1 < n_bins && v >= edges[k + 1] {
            k += 1;
        }
        counts[k] += 1;
    }
    let heights = counts
        .iter()
        .map(|&c| {
            if log_counts {
                (c as f64 + 1.0).log10()
            } else {
                c as f64
            }
        })
        .collect();
    Ok(Histogram {
        edges,
        counts,
        heights,
    })
}

fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with ties given their average rank.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(
            "rank correlation of unequal-length samples".into(),
        ));
    }
    if x.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "rank correlation needs at least 3 points, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("rank correlation input".into()));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate(
            "a constant sample has no rank correlation".into(),
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman correlation between index and loss.
pub fn index_error_correlation(points: &[CriticalPoint]) -> Result<f64> {
    let idx: Vec<f64> = points.iter().map(|p| p.index).collect();
    let loss: Vec<f64> = points.iter().map(|p| p.loss).collect();
    spearman(&idx, &loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscapes::{make_gutter, make_minmax_saddle, make_monkey_saddle, make_quadratic};
    use proptest::prelude::*;

    #[test]
    fn index_examples() {
        assert_eq!(index_of(&[-1.0, -1.0, 1.0, 3.0], INDEX_TOL).unwrap(), 0.5);
        assert_eq!(index_of(&[0.5, 1.0, 3.0], INDEX_TOL).unwrap(), 0.0);
        assert_eq!(index_of(&[-1e-15, 1.0], 1e-8).unwrap(), 0.0);
        assert!(index_of(&[], INDEX_TOL).is_err());
    }

    #[test]
    fn eigenbasis_coords_of_eigenvector_is_unit() {
        let q = make_quadratic(&[-2.0, 1.0, 4.0], 5).unwrap();
        let d = sym_eig(q.matrix()).unwrap();
        for k in 0..3 {
            let v = eigenbasis_coords(&d, d.vector(k)).unwrap();
            for (i, x) in v.iter().enumerate() {
                assert!((x - if i == k { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        assert!(eigenbasis_coords(&d, &[1.0]).is_err());
    }

    #[test]
    fn quadratic_model_in_eigen_coordinates_is_exact() {
        let q = make_quadratic(&[-2.0, 1.0, 4.0], 5).unwrap();
        let d = sym_eig(q.matrix()).unwrap();
        let delta = [0.3, -0.7, 0.2];
        let v = eigenbasis_coords(&d, &delta).unwrap();
        let model: f64 = 0.5
            * d.values()
                .iter()
                .zip(&v)
                .map(|(l, x)| l * x * x)
                .sum::<f64>();
        assert!((model - q.loss(&delta).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn finder_lands_on_minmax_saddle() {
        let f = make_minmax_saddle();
        let p = find_critical_point(
            &f,
            &[0.1, 0.1],
            &FinderConfig {
                grad_tol: 1e-12,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(p.grad_norm <= 1e-12);
        assert!(p.theta.norm() < 1e-12);
        assert_eq!(p.index, 0.5);
    }

    #[test]
    fn finder_on_convex_quadratic() {
        let q = make_quadratic(&[1.0, 2.0, 3.0], 9).unwrap();
        let p = find_critical_point(&q, &[4.0, -3.0, 7.0], &FinderConfig::default()).unwrap();
        assert_eq!(p.index, 0.0);
        assert!(p.loss.abs() < 1e-18);
    }

    #[test]
    fn finder_reaches_gutter_ring_or_centre() {
        let f = make_gutter();
        let p = find_critical_point(&f, &[0.6, 0.9], &FinderConfig::default()).unwrap();
        assert!(p.grad_norm < 1e-10);
        let r = p.theta.norm();
        assert!((r - 1.0).abs() < 1e-8 || r < 1e-8, "r = {r}");
    }

    #[test]
    fn finder_never_increases_gradient_norm() {
        let f = make_monkey_saddle();
        for start in [[0.3, -0.2], [1.0, 1.0], [-2.0, 0.5]] {
            let p = find_critical_point(&f, &start, &FinderConfig::default()).unwrap();
            assert!(p.grad_norm <= p.start_grad_norm);
        }
    }

    #[test]
    fn survey_on_isotropic_quadratic() {
        let q = make_quadratic(&[1.0; 4], 1).unwrap();
        let runs: Vec<RunCheckpoints> = (0..3)
            .map(|r| RunCheckpoints {
                run_id: r,
                checkpoints: (0..5)
                    .map(|e| ParamVector::from(vec![(r + e) as f64; 4]))
                    .collect(),
            })
            .collect();
        let cfg = SurveyConfig {
            n_trajectory_jobs: 6,
            n_uniform_jobs: 4,
            epoch_range: (0, 4),
            ..Default::default()
        };
        let out = critical_point_survey(&q, &runs, &cfg).unwrap();
        assert!(out.failures.is_empty());
        assert_eq!(out.points.len(), 10);
        for (k, p) in out.points.iter().enumerate() {
            assert_eq!(p.job_id, Some(k));
            assert_eq!(p.index, 0.0);
            assert!(p.theta.norm() < 1e-10);
            assert_eq!(
                p.origin,
                if k < 6 {
                    Origin::TrajectoryPerturbed
                } else {
                    Origin::UniformCube
                }
            );
        }
        let again = critical_point_survey(
            &q,
            &runs,
            &SurveyConfig {
                workers: 3,
                ..cfg.clone()
            },
        )
        .unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn survey_checks_checkpoint_coverage() {
        let q = make_quadratic(&[1.0; 2], 1).unwrap();
        let runs = [RunCheckpoints {
            run_id: 0,
            checkpoints: vec![ParamVector::zeros(2); 3],
        }];
        assert!(critical_point_survey(&q, &runs, &SurveyConfig::default()).is_err());
    }

    #[test]
    fn histogram_examples() {
        let h = spectrum_histogram(&[-1.0, 0.0, 1.0], 2, false).unwrap();
        assert_eq!(h.counts, vec![1, 2]);
        assert_eq!(h.edges, vec![-1.0, 0.0, 1.0]);
        let h = spectrum_histogram(&[-1.0, 0.0, 1.0], 2, true).unwrap();
        assert!((h.heights[1] - 3f64.log10()).abs() < 1e-15);
        assert!(spectrum_histogram(&[], 3, false).is_err());
        assert!(spectrum_histogram(&[f64::NAN], 3, false).is_err());
        assert!(spectrum_histogram(&[1.0], 0, false).is_err());
        let h = spectrum_histogram(&[2.0, 2.0], 3, false).unwrap();
        assert_eq!(h.counts, vec![0, 2, 0]);
    }

    #[test]
    fn spearman_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman(&x, &[1.0, 4.0, 9.0, 16.0]).unwrap(), 1.0);
        assert_eq!(spearman(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!(matches!(spearman(&[0.2; 4], &x), Err(Error::Degenerate(_))));
        assert!(spearman(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        // ties share the mean rank: ranks (1.5, 1.5, 3) against (1, 2, 3)
        let r = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((r - 1.5 / 3f64.sqrt()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn index_is_scale_invariant(v in prop::collection::vec(-10.0f64..10.0, 1..20), s in 1.0f64..1e3) {
            let scaled: Vec<f64> = v.iter().map(|x| x * s).collect();
            prop_assert_eq!(index_of(&v, INDEX_TOL).unwrap(), index_of(&scaled, INDEX_TOL).unwrap());
        }

        #[test]
        fn histogram_counts_sum(v in prop::collection::vec(-1e3f64..1e3, 1..200), bins in 1usize..40) {
            let h = spectrum_histogram(&v, bins, false).unwrap();
            prop_assert_eq!(h.counts.iter().sum::<u64>() as usize, v.len());
        }

        #[test]
        fn eigen_coords_are_isometric(seed in any::<u64>(), x in prop::collection::vec(-5.0f64..5.0, 6)) {
            let q = make_quadratic(&[-3.0, -1.0, 0.5, 1.0, 2.0, 7.0], seed).unwrap();
            let d = sym_eig(q.matrix()).unwrap();
            let v = eigenbasis_coords(&d, &x).unwrap();
            let a = x.iter().map(|t| t * t).sum::<f64>().sqrt();
            let b = v.iter().map(|t| t * t).sum::<f64>().sqrt();
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a));
        }
    }
}
