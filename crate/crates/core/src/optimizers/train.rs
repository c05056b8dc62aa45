use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    best_candidate, gd_step, newton_step, sgd_momentum_step, Method, Minibatch, StepConfig,
};
use crate::error::{Error, Result};
use crate::landscapes::Landscape;
use crate::linalg::{power_extreme_eigs, sym_eig, EigenDecomposition, PowerOptions};
use crate::param::ParamVector;

/// When and how the extreme Hessian eigenvalues are recorded.
///
/// Second-order methods read them off the eigendecomposition they already
/// compute; first-order methods run the power method on Hessian-vector
/// products.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureTracking {
    /// Record every `every` epochs (and always at the last one); zero disables.
    pub every: usize,
    pub power: PowerOptions,
}

impl Default for CurvatureTracking {
    fn default() -> Self {
        Self {
            every: 1,
            power: PowerOptions {
                max_iters: 500,
                tol: 1e-4,
                seed: 0,
            },
        }
    }
}

impl CurvatureTracking {
    pub fn off() -> Self {
        Self {
            every: 0,
            ..Self::default()
        }
    }

    fn due(&self, epoch: usize, last: usize) -> bool {
        self.every > 0 && (epoch.is_multiple_of(self.every) || epoch == last)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub step: StepConfig,
    pub epochs: usize,
    /// Drives minibatch order and power-method start vectors.
    pub seed: u64,
    /// Stop early once `‖∇L‖` drops to this value.
    pub grad_tol: Option<f64>,
    pub curvature: CurvatureTracking,
    /// Wall time makes traces differ between identical runs.
    pub record_wall_time: bool,
    /// Keep the parameters after every epoch (epoch 0 included).
    pub keep_checkpoints: bool,
}

impl TrainConfig {
    pub fn new(step: StepConfig, epochs: usize, seed: u64) -> Self {
        Self {
            step,
            epochs,
            seed,
            grad_tol: None,
            curvature: CurvatureTracking::default(),
            record_wall_time: false,
            keep_checkpoints: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub error_rate: Option<f64>,
    pub lambda_pos: Option<f64>,
    pub lambda_neg: Option<f64>,
    /// Damping chosen by the step that ended this epoch.
    pub damping: Option<f64>,
    /// `‖θ_end − θ_start‖` over the epoch.
    pub step_norm: f64,
    pub grad_norm: f64,
    /// Seconds since the run started.
    pub wall_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum RunStatus {
    Completed,
    Converged { epoch: usize },
    Failed { epoch: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub landscape: String,
    pub dim: usize,
    pub method: Method,
    pub config: TrainConfig,
    /// Free-form provenance (model seed, dataset checksum, ...), sorted.
    pub tags: Vec<(String, String)>,
}

/// Per-epoch record of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub meta: RunMeta,
    pub records: Vec<EpochRecord>,
    pub status: RunStatus,
}

impl TrainTrace {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn tag(&self, key: &str) -> Option<&str> {
        self.meta
            .tags
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn with_tag(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.tags.retain(|(k, _)| k != key);
        self.meta.tags.push((key.to_string(), value.to_string()));
        self.meta.tags.sort();
        self
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub trace: TrainTrace,
    pub final_params: ParamVector,
    /// Parameters after each recorded epoch, when requested.
    pub checkpoints: Vec<ParamVector>,
}

struct State {
    theta: ParamVector,
    loss: f64,
    error_rate: Option<f64>,
    grad: ParamVector,
    eig: Option<EigenDecomposition>,
}

fn evaluate(objective: &dyn Landscape, theta: ParamVector, want_eig: bool) -> Result<State> {
    let loss = objective.loss(&theta)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    let error_rate = objective.error_rate(&theta)?;
    let grad = objective.gradient(&theta)?;
    if !grad.is_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    let eig = if want_eig {
        Some(sym_eig(&objective.hessian(&theta)?)?)
    } else {
        None
    };
    Ok(State {
        theta,
        loss,
        error_rate,
        grad,
        eig,
    })
}

/// Runs `config.epochs` epochs from `theta0`.
///
/// An epoch is one full pass over the examples: a single step for batch
/// methods, `⌈m/b⌉` minibatch steps for SGD. Record 0 describes the start
/// point. Step failures end the run early with [`RunStatus::Failed`]; only
/// invalid configurations return an error.
pub fn train(
    objective: &dyn Landscape,
    theta0: ParamVector,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.step.validate()?;
    if theta0.len() != objective.dim() {
        return Err(Error::InvalidInput(format!(
            "start point has length {}, landscape dimension is {}",
            theta0.len(),
            objective.dim()
        )));
    }
    let started = Instant::now();
    let method = config.step.method;
    let second_order = method.is_second_order();
    let last = config.epochs;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = TrainTrace {
        meta: RunMeta {
            landscape: objective.name(),
            dim: objective.dim(),
            method,
            config: config.clone(),
            tags: Vec::new(),
        },
        records: Vec::new(),
        status: RunStatus::Completed,
    };
    let mut checkpoints = Vec::new();

    let needs_eig =
        |epoch: usize| second_order && (epoch < last || config.curvature.due(epoch, last));
    let mut state = match evaluate(objective, theta0.clone(), needs_eig(0)) {
        Ok(s) => s,
        Err(e) => {
            trace.status = RunStatus::Failed {
                epoch: 0,
                reason: e.to_string(),
            };
            return Ok(TrainOutcome {
                trace,
                final_params: theta0,
                checkpoints,
            });
        }
    };
    let mut velocity = ParamVector::zeros(objective.dim());

    let mut epoch = 0;
    let mut damping = None;
    let mut step_norm = 0.0;
    loop {
        let curvature = if config.curvature.due(epoch, last) {
            match extremes(objective, &state, config, epoch) {
                Ok(c) => Some(c),
                Err(e) => {
                    trace.status = RunStatus::Failed {
                        epoch,
                        reason: e.to_string(),
                    };
                    break;
                }
            }
        } else {
            None
        };
        let grad_norm = state.grad.norm();
        trace.records.push(EpochRecord {
            epoch,
            loss: state.loss,
            error_rate: state.error_rate,
            lambda_pos: curvature.map(|c| c.0),
            lambda_neg: curvature.map(|c| c.1),
            damping,
            step_norm,
            grad_norm,
            wall_time_s: config
                .record_wall_time
                .then(|| started.elapsed().as_secs_f64()),
        });
        if config.keep_checkpoints {
            checkpoints.push(state.theta.clone());
        }
        if config.grad_tol.is_some_and(|tol| grad_norm <= tol) {
            trace.status = RunStatus::Converged { epoch };
            break;
        }
        if epoch == last {
            break;
        }
        epoch += 1;

        let next = match take_epoch(objective, &state, &mut velocity, config, &mut rng) {
            Ok(v) => v,
            Err(e) => {
                trace.status = RunStatus::Failed {
                    epoch,
                    reason: e.to_string(),
                };
                break;
            }
        };
        let (theta, chosen) = next;
        step_norm = theta
            .iter()
            .zip(state.theta.iter())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        damping = chosen;
        state = match evaluate(objective, theta, needs_eig(epoch)) {
            Ok(s) => s,
            Err(e) => {
                trace.status = RunStatus::Failed {
                    epoch,
                    reason: e.to_string(),
                };
                break;
            }
        };
    }

    Ok(TrainOutcome {
        trace,
        final_params: state.theta,
        checkpoints,
    })
}

fn extremes(
    objective: &dyn Landscape,
    state: &State,
    config: &TrainConfig,
    epoch: usize,
) -> Result<(f64, f64)> {
    if let Some(d) = &state.eig {
        return Ok((d.max_value(), d.min_value()));
    }
    let opts = PowerOptions {
        seed: config.curvature.power.seed ^ config.seed.rotate_left(17) ^ epoch as u64,
        ..config.curvature.power
    };
    let theta = &state.theta;
    let est = power_extreme_eigs(
        |v| Ok(objective.hessian_vector(theta, v)?.into_inner()),
        objective.dim(),
        &opts,
    )?;
    Ok((est.pos, est.neg))
}

/// Returns the parameters after one epoch and the damping used, if any.
fn take_epoch(
    objective: &dyn Landscape,
    state: &State,
    velocity: &mut ParamVector,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(ParamVector, Option<f64>)> {
    let step = &config.step;
    let theta = &state.theta;
    let (next, damping) = match step.method {
        Method::Gd => (
            theta.add_scaled(1.0, &gd_step(&state.grad, step.learning_rate)),
            None,
        ),
        Method::SgdMomentum => {
            let m = objective.example_count();
            let b = match step.minibatch {
                Minibatch::Full => m,
                Minibatch::Size(b) => b.min(m),
            };
            let mut order: Vec<usize> = (0..m).collect();
            order.shuffle(rng);
            let mut theta = theta.clone();
            for chunk in order.chunks(b) {
                let g = objective.subset_gradient(&theta, chunk)?;
                let (delta, v) = sgd_momentum_step(&g, velocity, step.learning_rate, step.momentum);
                *velocity = v;
                theta.axpy_in_place(1.0, &delta);
            }
            (theta, None)
        }
        Method::Newton => {
            let d = state
                .eig
                .as_ref()
                .expect("eigendecomposition computed for second-order methods");
            let delta = newton_step(d, &state.grad)?;
            (theta.add_scaled(step.learning_rate, &delta), None)
        }
        Method::DampedNewton | Method::SaddleFree => {
            let d = state
                .eig
                .as_ref()
                .expect("eigendecomposition computed for second-order methods");
            let chosen = best_candidate(
                d,
                &state.grad,
                &step.damping_grid,
                step.method == Method::SaddleFree,
                step.learning_rate,
                |t| objective.loss(t),
                theta,
            )?;
            (theta.add_scaled(1.0, &chosen.step), Some(chosen.damping))
        }
    };
    if !next.is_finite() {
        return Err(Error::NonFinite("parameters after step".into()));
    }
    Ok((next, damping))
}
