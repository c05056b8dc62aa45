//! Step rules and the training loop.
//!
//! Second-order rules take an [`EigenDecomposition`] of the Hessian at the
//! current point and rescale each eigen-coordinate of the gradient:
//!
//! | rule           | coordinate `i` of `Δθ`        |
//! |----------------|-------------------------------|
//! | Newton         | `−gᵢ / λᵢ`                    |
//! | damped Newton  | `−gᵢ / (λᵢ + α)`              |
//! | saddle-free    | `−gᵢ / (|λᵢ| + α)`            |
//!
//! Damped rules try every `α` of a grid and keep the candidate with the
//! lowest loss after the step.

mod train;
mod trust_region;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{damped_eigen_solve, EigenDecomposition, SINGULAR_EPS};
use crate::param::ParamVector;

pub use train::{
    train, CurvatureTracking, EpochRecord, RunMeta, RunStatus, TrainConfig, TrainOutcome,
    TrainTrace,
};
pub use trust_region::{trust_region_step, TrustMetric, TrustOrder};

/// `{10⁰, 10⁻¹, …, 10⁻⁵}`
pub const DEFAULT_DAMPING_GRID: [f64; 6] = [1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Gd,
    #[serde(rename = "sgd")]
    SgdMomentum,
    Newton,
    DampedNewton,
    SaddleFree,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Gd,
        Method::SgdMomentum,
        Method::Newton,
        Method::DampedNewton,
        Method::SaddleFree,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Gd => "gd",
            Method::SgdMomentum => "sgd",
            Method::Newton => "newton",
            Method::DampedNewton => "damped-newton",
            Method::SaddleFree => "saddle-free",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown method `{s}`")))
    }

    /// Needs the Hessian eigendecomposition at every step.
    pub fn is_second_order(self) -> bool {
        matches!(
            self,
            Method::Newton | Method::DampedNewton | Method::SaddleFree
        )
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Minibatch {
    Full,
    Size(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub method: Method,
    pub learning_rate: f64,
    pub momentum: f64,
    pub damping_grid: Vec<f64>,
    pub minibatch: Minibatch,
}

/// Best SGD hyperparameters per hidden-layer size:
/// `(hidden, learning rate, momentum, minibatch)`.
pub const SGD_TABLE: [(usize, f64, f64, usize); 3] = [
    (5, 0.074, 0.031, 10),
    (25, 0.040, 0.017, 10),
    (50, 0.015, 0.254, 1),
];

impl StepConfig {
    /// Batch-mode configuration for the Newton family: learning rate 1 and
    /// the default damping grid.
    pub fn second_order(method: Method) -> Self {
        Self {
            method,
            learning_rate: 1.0,
            momentum: 0.0,
            damping_grid: DEFAULT_DAMPING_GRID.to_vec(),
            minibatch: Minibatch::Full,
        }
    }

    pub fn gd(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::second_order(Method::Gd)
        }
    }

    pub fn sgd(learning_rate: f64, momentum: f64, minibatch: usize) -> Self {
        Self {
            method: Method::SgdMomentum,
            learning_rate,
            momentum,
            damping_grid: DEFAULT_DAMPING_GRID.to_vec(),
            minibatch: Minibatch::Size(minibatch),
        }
    }

    /// Tuned momentum SGD for a tabulated hidden size.
    pub fn sgd_for_hidden(hidden: usize) -> Option<Self> {
        SGD_TABLE
            .iter()
            .find(|row| row.0 == hidden)
            .map(|&(_, lr, mu, mb)| Self::sgd(lr, mu, mb))
    }

    /// Defaults for `method` on a model with `hidden` units: the SGD table
    /// when available (nearest tabulated size otherwise), batch mode for
    /// everything else.
    pub fn defaults_for(method: Method, hidden: usize) -> Self {
        match method {
            Method::SgdMomentum => Self::sgd_for_hidden(hidden).unwrap_or_else(|| {
                let row = SGD_TABLE
                    .iter()
                    .min_by_key(|row| row.0.abs_diff(hidden))
                    .expect("table is nonempty");
                Self::sgd(row.1, row.2, row.3)
            }),
            Method::Gd => Self::gd(0.1),
            m => Self::second_order(m),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidInput(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.damping_grid.is_empty() {
            return Err(Error::InvalidInput("damping grid is empty".into()));
        }
        if let Some(a) = self
            .damping_grid
            .iter()
            .find(|a| !(**a > 0.0 && a.is_finite()))
        {
            return Err(Error::InvalidInput(format!(
                "damping values must be positive, got {a}"
            )));
        }
        if self.minibatch == Minibatch::Size(0) {
            return Err(Error::InvalidInput("minibatch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// `Δθ = −η g`
pub fn gd_step(g: &[f64], learning_rate: f64) -> ParamVector {
    ParamVector::from(g).scaled(-learning_rate)
}

/// Heavy-ball update: `v' = μ v − η g`, `Δθ = v'`.
pub fn sgd_momentum_step(
    g: &[f64],
    velocity: &[f64],
    learning_rate: f64,
    momentum: f64,
) -> (ParamVector, ParamVector) {
    let v: ParamVector = velocity
        .iter()
        .zip(g)
        .map(|(v, g)| momentum * v - learning_rate * g)
        .collect::<Vec<_>>()
        .into();
    (v.clone(), v)
}

/// `Δθ = −H⁻¹ g`
pub fn newton_step(d: &EigenDecomposition, g: &[f64]) -> Result<ParamVector> {
    Ok(damped_eigen_solve(d, g, 0.0, false)?.scaled(-1.0))
}

/// A step chosen from the damping grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DampedStep {
    pub step: ParamVector,
    pub damping: f64,
    /// Loss at `θ + Δθ`.
    pub loss: f64,
}

/// Tries `−(Λ+αI)⁻¹`-scaled steps for every `α` and keeps the lowest loss.
///
/// Candidates with a vanishing denominator are skipped; negative
/// `λ + α` are allowed. Equal losses prefer the smaller `α`.
pub fn damped_newton_step(
    d: &EigenDecomposition,
    g: &[f64],
    grid: &[f64],
    evaluate: impl FnMut(&[f64]) -> Result<f64>,
    theta: &[f64],
) -> Result<DampedStep> {
    best_candidate(d, g, grid, false, 1.0, evaluate, theta)
}

/// Like [`damped_newton_step`] with `|Λ|` in place of `Λ`.
pub fn saddle_free_step(
    d: &EigenDecomposition,
    g: &[f64],
    grid: &[f64],
    evaluate: impl FnMut(&[f64]) -> Result<f64>,
    theta: &[f64],
) -> Result<DampedStep> {
    best_candidate(d, g, grid, true, 1.0, evaluate, theta)
}

pub(crate) fn best_candidate(
    d: &EigenDecomposition,
    g: &[f64],
    grid: &[f64],
    use_abs: bool,
    learning_rate: f64,
    mut evaluate: impl FnMut(&[f64]) -> Result<f64>,
    theta: &[f64],
) -> Result<DampedStep> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("damping grid is empty".into()));
    }
    if theta.len() != g.len() {
        return Err(Error::InvalidInput(
            "gradient and parameters differ in length".into(),
        ));
    }
    // the eigenbasis projection is shared by every candidate
    let coords = d.project(g);
    let mut best: Option<DampedStep> = None;
    let mut reasons = Vec::new();
    for &alpha in grid {
        let mut scaled = coords.clone();
        let mut singular = false;
        for (c, &l) in scaled.iter_mut().zip(d.values()) {
            let den = if use_abs { l.abs() } else { l } + alpha;
            if den.abs() <= SINGULAR_EPS {
                singular = true;
                break;
            }
            *c *= -learning_rate / den;
        }
        if singular {
            reasons.push(format!("α={alpha:e}: singular"));
            continue;
        }
        let step = ParamVector::new(d.combine(&scaled));
        if !step.is_finite() {
            reasons.push(format!("α={alpha:e}: non-finite step"));
            continue;
        }
        let trial = step.add_scaled(1.0, theta);
        let loss = match evaluate(&trial) {
            Ok(l) if l.is_finite() => l,
            Ok(_) => {
                reasons.push(format!("α={alpha:e}: non-finite loss"));
                continue;
            }
            Err(e) => {
                reasons.push(format!("α={alpha:e}: {e}"));
                continue;
            }
        };
        let better = match &best {
            None => true,
            Some(b) => loss < b.loss || (loss == b.loss && alpha < b.damping),
        };
        if better {
            best = Some(DampedStep {
                step,
                damping: alpha,
                loss,
            });
        }
    }
    best.ok_or_else(|| {
        Error::StepFailure(format!(
            "no valid damping candidate ({})",
            reasons.join("; ")
        ))
    })
}
