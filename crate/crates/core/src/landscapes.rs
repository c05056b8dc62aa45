//! Analytic test functions and random-matrix ensembles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{EigenDecomposition, SymmetricMatrix};
use crate::param::{dot, ParamVector};

/// A twice-differentiable objective with exact first and second derivatives.
///
/// The training hooks (`example_count`, `subset_gradient`, `error_rate`) have
/// defaults suited to deterministic functions; data-driven objectives
/// override them.
pub trait Landscape: Send + Sync {
    fn name(&self) -> String;

    fn dim(&self) -> usize;

    fn loss(&self, theta: &[f64]) -> Result<f64>;

    fn gradient(&self, theta: &[f64]) -> Result<ParamVector>;

    fn hessian(&self, theta: &[f64]) -> Result<SymmetricMatrix>;

    fn hessian_vector(&self, theta: &[f64], v: &[f64]) -> Result<ParamVector> {
        Ok(self.hessian(theta)?.matvec(v).into())
    }

    /// Number of examples an epoch iterates over.
    fn example_count(&self) -> usize {
        1
    }

    /// Gradient of the loss restricted to the given examples.
    fn subset_gradient(&self, theta: &[f64], _examples: &[usize]) -> Result<ParamVector> {
        self.gradient(theta)
    }

    /// Classification error, for objectives that have one.
    fn error_rate(&self, _theta: &[f64]) -> Result<Option<f64>> {
        Ok(None)
    }
}

pub(crate) fn check_dim(expected: usize, theta: &[f64]) -> Result<()> {
    if theta.len() != expected {
        return Err(Error::InvalidInput(format!(
            "parameter vector has length {}, expected {expected}",
            theta.len()
        )));
    }
    Ok(())
}

/// The low-dimensional critical-point zoo.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZooFunction {
    /// `θ³`, a degenerate saddle at the origin.
    Cubic,
    /// `x² − y²`
    MinMax,
    /// `x³ − 3xy²`
    Monkey,
    /// `(1 − x² − y²)²`, a ring of minima around a local maximum.
    Gutter,
}

impl ZooFunction {
    pub const ALL: [ZooFunction; 4] = [
        ZooFunction::Cubic,
        ZooFunction::MinMax,
        ZooFunction::Monkey,
        ZooFunction::Gutter,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ZooFunction::Cubic => "cubic",
            ZooFunction::MinMax => "minmax",
            ZooFunction::Monkey => "monkey",
            ZooFunction::Gutter => "gutter",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.as_str() == name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown landscape `{name}`")))
    }
}

impl std::fmt::Display for ZooFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn make_cubic_1d() -> ZooFunction {
    ZooFunction::Cubic
}

pub fn make_minmax_saddle() -> ZooFunction {
    ZooFunction::MinMax
}

pub fn make_monkey_saddle() -> ZooFunction {
    ZooFunction::Monkey
}

pub fn make_gutter() -> ZooFunction {
    ZooFunction::Gutter
}

impl Landscape for ZooFunction {
    fn name(&self) -> String {
        self.as_str().to_string()
    }

    fn dim(&self) -> usize {
        match self {
            ZooFunction::Cubic => 1,
            _ => 2,
        }
    }

    fn loss(&self, t: &[f64]) -> Result<f64> {
        check_dim(self.dim(), t)?;
        Ok(match self {
            ZooFunction::Cubic => t[0].powi(3),
            ZooFunction::MinMax => t[0] * t[0] - t[1] * t[1],
            ZooFunction::Monkey => t[0].powi(3) - 3.0 * t[0] * t[1] * t[1],
            ZooFunction::Gutter => (1.0 - t[0] * t[0] - t[1] * t[1]).powi(2),
        })
    }

    fn gradient(&self, t: &[f64]) -> Result<ParamVector> {
        check_dim(self.dim(), t)?;
        Ok(match self {
            ZooFunction::Cubic => vec![3.0 * t[0] * t[0]],
            ZooFunction::MinMax => vec![2.0 * t[0], -2.0 * t[1]],
            ZooFunction::Monkey => {
                vec![3.0 * t[0] * t[0] - 3.0 * t[1] * t[1], -6.0 * t[0] * t[1]]
            }
            ZooFunction::Gutter => {
                let c = -4.0 * (1.0 - t[0] * t[0] - t[1] * t[1]);
                vec![c * t[0], c * t[1]]
            }
        }
        .into())
    }

    fn hessian(&self, t: &[f64]) -> Result<SymmetricMatrix> {
        check_dim(self.dim(), t)?;
        let (x, y) = (t[0], t.get(1).copied().unwrap_or(0.0));
        let rows = match self {
            ZooFunction::Cubic => return SymmetricMatrix::from_row_major(1, vec![6.0 * x]),
            ZooFunction::MinMax => [2.0, 0.0, 0.0, -2.0],
            ZooFunction::Monkey => [6.0 * x, -6.0 * y, -6.0 * y, -6.0 * x],
            ZooFunction::Gutter => {
                let c = -4.0 * (1.0 - x * x - y * y);
                [c + 8.0 * x * x, 8.0 * x * y, 8.0 * x * y, c + 8.0 * y * y]
            }
        };
        SymmetricMatrix::from_row_major(2, rows.to_vec())
    }
}

/// `½ θᵀ H θ` with a prescribed spectrum in a random orthonormal basis.
#[derive(Debug, Clone)]
pub struct Quadratic {
    hessian: SymmetricMatrix,
}

impl Quadratic {
    pub fn from_matrix(hessian: SymmetricMatrix) -> Self {
        Self { hessian }
    }

    pub fn matrix(&self) -> &SymmetricMatrix {
        &self.hessian
    }
}

/// Quadratic whose Hessian is `Q diag(spectrum) Qᵀ`, `Q` Haar-distributed
/// from `seed`.
pub fn make_quadratic(spectrum: &[f64], seed: u64) -> Result<Quadratic> {
    if spectrum.is_empty() {
        return Err(Error::InvalidInput("spectrum must be nonempty".into()));
    }
    if spectrum.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("quadratic spectrum".into()));
    }
    let n = spectrum.len();
    let basis = random_orthonormal(n, seed);
    let mut pairs: Vec<(f64, Vec<f64>)> = spectrum.iter().copied().zip(basis).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (values, vectors): (Vec<f64>, Vec<Vec<f64>>) = pairs.into_iter().unzip();
    let d = EigenDecomposition::from_parts(values, vectors)?;
    Ok(Quadratic {
        hessian: d.reconstruct(),
    })
}

/// Orthonormal basis from Gaussian vectors, Gram-Schmidt applied twice.
pub(crate) fn random_orthonormal(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &v);
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= c * y;
                }
            }
        }
        let nv = dot(&v, &v).sqrt();
        if nv > 1e-8 {
            basis.push(v.into_iter().map(|x| x / nv).collect());
        }
    }
    basis
}

impl Landscape for Quadratic {
    fn name(&self) -> String {
        format!("quadratic-{}", self.hessian.dim())
    }

    fn dim(&self) -> usize {
        self.hessian.dim()
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        check_dim(self.dim(), theta)?;
        Ok(0.5 * self.hessian.quadratic_form(theta))
    }

    fn gradient(&self, theta: &[f64]) -> Result<ParamVector> {
        check_dim(self.dim(), theta)?;
        Ok(self.hessian.matvec(theta).into())
    }

    fn hessian(&self, theta: &[f64]) -> Result<SymmetricMatrix> {
        check_dim(self.dim(), theta)?;
        Ok(self.hessian.clone())
    }
}

/// Gaussian orthogonal ensemble scaled so the spectrum tends to the
/// semicircle on `[−2, 2]`: off-diagonal variance `1/n`, diagonal `2/n`.
pub fn sample_goe(n: usize, seed: u64) -> Result<SymmetricMatrix> {
    if n == 0 {
        return Err(Error::InvalidInput("GOE dimension must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let off = Normal::new(0.0, (1.0 / n as f64).sqrt()).expect("valid deviation");
    let diag = Normal::new(0.0, (2.0 / n as f64).sqrt()).expect("valid deviation");
    Ok(SymmetricMatrix::from_fn(n, |i, j| {
        if i == j {
            diag.sample(&mut rng)
        } else {
            off.sample(&mut rng)
        }
    }))
}

/// CDF of the semicircle density `2/(πR²)·√(R² − λ²)` on `[−R, R]`.
pub fn semicircle_cdf(lambda: f64, radius: f64) -> f64 {
    assert!(radius > 0.0, "radius must be positive");
    if lambda <= -radius {
        return 0.0;
    }
    if lambda >= radius {
        return 1.0;
    }
    let r2 = radius * radius;
    let x = lambda / radius;
    0.5 + (lambda * (r2 - lambda * lambda).sqrt()) / (std::f64::consts::PI * r2)
        + x.asin() / std::f64::consts::PI
}

/// Largest gap between the empirical CDF of `values` and `cdf`.
pub fn ks_distance(values: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}
