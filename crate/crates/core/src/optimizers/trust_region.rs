//! Generalized trust region: minimize a first- or second-order Taylor model
//! subject to `ΔθᵀMΔθ ≤ Δ`, with `M` the identity or `|H|`.
//!
//! First order under the `|H|` metric gives the saddle-free direction scaled
//! to the boundary; second order under the Euclidean metric is the classic
//! trust-region subproblem.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscapes::Landscape;
use crate::linalg::{sym_eig, SINGULAR_EPS};
use crate::param::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrustOrder {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrustMetric {
    Euclidean,
    AbsHessian,
}

pub fn trust_region_step(
    order: TrustOrder,
    metric: TrustMetric,
    radius: f64,
    theta: &[f64],
    landscape: &dyn Landscape,
) -> Result<ParamVector> {
    if radius.is_nan() || radius <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "trust radius must be positive, got {radius}"
        )));
    }
    let g = landscape.gradient(theta)?;
    let d = sym_eig(&landscape.hessian(theta)?)?;
    let coords = d.project(&g);
    let lambdas = d.values();
    let weights: Vec<f64> = match metric {
        TrustMetric::Euclidean => vec![1.0; lambdas.len()],
        TrustMetric::AbsHessian => {
            if let Some((i, &l)) = lambdas
                .iter()
                .enumerate()
                .find(|(_, l)| l.abs() <= SINGULAR_EPS)
            {
                return Err(Error::Singular {
                    index: i,
                    eigenvalue: l,
                    damping: 0.0,
                });
            }
            lambdas.iter().map(|l| l.abs()).collect()
        }
    };
    // q = √w ⊙ p turns the constraint into ‖q‖² ≤ Δ.
    let b: Vec<f64> = coords
        .iter()
        .zip(&weights)
        .map(|(c, w)| c / w.sqrt())
        .collect();
    let q = match order {
        TrustOrder::First => {
            let bn = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if bn == 0.0 {
                vec![0.0; b.len()]
            } else {
                let tau = radius.sqrt() / bn;
                b.iter().map(|x| -tau * x).collect()
            }
        }
        TrustOrder::Second => {
            let mu: Vec<f64> = lambdas.iter().zip(&weights).map(|(l, w)| l / w).collect();
            diagonal_subproblem(&b, &mu, radius)
        }
    };
    let p: Vec<f64> = q.iter().zip(&weights).map(|(q, w)| q / w.sqrt()).collect();
    Ok(ParamVector::new(d.combine(&p)))
}

/// `argmin bᵀq + ½ Σ μᵢqᵢ²` subject to `‖q‖² ≤ Δ`, diagonal model.
fn diagonal_subproblem(b: &[f64], mu: &[f64], radius: f64) -> Vec<f64> {
    let n = b.len();
    let mu_min = mu.iter().copied().fold(f64::INFINITY, f64::min);
    let solve = |nu: f64| -> Vec<f64> { b.iter().zip(mu).map(|(b, m)| -b / (m + nu)).collect() };
    let sq = |q: &[f64]| q.iter().map(|x| x * x).sum::<f64>();

    if mu_min > 0.0 {
        let q = solve(0.0);
        if sq(&q) <= radius {
            return q;
        }
    }
    let lo0 = (-mu_min).max(0.0);
    // Hard case: ‖q(ν)‖ stays inside the ball as ν → −μ_min.
    let bottom: Vec<usize> = (0..n)
        .filter(|&i| mu[i] - mu_min <= 1e-14 * mu_min.abs().max(1.0))
        .collect();
    let off_bottom_norm = || -> f64 {
        (0..n)
            .filter(|i| !bottom.contains(i))
            .map(|i| (b[i] / (mu[i] - mu_min)).powi(2))
            .sum::<f64>()
    };
    let bottom_mass: f64 = bottom.iter().map(|&i| b[i] * b[i]).sum();
    if mu_min <= 0.0 && bottom_mass <= 1e-28 && off_bottom_norm() <= radius {
        let mut q = vec![0.0; n];
        for i in 0..n {
            if !bottom.contains(&i) {
                q[i] = -b[i] / (mu[i] - mu_min);
            }
        }
        let rest = (radius - sq(&q)).max(0.0).sqrt();
        q[bottom[0]] = rest;
        return q;
    }
    let bn = sq(b).sqrt();
    let mut lo = lo0;
    let mut hi = lo0 + bn / radius.sqrt() + 1.0;
    while sq(&solve(hi)) > radius {
        hi = lo0 + 2.0 * (hi - lo0);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sq(&solve(mid)) > radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    solve(hi)
}
