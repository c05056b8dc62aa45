#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saddlefree_core::{Landscape, SymmetricMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `‖a − b‖ / max(‖b‖, 1e-3)`
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(b).max(1e-3)
}

fn fd_step(x: f64) -> f64 {
    1e-5 * (1.0 + x.abs())
}

/// Central differences of the loss.
pub fn fd_gradient(f: &dyn Landscape, theta: &[f64]) -> Vec<f64> {
    let mut t = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            let h = fd_step(theta[i]);
            t[i] = theta[i] + h;
            let up = f.loss(&t).unwrap();
            t[i] = theta[i] - h;
            let down = f.loss(&t).unwrap();
            t[i] = theta[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central differences of the gradient, row-major.
pub fn fd_hessian(f: &dyn Landscape, theta: &[f64]) -> Vec<f64> {
    let n = theta.len();
    let mut t = theta.to_vec();
    let mut cols = vec![0.0; n * n];
    for i in 0..n {
        let h = fd_step(theta[i]);
        t[i] = theta[i] + h;
        let up = f.gradient(&t).unwrap();
        t[i] = theta[i] - h;
        let down = f.gradient(&t).unwrap();
        t[i] = theta[i];
        for j in 0..n {
            cols[j * n + i] = (up[j] - down[j]) / (2.0 * h);
        }
    }
    cols
}

pub fn random_symmetric(n: usize, rng: &mut impl Rng) -> SymmetricMatrix {
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let x: f64 = rng.gen_range(-1.0..1.0);
            a[i * n + j] = x;
            a[j * n + i] = x;
        }
    }
    SymmetricMatrix::from_row_major(n, a).unwrap()
}

/// Cyclic Jacobi rotations: eigenvalues ascending and eigenvectors as rows.
pub fn jacobi_eig(a: &SymmetricMatrix) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.dim();
    let mut m: Vec<f64> = a.as_row_major().to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| m[i * n + j].powi(2))
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].total_cmp(&m[j * n + j]));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..n).map(|k| v[k * n + i]).collect())
        .collect();
    (values, vectors)
}

/// First `m` examples of a seed-0 synthetic set.
pub fn small_batch(m: usize) -> saddlefree_core::Batch {
    let full = saddlefree_core::data::synthetic_dataset(m.max(10), 0)
        .unwrap()
        .to_batch()
        .unwrap();
    full.subset(&(0..m).collect::<Vec<_>>()).unwrap()
}
