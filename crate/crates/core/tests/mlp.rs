mod common;

use std::sync::Arc;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use saddlefree_core::landscapes::Landscape;
use saddlefree_core::linalg::sym_eig;
use saddlefree_core::mlp::{init_params, Activation, Mlp, MlpObjective, MlpShape, OutputLoss};
use saddlefree_core::{Batch, Error};

fn objective(h: usize, m: usize) -> MlpObjective {
    MlpObjective::new(Mlp::new(MlpShape::new(h)), Arc::new(small_batch(m)))
}

/// Straight-line forward pass: tanh hidden layer, softmax cross-entropy.
fn reference_loss(h: usize, theta: &[f64], batch: &Batch) -> (f64, f64) {
    let (n_in, n_out) = (100, 10);
    let w1 = |j: usize, i: usize| theta[j * n_in + i];
    let b1 = |j: usize| theta[h * n_in + j];
    let off = h * (n_in + 1);
    let w2 = |k: usize, j: usize| theta[off + k * h + j];
    let b2 = |k: usize| theta[off + n_out * h + k];
    let mut loss = 0.0;
    let mut wrong = 0;
    for e in 0..batch.len() {
        let x = batch.input(e);
        let z: Vec<f64> = (0..h)
            .map(|j| ((0..n_in).map(|i| w1(j, i) * x[i]).sum::<f64>() + b1(j)).tanh())
            .collect();
        let o: Vec<f64> = (0..n_out)
            .map(|k| (0..h).map(|j| w2(k, j) * z[j]).sum::<f64>() + b2(k))
            .collect();
        let mx = o.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + o.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
        let y = batch.labels()[e] as usize;
        loss += lse - o[y];
        let arg = (0..n_out).fold(0, |b, k| if o[k] > o[b] { k } else { b });
        if arg != y {
            wrong += 1;
        }
    }
    (loss / batch.len() as f64, wrong as f64 / batch.len() as f64)
}

#[test]
fn parameter_count_and_init() {
    assert_eq!(MlpShape::new(5).param_count(), 565);
    assert_eq!(MlpShape::new(25).param_count(), 2785);
    assert_eq!(MlpShape::new(50).param_count(), 5560);
    let shape = MlpShape::new(5);
    let a = init_params(shape, 0);
    assert_eq!(a, init_params(shape, 0));
    assert_ne!(a, init_params(shape, 1));
    for j in 0..5 {
        assert_eq!(a[500 + j], 0.0);
    }
    for k in 0..10 {
        assert_eq!(a[505 + 50 + k], 0.0);
    }
    let r1 = (6.0f64 / 105.0).sqrt();
    let r2 = (6.0f64 / 15.0).sqrt();
    assert!(a[..500].iter().all(|w| w.abs() < r1));
    assert!(a[505..555].iter().all(|w| w.abs() < r2));
}

#[test]
fn zero_parameters_give_log_ten() {
    let obj = objective(5, 17);
    let (loss, _) = obj
        .model
        .forward_loss(&vec![0.0; 565], obj.batch())
        .unwrap();
    assert!((loss - 10f64.ln()).abs() < 1e-15);
}

#[test]
fn forward_matches_independent_reimplementation() {
    let obj = objective(5, 32);
    for seed in [0, 1] {
        let theta = init_params(obj.model.shape, seed);
        let (loss, err) = obj.model.forward_loss(&theta, obj.batch()).unwrap();
        let (l2, e2) = reference_loss(5, &theta, obj.batch());
        assert!((loss - l2).abs() < 1e-10, "{loss} vs {l2}");
        assert_eq!(err, e2);
    }
}

#[test]
fn single_example_error_is_binary() {
    let obj = objective(5, 1);
    let mut theta = init_params(obj.model.shape, 3).into_inner();
    let y = obj.batch().labels()[0] as usize;
    let b2 = 505 + 50;
    theta[b2 + y] = 50.0;
    assert_eq!(obj.model.forward_loss(&theta, obj.batch()).unwrap().1, 0.0);
    theta[b2 + y] = -50.0;
    assert_eq!(obj.model.forward_loss(&theta, obj.batch()).unwrap().1, 1.0);
}

#[test]
fn non_finite_parameters_are_diagnosed() {
    let obj = objective(5, 4);
    let mut theta = vec![0.0; 565];
    theta[600 - 40] = f64::INFINITY;
    assert!(matches!(
        obj.model.forward_loss(&theta, obj.batch()),
        Err(Error::NonFinite(_))
    ));
    assert!(obj.model.forward_loss(&theta[..10], obj.batch()).is_err());
}

#[test]
fn gradient_matches_finite_differences() {
    let obj = objective(5, 32);
    let theta = init_params(obj.model.shape, 0);
    let g = obj.gradient(&theta).unwrap();
    assert!(rel_err(&g, &fd_gradient(&obj, &theta)) < 1e-5);
}

#[test]
fn hessian_matches_finite_differences_and_is_symmetric() {
    let obj = objective(5, 32);
    let theta = init_params(obj.model.shape, 0);
    let h = obj.hessian(&theta).unwrap();
    assert_eq!(h.dim(), 565);
    assert!(rel_err(h.as_row_major(), &fd_hessian(&obj, &theta)) < 1e-4);
    let mut asym = 0.0f64;
    for i in 0..565 {
        for j in 0..i {
            asym = asym.max((h.get(i, j) - h.get(j, i)).abs());
        }
    }
    assert!(asym <= 1e-8);
}

#[test]
fn hessian_vector_products() {
    let obj = objective(5, 32);
    let theta = init_params(obj.model.shape, 2);
    let n = theta.len();
    assert!(obj
        .hessian_vector(&theta, &vec![0.0; n])
        .unwrap()
        .iter()
        .all(|&x| x == 0.0));

    let mut r = rng(11);
    let u: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
    let v: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
    let hu = obj.hessian_vector(&theta, &u).unwrap();
    let hv = obj.hessian_vector(&theta, &v).unwrap();
    assert!((dot(&v, &hu) - dot(&u, &hv)).abs() < 1e-8);

    let eps = 1e-5;
    let plus: Vec<f64> = theta.iter().zip(&v).map(|(t, x)| t + eps * x).collect();
    let minus: Vec<f64> = theta.iter().zip(&v).map(|(t, x)| t - eps * x).collect();
    let gp = obj.gradient(&plus).unwrap();
    let gm = obj.gradient(&minus).unwrap();
    let fd: Vec<f64> = gp
        .iter()
        .zip(gm.iter())
        .map(|(a, b)| (a - b) / (2.0 * eps))
        .collect();
    assert!(rel_err(&hv, &fd) < 1e-4);

    let h = obj.hessian(&theta).unwrap();
    let mut e = vec![0.0; n];
    for i in (0..n).step_by(37) {
        e[i] = 1.0;
        let col = obj.hessian_vector(&theta, &e).unwrap();
        let hcol: Vec<f64> = (0..n).map(|j| h.get(j, i)).collect();
        assert!(col.iter().zip(&hcol).all(|(a, b)| (a - b).abs() <= 1e-8));
        e[i] = 0.0;
    }
}

#[test]
fn duplicating_the_batch_leaves_the_gradient_unchanged() {
    let ds = saddlefree_core::data::synthetic_dataset(20, 4).unwrap();
    let single = ds.to_batch().unwrap();
    let idx: Vec<usize> = (0..20).chain(0..20).collect();
    let double = single.subset(&idx).unwrap();
    let model = Mlp::new(MlpShape::new(5));
    let theta = init_params(model.shape, 0);
    let a = model.gradient(&theta, &single).unwrap();
    let b = model.gradient(&theta, &double).unwrap();
    assert!(rel_err(&a, &b) < 1e-14);
}

#[test]
fn loss_is_permutation_invariant() {
    let batch = small_batch(30);
    let model = Mlp::new(MlpShape::new(5));
    let theta = init_params(model.shape, 0);
    let perm: Vec<usize> = (0..30).map(|k| (k * 7) % 30).collect();
    let a = model.forward_loss(&theta, &batch).unwrap();
    let b = model
        .forward_loss(&theta, &batch.subset(&perm).unwrap())
        .unwrap();
    assert!((a.0 - b.0).abs() < 1e-14);
    assert_eq!(a.1, b.1);
}

#[test]
fn dense_hessian_refuses_oversized_models() {
    let obj = objective(60, 2);
    let theta = init_params(obj.model.shape, 0);
    assert!(matches!(
        obj.hessian(&theta),
        Err(Error::TooLarge {
            params: 6670,
            limit: 6000
        })
    ));
    assert_eq!(
        obj.hessian_vector(&theta, &vec![0.0; theta.len()])
            .unwrap()
            .len(),
        6670
    );
}

#[test]
fn linear_squared_loss_has_constant_hessian() {
    let shape = MlpShape {
        n_in: 100,
        n_hidden: 0,
        n_out: 10,
    };
    let model = Mlp {
        shape,
        activation: Activation::Identity,
        loss: OutputLoss::SquaredError,
    };
    let obj = MlpObjective::new(model, Arc::new(small_batch(12)));
    let a = obj.hessian(&init_params(shape, 0)).unwrap();
    let b = obj.hessian(&init_params(shape, 9)).unwrap();
    assert!(a.frobenius_distance(&b) <= 1e-12 * a.frobenius_norm());
    let t = init_params(shape, 1);
    assert!(rel_err(a.as_row_major(), &fd_hessian(&obj, &t)) < 1e-6);
}

#[test]
fn tied_hidden_units_create_a_flat_direction() {
    let obj = objective(5, 40);
    let mut theta = init_params(obj.model.shape, 0).into_inner();
    // Copy unit 0 onto unit 1: incoming weights, bias, outgoing weights.
    for i in 0..100 {
        theta[100 + i] = theta[i];
    }
    theta[501] = theta[500];
    for k in 0..10 {
        theta[505 + k * 5 + 1] = theta[505 + k * 5];
    }
    let d = sym_eig(&obj.hessian(&theta).unwrap()).unwrap();
    let smallest = d.values().iter().fold(f64::INFINITY, |m, l| m.min(l.abs()));
    assert!(smallest <= 1e-6, "smallest |λ| = {smallest}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn finite_difference_oracles_hold_at_random_points(seed in any::<u64>(), scale in 0.5f64..2.0) {
        let obj = objective(2, 16);
        let theta: Vec<f64> = init_params(obj.model.shape, seed).iter().map(|x| x * scale).collect();
        prop_assert!(rel_err(&obj.gradient(&theta).unwrap(), &fd_gradient(&obj, &theta)) < 1e-5);
        prop_assert!(rel_err(obj.hessian(&theta).unwrap().as_row_major(), &fd_hessian(&obj, &theta)) < 1e-4);
    }
}
