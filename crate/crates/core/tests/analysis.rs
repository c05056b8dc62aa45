mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use saddlefree_core::analysis::{
    critical_point_survey, eigenbasis_coords, find_critical_point, index_error_correlation,
    index_of, spearman, spectrum_histogram, FinderConfig, RunCheckpoints, SurveyConfig, INDEX_TOL,
};
use saddlefree_core::landscapes::{
    make_minmax_saddle, make_quadratic, sample_goe, Landscape, ZooFunction,
};
use saddlefree_core::linalg::sym_eig;
use saddlefree_core::mlp::init_params;
use saddlefree_core::optimizers::{train, CurvatureTracking, TrainConfig};
use saddlefree_core::{CriticalPoint, Error, Method, Origin, ParamVector, StepConfig};

#[test]
fn eigenbasis_coordinate_examples() {
    let q = make_quadratic(&[-1.0, 0.5, 2.0], 4).unwrap();
    let d = sym_eig(&q.hessian(&[0.0; 3]).unwrap()).unwrap();
    for k in 0..3 {
        let v = eigenbasis_coords(&d, d.vector(k)).unwrap();
        for (i, x) in v.iter().enumerate() {
            let want = if i == k { 1.0 } else { 0.0 };
            assert!((x - want).abs() < 1e-12);
        }
    }
    let delta = [0.3, -0.2, 0.9];
    let v = eigenbasis_coords(&d, &delta).unwrap();
    assert!((norm(&v) - norm(&delta)).abs() < 1e-12);
    // The quadratic is its own second-order expansion around θ* = 0.
    let taylor: f64 = 0.5
        * d.values()
            .iter()
            .zip(&v)
            .map(|(l, x)| l * x * x)
            .sum::<f64>();
    assert!((taylor - q.loss(&delta).unwrap()).abs() < 1e-14);
    assert!(eigenbasis_coords(&d, &[1.0]).is_err());
}

#[test]
fn index_examples() {
    assert_eq!(index_of(&[-1.0, -1.0, 1.0, 3.0], INDEX_TOL).unwrap(), 0.5);
    assert_eq!(index_of(&[0.1, 2.0, 7.0], INDEX_TOL).unwrap(), 0.0);
    assert_eq!(index_of(&[-1e-15, 1.0], 1e-8).unwrap(), 0.0);
    assert!(index_of(&[], INDEX_TOL).is_err());
}

#[test]
fn finder_on_minmax_and_convex_quadratic() {
    let f = make_minmax_saddle();
    let p = find_critical_point(
        &f,
        &[0.1, 0.1],
        &FinderConfig {
            grad_tol: 1e-13,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(p.grad_norm <= 1e-12);
    assert!(p.theta.norm() <= 1e-12);
    assert_eq!(p.index, 0.5);

    let q = make_quadratic(&[1.0, 2.0, 3.0], 0).unwrap();
    let mut r = rng(1);
    for _ in 0..5 {
        let t: Vec<f64> = (0..3).map(|_| r.gen_range(-5.0..5.0)).collect();
        let p = find_critical_point(&q, &t, &FinderConfig::default()).unwrap();
        assert_eq!(p.index, 0.0);
        assert!(p.loss.abs() < 1e-20);
        assert!(p.converged(1e-10));
    }
}

#[test]
fn finder_reduces_gradient_from_perturbed_mlp_snapshot() {
    let ds = saddlefree_core::data::synthetic_dataset(300, 0).unwrap();
    let obj = saddlefree_core::experiments::mlp_objective(&ds, 5).unwrap();
    let mut cfg = TrainConfig::new(StepConfig::second_order(Method::SaddleFree), 3, 0);
    cfg.curvature = CurvatureTracking::off();
    let out = train(&obj, init_params(obj.model.shape, 0), &cfg).unwrap();
    let mut r = rng(2);
    let start: Vec<f64> = out
        .final_params
        .iter()
        .map(|x| x + 1e-2 * r.gen_range(-1.0..1.0))
        .collect();
    let g0 = obj.gradient(&start).unwrap().norm();
    let p = find_critical_point(
        &obj,
        &start,
        &FinderConfig {
            max_iters: 10,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(p.grad_norm < g0);
    assert_eq!(p.start_grad_norm, g0);
    assert_eq!(p.eigenvalues.len(), 565);
    assert!(p.error_rate.is_some());
}

#[test]
fn finder_rejects_bad_start() {
    let f = make_minmax_saddle();
    assert!(find_critical_point(&f, &[0.0], &FinderConfig::default()).is_err());
}

fn fake_runs(n_runs: usize, dim: usize, epochs: usize) -> Vec<RunCheckpoints> {
    let mut r = rng(3);
    (0..n_runs)
        .map(|run_id| RunCheckpoints {
            run_id,
            checkpoints: (0..=epochs)
                .map(|_| ParamVector::new((0..dim).map(|_| r.gen_range(-1.0..1.0)).collect()))
                .collect(),
        })
        .collect()
}

#[test]
fn survey_on_isotropic_quadratic_finds_the_unique_minimum() {
    let q = make_quadratic(&[1.0; 4], 0).unwrap();
    let cfg = SurveyConfig {
        n_trajectory_jobs: 10,
        n_uniform_jobs: 10,
        seed: 5,
        ..Default::default()
    };
    let out = critical_point_survey(&q, &fake_runs(3, 4, 20), &cfg).unwrap();
    assert!(out.failures.is_empty());
    assert_eq!(out.points.len(), 20);
    for (k, p) in out.points.iter().enumerate() {
        assert_eq!(p.job_id, Some(k));
        assert_eq!(p.index, 0.0);
        assert!(p.theta.norm() < 1e-10);
        assert_eq!(
            p.origin,
            if k < 10 {
                Origin::TrajectoryPerturbed
            } else {
                Origin::UniformCube
            }
        );
    }
    let amps = [1e-1, 1e-2, 1e-3, 1e-4];
    for p in &out.points[..10] {
        assert!(amps.contains(&p.perturb_amplitude.unwrap()));
        assert!(p.source_epoch.unwrap() <= 20 && p.source_run.unwrap() < 3);
    }
}

#[test]
fn survey_is_deterministic_and_independent_of_workers() {
    let f = ZooFunction::Gutter;
    let cfg = SurveyConfig {
        n_trajectory_jobs: 6,
        n_uniform_jobs: 6,
        epoch_range: (0, 4),
        seed: 11,
        finder: FinderConfig {
            max_iters: 20,
            ..Default::default()
        },
        ..Default::default()
    };
    let runs = fake_runs(2, 2, 4);
    let a = critical_point_survey(&f, &runs, &cfg).unwrap();
    let b = critical_point_survey(&f, &runs, &cfg).unwrap();
    let c = critical_point_survey(
        &f,
        &runs,
        &SurveyConfig {
            workers: 3,
            ..cfg.clone()
        },
    )
    .unwrap();
    let s =
        |o: &saddlefree_core::analysis::SurveyOutcome| serde_json::to_string(&o.records()).unwrap();
    assert_eq!(s(&a), s(&b));
    assert_eq!(s(&a), s(&c));
    let d = critical_point_survey(&f, &runs, &SurveyConfig { seed: 12, ..cfg }).unwrap();
    assert_ne!(s(&a), s(&d));
}

#[test]
fn survey_validates_inputs() {
    let q = make_quadratic(&[1.0; 2], 0).unwrap();
    let cfg = SurveyConfig {
        n_trajectory_jobs: 2,
        n_uniform_jobs: 0,
        ..Default::default()
    };
    assert!(critical_point_survey(&q, &[], &cfg).is_err());
    assert!(critical_point_survey(&q, &fake_runs(1, 2, 5), &cfg).is_err());
}

#[test]
fn histogram_examples() {
    let h = spectrum_histogram(&[-1.0, 0.0, 1.0], 2, false).unwrap();
    assert_eq!(h.counts, vec![1, 2]);
    assert_eq!(h.edges, vec![-1.0, 0.0, 1.0]);
    let h = spectrum_histogram(&[-1.0, 0.0, 1.0], 2, true).unwrap();
    assert!((h.heights[1] - 3f64.log10()).abs() < 1e-15);
    assert!(spectrum_histogram(&[], 5, false).is_err());
    assert!(spectrum_histogram(&[1.0], 0, false).is_err());
}

#[test]
fn goe_histogram_peaks_at_zero() {
    // A single n=1000 draw has about 25 counts per central bin and the
    // semicircle is nearly flat there, so the profile is averaged over draws.
    let draws = 40;
    let mut avg = vec![0.0; 50];
    for seed in 0..draws {
        let l = sym_eig(&sample_goe(1000, seed).unwrap())
            .unwrap()
            .values()
            .to_vec();
        let h = spectrum_histogram(&l, 50, false).unwrap();
        assert_eq!(h.counts.iter().sum::<u64>(), 1000);
        for (a, &c) in avg.iter_mut().zip(&h.counts) {
            *a += c as f64 / draws as f64;
        }
    }
    let mode = avg
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    // Bins 19..=30 cover |λ| ≤ 0.24 R, where the density is within 3% of its peak.
    assert!((19..=30).contains(&mode), "mode bin {mode}");
    let blocks: Vec<f64> = avg.chunks(5).map(|c| c.iter().sum()).collect();
    let peak = blocks
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    assert!(peak == 4 || peak == 5);
    assert!(blocks[..=peak].windows(2).all(|w| w[1] > w[0]));
    assert!(blocks[peak..].windows(2).all(|w| w[1] < w[0]));
}

fn point(index: f64, loss: f64) -> CriticalPoint {
    CriticalPoint {
        theta: ParamVector::zeros(1),
        loss,
        error_rate: None,
        grad_norm: 0.0,
        eigenvalues: vec![0.0],
        index,
        origin: Origin::Given,
        source_run: None,
        source_epoch: None,
        perturb_amplitude: None,
        job_id: None,
        start_grad_norm: 0.0,
        iterations: 0,
    }
}

#[test]
fn correlation_examples() {
    let pts: Vec<CriticalPoint> = (0..6)
        .map(|k| point(k as f64 / 10.0, (k as f64).exp()))
        .collect();
    assert_eq!(index_error_correlation(&pts).unwrap(), 1.0);
    let flat: Vec<CriticalPoint> = (0..6).map(|k| point(0.2, k as f64)).collect();
    assert!(matches!(
        index_error_correlation(&flat),
        Err(Error::Degenerate(_))
    ));
    assert!(index_error_correlation(&pts[..2]).is_err());
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
}

#[test]
fn spearman_matches_pearson_of_ranks_with_ties() {
    let x = [1.0, 2.0, 2.0, 3.0, 5.0, 4.0];
    let y = [2.0, 1.0, 4.0, 4.0, 6.0, 5.0];
    // Average ranks by hand.
    let rx = [1.0, 2.5, 2.5, 4.0, 6.0, 5.0];
    let ry = [2.0, 1.0, 3.5, 3.5, 6.0, 5.0];
    let mean = 3.5;
    let cov: f64 = rx
        .iter()
        .zip(&ry)
        .map(|(a, b)| (a - mean) * (b - mean))
        .sum();
    let sx: f64 = rx
        .iter()
        .map(|a| (a - mean) * (a - mean))
        .sum::<f64>()
        .sqrt();
    let sy: f64 = ry
        .iter()
        .map(|b| (b - mean) * (b - mean))
        .sum::<f64>()
        .sqrt();
    assert!((spearman(&x, &y).unwrap() - cov / (sx * sy)).abs() < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn finder_never_increases_the_gradient(x in -2.0f64..2.0, y in -2.0f64..2.0, which in 0usize..4) {
        let f = ZooFunction::ALL[which];
        let t = [x, y];
        let t = &t[..f.dim()];
        let g0 = f.gradient(t).unwrap().norm();
        let p = find_critical_point(&f, t, &FinderConfig { max_iters: 30, ..Default::default() }).unwrap();
        prop_assert!(p.grad_norm <= g0);
    }

    #[test]
    fn index_is_scale_invariant(l in proptest::collection::vec(-10.0f64..10.0, 1..30), s in 1e-3f64..1e3) {
        let scaled: Vec<f64> = l.iter().map(|x| x * s).collect();
        prop_assert_eq!(index_of(&l, INDEX_TOL).unwrap(), index_of(&scaled, INDEX_TOL).unwrap());
    }

    #[test]
    fn eigenbasis_coords_is_an_isometry(seed in any::<u64>(), n in 2usize..12) {
        let a = random_symmetric(n, &mut rng(seed));
        let d = sym_eig(&a).unwrap();
        let mut r = rng(seed ^ 9);
        let x: Vec<f64> = (0..n).map(|_| r.gen_range(-3.0..3.0)).collect();
        prop_assert!((norm(&eigenbasis_coords(&d, &x).unwrap()) - norm(&x)).abs() < 1e-10);
    }

    #[test]
    fn histogram_counts_sum_to_input_size(l in proptest::collection::vec(-5.0f64..5.0, 1..200), bins in 1usize..40) {
        let h = spectrum_histogram(&l, bins, false).unwrap();
        prop_assert_eq!(h.counts.iter().sum::<u64>(), l.len() as u64);
        prop_assert_eq!(h.edges.len(), bins + 1);
    }
}
