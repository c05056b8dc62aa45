//! Dense symmetric eigen machinery.
//!
//! Every second-order step in this crate is computed in the eigenbasis of the
//! Hessian: decompose once, rescale each eigen-coordinate, map back.

use faer::{Mat, Side};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::{dot, ParamVector};

/// Denominators smaller than this are treated as exact singularities.
pub const SINGULAR_EPS: f64 = 1e-12;

/// Dense symmetric matrix, full row-major storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    /// Checks exact symmetry and finiteness.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::InvalidInput(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "matrix entry ({}, {})",
                pos / n,
                pos % n
            )));
        }
        for i in 0..n {
            for j in 0..i {
                if data[i * n + j] != data[j * n + i] {
                    return Err(Error::InvalidInput(format!(
                        "matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { n, data })
    }

    /// For callers that fill both triangles from the same value.
    pub(crate) fn from_mirrored(n: usize, data: Vec<f64>) -> Result<Self> {
        debug_assert_eq!(data.len(), n * n);
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("matrix entries".into()));
        }
        Ok(Self { n, data })
    }

    /// Builds a matrix from the lower triangle of `f`, mirrored.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = f(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Self { n, data }
    }

    /// Averages `data` with its transpose. Returns the matrix together with
    /// the largest absolute asymmetry seen before averaging.
    pub fn symmetrized(n: usize, mut data: Vec<f64>) -> Result<(Self, f64)> {
        assert_eq!(data.len(), n * n);
        let mut asym: f64 = 0.0;
        for i in 0..n {
            for j in 0..i {
                let a = data[i * n + j];
                let b = data[j * n + i];
                asym = asym.max((a - b).abs());
                let m = 0.5 * (a + b);
                data[i * n + j] = m;
                data[j * n + i] = m;
            }
        }
        let m = Self::from_row_major(n, data)?;
        Ok((m, asym))
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self::from_fn(n, |i, j| if i == j { d[i] } else { 0.0 })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.data
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n).map(|i| dot(self.row(i), x)).collect()
    }

    /// `xᵀ A x`
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.matvec(x))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Frobenius norm of `self - other`.
    pub fn frobenius_distance(&self, other: &Self) -> f64 {
        assert_eq!(self.n, other.n);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// `self + s·I`
    pub fn shifted(&self, s: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            out.data[i * self.n + i] += s;
        }
        out
    }

    pub(crate) fn to_faer(&self) -> Mat<f64> {
        Mat::from_fn(self.n, self.n, |i, j| self.data[i * self.n + j])
    }
}

/// Eigenvalues sorted ascending with the matching orthonormal eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    values: Vec<f64>,
    /// Column-major: eigenvector `i` occupies `vectors[i*n..(i+1)*n]`.
    vectors: Vec<f64>,
}

impl EigenDecomposition {
    /// Assembles a decomposition from explicit parts. Values must be sorted
    /// ascending and `vectors[i]` is paired with `values[i]`.
    pub fn from_parts(values: Vec<f64>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        let n = values.len();
        if vectors.len() != n || vectors.iter().any(|v| v.len() != n) {
            return Err(Error::InvalidInput("eigenvector shape mismatch".into()));
        }
        if values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidInput(
                "eigenvalues must be sorted ascending".into(),
            ));
        }
        Ok(Self {
            values,
            vectors: vectors.concat(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        let n = self.dim();
        &self.vectors[i * n..(i + 1) * n]
    }

    pub fn min_value(&self) -> f64 {
        self.values[0]
    }

    pub fn max_value(&self) -> f64 {
        *self.values.last().expect("empty decomposition")
    }

    /// Coordinates of `x` in the eigenbasis, `Qᵀx`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim());
        (0..self.dim()).map(|i| dot(self.vector(i), x)).collect()
    }

    /// Maps eigenbasis coordinates back, `Q c`.
    pub fn combine(&self, coords: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(coords.len(), n);
        let mut out = vec![0.0; n];
        for (i, &c) in coords.iter().enumerate() {
            if c != 0.0 {
                for (o, e) in out.iter_mut().zip(self.vector(i)) {
                    *o += c * e;
                }
            }
        }
        out
    }

    /// `Q f(Λ) Qᵀ`
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> SymmetricMatrix {
        let n = self.dim();
        let q = Mat::from_fn(n, n, |r, c| self.vectors[c * n + r]);
        let fl: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let ql = Mat::from_fn(n, n, |r, c| q[(r, c)] * fl[c]);
        let prod = &ql * q.transpose();
        SymmetricMatrix::from_fn(n, |i, j| 0.5 * (prod[(i, j)] + prod[(j, i)]))
    }

    /// `Q Λ Qᵀ`
    pub fn reconstruct(&self) -> SymmetricMatrix {
        self.map_spectrum(|l| l)
    }

    /// Largest `|qᵢᵀqⱼ − δᵢⱼ|`.
    pub fn orthonormality_error(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..=i {
                let d = dot(self.vector(i), self.vector(j)) - if i == j { 1.0 } else { 0.0 };
                worst = worst.max(d.abs());
            }
        }
        worst
    }
}

/// Dense symmetric eigendecomposition.
pub fn sym_eig(a: &SymmetricMatrix) -> Result<EigenDecomposition> {
    if let Some(pos) = a.data.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!(
            "matrix entry ({}, {})",
            pos / a.n,
            pos % a.n
        )));
    }
    let n = a.n;
    if n == 0 {
        return Ok(EigenDecomposition {
            values: vec![],
            vectors: vec![],
        });
    }
    let evd = a
        .to_faer()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::EigenFailure)?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[i].total_cmp(&s[j]));
    let values = order.iter().map(|&i| s[i]).collect();
    let mut vectors = Vec::with_capacity(n * n);
    for &c in &order {
        vectors.extend((0..n).map(|r| u[(r, c)]));
    }
    Ok(EigenDecomposition { values, vectors })
}

/// `|A| = Q|Λ|Qᵀ`.
pub fn abs_spectrum(d: &EigenDecomposition) -> SymmetricMatrix {
    d.map_spectrum(f64::abs)
}

/// `Σᵢ (eᵢᵀg) / (m(λᵢ) + α) · eᵢ` with `m` the identity or `|·|`.
pub fn damped_eigen_solve(
    d: &EigenDecomposition,
    g: &[f64],
    damping: f64,
    use_abs: bool,
) -> Result<ParamVector> {
    if damping.is_nan() || damping < 0.0 {
        return Err(Error::InvalidInput(format!(
            "damping must be >= 0, got {damping}"
        )));
    }
    if g.len() != d.dim() {
        return Err(Error::InvalidInput(format!(
            "vector length {} does not match dimension {}",
            g.len(),
            d.dim()
        )));
    }
    let mut coords = d.project(g);
    for (i, (c, &l)) in coords.iter_mut().zip(d.values()).enumerate() {
        let den = if use_abs { l.abs() } else { l } + damping;
        if den.abs() < SINGULAR_EPS {
            return Err(Error::Singular {
                index: i,
                eigenvalue: l,
                damping,
            });
        }
        *c /= den;
    }
    Ok(ParamVector::new(d.combine(&coords)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerOptions {
    pub max_iters: usize,
    /// Residual tolerance `‖Av − μv‖ ≤ tol·max(1, |μ|)`.
    pub tol: f64,
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-6,
            seed: 0,
        }
    }
}

/// Extreme eigenvalue estimates from the power method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    /// Largest eigenvalue (last Rayleigh quotient when unconverged).
    pub pos: f64,
    /// Smallest eigenvalue (last Rayleigh quotient when unconverged).
    pub neg: f64,
    pub converged: bool,
    /// Operator applications used.
    pub iterations: usize,
}

struct PowerRun {
    value: f64,
    converged: bool,
    iterations: usize,
    /// `‖Av‖` at the last iterate.
    image_norm: f64,
}

/// Power iteration on `B = sign·A + shift·I`, reported on the scale of `A`.
fn power_run<F>(
    apply: &mut F,
    n: usize,
    sign: f64,
    shift: f64,
    opts: &PowerOptions,
    rng: &mut ChaCha8Rng,
) -> Result<PowerRun>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut v = random_unit(n, rng);
    let mut run = PowerRun {
        value: 0.0,
        converged: false,
        iterations: 0,
        image_norm: 0.0,
    };
    let mut reseeds = 0;
    while run.iterations < opts.max_iters {
        let av = apply(&v)?;
        run.iterations += 1;
        if av.len() != n {
            return Err(Error::InvalidInput(
                "operator changed the vector length".into(),
            ));
        }
        if av.iter().any(|x| !x.is_finite()) {
            if reseeds >= 3 {
                return Err(Error::NonFinite("power iteration operator output".into()));
            }
            reseeds += 1;
            v = random_unit(n, rng);
            continue;
        }
        let w: Vec<f64> = av
            .iter()
            .zip(&v)
            .map(|(a, x)| sign * a + shift * x)
            .collect();
        let mu_b = dot(&v, &w);
        let lambda = sign * (mu_b - shift);
        let resid = w
            .iter()
            .zip(&v)
            .map(|(a, x)| (a - mu_b * x).powi(2))
            .sum::<f64>()
            .sqrt();
        run.value = lambda;
        run.image_norm = av.iter().map(|x| x * x).sum::<f64>().sqrt();
        if resid <= opts.tol * lambda.abs().max(1.0) {
            run.converged = true;
            break;
        }
        let wn = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if wn == 0.0 {
            v = random_unit(n, rng);
            continue;
        }
        v = w.into_iter().map(|x| x / wn).collect();
    }
    Ok(run)
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let nv = dot(&v, &v).sqrt();
        if nv > 0.0 {
            return v.into_iter().map(|x| x / nv).collect();
        }
    }
}

/// Largest and smallest eigenvalue of a symmetric operator using only
/// matrix-vector products.
///
/// The dominant eigenvalue comes first from plain iteration; the opposite
/// extreme is the dominant eigenvalue of `c·I ∓ A` with `c` just above the
/// first extreme's magnitude. If plain iteration stalls (a `±ρ` pair), both
/// extremes are taken from shifted runs.
pub fn power_extreme_eigs<F>(mut apply: F, n: usize, opts: &PowerOptions) -> Result<PowerEstimate>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if n == 0 {
        return Err(Error::InvalidInput("power method needs n >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let first = power_run(&mut apply, n, 1.0, 0.0, opts, &mut rng)?;
    let mut iterations = first.iterations;
    if first.converged {
        let c = first.value.abs() * (1.0 + 1e-3) + 1e-12;
        if first.value >= 0.0 {
            let other = power_run(&mut apply, n, -1.0, c, opts, &mut rng)?;
            iterations += other.iterations;
            Ok(PowerEstimate {
                pos: first.value,
                neg: other.value.min(first.value),
                converged: other.converged,
                iterations,
            })
        } else {
            let other = power_run(&mut apply, n, 1.0, c, opts, &mut rng)?;
            iterations += other.iterations;
            Ok(PowerEstimate {
                pos: other.value.max(first.value),
                neg: first.value,
                converged: other.converged,
                iterations,
            })
        }
    } else {
        let c = 1.1 * first.image_norm.max(first.value.abs()) + 1e-12;
        let top = power_run(&mut apply, n, 1.0, c, opts, &mut rng)?;
        let bottom = power_run(&mut apply, n, -1.0, c, opts, &mut rng)?;
        iterations += top.iterations + bottom.iterations;
        Ok(PowerEstimate {
            pos: top.value,
            neg: bottom.value,
            converged: top.converged && bottom.converged,
            iterations,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_symmetric(n: usize, seed: u64) -> SymmetricMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SymmetricMatrix::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn rel_reconstruction(a: &SymmetricMatrix) -> f64 {
        let d = sym_eig(a).unwrap();
        d.reconstruct().frobenius_distance(a) / a.frobenius_norm()
    }

    #[test]
    fn diagonal_spectrum() {
        let d = sym_eig(&SymmetricMatrix::diagonal(&[2.0, -2.0])).unwrap();
        assert_eq!(d.values(), &[-2.0, 2.0]);
        assert!((d.vector(0)[1].abs() - 1.0).abs() < 1e-15);
        assert!((d.vector(1)[0].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identity_spectrum() {
        let d = sym_eig(&SymmetricMatrix::identity(3)).unwrap();
        for &l in d.values() {
            assert!((l - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn seeded_5x5_reconstruction() {
        let a = random_symmetric(5, 0);
        let d = sym_eig(&a).unwrap();
        assert!(d.reconstruct().frobenius_distance(&a) <= 1e-10);
        assert!(d.orthonormality_error() <= 1e-8);
        assert!(d.values().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn sym_eig_is_deterministic() {
        let a = random_symmetric(40, 7);
        assert_eq!(sym_eig(&a).unwrap(), sym_eig(&a).unwrap());
    }

    #[test]
    fn rejects_non_finite() {
        let mut data = vec![1.0, 0.0, 0.0, 1.0];
        data[0] = f64::NAN;
        assert!(SymmetricMatrix::from_row_major(2, data).is_err());
        let m = SymmetricMatrix {
            n: 2,
            data: vec![f64::INFINITY, 0.0, 0.0, 1.0],
        };
        assert!(matches!(sym_eig(&m), Err(Error::NonFinite(_))));
    }

    #[test]
    fn rejects_asymmetric() {
        assert!(SymmetricMatrix::from_row_major(2, vec![1.0, 2.0, 3.0, 1.0]).is_err());
    }

    #[test]
    fn abs_of_diagonal() {
        let d = sym_eig(&SymmetricMatrix::diagonal(&[2.0, -2.0])).unwrap();
        let a = abs_spectrum(&d);
        assert!(a.frobenius_distance(&SymmetricMatrix::diagonal(&[2.0, 2.0])) < 1e-14);
    }

    #[test]
    fn abs_of_positive_definite_is_identity_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random_symmetric(6, 3);
        // BᵀB + I
        let a = SymmetricMatrix::from_fn(6, |i, j| {
            let s: f64 = (0..6).map(|k| b.get(k, i) * b.get(k, j)).sum();
            s + if i == j {
                1.0 + rng.gen::<f64>() * 0.0
            } else {
                0.0
            }
        });
        let abs = abs_spectrum(&sym_eig(&a).unwrap());
        assert!(abs.frobenius_distance(&a) <= 1e-10);
    }

    #[test]
    fn abs_of_swap_is_identity() {
        // eigenpairs ±1 with vectors (1, ±1)/√2
        let a = SymmetricMatrix::from_row_major(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let abs = abs_spectrum(&sym_eig(&a).unwrap());
        assert!(abs.frobenius_distance(&SymmetricMatrix::identity(2)) < 1e-14);
    }

    #[test]
    fn damped_solve_examples() {
        let d = sym_eig(&SymmetricMatrix::diagonal(&[2.0, -2.0])).unwrap();
        let g = [2.0, -2.0];
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-14);
        assert!(close(
            &damped_eigen_solve(&d, &g, 0.0, true).unwrap(),
            &[1.0, -1.0]
        ));
        assert!(close(
            &damped_eigen_solve(&d, &g, 0.0, false).unwrap(),
            &[1.0, 1.0]
        ));
        assert!(close(
            &damped_eigen_solve(&d, &g, 3.0, false).unwrap(),
            &[0.4, -2.0]
        ));
    }

    #[test]
    fn damped_solve_singular_names_eigenvalue() {
        let d = sym_eig(&SymmetricMatrix::diagonal(&[0.0, 1.0])).unwrap();
        match damped_eigen_solve(&d, &[1.0, 1.0], 0.0, true) {
            Err(Error::Singular {
                index, eigenvalue, ..
            }) => {
                assert_eq!(index, 0);
                assert_eq!(eigenvalue, 0.0);
            }
            other => panic!("expected singular error, got {other:?}"),
        }
        let d = sym_eig(&SymmetricMatrix::diagonal(&[-1.0, 1.0])).unwrap();
        assert!(matches!(
            damped_eigen_solve(&d, &[1.0, 1.0], 1.0, false),
            Err(Error::Singular { index: 0, .. })
        ));
        assert!(damped_eigen_solve(&d, &[1.0, 1.0], -1.0, true).is_err());
    }

    #[test]
    fn power_diagonal() {
        let a = SymmetricMatrix::diagonal(&[5.0, -3.0, 1.0]);
        let est = power_extreme_eigs(|v| Ok(a.matvec(v)), 3, &PowerOptions::default()).unwrap();
        assert!(est.converged);
        assert!((est.pos - 5.0).abs() < 1e-6, "{est:?}");
        assert!((est.neg + 3.0).abs() < 1e-6, "{est:?}");
    }

    #[test]
    fn power_identity() {
        let a = SymmetricMatrix::identity(4);
        let est = power_extreme_eigs(|v| Ok(a.matvec(v)), 4, &PowerOptions::default()).unwrap();
        assert!(est.converged);
        assert!((est.pos - 1.0).abs() < 1e-9);
        assert!((est.neg - 1.0).abs() < 1e-9);
    }

    #[test]
    fn power_handles_symmetric_pair() {
        let a = SymmetricMatrix::diagonal(&[4.0, -4.0, 1.0, 0.5]);
        let opts = PowerOptions {
            max_iters: 300,
            ..Default::default()
        };
        let est = power_extreme_eigs(|v| Ok(a.matvec(v)), 4, &opts).unwrap();
        assert!((est.pos - 4.0).abs() < 1e-3, "{est:?}");
        assert!((est.neg + 4.0).abs() < 1e-3, "{est:?}");
    }

    #[test]
    fn power_zero_operator() {
        let est =
            power_extreme_eigs(|v| Ok(vec![0.0; v.len()]), 3, &PowerOptions::default()).unwrap();
        assert!(est.converged);
        assert_eq!((est.pos, est.neg), (0.0, 0.0));
    }

    #[test]
    fn power_flags_unconverged() {
        let a = random_symmetric(50, 11);
        let opts = PowerOptions {
            max_iters: 2,
            tol: 1e-12,
            seed: 0,
        };
        let est = power_extreme_eigs(|v| Ok(a.matvec(v)), 50, &opts).unwrap();
        assert!(!est.converged);
        assert!(est.pos.is_finite() && est.neg.is_finite());
    }

    #[test]
    fn power_matches_dense_on_random() {
        for seed in 0..10 {
            let a = random_symmetric(50, 100 + seed);
            let d = sym_eig(&a).unwrap();
            let opts = PowerOptions {
                seed,
                ..Default::default()
            };
            let est = power_extreme_eigs(|v| Ok(a.matvec(v)), 50, &opts).unwrap();
            assert!((est.pos - d.max_value()).abs() <= 1e-3 * d.max_value().abs());
            assert!((est.neg - d.min_value()).abs() <= 1e-3 * d.min_value().abs());
        }
    }

    #[test]
    fn reconstruction_on_varied_sizes() {
        for (n, seed) in [(1, 1), (2, 2), (17, 3), (64, 4)] {
            assert!(rel_reconstruction(&random_symmetric(n, seed)) <= 1e-8);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn lemma_abs_bounds_quadratic_form(n in 2usize..12, seed in any::<u64>()) {
                let a = random_symmetric(n, seed);
                let abs = abs_spectrum(&sym_eig(&a).unwrap());
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
                let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                prop_assert!(a.quadratic_form(&x).abs() <= abs.quadratic_form(&x) + 1e-10);
            }

            #[test]
            fn abs_solve_is_sign_corrected_newton(n in 2usize..10, seed in any::<u64>()) {
                let a = random_symmetric(n, seed);
                let d = sym_eig(&a).unwrap();
                prop_assume!(d.values().iter().all(|l| l.abs() > 1e-6));
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
                let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let sf = d.project(&damped_eigen_solve(&d, &g, 0.0, true).unwrap());
                let nt = d.project(&damped_eigen_solve(&d, &g, 0.0, false).unwrap());
                for i in 0..n {
                    let expect = nt[i] * d.values()[i].signum();
                    prop_assert!((sf[i] - expect).abs() <= 1e-8 * (1.0 + expect.abs()));
                }
            }
        }
    }
}
