//! One-hidden-layer classifier with exact curvature.
//!
//! Parameters are flattened as `W1` (row-major, `hidden × inputs`), `b1`,
//! `W2` (row-major, `outputs × hidden`), `b2`. Internally each layer is kept
//! as an augmented matrix whose last column holds the bias, so the bias
//! behaves like a weight on a constant input of one.

use std::sync::Arc;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscapes::{check_dim, Landscape};
use crate::linalg::SymmetricMatrix;
use crate::param::ParamVector;

/// Largest parameter count for which a dense Hessian is assembled.
pub const DENSE_HESSIAN_LIMIT: usize = 6000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MlpShape {
    pub n_in: usize,
    /// Zero means no hidden layer: a single affine map from inputs to outputs.
    pub n_hidden: usize,
    pub n_out: usize,
}

impl MlpShape {
    /// 10×10 inputs, ten classes.
    pub const fn new(n_hidden: usize) -> Self {
        Self {
            n_in: 100,
            n_hidden,
            n_out: 10,
        }
    }

    /// Width of the representation feeding the output layer.
    fn feature_dim(&self) -> usize {
        if self.n_hidden == 0 {
            self.n_in
        } else {
            self.n_hidden
        }
    }

    fn output_offset(&self) -> usize {
        self.n_hidden * (self.n_in + 1)
    }

    pub fn param_count(&self) -> usize {
        self.output_offset() + self.n_out * (self.feature_dim() + 1)
    }

    /// Flat index of hidden weight `(j, i)`; `i == n_in` is the bias.
    #[inline]
    fn hidden_index(&self, j: usize, i: usize) -> usize {
        if i < self.n_in {
            j * self.n_in + i
        } else {
            self.n_hidden * self.n_in + j
        }
    }

    /// Flat index of output weight `(k, j)`; `j == feature_dim` is the bias.
    #[inline]
    fn output_index(&self, k: usize, j: usize) -> usize {
        let d = self.feature_dim();
        let off = self.output_offset();
        if j < d {
            off + k * d + j
        } else {
            off + self.n_out * d + k
        }
    }

    fn unflatten(&self, theta: &[f64]) -> (Mat<f64>, Mat<f64>) {
        let w1 = Mat::from_fn(self.n_hidden, self.n_in + 1, |j, i| {
            theta[self.hidden_index(j, i)]
        });
        let w2 = Mat::from_fn(self.n_out, self.feature_dim() + 1, |k, j| {
            theta[self.output_index(k, j)]
        });
        (w1, w2)
    }

    fn flatten(&self, w1: &Mat<f64>, w2: &Mat<f64>) -> ParamVector {
        let mut out = vec![0.0; self.param_count()];
        for j in 0..self.n_hidden {
            for i in 0..=self.n_in {
                out[self.hidden_index(j, i)] = w1[(j, i)];
            }
        }
        for k in 0..self.n_out {
            for j in 0..=self.feature_dim() {
                out[self.output_index(k, j)] = w2[(k, j)];
            }
        }
        ParamVector::new(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn eval(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => a.tanh(),
            Activation::Identity => a,
        }
    }

    /// First and second derivative given the pre-activation and its image.
    #[inline]
    fn derivs(self, z: f64) -> (f64, f64) {
        match self {
            Activation::Tanh => {
                let s = 1.0 - z * z;
                (s, -2.0 * z * s)
            }
            Activation::Identity => (1.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputLoss {
    #[default]
    SoftmaxCrossEntropy,
    /// `½‖o − onehot(y)‖²`
    SquaredError,
}

/// Inputs with an appended constant column, plus class labels.
#[derive(Debug, Clone)]
pub struct Batch {
    n_in: usize,
    xa: Mat<f64>,
    labels: Vec<u8>,
}

impl Batch {
    /// `inputs` is row-major, one example of `n_in` values per row.
    pub fn new(n_in: usize, inputs: &[f64], labels: Vec<u8>) -> Result<Self> {
        let m = labels.len();
        if m == 0 {
            return Err(Error::InvalidInput(
                "batch must hold at least one example".into(),
            ));
        }
        if inputs.len() != m * n_in {
            return Err(Error::InvalidInput(format!(
                "{} input values for {m} examples of width {n_in}",
                inputs.len()
            )));
        }
        if let Some(p) = inputs.iter().position(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::InvalidInput(format!(
                "input value {} at example {} lies outside [0, 1]",
                inputs[p],
                p / n_in
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
            return Err(Error::InvalidInput(format!("label {bad} outside 0..=9")));
        }
        let xa = Mat::from_fn(m, n_in + 1, |e, i| {
            if i < n_in {
                inputs[e * n_in + i]
            } else {
                1.0
            }
        });
        Ok(Self { n_in, xa, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn input(&self, e: usize) -> Vec<f64> {
        (0..self.n_in).map(|i| self.xa[(e, i)]).collect()
    }

    pub fn subset(&self, examples: &[usize]) -> Result<Batch> {
        if examples.is_empty() {
            return Err(Error::InvalidInput("empty example subset".into()));
        }
        let xa = Mat::from_fn(examples.len(), self.n_in + 1, |r, i| {
            self.xa[(examples[r], i)]
        });
        let labels = examples.iter().map(|&e| self.labels[e]).collect();
        Ok(Self {
            n_in: self.n_in,
            xa,
            labels,
        })
    }
}

/// Forward-pass intermediates for a whole batch.
struct Forward {
    /// Output-layer input with the constant column, `m × (d+1)`.
    za: Mat<f64>,
    /// Hidden activation derivatives `f'(a)`, `f''(a)`, each `m × h`.
    d1: Mat<f64>,
    d2: Mat<f64>,
    /// Network outputs before the loss, `m × n_out`.
    out: Mat<f64>,
    /// Softmax probabilities (cross-entropy) or raw outputs (squared error).
    pred: Mat<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    pub shape: MlpShape,
    pub activation: Activation,
    pub loss: OutputLoss,
}

impl Mlp {
    pub fn new(shape: MlpShape) -> Self {
        Self {
            shape,
            activation: Activation::Tanh,
            loss: OutputLoss::SoftmaxCrossEntropy,
        }
    }

    fn check(&self, theta: &[f64], batch: &Batch) -> Result<()> {
        check_dim(self.shape.param_count(), theta)?;
        if batch.n_in != self.shape.n_in {
            return Err(Error::InvalidInput(format!(
                "batch width {} does not match model input {}",
                batch.n_in, self.shape.n_in
            )));
        }
        Ok(())
    }

    fn forward(&self, w1: &Mat<f64>, w2: &Mat<f64>, batch: &Batch) -> Result<Forward> {
        let m = batch.len();
        let h = self.shape.n_hidden;
        let (za, d1, d2) = if h == 0 {
            (batch.xa.clone(), Mat::zeros(m, 0), Mat::zeros(m, 0))
        } else {
            let a = &batch.xa * w1.transpose();
            let mut za = Mat::<f64>::zeros(m, h + 1);
            let mut d1 = Mat::<f64>::zeros(m, h);
            let mut d2 = Mat::<f64>::zeros(m, h);
            for j in 0..h {
                for e in 0..m {
                    let z = self.activation.eval(a[(e, j)]);
                    let (s, t) = self.activation.derivs(z);
                    za[(e, j)] = z;
                    d1[(e, j)] = s;
                    d2[(e, j)] = t;
                }
            }
            for e in 0..m {
                za[(e, h)] = 1.0;
            }
            (za, d1, d2)
        };
        let out = &za * w2.transpose();
        let n_out = self.shape.n_out;
        let mut pred = out.clone();
        if self.loss == OutputLoss::SoftmaxCrossEntropy {
            for e in 0..m {
                let mx = (0..n_out)
                    .map(|k| out[(e, k)])
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for k in 0..n_out {
                    let v = (out[(e, k)] - mx).exp();
                    pred[(e, k)] = v;
                    sum += v;
                }
                for k in 0..n_out {
                    pred[(e, k)] /= sum;
                }
            }
        }
        for e in 0..m {
            for k in 0..n_out {
                if !out[(e, k)].is_finite() || !pred[(e, k)].is_finite() {
                    return Err(Error::NonFinite(format!("network output for example {e}")));
                }
            }
        }
        Ok(Forward {
            za,
            d1,
            d2,
            out,
            pred,
        })
    }

    /// Output error `∂ℓ/∂o` per example, not yet divided by the batch size.
    fn output_error(&self, fwd: &Forward, batch: &Batch) -> Mat<f64> {
        let mut delta = fwd.pred.clone();
        for (e, &y) in batch.labels.iter().enumerate() {
            delta[(e, y as usize)] -= 1.0;
        }
        delta
    }

    /// Mean loss and misclassification fraction.
    pub fn forward_loss(&self, theta: &[f64], batch: &Batch) -> Result<(f64, f64)> {
        self.check(theta, batch)?;
        let (w1, w2) = self.shape.unflatten(theta);
        let fwd = self.forward(&w1, &w2, batch)?;
        let n_out = self.shape.n_out;
        let mut total = 0.0;
        let mut wrong = 0usize;
        for (e, &y) in batch.labels.iter().enumerate() {
            let y = y as usize;
            total += match self.loss {
                OutputLoss::SoftmaxCrossEntropy => {
                    let mx = (0..n_out)
                        .map(|k| fwd.out[(e, k)])
                        .fold(f64::NEG_INFINITY, f64::max);
                    let lse = mx
                        + (0..n_out)
                            .map(|k| (fwd.out[(e, k)] - mx).exp())
                            .sum::<f64>()
                            .ln();
                    lse - fwd.out[(e, y)]
                }
                OutputLoss::SquaredError => {
                    0.5 * (0..n_out)
                        .map(|k| {
                            let t = if k == y { 1.0 } else { 0.0 };
                            (fwd.out[(e, k)] - t).powi(2)
                        })
                        .sum::<f64>()
                }
            };
            let mut best = 0;
            for k in 1..n_out {
                if fwd.out[(e, k)] > fwd.out[(e, best)] {
                    best = k;
                }
            }
            if best != y {
                wrong += 1;
            }
        }
        let m = batch.len() as f64;
        let loss = total / m;
        if !loss.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        Ok((loss, wrong as f64 / m))
    }

    pub fn gradient(&self, theta: &[f64], batch: &Batch) -> Result<ParamVector> {
        self.check(theta, batch)?;
        let (w1, w2) = self.shape.unflatten(theta);
        let fwd = self.forward(&w1, &w2, batch)?;
        let m = batch.len() as f64;
        let delta = self.output_error(&fwd, batch) * faer::Scale(1.0 / m);
        let g2 = delta.transpose() * &fwd.za;
        let g1 = if self.shape.n_hidden == 0 {
            Mat::zeros(0, self.shape.n_in + 1)
        } else {
            let w2f = w2.subcols(0, self.shape.n_hidden);
            let mut da = &delta * w2f;
            zip_mul(&mut da, &fwd.d1);
            da.transpose() * &batch.xa
        };
        Ok(self.shape.flatten(&g1, &g2))
    }

    /// Exact `H·v` by forward-over-reverse differentiation.
    pub fn hessian_vector(&self, theta: &[f64], batch: &Batch, v: &[f64]) -> Result<ParamVector> {
        self.check(theta, batch)?;
        check_dim(self.shape.param_count(), v)?;
        let h = self.shape.n_hidden;
        let n_out = self.shape.n_out;
        let (w1, w2) = self.shape.unflatten(theta);
        let (v1, v2) = self.shape.unflatten(v);
        let fwd = self.forward(&w1, &w2, batch)?;
        let m = batch.len();
        let inv_m = 1.0 / m as f64;
        let delta = self.output_error(&fwd, batch) * faer::Scale(inv_m);

        // Directional derivatives of the forward pass.
        let (r_z, r_a) = if h == 0 {
            (Mat::zeros(m, 0), Mat::zeros(m, 0))
        } else {
            let r_a = &batch.xa * v1.transpose();
            let mut r_z = r_a.clone();
            zip_mul(&mut r_z, &fwd.d1);
            (r_z, r_a)
        };
        let mut r_out = &fwd.za * v2.transpose();
        if h > 0 {
            r_out += &r_z * w2.subcols(0, h).transpose();
        }
        let mut r_delta = Mat::<f64>::zeros(m, n_out);
        match self.loss {
            OutputLoss::SoftmaxCrossEntropy => {
                for e in 0..m {
                    let mean: f64 = (0..n_out).map(|k| fwd.pred[(e, k)] * r_out[(e, k)]).sum();
                    for k in 0..n_out {
                        r_delta[(e, k)] = fwd.pred[(e, k)] * (r_out[(e, k)] - mean) * inv_m;
                    }
                }
            }
            OutputLoss::SquaredError => {
                r_delta = r_out * faer::Scale(inv_m);
            }
        }

        // Directional derivatives of the backward pass.
        let mut r_g2 = r_delta.transpose() * &fwd.za;
        if h > 0 {
            let extra = delta.transpose() * &r_z;
            let mut head = r_g2.as_mut().subcols_mut(0, h);
            head += &extra;
        }
        let r_g1 = if h == 0 {
            Mat::zeros(0, self.shape.n_in + 1)
        } else {
            let w2f = w2.subcols(0, h);
            let dz = &delta * w2f;
            let r_dz = &r_delta * w2f + &delta * v2.subcols(0, h);
            let r_da = Mat::from_fn(m, h, |e, j| {
                fwd.d2[(e, j)] * r_a[(e, j)] * dz[(e, j)] + fwd.d1[(e, j)] * r_dz[(e, j)]
            });
            r_da.transpose() * &batch.xa
        };
        Ok(self.shape.flatten(&r_g1, &r_g2))
    }

    /// Dense exact Hessian, assembled block by block in closed form.
    ///
    /// Every column equals [`Mlp::hessian_vector`] applied to the matching
    /// basis vector; the closed form replaces `n` separate products with a
    /// handful of matrix multiplications.
    pub fn hessian(&self, theta: &[f64], batch: &Batch) -> Result<SymmetricMatrix> {
        self.check(theta, batch)?;
        let n = self.shape.param_count();
        if n > DENSE_HESSIAN_LIMIT {
            return Err(Error::TooLarge {
                params: n,
                limit: DENSE_HESSIAN_LIMIT,
            });
        }
        let shape = self.shape;
        let h = shape.n_hidden;
        let n_out = shape.n_out;
        let d = shape.feature_dim();
        let m = batch.len();
        let inv_m = 1.0 / m as f64;
        let (w1, w2) = shape.unflatten(theta);
        let fwd = self.forward(&w1, &w2, batch)?;
        let delta = self.output_error(&fwd, batch);
        let ce = self.loss == OutputLoss::SoftmaxCrossEntropy;
        let p = &fwd.pred;
        let xa = &batch.xa;
        let za = &fwd.za;

        let mut out = vec![0.0; n * n];
        let mut put = |a: usize, b: usize, v: f64| {
            out[a * n + b] = v;
            out[b * n + a] = v;
        };

        // Output-layer block: Σₑ S[k,k'] z̃ⱼ z̃ⱼ', S = ∂²ℓ/∂o².
        let mut scaled = Mat::<f64>::zeros(m, d + 1);
        for k in 0..n_out {
            for k2 in k..n_out {
                let weight = |e: usize| -> f64 {
                    if ce {
                        (if k == k2 { p[(e, k)] } else { 0.0 }) - p[(e, k)] * p[(e, k2)]
                    } else if k == k2 {
                        1.0
                    } else {
                        0.0
                    }
                };
                if !ce && k != k2 {
                    continue;
                }
                for e in 0..m {
                    let c = weight(e) * inv_m;
                    for j in 0..=d {
                        scaled[(e, j)] = c * za[(e, j)];
                    }
                }
                let blk = za.transpose() * &scaled;
                for j in 0..=d {
                    let j2_start = if k == k2 { j } else { 0 };
                    for j2 in j2_start..=d {
                        put(
                            shape.output_index(k, j),
                            shape.output_index(k2, j2),
                            blk[(j, j2)],
                        );
                    }
                }
            }
        }

        if h > 0 {
            let w2f = w2.subcols(0, h);
            // w̄ = P W2 (cross-entropy only), δz = δ W2.
            let wbar = p * w2f;
            let dz = &delta * w2f;

            // Hidden/hidden blocks: Σₑ C[j,j'] x̃ᵢ x̃ᵢ' with
            // C = diag(f')·W2ᵀSW2·diag(f') + diag(δz ⊙ f'').
            // Accumulated as one product over packed pairs j ≤ j', i ≤ i'.
            let ni = shape.n_in + 1;
            let hidden_pairs: Vec<(usize, usize)> =
                (0..h).flat_map(|j| (j..h).map(move |j2| (j, j2))).collect();
            let input_pairs: Vec<(usize, usize)> = (0..ni)
                .flat_map(|i| (i..ni).map(move |i2| (i, i2)))
                .collect();
            let w2_cols: Vec<Vec<f64>> = (0..h)
                .map(|j| (0..n_out).map(|k| w2f[(k, j)]).collect())
                .collect();
            let sq_curv: Vec<f64> = hidden_pairs
                .iter()
                .map(|&(j, j2)| {
                    w2_cols[j]
                        .iter()
                        .zip(&w2_cols[j2])
                        .map(|(a, b)| a * b)
                        .sum()
                })
                .collect();
            let mut acc = Mat::<f64>::zeros(hidden_pairs.len(), input_pairs.len());
            const CHUNK: usize = 256;
            let mut lo = 0;
            while lo < m {
                let hi = (lo + CHUNK).min(m);
                let coef = Mat::from_fn(hi - lo, hidden_pairs.len(), |r, q| {
                    let e = lo + r;
                    let (j, j2) = hidden_pairs[q];
                    let curv = if ce {
                        let mut s = 0.0;
                        for k in 0..n_out {
                            s += p[(e, k)] * w2_cols[j][k] * w2_cols[j2][k];
                        }
                        s - wbar[(e, j)] * wbar[(e, j2)]
                    } else {
                        sq_curv[q]
                    };
                    let mut v = fwd.d1[(e, j)] * fwd.d1[(e, j2)] * curv;
                    if j == j2 {
                        v += dz[(e, j)] * fwd.d2[(e, j)];
                    }
                    v * inv_m
                });
                let mut outer = Mat::<f64>::zeros(hi - lo, input_pairs.len());
                for (t, &(i, i2)) in input_pairs.iter().enumerate() {
                    let (a, b) = (&xa.col_as_slice(i)[lo..hi], &xa.col_as_slice(i2)[lo..hi]);
                    for ((o, x), y) in outer.col_as_slice_mut(t).iter_mut().zip(a).zip(b) {
                        *o = x * y;
                    }
                }
                acc += coef.transpose() * &outer;
                lo = hi;
            }
            for (q, &(j, j2)) in hidden_pairs.iter().enumerate() {
                for (t, &(i, i2)) in input_pairs.iter().enumerate() {
                    let v = acc[(q, t)];
                    put(shape.hidden_index(j, i), shape.hidden_index(j2, i2), v);
                    if j != j2 {
                        put(shape.hidden_index(j, i2), shape.hidden_index(j2, i), v);
                    }
                }
            }

            // Hidden/output blocks: Σₑ f'ⱼ x̃ᵢ ((SW2)[k',j] z̃ⱼ' + δ[k'] [j'=j]).
            let cols = n_out * (h + 1);
            let mut rj = Mat::<f64>::zeros(m, cols);
            for j in 0..h {
                for e in 0..m {
                    let s = fwd.d1[(e, j)] * inv_m;
                    for k2 in 0..n_out {
                        let sw = if ce {
                            p[(e, k2)] * (w2f[(k2, j)] - wbar[(e, j)])
                        } else {
                            w2f[(k2, j)]
                        };
                        for j2 in 0..=h {
                            let mut v = sw * za[(e, j2)];
                            if j2 == j {
                                v += delta[(e, k2)];
                            }
                            rj[(e, k2 * (h + 1) + j2)] = s * v;
                        }
                    }
                }
                let blk = xa.transpose() * &rj;
                for i in 0..=shape.n_in {
                    for k2 in 0..n_out {
                        for j2 in 0..=h {
                            put(
                                shape.hidden_index(j, i),
                                shape.output_index(k2, j2),
                                blk[(i, k2 * (h + 1) + j2)],
                            );
                        }
                    }
                }
            }
        }

        SymmetricMatrix::from_mirrored(n, out)
    }
}

fn zip_mul(a: &mut Mat<f64>, b: &Mat<f64>) {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            a[(i, j)] *= b[(i, j)];
        }
    }
}

/// Fan-based uniform initialization, `±√(6/(fan_in+fan_out))`; biases zero.
pub fn init_params(shape: MlpShape, seed: u64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = vec![0.0; shape.param_count()];
    let r1 = (6.0 / (shape.n_in + shape.n_hidden) as f64).sqrt();
    for j in 0..shape.n_hidden {
        for i in 0..shape.n_in {
            theta[shape.hidden_index(j, i)] = rng.gen_range(-r1..r1);
        }
    }
    let d = shape.feature_dim();
    let r2 = (6.0 / (d + shape.n_out) as f64).sqrt();
    for k in 0..shape.n_out {
        for j in 0..d {
            theta[shape.output_index(k, j)] = rng.gen_range(-r2..r2);
        }
    }
    ParamVector::new(theta)
}

/// An [`Mlp`] bound to its training data.
#[derive(Debug, Clone)]
pub struct MlpObjective {
    pub model: Mlp,
    batch: Arc<Batch>,
}

impl MlpObjective {
    pub fn new(model: Mlp, batch: Arc<Batch>) -> Self {
        Self { model, batch }
    }

    pub fn batch(&self) -> &Batch {
        &self.batch
    }
}

impl Landscape for MlpObjective {
    fn name(&self) -> String {
        format!("mlp-{}", self.model.shape.n_hidden)
    }

    fn dim(&self) -> usize {
        self.model.shape.param_count()
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.model.forward_loss(theta, &self.batch)?.0)
    }

    fn gradient(&self, theta: &[f64]) -> Result<ParamVector> {
        self.model.gradient(theta, &self.batch)
    }

    fn hessian(&self, theta: &[f64]) -> Result<SymmetricMatrix> {
        self.model.hessian(theta, &self.batch)
    }

    fn hessian_vector(&self, theta: &[f64], v: &[f64]) -> Result<ParamVector> {
        self.model.hessian_vector(theta, &self.batch, v)
    }

    fn example_count(&self) -> usize {
        self.batch.len()
    }

    fn subset_gradient(&self, theta: &[f64], examples: &[usize]) -> Result<ParamVector> {
        self.model.gradient(theta, &self.batch.subset(examples)?)
    }

    fn error_rate(&self, theta: &[f64]) -> Result<Option<f64>> {
        Ok(Some(self.model.forward_loss(theta, &self.batch)?.1))
    }
}
