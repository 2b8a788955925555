//! Small dense-layer toolkit with explicit forward/backward passes.
//!
//! Everything is f64 and deterministic: layers are initialized from seeded
//! RNGs and forward passes never mutate state (batch-norm running-stat
//! updates are an explicit separate call so that gradient checks stay pure).

pub mod bilinear;
pub mod gradcheck;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Seeded RNG used everywhere reproducibility matters.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream seed from a base seed and a label.
///
/// FNV-1a over the label, mixed with the base; stable across platforms.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for byte in label.as_bytes() {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(0x100000001b3);
    }
    h ^ base.wrapping_mul(0x9e3779b97f4a7c15)
}

/// Dense layer `y = x Wᵀ + b` with `W: (out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Parameter gradients of a [`Linear`] layer.
#[derive(Debug, Clone)]
pub struct LinearGrads {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    /// Xavier-uniform initialization.
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut w = Array2::zeros((out_dim, in_dim));
        for v in w.iter_mut() {
            *v = rng.random_range(-bound..bound);
        }
        Linear {
            w,
            b: Array1::zeros(out_dim),
        }
    }

    /// Like [`Linear::new`] with weights scaled by `scale` afterwards.
    pub fn new_scaled(in_dim: usize, out_dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut layer = Linear::new(in_dim, out_dim, rng);
        layer.w.mapv_inplace(|v| v * scale);
        layer
    }

    /// Exact identity map (square, unit diagonal, zero bias).
    pub fn identity(dim: usize) -> Self {
        Linear {
            w: Array2::eye(dim),
            b: Array1::zeros(dim),
        }
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Linear {
            w: Array2::zeros((out_dim, in_dim)),
            b: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.nrows()
    }

    /// `x: (n, in) -> (n, out)`
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w.t()) + &self.b
    }

    /// Returns `(dx, grads)` given upstream `dy: (n, out)`.
    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>) -> (Array2<f64>, LinearGrads) {
        let dx = dy.dot(&self.w);
        let dw = dy.t().dot(x);
        let db = dy.sum_axis(Axis(0));
        (dx, LinearGrads { w: dw, b: db })
    }
}

/// Feature-wise batch normalization over the rows of an `(n, d)` batch.
///
/// Training mode normalizes with batch statistics; evaluation mode uses the
/// frozen running statistics. `forward_train` does not touch the running
/// statistics; callers apply [`BatchNorm::update_running`] explicitly after
/// an optimizer step.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub eps: f64,
    pub momentum: f64,
}

/// Cached values from a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub x_hat: Array2<f64>,
    pub centered: Array2<f64>,
    pub inv_std: Array1<f64>,
    pub batch_mean: Array1<f64>,
    pub batch_var: Array1<f64>,
}

/// Parameter gradients of a [`BatchNorm`] layer.
#[derive(Debug, Clone)]
pub struct BnGrads {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        BatchNorm {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
            running_mean: Array1::zeros(dim),
            running_var: Array1::ones(dim),
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn forward_train(&self, x: &Array2<f64>) -> (Array2<f64>, BnCache) {
        let n = x.nrows() as f64;
        let mean = x.mean_axis(Axis(0)).expect("nonempty batch");
        let centered = x - &mean;
        let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / n;
        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let x_hat = &centered * &inv_std;
        let y = &x_hat * &self.gamma + &self.beta;
        (
            y,
            BnCache {
                x_hat,
                centered,
                inv_std,
                batch_mean: mean,
                batch_var: var,
            },
        )
    }

    pub fn forward_eval(&self, x: &Array2<f64>) -> Array2<f64> {
        let inv_std = self.running_var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let x_hat = (x - &self.running_mean) * &inv_std;
        &x_hat * &self.gamma + &self.beta
    }

    /// Full training-mode backward including the batch-statistic terms.
    pub fn backward_train(&self, cache: &BnCache, dy: &Array2<f64>) -> (Array2<f64>, BnGrads) {
        let n = dy.nrows() as f64;
        let dgamma = (dy * &cache.x_hat).sum_axis(Axis(0));
        let dbeta = dy.sum_axis(Axis(0));

        let dx_hat = dy * &self.gamma;
        // dx = (1/n) inv_std * (n dx_hat - Σ dx_hat - x_hat Σ(dx_hat ⊙ x_hat))
        let sum_dx_hat = dx_hat.sum_axis(Axis(0));
        let sum_dx_hat_xhat = (&dx_hat * &cache.x_hat).sum_axis(Axis(0));
        let dx = (&dx_hat * n - &sum_dx_hat - &cache.x_hat * &sum_dx_hat_xhat)
            * &cache.inv_std
            / n;
        (dx, BnGrads { gamma: dgamma, beta: dbeta })
    }

    /// Folds a batch's statistics into the running statistics.
    pub fn update_running(&mut self, cache: &BnCache) {
        let m = self.momentum;
        self.running_mean = &self.running_mean * (1.0 - m) + &cache.batch_mean * m;
        self.running_var = &self.running_var * (1.0 - m) + &cache.batch_var * m;
    }
}

/// Elementwise `max(0, x)`.
pub fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Backward through ReLU given the pre-activation input.
pub fn relu_backward(pre: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    dx.zip_mut_with(pre, |g, &p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
    dx
}

/// Row-wise L2 normalization. Zero rows pass through untouched.
///
/// Returns the normalized batch and the per-row norms needed for backward.
pub fn normalize_rows(x: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let mut y = x.clone();
    let mut norms = Array1::zeros(x.nrows());
    for (i, mut row) in y.rows_mut().into_iter().enumerate() {
        let n = row.dot(&row).sqrt();
        norms[i] = n;
        if n > 1e-12 {
            row.mapv_inplace(|v| v / n);
        }
    }
    (y, norms)
}

/// Backward through row-wise L2 normalization.
///
/// `y` is the normalized output, `norms` the cached input norms.
pub fn normalize_rows_backward(
    y: &Array2<f64>,
    norms: &Array1<f64>,
    dy: &Array2<f64>,
) -> Array2<f64> {
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let n = norms[i];
        let g = dy.row(i);
        if n <= 1e-12 {
            dx.row_mut(i).assign(&g);
            continue;
        }
        let yr = y.row(i);
        let dot = g.dot(&yr);
        let adjusted = &g - &(&yr * dot);
        dx.row_mut(i).assign(&(&adjusted / n));
    }
    dx
}

/// Row-wise softmax.
pub fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut y = x.clone();
    for mut row in y.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    y
}

/// Backward through row-wise softmax: `dx = a ⊙ (dy - rowsum(dy ⊙ a))`.
pub fn softmax_rows_backward(a: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let inner = (dy * a).sum_axis(Axis(1));
    let mut dx = dy.clone();
    for (i, mut row) in dx.rows_mut().into_iter().enumerate() {
        let s = inner[i];
        let ar = a.row(i);
        for (g, &av) in row.iter_mut().zip(ar.iter()) {
            *g = av * (*g - s);
        }
    }
    dx
}

/// Stochastic gradient descent with classical momentum.
///
/// Velocity buffers are keyed by parameter name so that parameter groups
/// can come and go between phases.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct SgdState {
    pub velocities: std::collections::BTreeMap<String, Vec<f64>>,
}

impl SgdState {
    pub fn new() -> Self {
        SgdState::default()
    }

    /// `v ← momentum·v − lr·g; p ← p + v`
    pub fn step(&mut self, name: &str, param: &mut [f64], grad: &[f64], lr: f64, momentum: f64) {
        debug_assert_eq!(param.len(), grad.len(), "param/grad length mismatch for {name}");
        let v = self
            .velocities
            .entry(name.to_string())
            .or_insert_with(|| vec![0.0; param.len()]);
        debug_assert_eq!(v.len(), param.len());
        for ((p, &g), vel) in param.iter_mut().zip(grad.iter()).zip(v.iter_mut()) {
            *vel = momentum * *vel - lr * g;
            *p += *vel;
        }
    }
}
