//! Frozen backbones and the trainable alignment heads.
//!
//! The backbone pair plays the role of a large pretrained vision-language
//! model: it maps images to patch tokens plus a pooled vector and text to a
//! pooled vector, and its parameters are never updated by any trainer. The
//! deterministic [`ToyBackbone`] stands in by default; embeddings from real
//! models enter through the dump files in [`dump`].
//!
//! On top of the frozen pair sit two trainable heads: [`FfnHead`] reprojects
//! visual embeddings, and [`AdapterHead`] refines text embeddings. Both keep
//! the embedding dimension unchanged.

pub mod dump;
pub mod tokenizer;

use crate::error::{Error, Result};
use crate::nn::{
    derive_seed, normalize_rows, relu, relu_backward, seeded_rng, BatchNorm, BnCache, BnGrads,
    Linear, LinearGrads,
};
use ndarray::{Array1, Array2, Axis};
use tokenizer::{fnv1a_64, Tokenizer, EOS_ID, PAD_ID};

/// Frozen encoder pair: images to patch tokens + pooled vector, token ids to
/// a pooled vector. Implementations must be deterministic and immutable.
pub trait Backbone {
    fn embed_dim(&self) -> usize;

    /// `(H, W, C)` pixels in `[0, 1]` to `(patch tokens: N_p x d, pooled: d)`.
    fn encode_image(&self, pixels: &ndarray::Array3<f32>) -> Result<(Array2<f64>, Array1<f64>)>;

    /// Token ids to a pooled d-vector. Pad and eos ids carry no content.
    fn encode_tokens(&self, token_ids: &[u32]) -> Result<Array1<f64>>;
}

/// Hash-bucket count for the toy text encoder's bag-of-tokens.
const TEXT_BUCKETS: usize = 512;

/// Deterministic dependency-free backbone.
///
/// Visual: non-overlapping square patches, each flattened and mapped by one
/// fixed random affine projection; pooled vector is the token mean. Text:
/// token ids hashed into buckets, bucket columns of a fixed random matrix
/// averaged. All weights derive from the seed at construction; encoding is a
/// pure function, so the frozen-backbone contract holds by construction.
#[derive(Debug, Clone)]
pub struct ToyBackbone {
    pub patch_size: usize,
    pub seed: u64,
    w_patch: Array2<f64>,
    b_patch: Array1<f64>,
    w_text: Array2<f64>,
}

impl ToyBackbone {
    pub fn new(embed_dim: usize, patch_size: usize, seed: u64) -> Self {
        assert!(embed_dim > 0 && patch_size > 0);
        let flat = 3 * patch_size * patch_size;
        let mut rng = seeded_rng(derive_seed(seed, "backbone_visual"));
        let mut w_patch = Array2::zeros((embed_dim, flat));
        let bound = (6.0 / (flat + embed_dim) as f64).sqrt();
        use rand::Rng;
        for v in w_patch.iter_mut() {
            *v = rng.random_range(-bound..bound);
        }
        let mut b_patch = Array1::zeros(embed_dim);
        for v in b_patch.iter_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
        let mut rng = seeded_rng(derive_seed(seed, "backbone_text"));
        let mut w_text = Array2::zeros((embed_dim, TEXT_BUCKETS));
        let bound = (6.0 / (TEXT_BUCKETS + embed_dim) as f64).sqrt();
        for v in w_text.iter_mut() {
            *v = rng.random_range(-bound..bound);
        }
        ToyBackbone {
            patch_size,
            seed,
            w_patch,
            b_patch,
            w_text,
        }
    }

    /// Flat views of the parameter banks `(w_patch, b_patch, w_text)`, for
    /// group hashing and checkpointing.
    pub fn param_views(&self) -> (&[f64], &[f64], &[f64]) {
        (
            self.w_patch.as_slice().expect("contiguous"),
            self.b_patch.as_slice().expect("contiguous"),
            self.w_text.as_slice().expect("contiguous"),
        )
    }

    /// Mutable counterpart of [`ToyBackbone::param_views`]; exists solely so
    /// checkpoints can restore the frozen banks.
    pub fn param_views_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64]) {
        (
            self.w_patch.as_slice_mut().expect("contiguous"),
            self.b_patch.as_slice_mut().expect("contiguous"),
            self.w_text.as_slice_mut().expect("contiguous"),
        )
    }
}

impl Backbone for ToyBackbone {
    fn embed_dim(&self) -> usize {
        self.w_patch.nrows()
    }

    fn encode_image(&self, pixels: &ndarray::Array3<f32>) -> Result<(Array2<f64>, Array1<f64>)> {
        let (h, w, c) = pixels.dim();
        if c != 1 && c != 3 {
            return Err(Error::Data(format!("channel count {c} not in {{1, 3}}")));
        }
        let p = self.patch_size;
        if h % p != 0 || w % p != 0 {
            return Err(Error::Data(format!(
                "image {h}x{w} not divisible into {p}x{p} patches; resize first"
            )));
        }
        let (rows, cols) = (h / p, w / p);
        let d = self.embed_dim();
        let mut tokens = Array2::zeros((rows * cols, d));
        let mut flat = Array1::zeros(3 * p * p);
        for pr in 0..rows {
            for pc in 0..cols {
                let mut k = 0;
                for dy in 0..p {
                    for dx in 0..p {
                        for ch in 0..3 {
                            // grayscale replicates its single channel
                            let src_ch = if c == 3 { ch } else { 0 };
                            flat[k] = f64::from(pixels[[pr * p + dy, pc * p + dx, src_ch]]);
                            k += 1;
                        }
                    }
                }
                let token = self.w_patch.dot(&flat) + &self.b_patch;
                tokens.row_mut(pr * cols + pc).assign(&token);
            }
        }
        let pooled = tokens.mean_axis(Axis(0)).expect("at least one patch");
        Ok((tokens, pooled))
    }

    fn encode_tokens(&self, token_ids: &[u32]) -> Result<Array1<f64>> {
        let content: Vec<u32> = token_ids
            .iter()
            .copied()
            .filter(|&id| id != PAD_ID && id != EOS_ID)
            .collect();
        if content.is_empty() {
            return Err(Error::Data("no content tokens to encode".to_string()));
        }
        let mut counts: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
        for id in &content {
            let bucket = (fnv1a_64(&id.to_le_bytes()) % TEXT_BUCKETS as u64) as usize;
            *counts.entry(bucket).or_insert(0.0) += 1.0;
        }
        let mut e = Array1::zeros(self.embed_dim());
        for (bucket, count) in counts {
            e = e + &self.w_text.column(bucket) * (count / content.len() as f64);
        }
        Ok(e)
    }
}

/// Trainable visual head: a stack of same-width dense layers with batch
/// normalization and ReLU between them (none after the last layer).
#[derive(Debug, Clone, PartialEq)]
pub struct FfnHead {
    pub layers: Vec<Linear>,
    pub norms: Vec<BatchNorm>,
}

/// Values cached by a training-mode forward pass of [`FfnHead`].
pub struct FfnCache {
    inputs: Vec<Array2<f64>>,
    bn_caches: Vec<BnCache>,
    pre_relu: Vec<Array2<f64>>,
}

/// Parameter gradients mirroring the [`FfnHead`] structure.
pub struct FfnGrads {
    pub layers: Vec<LinearGrads>,
    pub norms: Vec<BnGrads>,
}

impl FfnHead {
    /// `depth` dense layers of width `dim`; requires `depth >= 1`.
    pub fn new(dim: usize, depth: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Self {
        assert!(depth >= 1, "head needs at least one layer");
        let layers = (0..depth).map(|_| Linear::new(dim, dim, rng)).collect();
        let norms = (0..depth - 1).map(|_| BatchNorm::new(dim)).collect();
        FfnHead { layers, norms }
    }

    /// Single identity layer, no normalization: an exact pass-through.
    pub fn identity(dim: usize) -> Self {
        FfnHead {
            layers: vec![Linear::identity(dim)],
            norms: vec![],
        }
    }

    pub fn dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn forward_train(&self, x: &Array2<f64>) -> (Array2<f64>, FfnCache) {
        let mut cache = FfnCache {
            inputs: Vec::with_capacity(self.layers.len()),
            bn_caches: Vec::with_capacity(self.norms.len()),
            pre_relu: Vec::with_capacity(self.norms.len()),
        };
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            cache.inputs.push(h.clone());
            h = layer.forward(&h);
            if i < self.norms.len() {
                let (normed, bn_cache) = self.norms[i].forward_train(&h);
                cache.bn_caches.push(bn_cache);
                cache.pre_relu.push(normed.clone());
                h = relu(&normed);
            }
        }
        (h, cache)
    }

    pub fn forward_eval(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h);
            if i < self.norms.len() {
                h = relu(&self.norms[i].forward_eval(&h));
            }
        }
        h
    }

    /// Backward through a training-mode pass; returns `(dx, grads)`.
    pub fn backward(&self, cache: &FfnCache, dy: &Array2<f64>) -> (Array2<f64>, FfnGrads) {
        let depth = self.layers.len();
        let mut layer_grads: Vec<Option<LinearGrads>> = (0..depth).map(|_| None).collect();
        let mut norm_grads: Vec<Option<BnGrads>> = (0..self.norms.len()).map(|_| None).collect();
        let mut g = dy.clone();
        for i in (0..depth).rev() {
            if i < self.norms.len() {
                g = relu_backward(&cache.pre_relu[i], &g);
                let (g_bn, bn_grads) = self.norms[i].backward_train(&cache.bn_caches[i], &g);
                norm_grads[i] = Some(bn_grads);
                g = g_bn;
            }
            let (g_lin, lin_grads) = self.layers[i].backward(&cache.inputs[i], &g);
            layer_grads[i] = Some(lin_grads);
            g = g_lin;
        }
        (
            g,
            FfnGrads {
                layers: layer_grads.into_iter().map(Option::unwrap).collect(),
                norms: norm_grads.into_iter().map(Option::unwrap).collect(),
            },
        )
    }

    /// Folds the batch statistics of a cached pass into the running stats.
    pub fn update_running(&mut self, cache: &FfnCache) {
        for (norm, bn_cache) in self.norms.iter_mut().zip(&cache.bn_caches) {
            norm.update_running(bn_cache);
        }
    }
}

/// One bottleneck block of the text adapter: down-project, ReLU, up-project.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterBlock {
    pub down: Linear,
    pub up: Linear,
}

/// Trainable text head: a chain of bottleneck blocks with an optional
/// residual connection around the whole chain, output width d.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterHead {
    pub blocks: Vec<AdapterBlock>,
    pub residual: bool,
}

/// Values cached by an adapter forward pass.
pub struct AdapterCache {
    inputs: Vec<Array2<f64>>,
    mid_pre: Vec<Array2<f64>>,
    mid: Vec<Array2<f64>>,
}

/// Parameter gradients mirroring the [`AdapterHead`] structure.
pub struct AdapterGrads {
    pub blocks: Vec<(LinearGrads, LinearGrads)>,
}

impl AdapterHead {
    /// `depth` bottleneck blocks of width `dim`, bottleneck `max(1, dim/4)`.
    pub fn new(dim: usize, depth: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Self {
        assert!(depth >= 1, "adapter needs at least one block");
        let mid = (dim / 4).max(1);
        let blocks = (0..depth)
            .map(|_| AdapterBlock {
                down: Linear::new(dim, mid, rng),
                // small up-projection keeps the residual map near identity
                // at initialization
                up: Linear::new_scaled(mid, dim, 0.1, rng),
            })
            .collect();
        AdapterHead {
            blocks,
            residual: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.blocks[0].down.in_dim()
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    /// The adapter has no train/eval split (no normalization layers); one
    /// forward serves both, returning the cache used for backward.
    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, AdapterCache) {
        let mut cache = AdapterCache {
            inputs: Vec::with_capacity(self.blocks.len()),
            mid_pre: Vec::with_capacity(self.blocks.len()),
            mid: Vec::with_capacity(self.blocks.len()),
        };
        let mut h = x.clone();
        for block in &self.blocks {
            cache.inputs.push(h.clone());
            let pre = block.down.forward(&h);
            let mid = relu(&pre);
            h = block.up.forward(&mid);
            cache.mid_pre.push(pre);
            cache.mid.push(mid);
        }
        let y = if self.residual { &h + x } else { h };
        (y, cache)
    }

    pub fn forward_eval(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward(x).0
    }

    /// Backward; returns `(dx, grads)`.
    pub fn backward(&self, cache: &AdapterCache, dy: &Array2<f64>) -> (Array2<f64>, AdapterGrads) {
        let mut g = dy.clone();
        let mut grads: Vec<Option<(LinearGrads, LinearGrads)>> =
            (0..self.blocks.len()).map(|_| None).collect();
        for i in (0..self.blocks.len()).rev() {
            let block = &self.blocks[i];
            let (g_mid, up_grads) = block.up.backward(&cache.mid[i], &g);
            let g_pre = relu_backward(&cache.mid_pre[i], &g_mid);
            let (g_in, down_grads) = block.down.backward(&cache.inputs[i], &g_pre);
            grads[i] = Some((down_grads, up_grads));
            g = g_in;
        }
        let dx = if self.residual { &g + dy } else { g };
        (
            dx,
            AdapterGrads {
                blocks: grads.into_iter().map(Option::unwrap).collect(),
            },
        )
    }
}

/// Visual encoding: per-patch tokens and the pooled image embedding.
#[derive(Debug, Clone)]
pub struct VisualEncoding {
    pub tokens: Array2<f64>,
    pub pooled: Array1<f64>,
}

/// Encodes an image through the frozen backbone and the visual head.
///
/// The head runs in evaluation mode and is applied position-wise: to every
/// patch token and to the pooled vector. Only the pooled output is
/// L2-normalized when `normalize` is set (tokens feed attention unnormalized).
pub fn encode_visual(
    backbone: &dyn Backbone,
    head: &FfnHead,
    pixels: &ndarray::Array3<f32>,
    normalize: bool,
) -> Result<VisualEncoding> {
    if head.dim() != backbone.embed_dim() {
        return Err(Error::Config(format!(
            "visual head width {} != backbone width {}",
            head.dim(),
            backbone.embed_dim()
        )));
    }
    let (tokens, pooled) = backbone.encode_image(pixels)?;
    let tokens = head.forward_eval(&tokens);
    let pooled_batch = pooled.insert_axis(Axis(0));
    let mut pooled = head.forward_eval(&pooled_batch);
    if normalize {
        pooled = normalize_rows(&pooled).0;
    }
    Ok(VisualEncoding {
        tokens,
        pooled: pooled.remove_axis(Axis(0)),
    })
}

/// Encodes a text prompt through the frozen backbone and, when given, the
/// adapter. `adapter: None` returns the raw backbone embedding (the form
/// used while training the visual head).
pub fn encode_text(
    backbone: &dyn Backbone,
    adapter: Option<&AdapterHead>,
    tok: &Tokenizer,
    text: &str,
    normalize: bool,
) -> Result<Array1<f64>> {
    tok.require_nonempty(text)?;
    if let Some(a) = adapter {
        if a.dim() != backbone.embed_dim() {
            return Err(Error::Config(format!(
                "adapter width {} != backbone width {}",
                a.dim(),
                backbone.embed_dim()
            )));
        }
    }
    let ids = tok.encode(text);
    let e = backbone.encode_tokens(&ids)?;
    let mut batch = e.insert_axis(Axis(0));
    if let Some(a) = adapter {
        batch = a.forward_eval(&batch);
    }
    if normalize {
        batch = normalize_rows(&batch).0;
    }
    Ok(batch.remove_axis(Axis(0)))
}
