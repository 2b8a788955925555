//! Stage-2 counter: cross-attention fusion, density decoding, and the
//! consistency-regularized training loop.
//!
//! Visual patch tokens act as attention queries; the text embedding,
//! projected by learnable key/value matrices, is attended to at every query
//! position. The fused tokens decode to one density value per patch, which
//! is bilinearly upsampled to image resolution and clamped nonnegative so
//! that the map's sum is a well-defined count.

pub mod dmap;

use crate::data::raster::{gt_density_from_dots, resize_density};
use crate::domain::{DensityMap, ImageSample, PromptSet};
use crate::encoders::Backbone;
use crate::error::{Error, Result};
use crate::model::{group_hashes, CountingModel, EpochRecord, ParamGroup, TrainPhase, TrainState};
use crate::nn::bilinear;
use crate::nn::{
    derive_seed, relu_backward, seeded_rng, softmax_rows, softmax_rows_backward, Linear,
    LinearGrads,
};
use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Cross-attention fusion of visual queries with projected text keys/values.
///
/// Only the key and value projections are learnable; there are no query or
/// output projections, and the same `w_k`/`w_v` serve every layer. Each
/// layer adds its attention output back onto its input (residual).
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionModule {
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub heads: usize,
    pub layers: usize,
}

/// Cached activations of one [`InteractionModule::fuse_train`] call.
pub struct FuseCache {
    text: Array2<f64>,
    k_mat: Array2<f64>,
    v_mat: Array2<f64>,
    q_in: Vec<Array2<f64>>,
    attn: Vec<Vec<Array2<f64>>>,
}

/// Gradients of the fusion parameters.
pub struct FusionGrads {
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
}

impl InteractionModule {
    pub fn new(dim: usize, heads: usize, layers: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Self {
        assert!(heads >= 1 && layers >= 1 && dim % heads == 0);
        use rand::Rng;
        let bound = (3.0 / dim as f64).sqrt();
        let init = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut w = Array2::zeros((dim, dim));
            for v in w.iter_mut() {
                *v = rng.random_range(-bound..bound);
            }
            w
        };
        InteractionModule {
            w_k: init(rng),
            w_v: init(rng),
            heads,
            layers,
        }
    }

    pub fn dim(&self) -> usize {
        self.w_k.nrows()
    }

    /// Fuses `visual_tokens` (N×d queries) with `text` (K×d), returning the
    /// fused N×d tokens and the cache needed for backpropagation.
    pub fn fuse_train(
        &self,
        visual_tokens: &Array2<f64>,
        text: &Array2<f64>,
    ) -> Result<(Array2<f64>, FuseCache)> {
        let d = self.dim();
        if visual_tokens.ncols() != d || text.ncols() != d {
            return Err(Error::Config(format!(
                "fusion width {d} but queries are {} wide and text {}",
                visual_tokens.ncols(),
                text.ncols()
            )));
        }
        if text.nrows() == 0 {
            return Err(Error::Data("no text embeddings to attend to".to_string()));
        }
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        // keys/values are shared across layers: one projection of the text
        let k_mat = text.dot(&self.w_k.t());
        let v_mat = text.dot(&self.w_v.t());

        let mut q = visual_tokens.clone();
        let mut q_in = Vec::with_capacity(self.layers);
        let mut attn = Vec::with_capacity(self.layers);
        for _ in 0..self.layers {
            q_in.push(q.clone());
            let mut out = Array2::zeros(q.raw_dim());
            let mut layer_attn = Vec::with_capacity(self.heads);
            for h in 0..self.heads {
                let cols = s![.., h * dh..(h + 1) * dh];
                let q_h = q.slice(cols);
                let k_h = k_mat.slice(cols);
                let v_h = v_mat.slice(cols);
                let scores = q_h.dot(&k_h.t()) * scale;
                let a = softmax_rows(&scores);
                out.slice_mut(cols).assign(&a.dot(&v_h));
                layer_attn.push(a);
            }
            attn.push(layer_attn);
            q = &q + &out;
        }
        Ok((
            q,
            FuseCache {
                text: text.clone(),
                k_mat,
                v_mat,
                q_in,
                attn,
            },
        ))
    }

    /// Inference-path fusion; identical math, no cache.
    pub fn fuse(&self, visual_tokens: &Array2<f64>, text: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.fuse_train(visual_tokens, text)?.0)
    }

    /// Backward through a cached fusion pass.
    ///
    /// Returns gradients for the visual queries, the projections, and the
    /// text embedding (the latter is unused while text encoders are frozen,
    /// but keeps the pass checkable end to end).
    pub fn backward(
        &self,
        cache: &FuseCache,
        dy: &Array2<f64>,
    ) -> (Array2<f64>, FusionGrads, Array2<f64>) {
        let d = self.dim();
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dk_mat = Array2::zeros(cache.k_mat.raw_dim());
        let mut dv_mat = Array2::zeros(cache.v_mat.raw_dim());
        let mut g = dy.clone();
        for l in (0..self.layers).rev() {
            let q_in = &cache.q_in[l];
            // residual: q_out = q_in + attention(q_in), so the incoming
            // gradient reaches q_in both directly and through attention
            let d_out = g.clone();
            let mut dq = g;
            for h in 0..self.heads {
                let cols = s![.., h * dh..(h + 1) * dh];
                let a = &cache.attn[l][h];
                let v_h = cache.v_mat.slice(cols);
                let k_h = cache.k_mat.slice(cols);
                let q_h = q_in.slice(cols);
                let d_out_h = d_out.slice(cols);

                let da = d_out_h.dot(&v_h.t());
                let dv_slice = a.t().dot(&d_out_h);
                dv_mat.slice_mut(cols).zip_mut_with(&dv_slice, |x, &y| *x += y);
                let ds = softmax_rows_backward(a, &da);
                let dq_h = ds.dot(&k_h) * scale;
                dq.slice_mut(cols).zip_mut_with(&dq_h, |x, &y| *x += y);
                let dk_slice = ds.t().dot(&q_h) * scale;
                dk_mat.slice_mut(cols).zip_mut_with(&dk_slice, |x, &y| *x += y);
            }
            g = dq;
        }
        let dw_k = dk_mat.t().dot(&cache.text);
        let dw_v = dv_mat.t().dot(&cache.text);
        let dtext = dk_mat.dot(&self.w_k) + dv_mat.dot(&self.w_v);
        (g, FusionGrads { w_k: dw_k, w_v: dw_v }, dtext)
    }
}

/// Per-patch density head: a small MLP predicts one value per fused token;
/// the patch grid is bilinearly upsampled to image resolution and clamped
/// nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityDecoder {
    pub l1: Linear,
    pub l2: Linear,
}

/// Cached activations of one [`DensityDecoder::decode_train`] call.
pub struct DecodeCache {
    tokens: Array2<f64>,
    h_pre: Array2<f64>,
    act: Array2<f64>,
    grid: (usize, usize),
    upsampled: Array2<f64>,
}

/// Gradients of the decoder parameters.
pub struct DecoderGrads {
    pub l1: LinearGrads,
    pub l2: LinearGrads,
}

impl DensityDecoder {
    pub fn new(dim: usize, hidden: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Self {
        let l1 = Linear::new(dim, hidden, rng);
        let mut l2 = Linear::new(hidden, 1, rng);
        // Density targets are sparse, tiny, and clamped by max(0, .), so the
        // all-zero map is an absorbing state: once every pre-activation is
        // negative no gradient flows and training is stuck there. A randomly
        // scaled head overshoots straight into it. Start the head at a flat
        // small positive density instead (zero weights, positive bias) so the
        // first steps stay inside the region where gradients exist.
        l2.w.fill(0.0);
        l2.b.fill(0.01);
        DensityDecoder { l1, l2 }
    }

    pub fn dim(&self) -> usize {
        self.l1.in_dim()
    }

    /// Decodes `tokens` laid out as a `grid_rows x grid_cols` patch grid
    /// into an `out_h x out_w` density map.
    pub fn decode_train(
        &self,
        tokens: &Array2<f64>,
        grid_rows: usize,
        grid_cols: usize,
        out_h: usize,
        out_w: usize,
    ) -> Result<(DensityMap, DecodeCache)> {
        if tokens.nrows() != grid_rows * grid_cols {
            return Err(Error::Config(format!(
                "{} tokens cannot fill a {grid_rows}x{grid_cols} patch grid",
                tokens.nrows()
            )));
        }
        let h_pre = self.l1.forward(tokens);
        let act = crate::nn::relu(&h_pre);
        let scalar = self.l2.forward(&act);
        let coarse = Array2::from_shape_vec(
            (grid_rows, grid_cols),
            scalar.column(0).to_vec(),
        )
        .expect("token count matches grid");
        let upsampled = bilinear::resize(&coarse, out_h, out_w);
        let map = DensityMap::new(upsampled.mapv(|v| v.max(0.0)))?;
        Ok((
            map,
            DecodeCache {
                tokens: tokens.clone(),
                h_pre,
                act,
                grid: (grid_rows, grid_cols),
                upsampled,
            },
        ))
    }

    pub fn decode(
        &self,
        tokens: &Array2<f64>,
        grid_rows: usize,
        grid_cols: usize,
        out_h: usize,
        out_w: usize,
    ) -> Result<DensityMap> {
        Ok(self
            .decode_train(tokens, grid_rows, grid_cols, out_h, out_w)?
            .0)
    }

    /// Backward from a gradient on the output map to token and parameter
    /// gradients.
    pub fn backward(&self, cache: &DecodeCache, dmap: &Array2<f64>) -> (Array2<f64>, DecoderGrads) {
        // final nonnegativity clamp is max(0, .) on the upsampled grid
        let dup = relu_backward(&cache.upsampled, dmap);
        let dcoarse = bilinear::resize_backward(&dup, cache.grid.0, cache.grid.1);
        let n = cache.grid.0 * cache.grid.1;
        let ds = Array2::from_shape_vec((n, 1), dcoarse.iter().copied().collect())
            .expect("grid flattens to tokens");
        let (dact, l2_grads) = self.l2.backward(&cache.act, &ds);
        let dh = relu_backward(&cache.h_pre, &dact);
        let (dtokens, l1_grads) = self.l1.backward(&cache.tokens, &dh);
        (
            dtokens,
            DecoderGrads {
                l1: l1_grads,
                l2: l2_grads,
            },
        )
    }
}

/// Mean squared error between two equal-shape density maps:
/// `(1/HW) Σ (a - b)²`.
pub fn density_loss(a: &DensityMap, b: &DensityMap) -> Result<f64> {
    if a.grid().dim() != b.grid().dim() {
        return Err(Error::Data(format!(
            "density map shapes differ: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    let n = (a.height() * a.width()) as f64;
    let sum: f64 = a
        .grid()
        .iter()
        .zip(b.grid().iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    Ok(sum / n)
}

/// Per-term weights of the stage-2 objective. The three `gt_*` terms anchor
/// each prompt variant's map to ground truth; the three `pair_*` terms tie
/// the variants' maps to each other (the consistency regularizer).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermWeights {
    pub gt_category: f64,
    pub gt_description: f64,
    pub gt_generalized: f64,
    pub pair_category_description: f64,
    pub pair_category_generalized: f64,
    pub pair_description_generalized: f64,
}

impl Default for TermWeights {
    fn default() -> Self {
        TermWeights {
            gt_category: 1.0,
            gt_description: 1.0,
            gt_generalized: 1.0,
            pair_category_description: 1.0,
            pair_category_generalized: 1.0,
            pair_description_generalized: 1.0,
        }
    }
}

impl TermWeights {
    /// Ablation: ground-truth terms only, all pairwise terms off.
    pub fn without_consistency() -> Self {
        TermWeights {
            pair_category_description: 0.0,
            pair_category_generalized: 0.0,
            pair_description_generalized: 0.0,
            ..TermWeights::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.gt_category,
            self.gt_description,
            self.gt_generalized,
            self.pair_category_description,
            self.pair_category_generalized,
            self.pair_description_generalized,
        ];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!("loss weights must be >= 0, got {all:?}")));
        }
        Ok(())
    }
}

/// The six weighted terms of one [`total_loss`] evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub gt_category: f64,
    pub gt_description: f64,
    pub gt_generalized: f64,
    pub pair_category_description: f64,
    pub pair_category_generalized: f64,
    pub pair_description_generalized: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.gt_category
            + self.gt_description
            + self.gt_generalized
            + self.pair_category_description
            + self.pair_category_generalized
            + self.pair_description_generalized
    }
}

/// Full stage-2 objective: each variant's map against ground truth, plus
/// every unordered pair of variant maps against each other.
pub fn total_loss(
    d_category: &DensityMap,
    d_description: &DensityMap,
    d_generalized: &DensityMap,
    d_gt: &DensityMap,
    weights: &TermWeights,
) -> Result<(f64, LossBreakdown)> {
    weights.validate()?;
    let breakdown = LossBreakdown {
        gt_category: weights.gt_category * density_loss(d_category, d_gt)?,
        gt_description: weights.gt_description * density_loss(d_description, d_gt)?,
        gt_generalized: weights.gt_generalized * density_loss(d_generalized, d_gt)?,
        pair_category_description: weights.pair_category_description
            * density_loss(d_category, d_description)?,
        pair_category_generalized: weights.pair_category_generalized
            * density_loss(d_category, d_generalized)?,
        pair_description_generalized: weights.pair_description_generalized
            * density_loss(d_description, d_generalized)?,
    };
    Ok((breakdown.total(), breakdown))
}

/// [`total_loss`] plus its gradients w.r.t. the three predicted maps
/// (ground truth takes no gradient).
pub fn total_loss_grads(
    d_category: &DensityMap,
    d_description: &DensityMap,
    d_generalized: &DensityMap,
    d_gt: &DensityMap,
    weights: &TermWeights,
) -> Result<(f64, LossBreakdown, [Array2<f64>; 3])> {
    let (total, breakdown) = total_loss(d_category, d_description, d_generalized, d_gt, weights)?;
    let n = (d_gt.height() * d_gt.width()) as f64;
    let pair = |a: &DensityMap, b: &DensityMap, w: f64| (a.grid() - b.grid()) * (2.0 * w / n);

    let d_t = pair(d_category, d_gt, weights.gt_category)
        + pair(d_category, d_description, weights.pair_category_description)
        + pair(d_category, d_generalized, weights.pair_category_generalized);
    let d_d = pair(d_description, d_gt, weights.gt_description)
        - pair(d_category, d_description, weights.pair_category_description)
        + pair(d_description, d_generalized, weights.pair_description_generalized);
    let d_dp = pair(d_generalized, d_gt, weights.gt_generalized)
        - pair(d_category, d_generalized, weights.pair_category_generalized)
        - pair(d_description, d_generalized, weights.pair_description_generalized);
    Ok((total, breakdown, [d_t, d_d, d_dp]))
}

/// Runs the full inference path: resize, encode, fuse, decode.
///
/// Pure given a model; two calls with the same inputs produce bit-identical
/// maps. The output grid matches the model's input resolution.
pub fn forward(pixels: &ndarray::Array3<f32>, prompt: &str, model: &CountingModel) -> Result<DensityMap> {
    model.tokenizer.require_nonempty(prompt)?;
    let res = model.config.input_resolution;
    let resized;
    let pixels = if pixels.dim().0 == res && pixels.dim().1 == res {
        pixels
    } else {
        resized = bilinear::resize_channels_hwc(pixels, res, res);
        &resized
    };
    let (raw_tokens, _) = model.backbone.encode_image(pixels)?;
    let tokens = model.ffn.forward_eval(&raw_tokens);
    let text = encode_prompt(model, prompt)?;
    let fused = model.fusion.fuse(&tokens, &text)?;
    let grid = res / model.config.patch_size;
    model.decoder.decode(&fused, grid, grid, res, res)
}

/// Adapter-refined, L2-normalized prompt embedding as a 1×d batch.
pub fn encode_prompt(model: &CountingModel, prompt: &str) -> Result<Array2<f64>> {
    let e = crate::encoders::encode_text(
        &model.backbone,
        Some(&model.adapter),
        &model.tokenizer,
        prompt,
        true,
    )?;
    Ok(e.insert_axis(Axis(0)))
}

/// Stage-2 training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterConfig {
    pub weights: TermWeights,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for CounterConfig {
    fn default() -> Self {
        CounterConfig {
            weights: TermWeights::default(),
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-3,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl CounterConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".to_string()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Outcome counts of a [`train_counter`] run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterRunReport {
    pub epochs_run: usize,
    pub samples_used: usize,
    /// Samples skipped for missing prompt variants.
    pub skipped: usize,
}

struct PreparedSample {
    tokens: Array2<f64>,
    texts: [Array2<f64>; 3],
    gt: DensityMap,
}

/// Accumulates a gradient into the named flat buffer in logical (row-major)
/// order, independent of the source array's memory layout.
fn add_flat(
    grads: &mut BTreeMap<String, Vec<f64>>,
    name: &str,
    g: impl Iterator<Item = f64>,
) {
    use std::collections::btree_map::Entry;
    match grads.entry(name.to_string()) {
        Entry::Occupied(mut e) => {
            for (a, b) in e.get_mut().iter_mut().zip(g) {
                *a += b;
            }
        }
        Entry::Vacant(v) => {
            v.insert(g.collect());
        }
    }
}

/// Trains the fusion and decoder groups on samples carrying all three
/// prompt variants; encoders stay frozen throughout (hash-checked).
///
/// Per step, each sample is forwarded once per prompt variant and the six
/// loss terms aggregate; gradients are averaged over the batch.
pub fn train_counter(
    state: &mut TrainState,
    data: &[(ImageSample, PromptSet)],
    config: &CounterConfig,
) -> Result<CounterRunReport> {
    config.validate()?;
    if config.epochs == 0 {
        return Ok(CounterRunReport { epochs_run: 0, samples_used: 0, skipped: 0 });
    }
    state.set_active_groups(&[ParamGroup::Fusion, ParamGroup::Decoder]);
    let frozen_before: BTreeMap<_, _> = group_hashes(&state.model)
        .into_iter()
        .filter(|(g, _)| state.frozen.contains(g))
        .collect();

    let res = state.model.config.input_resolution;
    let grid = res / state.model.config.patch_size;
    let sigma = state.model.config.sigma;

    // encoders are frozen for the whole stage, so every sample's tokens,
    // text embeddings and ground truth are computed exactly once
    let mut prepared = Vec::new();
    let mut skipped = 0usize;
    for (sample, prompts) in data {
        if !prompts.is_complete() {
            skipped += 1;
            continue;
        }
        let resized;
        let pixels = if sample.height() == res && sample.width() == res {
            &sample.pixels
        } else {
            resized = bilinear::resize_channels_hwc(&sample.pixels, res, res);
            &resized
        };
        let (raw_tokens, _) = state.model.backbone.encode_image(pixels)?;
        let tokens = state.model.ffn.forward_eval(&raw_tokens);
        let texts = [
            encode_prompt(&state.model, &prompts.t_p)?,
            encode_prompt(&state.model, &prompts.t_d)?,
            encode_prompt(&state.model, &prompts.t_d_prime)?,
        ];
        let native = gt_density_from_dots(&sample.dots, sample.height(), sample.width(), sigma)?;
        let gt = resize_density(&native, res, res);
        prepared.push(PreparedSample { tokens, texts, gt });
    }
    if prepared.is_empty() {
        return Err(Error::Train(format!(
            "no trainable samples: {skipped} of {} lack a prompt variant",
            data.len()
        )));
    }

    let mut rng = seeded_rng(derive_seed(config.seed, "counter-trainer"));
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..prepared.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grads: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for &idx in batch {
                let p = &prepared[idx];
                let mut maps = Vec::with_capacity(3);
                let mut fuse_caches = Vec::with_capacity(3);
                let mut dec_caches = Vec::with_capacity(3);
                for text in &p.texts {
                    let (fused, f_cache) = state.model.fusion.fuse_train(&p.tokens, text)?;
                    let (map, d_cache) =
                        state.model.decoder.decode_train(&fused, grid, grid, res, res)?;
                    maps.push(map);
                    fuse_caches.push(f_cache);
                    dec_caches.push(d_cache);
                }
                let (loss, _, dmaps) =
                    total_loss_grads(&maps[0], &maps[1], &maps[2], &p.gt, &config.weights)?;
                epoch_loss += loss;
                for v in 0..3 {
                    let (dtokens, dec_grads) =
                        state.model.decoder.backward(&dec_caches[v], &dmaps[v]);
                    let (_, fus_grads, _) = state.model.fusion.backward(&fuse_caches[v], &dtokens);
                    add_flat(&mut grads, "decoder.l1.w", dec_grads.l1.w.iter().copied());
                    add_flat(&mut grads, "decoder.l1.b", dec_grads.l1.b.iter().copied());
                    add_flat(&mut grads, "decoder.l2.w", dec_grads.l2.w.iter().copied());
                    add_flat(&mut grads, "decoder.l2.b", dec_grads.l2.b.iter().copied());
                    add_flat(&mut grads, "fusion.w_k", fus_grads.w_k.iter().copied());
                    add_flat(&mut grads, "fusion.w_v", fus_grads.w_v.iter().copied());
                }
            }
            let inv = 1.0 / batch.len() as f64;
            for g in grads.values_mut() {
                for v in g.iter_mut() {
                    *v *= inv;
                }
            }
            state.apply_gradients(&grads, config.learning_rate, config.momentum)?;
        }
        state.history.push(EpochRecord {
            phase: TrainPhase::Counter,
            epoch,
            mean_loss: epoch_loss / prepared.len() as f64,
        });
    }
    state.phase = TrainPhase::Counter;
    state.epoch = config.epochs;

    let frozen_after: BTreeMap<_, _> = group_hashes(&state.model)
        .into_iter()
        .filter(|(g, _)| state.frozen.contains(g))
        .collect();
    if frozen_before != frozen_after {
        let moved: Vec<_> = frozen_before
            .iter()
            .filter(|(g, h)| frozen_after.get(g) != Some(h))
            .map(|(g, _)| g.name())
            .collect();
        return Err(Error::Train(format!(
            "frozen parameter groups changed during counter training: {moved:?}"
        )));
    }
    Ok(CounterRunReport {
        epochs_run: config.epochs,
        samples_used: prepared.len(),
        skipped,
    })
}
