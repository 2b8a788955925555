//! Stage-1 visual-text alignment.
//!
//! Two sequential phases share one margin contrastive objective. Phase A
//! trains the visual head (FFN) to pull pooled image embeddings toward the
//! raw text embeddings of their category and push them from other
//! categories' text. Phase B freezes the FFN and trains the text adapter
//! against the now-fixed visual embeddings. Backbones never move.

pub mod benchmark;

use crate::domain::EmbeddingBatch;
use crate::encoders::Backbone;
use crate::error::{Error, Result};
use crate::model::{group_hashes, EpochRecord, ParamGroup, TrainPhase, TrainState};
use crate::nn::{derive_seed, normalize_rows, normalize_rows_backward, seeded_rng};
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Hyperparameters shared by both alignment phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    /// Margin m: negatives closer than this are pushed apart.
    pub margin: f64,
    /// Negative categories sampled per anchor; `None` pairs every other
    /// in-batch category.
    pub negatives_per_anchor: Option<usize>,
    pub batch_size: usize,
    /// Epochs per phase.
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            margin: 1.0,
            negatives_per_anchor: None,
            batch_size: 64,
            epochs: 200,
            learning_rate: 1e-3,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.margin.is_finite() || self.margin <= 0.0 {
            return Err(Error::Config(format!("margin must be > 0, got {}", self.margin)));
        }
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

/// A batch of (anchor, partner) pairs for the contrastive loss: one row per
/// pair, visual anchor against text partner, labeled positive (same
/// category) or negative.
#[derive(Debug, Clone)]
pub struct PairBatch {
    pub anchors: EmbeddingBatch,
    pub partners: EmbeddingBatch,
    /// 1 = same category, 0 = different.
    pub labels: Vec<u8>,
    /// Which input sample each pair's anchor came from, for routing
    /// gradients back through shared anchors.
    pub anchor_index: Vec<usize>,
    /// The partner's category, for routing gradients on the text side.
    pub partner_category: Vec<String>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if self.anchors.len() != n
            || self.partners.len() != n
            || self.anchor_index.len() != n
            || self.partner_category.len() != n
        {
            return Err(Error::Data(format!(
                "pair batch row counts disagree: {} anchors, {} partners, {n} labels",
                self.anchors.len(),
                self.partners.len()
            )));
        }
        if self.labels.iter().any(|&y| y > 1) {
            return Err(Error::Data("pair labels must be 0 or 1".to_string()));
        }
        self.anchors.validate()?;
        self.partners.validate()
    }

    /// Concatenates two pair batches (same embedding width).
    pub fn concat(mut self, other: PairBatch) -> PairBatch {
        let a = ndarray::concatenate(
            Axis(0),
            &[self.anchors.vectors.view(), other.anchors.vectors.view()],
        )
        .expect("same width");
        let p = ndarray::concatenate(
            Axis(0),
            &[self.partners.vectors.view(), other.partners.vectors.view()],
        )
        .expect("same width");
        self.anchors.vectors = a;
        self.partners.vectors = p;
        self.labels.extend(other.labels);
        self.anchor_index.extend(other.anchor_index);
        self.partner_category.extend(other.partner_category);
        self
    }
}

/// Gradients of the contrastive loss w.r.t. each pair row.
#[derive(Debug)]
pub struct ContrastiveGrads {
    pub d_anchors: Array2<f64>,
    pub d_partners: Array2<f64>,
}

/// Margin contrastive loss over a pair batch:
/// `(1/2N) Σ [ yΔ² + (1-y) max(0, m-Δ)² ]` with Δ the Euclidean distance.
///
/// Valid for any finite embeddings; callers feed unit-normalized rows so
/// that the margin has a fixed geometric meaning.
pub fn contrastive_loss(batch: &PairBatch, margin: f64) -> Result<(f64, ContrastiveGrads)> {
    if batch.is_empty() {
        return Err(Error::Data("empty batch: no pairs to score".to_string()));
    }
    batch.validate()?;
    if !margin.is_finite() || margin <= 0.0 {
        return Err(Error::Config(format!("margin must be > 0, got {margin}")));
    }
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut d_anchors = Array2::zeros(batch.anchors.vectors.raw_dim());
    let mut d_partners = Array2::zeros(batch.partners.vectors.raw_dim());
    for i in 0..batch.len() {
        let a = batch.anchors.vectors.row(i);
        let p = batch.partners.vectors.row(i);
        let diff = &a - &p;
        let dist = diff.dot(&diff).sqrt();
        if batch.labels[i] == 1 {
            loss += dist * dist / (2.0 * n);
            // d(Δ²)/da = 2(a-p); the 1/(2N) scale leaves (a-p)/N
            d_anchors.row_mut(i).assign(&(&diff / n));
            d_partners.row_mut(i).assign(&(&diff * (-1.0 / n)));
        } else {
            let slack = margin - dist;
            if slack > 0.0 {
                loss += slack * slack / (2.0 * n);
                if dist > 1e-12 {
                    // d/da (m-Δ)² = -2(m-Δ)(a-p)/Δ
                    let g = &diff * (-slack / (dist * n));
                    d_anchors.row_mut(i).assign(&g);
                    d_partners.row_mut(i).assign(&(&g * -1.0));
                }
                // coincident negatives have no defined direction; their
                // subgradient is left at zero
            }
        }
    }
    Ok((loss, ContrastiveGrads { d_anchors, d_partners }))
}

/// Pairs every anchor positively with its category's text embedding and
/// negatively with other in-batch categories (all of them, or a seeded
/// subsample of `negatives_per_anchor`).
pub fn build_pairs(
    samples: &[(Array1<f64>, String)],
    texts: &BTreeMap<String, Array1<f64>>,
    config: &ContrastiveConfig,
) -> Result<PairBatch> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::Data("empty batch: no samples to pair".to_string()));
    }
    let dim = samples[0].0.len();
    let categories: Vec<&String> = texts.keys().collect();
    if categories.len() < 2 {
        return Err(Error::Data(
            "single-category batch: no negatives available".to_string(),
        ));
    }
    let mut rng = seeded_rng(derive_seed(config.seed, "pair-negatives"));

    let mut anchor_rows = Vec::new();
    let mut partner_rows = Vec::new();
    let mut labels = Vec::new();
    let mut anchor_index = Vec::new();
    let mut partner_category = Vec::new();
    let mut push = |i: usize, anchor: &Array1<f64>, cat: &str, y: u8| {
        anchor_rows.push(anchor.clone());
        partner_rows.push(texts[cat].clone());
        labels.push(y);
        anchor_index.push(i);
        partner_category.push(cat.to_string());
    };
    for (i, (anchor, category)) in samples.iter().enumerate() {
        if texts.contains_key(category) {
            push(i, anchor, category, 1);
        }
        let mut others: Vec<&String> = categories
            .iter()
            .copied()
            .filter(|c| *c != category)
            .collect();
        if let Some(k) = config.negatives_per_anchor {
            // deterministic subsample: shuffle then truncate
            others.shuffle(&mut rng);
            others.truncate(k);
            others.sort(); // canonical order regardless of shuffle history
        }
        for cat in others {
            push(i, anchor, cat, 0);
        }
    }

    let stack = |rows: Vec<Array1<f64>>| -> Array2<f64> {
        let mut m = Array2::zeros((rows.len(), dim));
        for (i, r) in rows.into_iter().enumerate() {
            m.row_mut(i).assign(&r);
        }
        m
    };
    Ok(PairBatch {
        anchors: EmbeddingBatch::new(stack(anchor_rows), true),
        partners: EmbeddingBatch::new(stack(partner_rows), true),
        labels,
        anchor_index,
        partner_category,
    })
}

/// Inputs to the alignment trainers: raw (pre-head) backbone embeddings.
#[derive(Debug, Clone)]
pub struct AlignmentData {
    /// Pooled visual embeddings straight off the frozen backbone, with
    /// their category labels.
    pub samples: Vec<(Array1<f64>, String)>,
    /// Raw text embeddings per category, one per available prompt variant.
    pub texts: BTreeMap<String, Vec<Array1<f64>>>,
}

impl AlignmentData {
    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::Data("alignment data has no samples".to_string()));
        }
        if self.texts.len() < 2 {
            return Err(Error::Data(
                "single-category batch: no negatives available".to_string(),
            ));
        }
        for (v, cat) in &self.samples {
            if !self.texts.contains_key(cat) {
                return Err(Error::Data(format!("no text embedding for category '{cat}'")));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Data(format!("non-finite visual embedding in '{cat}'")));
            }
        }
        Ok(())
    }

    fn variant_count(&self) -> usize {
        self.texts.values().map(Vec::len).max().unwrap_or(0)
    }
}

/// Encodes a dataset into [`AlignmentData`] through the frozen backbone.
///
/// Visual side: pooled backbone embedding per sample (pre-FFN). Text side:
/// every prompt variant present for a category, encoded without the adapter.
pub fn prepare_data(
    model: &crate::model::CountingModel,
    data: &[(crate::domain::ImageSample, crate::domain::PromptSet)],
) -> Result<AlignmentData> {
    use crate::domain::PromptVariant;
    let res = model.config.input_resolution;
    let mut samples = Vec::new();
    let mut texts: BTreeMap<String, Vec<Array1<f64>>> = BTreeMap::new();
    for (sample, prompts) in data {
        let resized;
        let pixels = if sample.height() == res && sample.width() == res {
            &sample.pixels
        } else {
            resized = crate::nn::bilinear::resize_channels_hwc(&sample.pixels, res, res);
            &resized
        };
        let (_, pooled) = model.backbone.encode_image(pixels)?;
        samples.push((pooled, sample.category.clone()));
        if !texts.contains_key(&sample.category) {
            let mut variants = Vec::new();
            for variant in PromptVariant::ALL {
                if let Some(text) = prompts.get(variant) {
                    let ids = model.tokenizer.encode(text);
                    variants.push(model.backbone.encode_tokens(&ids)?);
                }
            }
            texts.insert(sample.category.clone(), variants);
        }
    }
    Ok(AlignmentData { samples, texts })
}

/// Builds the per-variant text map for one minibatch of sample indices.
fn batch_text_map(
    data: &AlignmentData,
    batch: &[usize],
    variant: usize,
    text_rows: &BTreeMap<(String, usize), Array1<f64>>,
) -> BTreeMap<String, Array1<f64>> {
    let mut map = BTreeMap::new();
    for &i in batch {
        let cat = &data.samples[i].1;
        if let Some(row) = text_rows.get(&(cat.clone(), variant)) {
            map.entry(cat.clone()).or_insert_with(|| row.clone());
        }
    }
    map
}

/// Phase A: trains the FFN so its visual embeddings align with raw text.
///
/// Only the `ffn` group moves; this is hash-checked. Running zero epochs
/// returns without touching the state at all.
pub fn train_ffn_phase(
    state: &mut TrainState,
    data: &AlignmentData,
    config: &ContrastiveConfig,
) -> Result<()> {
    config.validate()?;
    data.validate()?;
    if config.epochs == 0 {
        return Ok(());
    }
    state.set_active_groups(&[ParamGroup::Ffn]);
    let frozen_before: BTreeMap<_, _> = group_hashes(&state.model)
        .into_iter()
        .filter(|(g, _)| state.frozen.contains(g))
        .collect();

    // text side is static in this phase: raw embeddings, normalized once
    let mut text_rows: BTreeMap<(String, usize), Array1<f64>> = BTreeMap::new();
    for (cat, variants) in &data.texts {
        for (v, e) in variants.iter().enumerate() {
            let m = e.clone().insert_axis(Axis(0));
            let (normed, _) = normalize_rows(&m);
            text_rows.insert((cat.clone(), v), normed.remove_axis(Axis(0)));
        }
    }

    let mut rng = seeded_rng(derive_seed(config.seed, "ffn-phase"));
    let n_variants = data.variant_count();
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..data.samples.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(config.batch_size) {
            // batch statistics need more than one row
            if batch.len() < 2 {
                continue;
            }
            let d = state.model.config.embed_dim;
            let mut raw = Array2::zeros((batch.len(), d));
            for (row, &i) in batch.iter().enumerate() {
                raw.row_mut(row).assign(&data.samples[i].0);
            }
            let (out, cache) = state.model.ffn.forward_train(&raw);
            let (normed, norms) = normalize_rows(&out);

            // anchors for pairing carry batch-local indices 0..batch.len()
            let local: Vec<(Array1<f64>, String)> = batch
                .iter()
                .enumerate()
                .map(|(row, &i)| (normed.row(row).to_owned(), data.samples[i].1.clone()))
                .collect();
            let mut pair_batch: Option<PairBatch> = None;
            for v in 0..n_variants {
                let texts = batch_text_map(data, batch, v, &text_rows);
                if texts.len() < 2 {
                    continue;
                }
                let pairs = build_pairs(&local, &texts, config)?;
                pair_batch = Some(match pair_batch {
                    None => pairs,
                    Some(acc) => acc.concat(pairs),
                });
            }
            let Some(pairs) = pair_batch else {
                continue; // single-category minibatch: no negatives to form
            };
            let (loss, grads) = contrastive_loss(&pairs, config.margin)?;
            epoch_loss += loss;
            batches += 1;

            // pair-row gradients -> per-sample gradients on normalized output
            let mut d_normed = Array2::zeros(normed.raw_dim());
            for (row, &sample_row) in pairs.anchor_index.iter().enumerate() {
                let g = grads.d_anchors.row(row);
                d_normed
                    .row_mut(sample_row)
                    .zip_mut_with(&g, |a, &b| *a += b);
            }
            let d_out = normalize_rows_backward(&normed, &norms, &d_normed);
            let (_, ffn_grads) = state.model.ffn.backward(&cache, &d_out);

            let mut grad_map: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for (i, lg) in ffn_grads.layers.iter().enumerate() {
                grad_map.insert(format!("ffn.layers.{i}.w"), lg.w.iter().copied().collect());
                grad_map.insert(format!("ffn.layers.{i}.b"), lg.b.to_vec());
            }
            for (i, ng) in ffn_grads.norms.iter().enumerate() {
                grad_map.insert(format!("ffn.norms.{i}.gamma"), ng.gamma.to_vec());
                grad_map.insert(format!("ffn.norms.{i}.beta"), ng.beta.to_vec());
            }
            state.apply_gradients(&grad_map, config.learning_rate, config.momentum)?;
            state.model.ffn.update_running(&cache);
        }
        if batches == 0 {
            return Err(Error::Train(
                "no usable minibatches: every batch was single-category".to_string(),
            ));
        }
        state.history.push(EpochRecord {
            phase: TrainPhase::Ffn,
            epoch,
            mean_loss: epoch_loss / batches as f64,
        });
    }
    state.phase = TrainPhase::Ffn;
    state.epoch = config.epochs;

    let frozen_after: BTreeMap<_, _> = group_hashes(&state.model)
        .into_iter()
        .filter(|(g, _)| state.frozen.contains(g))
        .collect();
    if frozen_before != frozen_after {
        return Err(Error::Train(
            "frozen parameter groups changed during FFN phase".to_string(),
        ));
    }
    Ok(())
}

/// Phase B: trains the adapter against the frozen FFN's visual embeddings.
pub fn train_adapter_phase(
    state: &mut TrainState,
    data: &AlignmentData,
    config: &ContrastiveConfig,
) -> Result<()> {
    config.validate()?;
    data.validate()?;
    if config.epochs == 0 {
        return Ok(());
    }
    state.set_active_groups(&[ParamGroup::Adapter]);
    let frozen_before: BTreeMap<_, _> = group_hashes(&state.model)
        .into_iter()
        .filter(|(g, _)| state.frozen.contains(g))
        .collect();

    // visual side is fixed for the whole phase: FFN in eval mode, normalized
    let d = state.model.config.embed_dim;
    let mut raw = Array2::zeros((data.samples.len(), d));
    for (i, (v, _)) in data.samples.iter().enumerate() {
        raw.row_mut(i).assign(v);
    }
    let visual = {
        let out = state.model.ffn.forward_eval(&raw);
        normalize_rows(&out).0
    };

    // unique (category, variant) rows the adapter transforms each step
    let keys: Vec<(String, usize)> = data
        .texts
        .iter()
        .flat_map(|(c, vs)| (0..vs.len()).map(move |v| (c.clone(), v)))
        .collect();
    let key_index: BTreeMap<(String, usize), usize> =
        keys.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
    let mut t_raw = Array2::zeros((keys.len(), d));
    for ((cat, v), row) in key_index.iter() {
        t_raw.row_mut(*row).assign(&data.texts[cat][*v]);
    }

    let mut rng = seeded_rng(derive_seed(config.seed, "adapter-phase"));
    let n_variants = data.variant_count();
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..data.samples.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(config.batch_size) {
            let (t_out, cache) = state.model.adapter.forward(&t_raw);
            let (t_norm, t_norms) = normalize_rows(&t_out);

            let local: Vec<(Array1<f64>, String)> = batch
                .iter()
                .map(|&i| (visual.row(i).to_owned(), data.samples[i].1.clone()))
                .collect();
            let mut pair_batch: Option<PairBatch> = None;
            let mut pair_variant: Vec<usize> = Vec::new();
            for v in 0..n_variants {
                let mut texts = BTreeMap::new();
                for &i in batch {
                    let cat = &data.samples[i].1;
                    if let Some(&row) = key_index.get(&(cat.clone(), v)) {
                        texts
                            .entry(cat.clone())
                            .or_insert_with(|| t_norm.row(row).to_owned());
                    }
                }
                if texts.len() < 2 {
                    continue;
                }
                let pairs = build_pairs(&local, &texts, config)?;
                pair_variant.extend(std::iter::repeat(v).take(pairs.len()));
                pair_batch = Some(match pair_batch {
                    None => pairs,
                    Some(acc) => acc.concat(pairs),
                });
            }
            let Some(pairs) = pair_batch else {
                continue;
            };
            let (loss, grads) = contrastive_loss(&pairs, config.margin)?;
            epoch_loss += loss;
            batches += 1;

            // partner-row gradients -> unique (category, variant) rows
            let mut d_t_norm = Array2::zeros(t_norm.raw_dim());
            for row in 0..pairs.len() {
                let key = (pairs.partner_category[row].clone(), pair_variant[row]);
                let target = key_index[&key];
                let g = grads.d_partners.row(row);
                d_t_norm.row_mut(target).zip_mut_with(&g, |a, &b| *a += b);
            }
            let d_t_out = normalize_rows_backward(&t_norm, &t_norms, &d_t_norm);
            let (_, a_grads) = state.model.adapter.backward(&cache, &d_t_out);

            let mut grad_map: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for (i, (down, up)) in a_grads.blocks.iter().enumerate() {
                grad_map.insert(
                    format!("adapter.blocks.{i}.down.w"),
                    down.w.iter().copied().collect(),
                );
                grad_map.insert(format!("adapter.blocks.{i}.down.b"), down.b.to_vec());
                grad_map.insert(format!("adapter.blocks.{i}.up.w"), up.w.iter().copied().collect());
                grad_map.insert(format!("adapter.blocks.{i}.up.b"), up.b.to_vec());
            }
            state.apply_gradients(&grad_map, config.learning_rate, config.momentum)?;
        }
        if batches == 0 {
            return Err(Error::Train(
                "no usable minibatches: every batch was single-category".to_string(),
            ));
        }
        state.history.push(EpochRecord {
            phase: TrainPhase::Adapter,
            epoch,
            mean_loss: epoch_loss / batches as f64,
        });
    }
    state.phase = TrainPhase::Adapter;
    state.epoch = config.epochs;

    let frozen_after: BTreeMap<_, _> = group_hashes(&state.model)
        .into_iter()
        .filter(|(g, _)| state.frozen.contains(g))
        .collect();
    if frozen_before != frozen_after {
        return Err(Error::Train(
            "frozen parameter groups changed during adapter phase".to_string(),
        ));
    }
    Ok(())
}

/// Runs both alignment phases in order.
pub fn run_alignment(
    state: &mut TrainState,
    data: &AlignmentData,
    config: &ContrastiveConfig,
) -> Result<()> {
    train_ffn_phase(state, data, config)?;
    train_adapter_phase(state, data, config)
}

/// Distance statistics of the current model on alignment data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub mean_pos_dist: f64,
    pub mean_neg_dist: f64,
    /// Fraction of same-anchor (positive, negative) distance pairs with the
    /// positive closer: 0.5 is chance, 1.0 is perfect separation.
    pub pair_accuracy: f64,
}

/// Measures how well the current heads separate categories on `data`.
///
/// Embeddings go through the full current pipeline (FFN in eval mode,
/// adapter applied, both sides normalized), so the report is meaningful
/// before, between, and after the phases.
pub fn separation_report(data: &AlignmentData, state: &TrainState) -> Result<SeparationReport> {
    data.validate()?;
    let d = state.model.config.embed_dim;
    let mut raw = Array2::zeros((data.samples.len(), d));
    for (i, (v, _)) in data.samples.iter().enumerate() {
        raw.row_mut(i).assign(v);
    }
    let visual = normalize_rows(&state.model.ffn.forward_eval(&raw)).0;

    let mut text_rows: BTreeMap<(String, usize), Array1<f64>> = BTreeMap::new();
    for (cat, variants) in &data.texts {
        for (v, e) in variants.iter().enumerate() {
            let m = e.clone().insert_axis(Axis(0));
            let out = state.model.adapter.forward_eval(&m);
            let normed = normalize_rows(&out).0;
            text_rows.insert((cat.clone(), v), normed.remove_axis(Axis(0)));
        }
    }

    let mut pos_sum = 0.0;
    let mut pos_n = 0usize;
    let mut neg_sum = 0.0;
    let mut neg_n = 0usize;
    let mut wins = 0usize;
    let mut comparisons = 0usize;
    for (i, (_, cat)) in data.samples.iter().enumerate() {
        let anchor = visual.row(i);
        let dist_to = |key: &(String, usize)| -> f64 {
            let t = &text_rows[key];
            let diff = &anchor - t;
            diff.dot(&diff).sqrt()
        };
        let pos: Vec<f64> = (0..data.texts[cat].len())
            .map(|v| dist_to(&(cat.clone(), v)))
            .collect();
        let neg: Vec<f64> = text_rows
            .keys()
            .filter(|(c, _)| c != cat)
            .map(|k| dist_to(&k.clone()))
            .collect();
        pos_sum += pos.iter().sum::<f64>();
        pos_n += pos.len();
        neg_sum += neg.iter().sum::<f64>();
        neg_n += neg.len();
        for p in &pos {
            for n in &neg {
                comparisons += 1;
                if p < n {
                    wins += 1;
                }
            }
        }
    }
    if pos_n == 0 || neg_n == 0 || comparisons == 0 {
        return Err(Error::Data("no pairs to report on".to_string()));
    }
    Ok(SeparationReport {
        mean_pos_dist: pos_sum / pos_n as f64,
        mean_neg_dist: neg_sum / neg_n as f64,
        pair_accuracy: wins as f64 / comparisons as f64,
    })
}
