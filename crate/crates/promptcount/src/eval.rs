//! Zero-shot inference and MAE/RMSE evaluation.
//!
//! Counting an image is a forward pass plus a sum; evaluation runs that
//! over a split with one chosen prompt variant and reports MAE and RMSE
//! alongside per-image records. Images missing the requested variant are
//! skipped but always leave a record — n never shrinks silently.

use crate::counter::forward;
use crate::domain::{count_of, DensityMap, ImageSample, PromptSet, PromptVariant, Split};
use crate::error::{Error, Result};
use crate::model::{group_hashes, CountingModel};
use ndarray::Array3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Counts objects matching `prompt` in one image.
///
/// Accepts any prompt string — a category name, a full description, or an
/// attribute phrase — and returns the predicted count with the density map
/// behind it.
pub fn count_image(
    pixels: &Array3<f32>,
    prompt: &str,
    model: &CountingModel,
) -> Result<(f64, DensityMap)> {
    let map = forward(pixels, prompt, model)?;
    let count = count_of(&map)?;
    Ok((count, map))
}

/// One evaluated (or skipped) image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    /// Predicted count; `None` when the image was skipped.
    pub predicted: Option<f64>,
    pub truth: f64,
    pub variant: PromptVariant,
    /// Reason the image was skipped, when it was.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

/// Split-level evaluation result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Split,
    pub variant: PromptVariant,
    pub mae: f64,
    pub rmse: f64,
    /// Images that produced a prediction.
    pub n: usize,
    /// Images skipped (missing prompt variant); each has a record too.
    pub skipped: usize,
    pub records: Vec<ImageRecord>,
    /// Hash of the model configuration and all parameter groups, tying the
    /// report to the exact state that produced it.
    pub config_hash: String,
    pub seed: u64,
}

impl EvalReport {
    /// Checks the internal consistency every report must satisfy.
    pub fn validate(&self) -> Result<()> {
        if self.mae > self.rmse + 1e-12 {
            return Err(Error::Eval(format!(
                "MAE {} exceeds RMSE {}",
                self.mae, self.rmse
            )));
        }
        let predicted = self.records.iter().filter(|r| r.predicted.is_some()).count();
        let skipped = self.records.len() - predicted;
        if predicted != self.n || skipped != self.skipped {
            return Err(Error::Eval(format!(
                "record bookkeeping off: {} predictions vs n={}, {} skips vs skipped={}",
                predicted, self.n, skipped, self.skipped
            )));
        }
        Ok(())
    }
}

/// MAE and RMSE of paired predictions and truths.
pub fn error_metrics(predicted: &[f64], truth: &[f64]) -> Result<(f64, f64)> {
    if predicted.is_empty() || predicted.len() != truth.len() {
        return Err(Error::Eval(format!(
            "need matching nonempty prediction/truth lists, got {} and {}",
            predicted.len(),
            truth.len()
        )));
    }
    let n = predicted.len() as f64;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    for (p, t) in predicted.iter().zip(truth) {
        let e = p - t;
        abs_sum += e.abs();
        sq_sum += e * e;
    }
    Ok((abs_sum / n, (sq_sum / n).sqrt()))
}

/// Identifies a model state: SHA-256 over its config JSON and every
/// parameter-group hash.
pub fn state_hash(model: &CountingModel) -> String {
    let mut hasher = Sha256::new();
    let config = serde_json::to_string(&model.config).expect("config serializes");
    hasher.update(config.as_bytes());
    for (group, hash) in group_hashes(model) {
        hasher.update(group.name().as_bytes());
        hasher.update(hash.as_bytes());
    }
    format!("{:x}", hasher.finalize())
}

/// Evaluates one split with one prompt variant.
///
/// Deterministic given the model and data: images are visited in input
/// order and each prediction is a pure function of (pixels, prompt, model).
pub fn evaluate(
    data: &[(ImageSample, PromptSet)],
    split: Split,
    variant: PromptVariant,
    model: &CountingModel,
) -> Result<EvalReport> {
    let in_split: Vec<&(ImageSample, PromptSet)> =
        data.iter().filter(|(s, _)| s.split == split).collect();
    if in_split.is_empty() {
        return Err(Error::Eval(format!("split '{}' is empty", split.name())));
    }

    let mut records = Vec::with_capacity(in_split.len());
    let mut predicted = Vec::new();
    let mut truth = Vec::new();
    for (sample, prompts) in in_split {
        let true_count = sample.dots.len() as f64;
        match prompts.get(variant) {
            None => records.push(ImageRecord {
                id: sample.id.clone(),
                predicted: None,
                truth: true_count,
                variant,
                skipped: Some(format!("missing {} prompt", variant.name())),
            }),
            Some(prompt) => {
                let (count, _) = count_image(&sample.pixels, prompt, model)?;
                predicted.push(count);
                truth.push(true_count);
                records.push(ImageRecord {
                    id: sample.id.clone(),
                    predicted: Some(count),
                    truth: true_count,
                    variant,
                    skipped: None,
                });
            }
        }
    }
    if predicted.is_empty() {
        return Err(Error::Eval(format!(
            "split '{}' has no image with a {} prompt",
            split.name(),
            variant.name()
        )));
    }
    let (mae, rmse) = error_metrics(&predicted, &truth)?;
    let report = EvalReport {
        split,
        variant,
        mae,
        rmse,
        n: predicted.len(),
        skipped: records.len() - predicted.len(),
        records,
        config_hash: state_hash(model),
        seed: model.config.init_seed,
    };
    report.validate()?;
    Ok(report)
}

/// The constant predictor every model must beat: the mean training count.
pub fn baseline_mean_count(data: &[(ImageSample, PromptSet)], split: Split) -> Result<f64> {
    let counts: Vec<f64> = data
        .iter()
        .filter(|(s, _)| s.split == split)
        .map(|(s, _)| s.dots.len() as f64)
        .collect();
    if counts.is_empty() {
        return Err(Error::Eval(format!(
            "split '{}' is empty; no baseline to compute",
            split.name()
        )));
    }
    Ok(counts.iter().sum::<f64>() / counts.len() as f64)
}

/// Mean absolute disagreement between two prompt variants' predicted counts
/// over a split: how much the answer changes when the wording does. Images
/// missing either prompt are skipped; an entirely skipped split is an error.
pub fn prompt_gap(
    data: &[(ImageSample, PromptSet)],
    split: Split,
    a: PromptVariant,
    b: PromptVariant,
    model: &CountingModel,
) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for (sample, prompts) in data.iter().filter(|(s, _)| s.split == split) {
        let (Some(pa), Some(pb)) = (prompts.get(a), prompts.get(b)) else {
            continue;
        };
        let (ca, _) = count_image(&sample.pixels, pa, model)?;
        let (cb, _) = count_image(&sample.pixels, pb, model)?;
        total += (ca - cb).abs();
        n += 1;
    }
    if n == 0 {
        return Err(Error::Eval(format!(
            "split '{}' has no image with both '{}' and '{}' prompts",
            split.name(),
            a.name(),
            b.name()
        )));
    }
    Ok(total / n as f64)
}

/// MAE/RMSE a constant predictor achieves on a split.
pub fn constant_metrics(
    data: &[(ImageSample, PromptSet)],
    split: Split,
    constant: f64,
) -> Result<(f64, f64)> {
    let truth: Vec<f64> = data
        .iter()
        .filter(|(s, _)| s.split == split)
        .map(|(s, _)| s.dots.len() as f64)
        .collect();
    if truth.is_empty() {
        return Err(Error::Eval(format!("split '{}' is empty", split.name())));
    }
    let predicted = vec![constant; truth.len()];
    error_metrics(&predicted, &truth)
}

/// Renders a report as an aligned two-part text table: summary, then one
/// row per image.
pub fn render_table(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "split    variant      n     skipped  MAE        RMSE\n{:<8} {:<12} {:<5} {:<8} {:<10.4} {:<10.4}\n\n",
        report.split.name(),
        report.variant.name(),
        report.n,
        report.skipped,
        report.mae,
        report.rmse,
    ));
    let id_width = report
        .records
        .iter()
        .map(|r| r.id.len())
        .max()
        .unwrap_or(2)
        .max("id".len());
    out.push_str(&format!(
        "{:<id_width$}  {:>10}  {:>8}  note\n",
        "id", "predicted", "truth"
    ));
    for r in &report.records {
        let predicted = match r.predicted {
            Some(p) => format!("{p:.3}"),
            None => "-".to_string(),
        };
        out.push_str(&format!(
            "{:<id_width$}  {:>10}  {:>8}  {}\n",
            r.id,
            predicted,
            format!("{:.0}", r.truth),
            r.skipped.as_deref().unwrap_or("")
        ));
    }
    out
}
