//! Core data types shared by every stage: samples, prompts, density maps,
//! embedding batches.
//!
//! All types here are immutable after construction and safe to share
//! read-only across threads.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dataset split. Categories must be disjoint across splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Data(format!("unknown split '{other}'"))),
        }
    }
}

/// The three text prompt forms attached to an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptVariant {
    /// Bare category name.
    Category,
    /// Enriched natural-language description.
    Description,
    /// Description with the category token replaced by "object".
    Generalized,
}

impl PromptVariant {
    pub const ALL: [PromptVariant; 3] = [
        PromptVariant::Category,
        PromptVariant::Description,
        PromptVariant::Generalized,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PromptVariant::Category => "category",
            PromptVariant::Description => "description",
            PromptVariant::Generalized => "generalized",
        }
    }
}

impl std::str::FromStr for PromptVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "category" => Ok(PromptVariant::Category),
            "description" => Ok(PromptVariant::Description),
            "generalized" => Ok(PromptVariant::Generalized),
            other => Err(Error::Data(format!("unknown prompt variant '{other}'"))),
        }
    }
}

/// An image with its category label, dot annotations and split assignment.
///
/// Pixels are stored as floats in `[0, 1]`, shape `(H, W, C)` with
/// `C ∈ {1, 3}`. Dot coordinates are `(x, y)` in pixel units.
#[derive(Debug, Clone)]
pub struct ImageSample {
    pub id: String,
    pub pixels: Array3<f32>,
    pub category: String,
    pub dots: Vec<(f64, f64)>,
    pub split: Split,
}

impl ImageSample {
    pub fn height(&self) -> usize {
        self.pixels.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.pixels.shape()[2]
    }
}

/// Minimum image side length accepted by the pipeline.
pub const MIN_IMAGE_SIDE: usize = 16;

/// Checks every `ImageSample` invariant; returns one message per violation.
///
/// Validation never fails: a well-formed sample yields an empty list.
pub fn validate_sample(sample: &ImageSample) -> Vec<String> {
    let mut violations = Vec::new();
    let (h, w, c) = (sample.height(), sample.width(), sample.channels());

    if h < MIN_IMAGE_SIDE || w < MIN_IMAGE_SIDE {
        violations.push(format!(
            "image too small: {h}x{w} (both sides must be >= {MIN_IMAGE_SIDE})"
        ));
    }
    if c != 1 && c != 3 {
        violations.push(format!("channel count {c} not in {{1, 3}}"));
    }
    for (i, &(x, y)) in sample.dots.iter().enumerate() {
        let in_bounds = x >= 0.0 && x < w as f64 && y >= 0.0 && y < h as f64;
        if !x.is_finite() || !y.is_finite() || !in_bounds {
            violations.push(format!("dot {i} out of bounds: ({x}, {y}) for {h}x{w} image"));
        }
    }
    for (i, &v) in sample.pixels.iter().enumerate() {
        if !v.is_finite() || !(0.0..=1.0).contains(&v) {
            violations.push(format!("pixel {i} out of range [0, 1]: {v}"));
            break;
        }
    }
    if sample.category.trim().is_empty() {
        violations.push("category is empty".to_string());
    }
    violations
}

/// Rejects datasets where a category string appears in more than one split.
///
/// Category equality is case-insensitive exact string match.
pub fn check_split_disjointness<'a, I>(samples: I) -> Result<()>
where
    I: IntoIterator<Item = (&'a str, Split)>,
{
    use std::collections::BTreeMap;
    let mut seen: BTreeMap<String, Split> = BTreeMap::new();
    for (category, split) in samples {
        let key = category.to_lowercase();
        match seen.get(&key) {
            None => {
                seen.insert(key, split);
            }
            Some(&prev) if prev != split => {
                return Err(Error::Data(format!(
                    "category '{category}' appears in splits '{}' and '{}'",
                    prev.name(),
                    split.name()
                )));
            }
            Some(_) => {}
        }
    }
    Ok(())
}

/// The three text variants for one image.
///
/// `t_d` and `t_d_prime` may be empty when no description is available;
/// such prompt sets are flagged incomplete and only the category variant
/// is usable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    pub t_p: String,
    pub t_d: String,
    pub t_d_prime: String,
}

impl PromptSet {
    pub fn new(t_p: impl Into<String>, t_d: impl Into<String>, t_d_prime: impl Into<String>) -> Self {
        PromptSet {
            t_p: t_p.into(),
            t_d: t_d.into(),
            t_d_prime: t_d_prime.into(),
        }
    }

    /// Prompt set with only the category name filled in.
    pub fn category_only(t_p: impl Into<String>) -> Self {
        PromptSet::new(t_p, "", "")
    }

    /// True when all three variants are present.
    pub fn is_complete(&self) -> bool {
        !self.t_p.is_empty() && !self.t_d.is_empty() && !self.t_d_prime.is_empty()
    }

    /// The prompt text for a variant, or `None` when that variant is empty.
    pub fn get(&self, variant: PromptVariant) -> Option<&str> {
        let text = match variant {
            PromptVariant::Category => &self.t_p,
            PromptVariant::Description => &self.t_d,
            PromptVariant::Generalized => &self.t_d_prime,
        };
        if text.is_empty() {
            None
        } else {
            Some(text)
        }
    }

    /// Validates the prompt-set invariants: nonempty category, and the
    /// generalized variant free of the category token.
    pub fn validate(&self) -> Vec<String> {
        let mut violations = Vec::new();
        if self.t_p.trim().is_empty() {
            violations.push("t_p is empty".to_string());
        }
        if !self.t_d_prime.is_empty() {
            let hay = self.t_d_prime.to_lowercase();
            let needle = self.t_p.to_lowercase();
            let tokens: Vec<&str> = hay
                .split(|ch: char| !ch.is_alphanumeric())
                .filter(|t| !t.is_empty())
                .collect();
            let cat_tokens: Vec<&str> = needle
                .split(|ch: char| !ch.is_alphanumeric())
                .filter(|t| !t.is_empty())
                .collect();
            // The category may appear pluralized in prose ("apple" ->
            // "apples"), so the last token also matches its naive plurals.
            let window_hits = |w: &[&str]| {
                let (last, rest) = w.split_last().expect("nonempty window");
                let (cat_last, cat_rest) = cat_tokens.split_last().expect("nonempty category");
                rest == cat_rest
                    && (last == cat_last
                        || *last == format!("{cat_last}s")
                        || *last == format!("{cat_last}es"))
            };
            if !cat_tokens.is_empty() && tokens.windows(cat_tokens.len()).any(window_hits) {
                violations.push(format!(
                    "t_d_prime still contains category token '{}'",
                    self.t_p
                ));
            }
        }
        violations
    }
}

/// A nonnegative `H x W` grid whose sum is an object count.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMap {
    grid: Array2<f64>,
}

impl DensityMap {
    /// Wraps a grid, checking nonnegativity and finiteness.
    pub fn new(grid: Array2<f64>) -> Result<Self> {
        for &v in grid.iter() {
            if !v.is_finite() {
                return Err(Error::Data(format!("density map entry not finite: {v}")));
            }
            if v < 0.0 {
                return Err(Error::Data(format!("density map entry negative: {v}")));
            }
        }
        Ok(DensityMap { grid })
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        DensityMap {
            grid: Array2::zeros((h, w)),
        }
    }

    pub fn grid(&self) -> &Array2<f64> {
        &self.grid
    }

    pub fn into_grid(self) -> Array2<f64> {
        self.grid
    }

    pub fn height(&self) -> usize {
        self.grid.nrows()
    }

    pub fn width(&self) -> usize {
        self.grid.ncols()
    }
}

/// Sum of all map entries: the count the map represents.
///
/// Fails on non-finite entries (a corrupt map), never on shape.
pub fn count_of(map: &DensityMap) -> Result<f64> {
    let mut total = 0.0;
    for &v in map.grid().iter() {
        if !v.is_finite() {
            return Err(Error::Data(format!(
                "density map is corrupt: non-finite entry {v}"
            )));
        }
        total += v;
    }
    if !total.is_finite() {
        return Err(Error::Data("density map sum overflowed".to_string()));
    }
    Ok(total)
}

/// A batch of fixed-dimension embedding vectors, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    pub vectors: Array2<f64>,
    /// When set, every row is expected to have unit L2 norm (within 1e-6).
    pub normalized: bool,
}

impl EmbeddingBatch {
    pub fn new(vectors: Array2<f64>, normalized: bool) -> Self {
        EmbeddingBatch {
            vectors,
            normalized,
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    /// Checks the unit-norm invariant for normalized batches.
    pub fn validate(&self) -> Result<()> {
        if self.normalized {
            for (i, row) in self.vectors.rows().into_iter().enumerate() {
                let norm = row.dot(&row).sqrt();
                if (norm - 1.0).abs() > 1e-6 {
                    return Err(Error::Data(format!(
                        "embedding row {i} flagged normalized but has norm {norm}"
                    )));
                }
            }
        }
        Ok(())
    }
}
