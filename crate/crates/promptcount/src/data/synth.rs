//! Synthetic shapes dataset: colored discs, squares and triangles on a
//! dark canvas, with dot annotations at shape centers.
//!
//! Categories are (color, shape) pairs — "red disc", "cyan triangle" — and
//! the generator partitions categories across train/val/test up front, so
//! split disjointness holds by construction. Every image gets a full
//! prompt set: the category name, a templated description, and its
//! generalized form.

use crate::data::descriptions::generalize_description;
use crate::domain::{ImageSample, PromptSet, Split, MIN_IMAGE_SIDE};
use crate::error::{Error, Result};
use crate::nn::{derive_seed, seeded_rng};
use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Color names and their RGB values, matched to the tokenizer vocabulary.
pub const PALETTE: [(&str, [f32; 3]); 8] = [
    ("red", [0.85, 0.10, 0.10]),
    ("green", [0.10, 0.80, 0.15]),
    ("blue", [0.15, 0.20, 0.90]),
    ("yellow", [0.90, 0.85, 0.10]),
    ("magenta", [0.85, 0.10, 0.80]),
    ("cyan", [0.10, 0.80, 0.85]),
    ("orange", [0.95, 0.55, 0.10]),
    ("white", [0.95, 0.95, 0.95]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Disc,
    Square,
    Triangle,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Disc, Shape::Square, Shape::Triangle];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Disc => "disc",
            Shape::Square => "square",
            Shape::Triangle => "triangle",
        }
    }

    pub fn plural(self) -> &'static str {
        match self {
            Shape::Disc => "discs",
            Shape::Square => "squares",
            Shape::Triangle => "triangles",
        }
    }

    fn covers(self, dx: f64, dy: f64, r: f64) -> bool {
        match self {
            Shape::Disc => dx * dx + dy * dy <= r * r,
            Shape::Square => dx.abs() <= r && dy.abs() <= r,
            Shape::Triangle => {
                // apex up: width grows linearly from tip to base
                let t = (dy + r) / (2.0 * r);
                (0.0..=1.0).contains(&t) && dx.abs() <= t * r
            }
        }
    }
}

/// Knobs of the generator. Defaults give 24 categories on a 64 px canvas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub canvas: usize,
    /// Inclusive range of target objects per image.
    pub count_range: (u32, u32),
    pub shapes: Vec<Shape>,
    /// Color names; each must appear in [`PALETTE`].
    pub colors: Vec<String>,
    /// Inclusive range of off-category shapes added per image.
    pub distractor_range: (u32, u32),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            canvas: 64,
            count_range: (1, 20),
            shapes: Shape::ALL.to_vec(),
            colors: PALETTE.iter().map(|(n, _)| n.to_string()).collect(),
            distractor_range: (0, 3),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.canvas < MIN_IMAGE_SIDE {
            return Err(Error::Config(format!(
                "canvas {} below the minimum image side {MIN_IMAGE_SIDE}",
                self.canvas
            )));
        }
        let (lo, hi) = self.count_range;
        if lo < 1 || lo > hi {
            return Err(Error::Config(format!(
                "count range [{lo}, {hi}] must satisfy 1 <= lo <= hi"
            )));
        }
        let (dlo, dhi) = self.distractor_range;
        if dlo > dhi {
            return Err(Error::Config(format!(
                "distractor range [{dlo}, {dhi}] is reversed"
            )));
        }
        if self.shapes.is_empty() || self.colors.is_empty() {
            return Err(Error::Config("shape and color sets must be nonempty".to_string()));
        }
        for color in &self.colors {
            if !PALETTE.iter().any(|(n, _)| n == color) {
                return Err(Error::Config(format!("unknown color '{color}'")));
            }
        }
        if self.shapes.len() * self.colors.len() < 3 {
            return Err(Error::Config(
                "need at least 3 categories to populate three disjoint splits".to_string(),
            ));
        }
        Ok(())
    }
}

fn rgb_of(color: &str) -> [f32; 3] {
    PALETTE
        .iter()
        .find(|(n, _)| *n == color)
        .map(|(_, rgb)| *rgb)
        .expect("validated color")
}

/// Deterministic partition of (color, shape) categories into splits,
/// roughly 60/20/20 with every split nonempty.
pub fn category_splits(config: &SynthConfig) -> BTreeMap<Split, Vec<(String, Shape)>> {
    let mut categories: Vec<(String, Shape)> = config
        .colors
        .iter()
        .flat_map(|c| config.shapes.iter().map(move |&s| (c.clone(), s)))
        .collect();
    let mut rng = seeded_rng(derive_seed(config.seed, "category-splits"));
    categories.shuffle(&mut rng);
    let n = categories.len();
    let n_train = ((n * 3) / 5).clamp(1, n - 2);
    let n_val = ((n - n_train) / 2).max(1);
    let mut out = BTreeMap::new();
    out.insert(Split::Train, categories[..n_train].to_vec());
    out.insert(Split::Val, categories[n_train..n_train + n_val].to_vec());
    out.insert(Split::Test, categories[n_train + n_val..].to_vec());
    out
}

fn draw_shape(pixels: &mut Array3<f32>, shape: Shape, cx: i64, cy: i64, r: i64, rgb: [f32; 3]) {
    let (h, w) = (pixels.shape()[0] as i64, pixels.shape()[1] as i64);
    for yy in (cy - r).max(0)..=(cy + r).min(h - 1) {
        for xx in (cx - r).max(0)..=(cx + r).min(w - 1) {
            if shape.covers((xx - cx) as f64, (yy - cy) as f64, r as f64) {
                for c in 0..3 {
                    pixels[[yy as usize, xx as usize, c]] = rgb[c];
                }
            }
        }
    }
}

/// The three auto-generated prompts for a synthetic category.
pub fn synth_prompts(color: &str, shape: Shape) -> PromptSet {
    let t_p = format!("{color} {}", shape.name());
    let t_d = format!(
        "a photo containing {color} {} of varying size on a dark background",
        shape.plural()
    );
    let (t_d_prime, replaced) = generalize_description(&t_d, &t_p);
    debug_assert!(replaced, "template must contain its own category");
    PromptSet::new(t_p, t_d, t_d_prime)
}

/// Generates `n` annotated images. Fully deterministic in `(config, n)`;
/// sample `i` depends only on the seed and `i`, so a longer run extends a
/// shorter one.
pub fn generate_synthetic(config: &SynthConfig, n: usize) -> Result<Vec<(ImageSample, PromptSet)>> {
    config.validate()?;
    if n == 0 {
        return Err(Error::Config("need n >= 1 synthetic images".to_string()));
    }
    let splits = category_splits(config);
    let canvas = config.canvas as i64;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // fixed 60/20/20 rotation over images
        let split = [Split::Train, Split::Train, Split::Train, Split::Val, Split::Test][i % 5];
        let categories = &splits[&split];
        let mut rng = seeded_rng(derive_seed(config.seed, &format!("image-{i:06}")));
        let (color, shape) = categories[rng.random_range(0..categories.len())].clone();
        let count = rng.random_range(config.count_range.0..=config.count_range.1) as usize;
        let n_distractors = if categories.len() > 1 {
            rng.random_range(config.distractor_range.0..=config.distractor_range.1) as usize
        } else {
            0
        };

        let mut pixels = Array3::from_elem((config.canvas, config.canvas, 3), 0.06f32);
        let place = |rng: &mut rand_chacha::ChaCha8Rng| {
            let r = rng.random_range(3..=5i64);
            let cx = rng.random_range(r + 1..canvas - r - 1);
            let cy = rng.random_range(r + 1..canvas - r - 1);
            (cx, cy, r)
        };
        // distractors first so targets stay on top when they overlap
        for _ in 0..n_distractors {
            let other = loop {
                let cand = &categories[rng.random_range(0..categories.len())];
                if *cand != (color.clone(), shape) {
                    break cand.clone();
                }
            };
            let (cx, cy, r) = place(&mut rng);
            draw_shape(&mut pixels, other.1, cx, cy, r, rgb_of(&other.0));
        }
        let mut dots = Vec::with_capacity(count);
        for _ in 0..count {
            let (cx, cy, r) = place(&mut rng);
            draw_shape(&mut pixels, shape, cx, cy, r, rgb_of(&color));
            dots.push((cx as f64, cy as f64));
        }

        let category = format!("{color} {}", shape.name());
        out.push((
            ImageSample {
                id: format!("synth_{i:04}"),
                pixels,
                category,
                dots,
                split,
            },
            synth_prompts(&color, shape),
        ));
    }
    Ok(out)
}
