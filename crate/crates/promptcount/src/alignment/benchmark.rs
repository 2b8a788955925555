//! Synthetic embedding clusters for exercising the alignment trainers.
//!
//! Each category gets a unit text prototype; its visual samples are noisy
//! copies pushed through one fixed random rotation shared by all
//! categories. A learnable visual head can undo the rotation, so alignment
//! drives pair accuracy from chance toward 1.0.
//!
//! Prototypes concentrate in a cone around a shared axis (`spread`
//! controls how tightly) instead of spreading over the whole sphere. That
//! places some category pairs closer than a margin of 1.0, which is what
//! makes the margin size matter: a larger margin keeps pushing anchors
//! away from nearby wrong categories after a small one has gone quiet.

use super::AlignmentData;
use crate::nn::{derive_seed, seeded_rng};
use ndarray::{Array1, Array2};
use rand::Rng;
use std::collections::BTreeMap;

/// Shape of a generated cluster benchmark.
#[derive(Debug, Clone)]
pub struct BenchmarkSpec {
    pub train_categories: usize,
    pub eval_categories: usize,
    pub samples_per_category: usize,
    pub dim: usize,
    /// Per-coordinate uniform noise amplitude added before rotation.
    pub noise: f64,
    /// Prototype concentration: each prototype is `axis + spread * u`
    /// normalized. Small values crowd categories together.
    pub spread: f64,
    pub seed: u64,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        BenchmarkSpec {
            train_categories: 16,
            eval_categories: 4,
            samples_per_category: 10,
            dim: 16,
            noise: 0.25,
            spread: 0.7,
            seed: 0,
        }
    }
}

fn unit_normalize(v: &mut Array1<f64>) {
    let n = v.dot(v).sqrt();
    if n > 0.0 {
        *v /= n;
    }
}

/// Random orthogonal matrix: Gram-Schmidt over a random square matrix.
fn random_rotation(dim: usize, seed: u64) -> Array2<f64> {
    let mut rng = seeded_rng(seed);
    let mut q = Array2::<f64>::zeros((dim, dim));
    for i in 0..dim {
        let mut v: Array1<f64> = Array1::from_iter((0..dim).map(|_| rng.random_range(-1.0..1.0)));
        for j in 0..i {
            let prev = q.row(j);
            let proj = v.dot(&prev);
            v.zip_mut_with(&prev.to_owned(), |a, &b| *a -= proj * b);
        }
        unit_normalize(&mut v);
        q.row_mut(i).assign(&v);
    }
    q
}

/// Generates disjoint train/eval cluster datasets sharing the same hidden
/// rotation, so a head trained on one transfers to the other.
pub fn rotated_clusters(spec: &BenchmarkSpec) -> (AlignmentData, AlignmentData) {
    let rotation = random_rotation(spec.dim, derive_seed(spec.seed, "rotation"));
    let mut axis_rng = seeded_rng(derive_seed(spec.seed, "axis"));
    let mut axis: Array1<f64> =
        Array1::from_iter((0..spec.dim).map(|_| axis_rng.random_range(-1.0..1.0)));
    unit_normalize(&mut axis);
    let total = spec.train_categories + spec.eval_categories;
    let mut datasets = (
        AlignmentData { samples: Vec::new(), texts: BTreeMap::new() },
        AlignmentData { samples: Vec::new(), texts: BTreeMap::new() },
    );
    for c in 0..total {
        let name = format!("cat{c:03}");
        let mut rng = seeded_rng(derive_seed(spec.seed, &name));
        let mut prototype = axis.clone();
        for x in prototype.iter_mut() {
            *x += spec.spread * rng.random_range(-1.0..1.0);
        }
        unit_normalize(&mut prototype);
        let target = if c < spec.train_categories {
            &mut datasets.0
        } else {
            &mut datasets.1
        };
        target.texts.insert(name.clone(), vec![prototype.clone()]);
        for _ in 0..spec.samples_per_category {
            let mut point = prototype.clone();
            for x in point.iter_mut() {
                *x += rng.random_range(-spec.noise..spec.noise);
            }
            unit_normalize(&mut point);
            let visual = rotation.dot(&point);
            target.samples.push((visual, name.clone()));
        }
    }
    datasets
}
