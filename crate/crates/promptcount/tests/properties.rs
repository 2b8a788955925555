//! Randomized property tests for the invariants the rest of the suite
//! relies on: count conservation through rasterization and resizing,
//! metric ordering, loss nonnegativity, serialization round-trips, and
//! the fixed-point behavior of description generalization.

use ndarray::{Array1, Array2};
use promptcount::alignment::{contrastive_loss, PairBatch};
use promptcount::counter::dmap::{load_density_map, save_density_map};
use promptcount::data::descriptions::generalize_description;
use promptcount::data::{gt_density_from_dots, resize_density};
use promptcount::domain::{count_of, DensityMap, EmbeddingBatch};
use promptcount::eval::error_metrics;
use proptest::prelude::*;

fn dots_strategy(h: usize, w: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec(
        (0.0..(w as f64 - 1.0), 0.0..(h as f64 - 1.0)),
        0..25,
    )
}

proptest! {
    #[test]
    fn rasterized_density_sums_to_the_dot_count(
        dots in dots_strategy(48, 40),
        sigma in 0.5f64..4.0,
    ) {
        let map = gt_density_from_dots(&dots, 48, 40, sigma).unwrap();
        let count = count_of(&map).unwrap();
        prop_assert!((count - dots.len() as f64).abs() < 1e-4,
            "count {} vs {} dots", count, dots.len());
    }

    #[test]
    fn resizing_preserves_the_count(
        dots in dots_strategy(32, 32),
        sigma in 0.5f64..4.0,
        out_h in 8usize..64,
        out_w in 8usize..64,
    ) {
        let map = gt_density_from_dots(&dots, 32, 32, sigma).unwrap();
        let resized = resize_density(&map, out_h, out_w);
        let count = count_of(&resized).unwrap();
        prop_assert!((count - dots.len() as f64).abs() < 1e-4,
            "count {} vs {} dots after resize to {}x{}", count, dots.len(), out_h, out_w);
    }

    #[test]
    fn count_of_is_linear(
        a in prop::collection::vec(0.0f64..2.0, 12),
        b in prop::collection::vec(0.0f64..2.0, 12),
        ca in 0.0f64..3.0,
        cb in 0.0f64..3.0,
    ) {
        let m1 = DensityMap::new(Array2::from_shape_vec((3, 4), a).unwrap()).unwrap();
        let m2 = DensityMap::new(Array2::from_shape_vec((3, 4), b).unwrap()).unwrap();
        let combo = DensityMap::new(ca * m1.grid() + cb * m2.grid()).unwrap();
        let lhs = count_of(&combo).unwrap();
        let rhs = ca * count_of(&m1).unwrap() + cb * count_of(&m2).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + rhs.abs()));
    }

    #[test]
    fn mae_never_exceeds_rmse(
        pairs in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..40),
    ) {
        let (predicted, truth): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let (mae, rmse) = error_metrics(&predicted, &truth).unwrap();
        prop_assert!(mae >= 0.0 && rmse >= 0.0);
        prop_assert!(mae <= rmse + 1e-12, "MAE {} > RMSE {}", mae, rmse);
    }

    #[test]
    fn contrastive_loss_is_nonnegative(
        rows in prop::collection::vec(
            (prop::collection::vec(-1.0f64..1.0, 4),
             prop::collection::vec(-1.0f64..1.0, 4),
             prop::bool::ANY),
            1..12,
        ),
        margin in 0.1f64..2.0,
    ) {
        let n = rows.len();
        let mut anchors = Array2::zeros((n, 4));
        let mut partners = Array2::zeros((n, 4));
        let mut labels = Vec::with_capacity(n);
        for (i, (a, p, pos)) in rows.into_iter().enumerate() {
            anchors.row_mut(i).assign(&Array1::from_vec(a));
            partners.row_mut(i).assign(&Array1::from_vec(p));
            labels.push(u8::from(pos));
        }
        let batch = PairBatch {
            anchors: EmbeddingBatch::new(anchors, false),
            partners: EmbeddingBatch::new(partners, false),
            labels,
            anchor_index: (0..n).collect(),
            partner_category: vec![String::from("c"); n],
        };
        let (loss, _) = contrastive_loss(&batch, margin).unwrap();
        prop_assert!(loss >= 0.0, "loss {}", loss);
        prop_assert!(loss.is_finite());
    }

    #[test]
    fn generalization_reaches_a_fixed_point(
        prefix in "[a-z]{1,6}( [a-z]{1,6})?",
        category in "[a-z]{2,8}",
        suffix in "[a-z]{1,6}",
        plural in prop::bool::ANY,
    ) {
        let mention = if plural { format!("{category}s") } else { category.clone() };
        let t_d = format!("{prefix} {mention} near the {suffix}");
        let (once, changed) = generalize_description(&t_d, &category);
        prop_assert!(changed, "no replacement in {:?} for {:?}", t_d, category);
        let (twice, changed_again) = generalize_description(&once, &category);
        prop_assert!(!changed_again, "second pass changed {:?} -> {:?}", once, twice);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn density_files_round_trip(
        vals in prop::collection::vec(0.0f32..10.0, 24),
    ) {
        let grid = Array2::from_shape_vec((4, 6), vals.into_iter().map(f64::from).collect()).unwrap();
        let map = DensityMap::new(grid).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.dmap");
        save_density_map(&path, &map).unwrap();
        let back = load_density_map(&path).unwrap();
        prop_assert_eq!(back.grid(), map.grid());
    }
}
