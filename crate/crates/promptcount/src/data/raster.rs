//! Ground-truth density rasterization from dot annotations.
//!
//! Each dot becomes a truncated Gaussian kernel that is renormalized to sum
//! to exactly one after truncation at the image border, so the map's total
//! equals the dot count — the invariant that makes "count = sum of the map"
//! exact on ground truth. Resizing rescales values to keep that sum.

use crate::domain::DensityMap;
use crate::error::{Error, Result};
use crate::nn::bilinear;
use ndarray::Array2;

/// Rasterizes dots into an `h x w` density map.
///
/// Kernel: per-dot Gaussian of width `sigma`, truncated at 4 sigma and at
/// the image border, renormalized per dot. Sum of the map equals the dot
/// count to floating-point accuracy.
pub fn gt_density_from_dots(
    dots: &[(f64, f64)],
    h: usize,
    w: usize,
    sigma: f64,
) -> Result<DensityMap> {
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::Data(format!("sigma must be positive, got {sigma}")));
    }
    for (i, &(x, y)) in dots.iter().enumerate() {
        if !x.is_finite() || !y.is_finite() || x < 0.0 || y < 0.0 || x >= w as f64 || y >= h as f64
        {
            return Err(Error::Data(format!(
                "dot {i} at ({x}, {y}) outside {h}x{w} image"
            )));
        }
    }
    let mut grid = Array2::zeros((h, w));
    let radius = (4.0 * sigma).ceil() as i64;
    let inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
    for &(x, y) in dots {
        let r0 = ((y.floor() as i64) - radius).max(0) as usize;
        let r1 = ((y.ceil() as i64) + radius + 1).min(h as i64) as usize;
        let c0 = ((x.floor() as i64) - radius).max(0) as usize;
        let c1 = ((x.ceil() as i64) + radius + 1).min(w as i64) as usize;
        let mut mass = 0.0;
        let mut kernel = Array2::zeros((r1 - r0, c1 - c0));
        for r in r0..r1 {
            for c in c0..c1 {
                let dy = r as f64 - y;
                let dx = c as f64 - x;
                let v = (-(dx * dx + dy * dy) * inv_two_sigma_sq).exp();
                kernel[[r - r0, c - c0]] = v;
                mass += v;
            }
        }
        // truncation (border or 4-sigma window) removed some mass; scale the
        // kernel so this dot contributes exactly 1.0
        let scale = 1.0 / mass;
        for r in r0..r1 {
            for c in c0..c1 {
                grid[[r, c]] += kernel[[r - r0, c - c0]] * scale;
            }
        }
    }
    DensityMap::new(grid)
}

/// Bilinearly resizes a density map, rescaling values to preserve its sum.
pub fn resize_density(map: &DensityMap, out_h: usize, out_w: usize) -> DensityMap {
    let original_sum: f64 = map.grid().sum();
    let mut resized = bilinear::resize(map.grid(), out_h, out_w);
    // interpolation can dip microscopically below zero at steep edges
    resized.mapv_inplace(|v| v.max(0.0));
    let new_sum: f64 = resized.sum();
    if new_sum > 0.0 {
        let scale = original_sum / new_sum;
        resized.mapv_inplace(|v| v * scale);
    }
    DensityMap::new(resized).expect("rescaled map is finite and nonnegative")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::count_of;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_dots_zero_map() {
        let m = gt_density_from_dots(&[], 16, 16, 2.0).unwrap();
        assert_eq!(count_of(&m).unwrap(), 0.0);
    }

    #[test]
    fn single_center_dot_sums_to_one() {
        for sigma in [0.5, 2.0, 5.0] {
            let m = gt_density_from_dots(&[(8.0, 8.0)], 17, 17, sigma).unwrap();
            assert_abs_diff_eq!(count_of(&m).unwrap(), 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn corner_dots_still_sum_exactly() {
        // 12 dots, 2 pinned to corners where the kernel is heavily truncated
        let mut dots = vec![(0.0, 0.0), (31.0, 31.0)];
        for i in 0..10 {
            dots.push((3.0 + 2.5 * i as f64, 16.0));
        }
        let m = gt_density_from_dots(&dots, 32, 32, 2.0).unwrap();
        assert_abs_diff_eq!(count_of(&m).unwrap(), 12.0, epsilon = 1e-4);
    }

    #[test]
    fn out_of_bounds_dot_names_its_index() {
        let err = gt_density_from_dots(&[(5.0, 5.0), (40.0, 5.0)], 32, 32, 2.0).unwrap_err();
        assert!(err.to_string().contains("dot 1"), "{err}");
    }

    #[test]
    fn resize_preserves_count_both_directions() {
        let dots: Vec<(f64, f64)> = (0..7).map(|i| (4.0 + 3.0 * i as f64, 10.0 + i as f64)).collect();
        let m = gt_density_from_dots(&dots, 32, 32, 2.0).unwrap();
        let up = resize_density(&m, 96, 80);
        assert_abs_diff_eq!(count_of(&up).unwrap(), 7.0, epsilon = 1e-4);
        let down = resize_density(&m, 16, 16);
        assert_abs_diff_eq!(count_of(&down).unwrap(), 7.0, epsilon = 1e-4);
    }
}
