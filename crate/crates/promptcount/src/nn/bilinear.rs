//! Bilinear resampling on 2-D grids, with an exact adjoint for backprop.
//!
//! Uses the half-pixel-center convention: source coordinate
//! `s = (d + 0.5) * (in / out) - 0.5`, clamped to the valid range. Resizing
//! is a linear map of the input, so the backward pass scatters upstream
//! gradients with the same four interpolation weights.

use ndarray::{Array2, Array3};

/// The four corner taps and weights contributing to one output pixel.
#[derive(Debug, Clone, Copy)]
struct Taps {
    lo: usize,
    hi: usize,
    w_hi: f64,
}

fn axis_taps(out_len: usize, in_len: usize) -> Vec<Taps> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(in_len - 1);
            Taps {
                lo,
                hi,
                w_hi: s - lo as f64,
            }
        })
        .collect()
}

/// Resizes `src` to `(out_h, out_w)` with bilinear interpolation.
pub fn resize(src: &Array2<f64>, out_h: usize, out_w: usize) -> Array2<f64> {
    assert!(src.nrows() > 0 && src.ncols() > 0, "empty source grid");
    assert!(out_h > 0 && out_w > 0, "empty target grid");
    let rows = axis_taps(out_h, src.nrows());
    let cols = axis_taps(out_w, src.ncols());
    let mut out = Array2::zeros((out_h, out_w));
    for (i, r) in rows.iter().enumerate() {
        for (j, c) in cols.iter().enumerate() {
            let top = src[[r.lo, c.lo]] * (1.0 - c.w_hi) + src[[r.lo, c.hi]] * c.w_hi;
            let bot = src[[r.hi, c.lo]] * (1.0 - c.w_hi) + src[[r.hi, c.hi]] * c.w_hi;
            out[[i, j]] = top * (1.0 - r.w_hi) + bot * r.w_hi;
        }
    }
    out
}

/// Adjoint of [`resize`]: maps a gradient on the `(out_h, out_w)` output back
/// onto the `(in_h, in_w)` input.
pub fn resize_backward(
    dy: &Array2<f64>,
    in_h: usize,
    in_w: usize,
) -> Array2<f64> {
    let rows = axis_taps(dy.nrows(), in_h);
    let cols = axis_taps(dy.ncols(), in_w);
    let mut dx = Array2::zeros((in_h, in_w));
    for (i, r) in rows.iter().enumerate() {
        for (j, c) in cols.iter().enumerate() {
            let g = dy[[i, j]];
            dx[[r.lo, c.lo]] += g * (1.0 - r.w_hi) * (1.0 - c.w_hi);
            dx[[r.lo, c.hi]] += g * (1.0 - r.w_hi) * c.w_hi;
            dx[[r.hi, c.lo]] += g * r.w_hi * (1.0 - c.w_hi);
            dx[[r.hi, c.hi]] += g * r.w_hi * c.w_hi;
        }
    }
    dx
}

/// Channel-wise bilinear resize of an `(h, w, c)` f32 image volume.
pub fn resize_channels_hwc(src: &Array3<f32>, out_h: usize, out_w: usize) -> Array3<f32> {
    let (_, _, c) = src.dim();
    let mut out = Array3::zeros((out_h, out_w, c));
    for ch in 0..c {
        let plane = src.index_axis(ndarray::Axis(2), ch).mapv(|v| v as f64);
        let resized = resize(&plane, out_h, out_w);
        out.index_axis_mut(ndarray::Axis(2), ch)
            .assign(&resized.mapv(|v| v as f32));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn identity_resize_is_exact() {
        let src = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(resize(&src, 2, 2), src);
    }

    #[test]
    fn constant_grid_stays_constant() {
        let src = Array2::from_elem((3, 5), 7.5);
        let out = resize(&src, 9, 4);
        for &v in out.iter() {
            assert_abs_diff_eq!(v, 7.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn upsample_2x_interpolates_midpoints() {
        let src = array![[0.0, 1.0]];
        let out = resize(&src, 1, 4);
        // centers at s = {-0.25, 0.25, 0.75, 1.25} clamped to [0, 1]
        assert_abs_diff_eq!(out[[0, 0]], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[[0, 1]], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(out[[0, 2]], 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(out[[0, 3]], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn backward_is_transpose_of_forward() {
        // For a linear map A, <A x, y> == <x, Aᵀ y> for all x, y.
        let mut rng = crate::nn::seeded_rng(3);
        use rand::Rng;
        let mut x = Array2::zeros((4, 5));
        for v in x.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let mut y = Array2::zeros((7, 6));
        for v in y.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let ax = resize(&x, 7, 6);
        let aty = resize_backward(&y, 4, 5);
        let lhs: f64 = (&ax * &y).sum();
        let rhs: f64 = (&x * &aty).sum();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
    }
}
