//! Finite-difference gradient verification.
//!
//! Central differences on a scalar loss, compared against analytic gradients
//! with a relative tolerance (plus an absolute floor for near-zero entries).
//! Piecewise-linear nonlinearities (ReLU, hinge) are not differentiable at
//! their kinks; when a coordinate fails at the base step the checker retries
//! with a smaller step and, if the two one-sided slopes genuinely disagree,
//! records a kink instead of a failure. Callers assert the kink fraction
//! stays small.

/// Outcome of checking one gradient vector against finite differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Coordinates compared (excluding kinks).
    pub checked: usize,
    /// Coordinates skipped as non-differentiable points.
    pub kinks: usize,
    /// Largest relative error among checked coordinates.
    pub max_rel_error: f64,
    /// Index and error of the worst coordinate, for diagnostics.
    pub worst: Option<(usize, f64, f64, f64)>,
}

impl GradCheckReport {
    pub fn kink_fraction(&self) -> f64 {
        let total = self.checked + self.kinks;
        if total == 0 {
            0.0
        } else {
            self.kinks as f64 / total as f64
        }
    }
}

fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

/// Checks `analytic` against central differences of `loss` at `params`.
///
/// `loss` must be a pure function of the parameter vector. `step` is the
/// central-difference step (1e-4 is a good default in f64); `tol` the
/// relative tolerance; `floor` the absolute scale below which differences
/// are compared absolutely rather than relatively.
pub fn check_gradient<F>(
    params: &mut [f64],
    analytic: &[f64],
    step: f64,
    tol: f64,
    floor: f64,
    mut loss: F,
) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len());
    let mut checked = 0usize;
    let mut kinks = 0usize;
    let mut max_rel = 0.0f64;
    let mut worst = None;

    for i in 0..params.len() {
        let orig = params[i];
        let mut numeric_at = |h: f64| {
            params[i] = orig + h;
            let fp = loss(params);
            params[i] = orig - h;
            let fm = loss(params);
            params[i] = orig;
            (fp - fm) / (2.0 * h)
        };

        let numeric = numeric_at(step);
        let mut err = rel_error(analytic[i], numeric, floor);
        if err > tol {
            // Retry with a finer step: truncation error shrinks as h², so a
            // genuine smooth mismatch will not improve by much while a
            // kink-free borderline case will.
            let fine = numeric_at(step / 8.0);
            let fine_err = rel_error(analytic[i], fine, floor);
            if fine_err <= tol {
                err = fine_err;
            } else {
                // One-sided slopes around the point; big disagreement means
                // we straddle a non-differentiable kink.
                params[i] = orig + step;
                let fp = loss(params);
                params[i] = orig - step;
                let fm = loss(params);
                params[i] = orig;
                let f0 = loss(params);
                let right = (fp - f0) / step;
                let left = (f0 - fm) / step;
                let slope_gap = rel_error(right, left, floor.max(1e-8));
                if slope_gap > 10.0 * tol {
                    kinks += 1;
                    continue;
                }
                err = fine_err;
            }
        }
        checked += 1;
        if err > max_rel {
            max_rel = err;
            worst = Some((i, analytic[i], numeric, err));
        }
    }

    GradCheckReport {
        checked,
        kinks,
        max_rel_error: max_rel,
        worst,
    }
}
