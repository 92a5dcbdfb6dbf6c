use rand::seq::index::sample;
use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Coordinate with the largest error.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Denominator floor of [`relative_error`]. Central differences with
/// `h = 1e-5` carry roughly 1e-11 of roundoff on an O(1) loss, so smaller
/// gradients cannot be resolved to a meaningful relative accuracy.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// `|a − n| / max(REL_ERROR_FLOOR, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares `analytic` against central differences of `loss` around
/// `theta` on `samples` coordinates drawn without replacement (all of them
/// when `samples >= theta.len()`).
pub fn grad_check<F, R>(
    mut loss: F,
    theta: &[f64],
    analytic: &[f64],
    samples: usize,
    h: f64,
    rng: &mut R,
) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
    R: Rng,
{
    assert_eq!(theta.len(), analytic.len(), "gradient length mismatch");
    let coords: Vec<usize> = if samples >= theta.len() {
        (0..theta.len()).collect()
    } else {
        let mut c = sample(rng, theta.len(), samples).into_vec();
        c.sort_unstable();
        c
    };
    let mut point = theta.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: coords.len(),
    };
    for &i in &coords {
        let original = point[i];
        point[i] = original + h;
        let plus = loss(&point);
        point[i] = original - h;
        let minus = loss(&point);
        point[i] = original;
        let numeric = (plus - minus) / (2.0 * h);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_error || err.is_nan() {
            report = GradCheckReport {
                max_rel_error: if err.is_nan() { f64::INFINITY } else { err },
                worst_index: i,
                analytic: analytic[i],
                numeric,
                checked: coords.len(),
            };
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_loss_is_exact() {
        let x = [0.5, -2.0, 3.25, 1.5];
        let w = [1.0, 2.0, -0.5, 4.0];
        let loss = |w: &[f64]| w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let report = grad_check(loss, &w, &x, usize::MAX, 1e-5, &mut rng);
        assert!(report.max_rel_error < 1e-9, "{report:?}");
        assert_eq!(report.checked, 4);
    }

    #[test]
    fn detects_wrong_gradient() {
        let loss = |w: &[f64]| w[0] * w[0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let report = grad_check(loss, &[1.0], &[1.0], 1, 1e-5, &mut rng);
        assert!(report.max_rel_error > 0.3);
    }

    #[test]
    fn samples_subset_of_coordinates() {
        let loss = |w: &[f64]| w.iter().sum::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let report = grad_check(loss, &[0.0; 10], &[1.0; 10], 3, 1e-5, &mut rng);
        assert_eq!(report.checked, 3);
    }
}
