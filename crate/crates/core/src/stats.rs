//! Jackknife estimators over independent samples (one sample per trajectory).

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

/// Below this many samples, standard-error bands are widened.
pub const SMALL_SAMPLE: usize = 100;

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    /// |value − target| in units of the standard error. Infinite when the
    /// error is zero and the values differ.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.value - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

/// Sample mean and its jackknife standard error. For the plain mean this
/// coincides with `s / sqrt(n)`.
pub fn jackknife_mean(samples: &[f64]) -> Estimate {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return Estimate {
            value: mean,
            std_error: 0.0,
        };
    }
    let ss: f64 = samples.iter().map(|x| (x - mean).powi(2)).sum();
    Estimate {
        value: mean,
        std_error: (ss / (n as f64 * (n as f64 - 1.0))).sqrt(),
    }
}

/// Jackknife estimate of a smooth function of per-sample means.
///
/// `columns[j][i]` is the j-th observable of sample i; `f` maps the vector of
/// means to the statistic.
pub fn jackknife_statistic(columns: &[Vec<f64>], f: impl Fn(&[f64]) -> f64) -> Estimate {
    let m = columns.len();
    let n = columns.first().map_or(0, Vec::len);
    let totals: Vec<f64> = columns.iter().map(|c| c.iter().sum()).collect();
    let means: Vec<f64> = totals.iter().map(|t| t / n as f64).collect();
    let value = f(&means);
    if n < 2 {
        return Estimate { value, std_error: 0.0 };
    }
    let mut loo = vec![0.0; m];
    let reps: Vec<f64> = (0..n)
        .map(|i| {
            for j in 0..m {
                loo[j] = (totals[j] - columns[j][i]) / (n as f64 - 1.0);
            }
            f(&loo)
        })
        .collect();
    let mean_rep = reps.iter().sum::<f64>() / n as f64;
    let var = reps.iter().map(|r| (r - mean_rep).powi(2)).sum::<f64>() * (n as f64 - 1.0) / n as f64;
    Estimate {
        value,
        std_error: var.sqrt(),
    }
}

/// Acceptance band in standard errors for `n` samples: `sigmas` for large
/// ensembles; for `n < SMALL_SAMPLE` the Student-t quantile with `n − 1`
/// degrees of freedom at the same two-sided coverage.
pub fn error_band(sigmas: f64, n: usize) -> f64 {
    if !(2..SMALL_SAMPLE).contains(&n) {
        return sigmas;
    }
    let p = Normal::standard().cdf(sigmas);
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid degrees of freedom");
    t.inverse_cdf(p).max(sigmas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mean_error_matches_classical() {
        let xs = [1.0, 2.0, 4.0, 7.0, 11.0];
        let e = jackknife_mean(&xs);
        assert_relative_eq!(e.value, 5.0);
        let s2 = xs.iter().map(|x| (x - 5.0f64).powi(2)).sum::<f64>() / 4.0;
        assert_relative_eq!(e.std_error, (s2 / 5.0).sqrt(), max_relative = 1e-14);
        let j = jackknife_statistic(&[xs.to_vec()], |m| m[0]);
        assert_relative_eq!(j.std_error, e.std_error, max_relative = 1e-12);
    }

    #[test]
    fn small_samples_widen_the_band() {
        assert_eq!(error_band(3.0, 2000), 3.0);
        let b = error_band(3.0, 10);
        assert!(b > 4.0 && b < 4.2, "{b}");
        assert!(error_band(3.0, 50) < b);
    }

    #[test]
    fn identical_samples_have_zero_error() {
        let e = jackknife_mean(&[0.3, 0.3]);
        assert_eq!(e.std_error, 0.0);
        assert_eq!(e.z_score(0.3), 0.0);
    }
}
