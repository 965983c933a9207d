//! Localization metrics: per-point errors, MLE, error CDFs.

use crate::error::{Error, Result};
use crate::geom::Vec2;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub per_point_error: Vec<f64>,
    pub mle: f64,
    pub cdf: Vec<(f64, f64)>,
    pub params_echo: serde_json::Value,
}

pub fn per_point_errors(est: &[Vec2], truth: &[Vec2]) -> Result<Vec<f64>> {
    if est.len() != truth.len() {
        return Err(Error::dimension(format!(
            "{} estimates vs {} ground-truth points",
            est.len(),
            truth.len()
        )));
    }
    Ok(est.iter().zip(truth).map(|(e, t)| e.distance(*t)).collect())
}

/// Mean Euclidean error over the unlabeled samples, meters.
pub fn mean_localization_error(est: &[Vec2], truth: &[Vec2]) -> Result<f64> {
    let errs = per_point_errors(est, truth)?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Empirical CDF on a threshold grid: fraction of errors <= t.
pub fn error_cdf(errors: &[f64], thresholds: &[f64]) -> Result<Vec<(f64, f64)>> {
    if errors.is_empty() {
        return Err(Error::validation("error_cdf: empty error list"));
    }
    let n = errors.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| (t, errors.iter().filter(|&&e| e <= t).count() as f64 / n))
        .collect())
}

/// Default CDF grid: 0 to 50 m in 0.5 m steps.
pub fn default_thresholds() -> Vec<f64> {
    (0..=100).map(|i| i as f64 * 0.5).collect()
}

pub fn build_report(
    method: &str,
    est: &[Vec2],
    truth: &[Vec2],
    params_echo: serde_json::Value,
) -> Result<EvalReport> {
    let per_point_error = per_point_errors(est, truth)?;
    let mle = per_point_error.iter().sum::<f64>() / per_point_error.len() as f64;
    let cdf = error_cdf(&per_point_error, &default_thresholds())?;
    Ok(EvalReport {
        method: method.to_string(),
        per_point_error,
        mle,
        cdf,
        params_echo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mle_zero_for_exact_estimates() {
        let pts = vec![Vec2::new(1.0, 2.0), Vec2::new(-1.0, 0.0)];
        assert_relative_eq!(mean_localization_error(&pts, &pts).unwrap(), 0.0);
    }

    #[test]
    fn mle_three_four_five() {
        let est = vec![Vec2::new(3.0, 4.0)];
        let truth = vec![Vec2::new(0.0, 0.0)];
        assert_relative_eq!(mean_localization_error(&est, &truth).unwrap(), 5.0);
    }

    #[test]
    fn mle_is_the_mean() {
        let est = vec![Vec2::new(2.0, 0.0), Vec2::new(0.0, 4.0)];
        let truth = vec![Vec2::new(0.0, 0.0), Vec2::new(0.0, 0.0)];
        assert_relative_eq!(mean_localization_error(&est, &truth).unwrap(), 3.0);
    }

    #[test]
    fn mle_count_mismatch_is_error() {
        let est = vec![Vec2::new(0.0, 0.0)];
        assert!(mean_localization_error(&est, &[]).is_err());
    }

    #[test]
    fn mle_invariant_under_common_rigid_transform() {
        let est = vec![Vec2::new(1.0, 2.0), Vec2::new(3.0, -1.0)];
        let truth = vec![Vec2::new(0.0, 0.0), Vec2::new(2.0, 2.0)];
        let base = mean_localization_error(&est, &truth).unwrap();
        let theta: f64 = 0.77;
        let rot = |p: &Vec2| {
            Vec2::new(
                p.x * theta.cos() - p.y * theta.sin() + 5.0,
                p.x * theta.sin() + p.y * theta.cos() - 2.0,
            )
        };
        let est2: Vec<Vec2> = est.iter().map(rot).collect();
        let truth2: Vec<Vec2> = truth.iter().map(rot).collect();
        assert_relative_eq!(
            mean_localization_error(&est2, &truth2).unwrap(),
            base,
            epsilon = 1e-12
        );
    }

    #[test]
    fn cdf_all_zero_errors() {
        let cdf = error_cdf(&[0.0, 0.0], &[0.0, 1.0, 10.0]).unwrap();
        for (_, f) in cdf {
            assert_relative_eq!(f, 1.0);
        }
    }

    #[test]
    fn cdf_half_at_midpoint() {
        let cdf = error_cdf(&[1.0, 2.0, 3.0, 4.0], &[2.5]).unwrap();
        assert_relative_eq!(cdf[0].1, 0.5);
    }

    #[test]
    fn cdf_nondecreasing_and_reaches_one() {
        let errors = [0.3, 7.0, 2.2, 49.0, 1.1];
        let cdf = error_cdf(&errors, &default_thresholds()).unwrap();
        let mut prev = 0.0;
        for &(_, f) in &cdf {
            assert!(f >= prev);
            assert!((0.0..=1.0).contains(&f));
            prev = f;
        }
        assert_relative_eq!(cdf.last().unwrap().1, 1.0);
    }

    #[test]
    fn empty_errors_rejected() {
        assert!(error_cdf(&[], &[1.0]).is_err());
    }
}
