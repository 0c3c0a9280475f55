//! Forecast accuracy metrics: MAE, MSE and the R² score.
//!
//! All metrics run over paired forecast/observation slices of equal,
//! non-zero length. Scores cover every hour of a day, nights included;
//! daylight-only evaluation is a diagnostic filter applied by callers
//! before scoring, never a hidden default.

use crate::error::{Error, Result};
use crate::num::Scalar;

/// MAE, MSE and R² over one forecast/observation pairing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricBundle<F> {
    pub mae: F,
    pub mse: F,
    pub r2: F,
    pub n: usize,
}

fn check_pair<F: Scalar>(forecasts: &[F], observations: &[F]) -> Result<()> {
    if forecasts.is_empty() {
        return Err(Error::Empty("metric input"));
    }
    if forecasts.len() != observations.len() {
        return Err(Error::Shape {
            what: "metric pair",
            expected: observations.len(),
            got: forecasts.len(),
        });
    }
    Ok(())
}

/// Mean absolute residual.
pub fn mae<F: Scalar>(forecasts: &[F], observations: &[F]) -> Result<F> {
    check_pair(forecasts, observations)?;
    let total: F = forecasts.iter().zip(observations).map(|(&f, &o)| (f - o).abs()).sum();
    Ok(total / F::of(forecasts.len() as f64))
}

/// Mean squared residual.
pub fn mse<F: Scalar>(forecasts: &[F], observations: &[F]) -> Result<F> {
    check_pair(forecasts, observations)?;
    let total: F = forecasts
        .iter()
        .zip(observations)
        .map(|(&f, &o)| {
            let r = f - o;
            r * r
        })
        .sum();
    Ok(total / F::of(forecasts.len() as f64))
}

/// Coefficient of determination, `1 - SS_res / SS_tot`. Undefined when the
/// observations are constant.
pub fn r2<F: Scalar>(forecasts: &[F], observations: &[F]) -> Result<F> {
    check_pair(forecasts, observations)?;
    let n = F::of(observations.len() as f64);
    let mean: F = observations.iter().copied().sum::<F>() / n;
    let ss_tot: F = observations
        .iter()
        .map(|&o| {
            let d = o - mean;
            d * d
        })
        .sum();
    if ss_tot == F::zero() {
        return Err(Error::ZeroVariance("observations"));
    }
    let ss_res: F = forecasts
        .iter()
        .zip(observations)
        .map(|(&f, &o)| {
            let r = f - o;
            r * r
        })
        .sum();
    Ok(F::one() - ss_res / ss_tot)
}

/// All three metrics at once.
pub fn bundle<F: Scalar>(forecasts: &[F], observations: &[F]) -> Result<MetricBundle<F>> {
    Ok(MetricBundle {
        mae: mae(forecasts, observations)?,
        mse: mse(forecasts, observations)?,
        r2: r2(forecasts, observations)?,
        n: forecasts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn perfect_forecast_scores_zero_error_and_unit_r2() {
        let obs = [0.1, 0.4, 0.9, 0.3];
        let b = bundle(&obs, &obs).unwrap();
        assert_eq!(b.mae, 0.0);
        assert_eq!(b.mse, 0.0);
        assert_eq!(b.r2, 1.0);
        assert_eq!(b.n, 4);
    }

    #[test]
    fn constant_residual_values() {
        let obs = [0.2, 0.5, 0.8];
        let plus: Vec<f64> = obs.iter().map(|o| o + 0.05).collect();
        assert!((mae(&plus, &obs).unwrap() - 0.05).abs() < 1e-15);
        let plus: Vec<f64> = obs.iter().map(|o| o + 0.1).collect();
        assert!((mse(&plus, &obs).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_case() {
        let pred = [0.5f64, 0.25];
        let obs = [0.25f64, 0.75];
        assert!((mae(&pred, &obs).unwrap() - 0.375).abs() < 1e-15);
        assert!((mse(&pred, &obs).unwrap() - 0.15625).abs() < 1e-15);
        // obs mean 0.5, ss_tot 0.125, ss_res 0.3125
        assert!((r2(&pred, &obs).unwrap() - (1.0 - 0.3125 / 0.125)).abs() < 1e-15);
    }

    #[test]
    fn mean_forecast_has_zero_r2() {
        let obs = [0.1, 0.2, 0.7, 0.4, 0.6];
        let mean = obs.iter().sum::<f64>() / obs.len() as f64;
        let pred = vec![mean; obs.len()];
        assert!(r2(&pred, &obs).unwrap().abs() < 1e-12);
    }

    #[test]
    fn constant_observations_make_r2_undefined() {
        let obs = [0.3; 6];
        let pred = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        assert!(matches!(r2(&pred, &obs), Err(Error::ZeroVariance(_))));
        // MAE and MSE stay defined.
        assert!(mae(&pred, &obs).is_ok());
    }

    #[test]
    fn empty_and_mismatched_inputs_error() {
        let empty: [f64; 0] = [];
        assert!(matches!(mae(&empty, &empty), Err(Error::Empty(_))));
        assert!(matches!(mse(&[0.1], &[0.1, 0.2]), Err(Error::Shape { .. })));
    }

    #[test]
    fn matches_naive_loop_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.gen_range(1..40);
            let pred: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let obs: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let mut abs_sum = 0.0;
            let mut sq_sum = 0.0;
            for i in 0..n {
                abs_sum += (pred[i] - obs[i]).abs();
                sq_sum += (pred[i] - obs[i]) * (pred[i] - obs[i]);
            }
            assert!((mae(&pred, &obs).unwrap() - abs_sum / n as f64).abs() < 1e-12);
            assert!((mse(&pred, &obs).unwrap() - sq_sum / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn metrics_are_symmetric_and_jensen_ordered() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.gen_range(2..30);
            let a: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            assert_eq!(mae(&a, &b).unwrap(), mae(&b, &a).unwrap());
            assert_eq!(mse(&a, &b).unwrap(), mse(&b, &a).unwrap());
            let m = mae(&a, &b).unwrap();
            assert!(m * m <= mse(&a, &b).unwrap() + 1e-12);
        }
    }

    #[test]
    fn r2_is_invariant_under_shared_affine_transforms() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for _ in 0..100 {
            let n = rng.gen_range(3..25);
            let pred: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            let obs: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            if r2(&pred, &obs).is_err() {
                continue;
            }
            let a = rng.gen::<f64>() * 5.0 + 0.1;
            let b = rng.gen::<f64>() * 10.0 - 5.0;
            let pred_t: Vec<f64> = pred.iter().map(|x| a * x + b).collect();
            let obs_t: Vec<f64> = obs.iter().map(|x| a * x + b).collect();
            let lhs = r2(&pred, &obs).unwrap();
            let rhs = r2(&pred_t, &obs_t).unwrap();
            assert!((lhs - rhs).abs() < 1e-9, "{} vs {}", lhs, rhs);
        }
    }
}
