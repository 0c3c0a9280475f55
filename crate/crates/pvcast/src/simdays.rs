//! Similar-day retrieval: correlation-weighted K-nearest-neighbor search
//! over historical daily feature profiles.
//!
//! Each feature's weight is the absolute Pearson correlation between its
//! hourly series and the hourly output over the historical split. Day
//! distance is a weighted Euclidean norm over the 24-hour profiles, and
//! retrieval returns the K closest days with ties broken toward recency.

use chrono::NaiveDate;

use crate::data::{DayBatch, HourlyRecord, FEATURES, HOURS_PER_DAY};
use crate::error::{Error, Result};
use crate::num::Scalar;

/// Pearson correlation coefficient of two equal-length series.
pub fn pcc<F: Scalar>(xs: &[F], ys: &[F]) -> Result<F> {
    if xs.len() != ys.len() {
        return Err(Error::Shape { what: "correlation pair", expected: ys.len(), got: xs.len() });
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientData { what: "correlation points", need: 2, have: xs.len() });
    }
    let n = F::of(xs.len() as f64);
    let mean_x = xs.iter().copied().sum::<F>() / n;
    let mean_y = ys.iter().copied().sum::<F>() / n;
    let mut sxy = F::zero();
    let mut sxx = F::zero();
    let mut syy = F::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == F::zero() {
        return Err(Error::ZeroVariance("first correlation series"));
    }
    if syy == F::zero() {
        return Err(Error::ZeroVariance("second correlation series"));
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Per-feature retrieval weights, each the absolute correlation of that
/// feature with the output over the historical split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureWeights<F> {
    w: [F; FEATURES],
}

impl<F: Scalar> FeatureWeights<F> {
    /// Restores stored weights, e.g. from a checkpoint.
    pub fn from_parts(w: [F; FEATURES]) -> Result<Self> {
        for v in w {
            if !(v >= F::zero() && v <= F::one()) {
                return Err(Error::Parameter(format!(
                    "feature weight {} outside [0, 1]",
                    v
                )));
            }
        }
        Ok(FeatureWeights { w })
    }

    pub fn weights(&self) -> &[F; FEATURES] {
        &self.w
    }
}

/// Correlates each feature's hourly series with the hourly output.
/// Normalization does not change the result: correlation is invariant
/// under the positive affine map that min-max scaling applies.
pub fn fit_weights<F: Scalar>(records: &[HourlyRecord<F>]) -> Result<FeatureWeights<F>> {
    if records.is_empty() {
        return Err(Error::Empty("weight fitting records"));
    }
    let pv: Vec<F> = records.iter().map(|r| r.pvpg).collect();
    let mut w = [F::zero(); FEATURES];
    for k in 0..FEATURES {
        let xs: Vec<F> = records.iter().map(|r| r.features[k]).collect();
        w[k] = pcc(&xs, &pv)?.abs().min(F::one());
    }
    FeatureWeights::from_parts(w)
}

/// A retrieval candidate with its distance to the target profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayDistance<F> {
    pub date: NaiveDate,
    pub distance: F,
}

/// Weighted Euclidean distance between two 24-hour feature profiles:
/// the square root of the weighted sum, over features, of squared hourly
/// differences.
pub fn day_distance<F: Scalar>(
    target: &[HourlyRecord<F>],
    candidate: &[HourlyRecord<F>],
    weights: &FeatureWeights<F>,
) -> Result<F> {
    if target.len() != HOURS_PER_DAY || candidate.len() != HOURS_PER_DAY {
        return Err(Error::Shape {
            what: "day profile",
            expected: HOURS_PER_DAY,
            got: target.len().min(candidate.len()),
        });
    }
    let mut total = F::zero();
    for k in 0..FEATURES {
        let mut sq = F::zero();
        for h in 0..HOURS_PER_DAY {
            let d = target[h].features[k] - candidate[h].features[k];
            sq += d * d;
        }
        total += weights.w[k] * sq;
    }
    Ok(total.sqrt())
}

/// The `k` history days closest to the target profile, ascending by
/// distance. Exact ties rank the more recent day first; the target date is
/// excluded when present in the history.
pub fn select_similar_days<F: Scalar>(
    target_date: NaiveDate,
    target: &[HourlyRecord<F>],
    history: &[DayBatch<F>],
    weights: &FeatureWeights<F>,
    k: usize,
) -> Result<Vec<DayDistance<F>>> {
    if k == 0 {
        return Err(Error::Parameter("similar-day count must be at least 1".into()));
    }
    let mut scored = Vec::with_capacity(history.len());
    for day in history {
        if day.date() == target_date {
            continue;
        }
        let distance = day_distance(target, day.records(), weights)?;
        if !distance.is_finite() {
            return Err(Error::NonFinite("day distance"));
        }
        scored.push(DayDistance { date: day.date(), distance });
    }
    if scored.len() < k {
        return Err(Error::InsufficientData {
            what: "history days for retrieval",
            need: k,
            have: scored.len(),
        });
    }
    scored.sort_by(|a, b| {
        a.distance
            .partial_cmp(&b.distance)
            .expect("distances are finite")
            .then(b.date.cmp(&a.date))
    });
    scored.truncate(k);
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{group_days, synthesize_stream};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn history(days: usize, seed: u64) -> Vec<DayBatch<f64>> {
        let start = NaiveDate::from_ymd_opt(2014, 1, 1).unwrap();
        let records = synthesize_stream::<f64>(days, start, seed, None).unwrap();
        group_days(&records).days
    }

    fn uniform_weights() -> FeatureWeights<f64> {
        FeatureWeights::from_parts([1.0, 1.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn pcc_of_a_series_with_itself_is_one() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..50).map(|_| rng.gen()).collect();
        let negated: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((pcc(&xs, &xs).unwrap() - 1.0).abs() < 1e-12);
        assert!((pcc(&xs, &negated).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pcc_matches_one_pass_moment_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..20 {
            let xs: Vec<f64> = (0..100).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            let ys: Vec<f64> = (0..100).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            // E[xy] - E[x]E[y] form, algebraically equal, numerically distinct.
            let n = 100.0;
            let ex = xs.iter().sum::<f64>() / n;
            let ey = ys.iter().sum::<f64>() / n;
            let exy = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / n;
            let exx = xs.iter().map(|x| x * x).sum::<f64>() / n;
            let eyy = ys.iter().map(|y| y * y).sum::<f64>() / n;
            let want = (exy - ex * ey) / ((exx - ex * ex).sqrt() * (eyy - ey * ey).sqrt());
            assert!((pcc(&xs, &ys).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn pcc_is_invariant_under_positive_affine_transforms() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.gen_range(2..60);
            let xs: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            let ys: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            let (Ok(base), a, b) = (pcc(&xs, &ys), rng.gen::<f64>() * 9.0 + 0.01, rng.gen::<f64>() - 0.5) else {
                continue;
            };
            let xs_t: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            assert!((pcc(&xs_t, &ys).unwrap() - base).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_series_has_no_correlation() {
        let xs = [0.5f64; 10];
        let ys: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(pcc(&xs, &ys), Err(Error::ZeroVariance(_))));
        assert!(matches!(pcc(&ys, &xs), Err(Error::ZeroVariance(_))));
        assert!(pcc(&ys[..1], &ys[..1]).is_err());
    }

    #[test]
    fn perfectly_linear_feature_gets_full_weight() {
        let mut days = history(10, 4);
        let mut records: Vec<HourlyRecord<f64>> = Vec::new();
        for day in days.drain(..) {
            for mut rec in day.records().to_vec() {
                rec.pvpg = (0.002 * rec.features[1] + 0.1).clamp(0.0, 1.0);
                records.push(rec);
            }
        }
        let w = fit_weights(&records).unwrap();
        assert!((w.weights()[1] - 1.0).abs() < 1e-9);
        for v in w.weights() {
            assert!((0.0..=1.0).contains(v));
        }
    }

    #[test]
    fn independent_feature_gets_negligible_weight() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let start = NaiveDate::from_ymd_opt(2014, 1, 1).unwrap();
        let records: Vec<HourlyRecord<f64>> = (0..10_000)
            .map(|i| HourlyRecord {
                timestamp: start.and_hms_opt(0, 0, 0).unwrap() + chrono::Duration::hours(i),
                features: [rng.gen(), rng.gen(), rng.gen(), rng.gen()],
                pvpg: rng.gen(),
            })
            .collect();
        let w = fit_weights(&records).unwrap();
        for v in w.weights() {
            assert!(*v < 0.1, "weight {} on independent noise", v);
        }
    }

    #[test]
    fn distance_to_self_is_zero_and_masking_reduces_to_plain_l2() {
        let days = history(3, 7);
        let w = uniform_weights();
        assert_eq!(day_distance(days[0].records(), days[0].records(), &w).unwrap(), 0.0);

        let masked = FeatureWeights::from_parts([1.0, 0.0, 0.0, 0.0]).unwrap();
        let got = day_distance(days[0].records(), days[1].records(), &masked).unwrap();
        let mut sq = 0.0;
        for h in 0..HOURS_PER_DAY {
            let d = days[0].records()[h].features[0] - days[1].records()[h].features[0];
            sq += d * d;
        }
        assert!((got - sq.sqrt()).abs() < 1e-12);
        assert!(got > 0.0);
    }

    #[test]
    fn distance_matches_triple_loop_oracle_and_is_symmetric() {
        let days = history(8, 11);
        let w = FeatureWeights::from_parts([0.9, 0.2, 0.7, 0.4]).unwrap();
        for a in 0..days.len() {
            for b in 0..days.len() {
                let got = day_distance(days[a].records(), days[b].records(), &w).unwrap();
                let mut total = 0.0;
                for k in 0..FEATURES {
                    for h in 0..HOURS_PER_DAY {
                        let d = days[a].records()[h].features[k] - days[b].records()[h].features[k];
                        total += w.weights()[k] * d * d;
                    }
                }
                assert!((got - total.sqrt()).abs() < 1e-12);
                let back = day_distance(days[b].records(), days[a].records(), &w).unwrap();
                assert!((got - back).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn weight_scaling_scales_the_squared_contribution() {
        let days = history(2, 13);
        let base = FeatureWeights::from_parts([0.5, 0.5, 0.5, 0.5]).unwrap();
        let scaled = FeatureWeights::from_parts([1.0, 0.5, 0.5, 0.5]).unwrap();
        let masked = FeatureWeights::from_parts([0.5, 0.0, 0.0, 0.0]).unwrap();
        let d_base = day_distance(days[0].records(), days[1].records(), &base).unwrap();
        let d_scaled = day_distance(days[0].records(), days[1].records(), &scaled).unwrap();
        let contribution = day_distance(days[0].records(), days[1].records(), &masked).unwrap();
        // Doubling w_0 adds exactly one more copy of its squared term.
        let want = (d_base * d_base + contribution * contribution).sqrt();
        assert!((d_scaled - want).abs() < 1e-12);
    }

    #[test]
    fn retrieval_matches_a_full_sort_oracle() {
        let days = history(60, 17);
        let target = history(1, 99).remove(0);
        let w = FeatureWeights::from_parts([0.8, 0.3, 1.0, 0.6]).unwrap();
        let got = select_similar_days(target.date(), target.records(), &days, &w, 5).unwrap();

        let mut oracle: Vec<(f64, NaiveDate)> = days
            .iter()
            .map(|d| (day_distance(target.records(), d.records(), &w).unwrap(), d.date()))
            .collect();
        oracle.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(b.1.cmp(&a.1)));
        for (rank, picked) in got.iter().enumerate() {
            assert_eq!(picked.date, oracle[rank].1, "rank {}", rank);
            assert!((picked.distance - oracle[rank].0).abs() < 1e-12);
        }
        // Ascending distances, subset of history, exact size.
        for pair in got.windows(2) {
            assert!(pair[0].distance <= pair[1].distance);
        }
        assert_eq!(got.len(), 5);
    }

    #[test]
    fn requesting_every_day_returns_all_sorted() {
        let days = history(12, 19);
        let target = history(1, 5).remove(0);
        let w = uniform_weights();
        // One pool day shares the target's date and is never a candidate,
        // so eleven eligible days is the whole set.
        let got = select_similar_days(target.date(), target.records(), &days, &w, 11).unwrap();
        assert_eq!(got.len(), 11);
        assert!(got.iter().all(|p| p.date != target.date()));
        for pair in got.windows(2) {
            assert!(pair[0].distance <= pair[1].distance);
        }
        assert!(select_similar_days(target.date(), target.records(), &days, &w, 12).is_err());
    }

    #[test]
    fn planted_duplicate_wins_with_zero_distance() {
        let mut days = history(20, 23);
        let target = days[7].clone();
        // Target date not present in history; its profile duplicates day 7.
        days.remove(15);
        let w = uniform_weights();
        let fake_date = NaiveDate::from_ymd_opt(2020, 6, 1).unwrap();
        let got = select_similar_days(fake_date, target.records(), &days, &w, 1).unwrap();
        assert_eq!(got[0].date, target.date());
        assert_eq!(got[0].distance, 0.0);
    }

    #[test]
    fn exact_ties_prefer_the_recent_day() {
        let days = history(2, 29);
        // Two candidates with identical profiles on different dates.
        let mut later = days[0].clone();
        let shift = chrono::Days::new(40);
        let records: Vec<HourlyRecord<f64>> = later
            .records()
            .iter()
            .map(|r| HourlyRecord {
                timestamp: r.timestamp.checked_add_days(shift).unwrap(),
                features: r.features,
                pvpg: r.pvpg,
            })
            .collect();
        later = DayBatch::new(records).unwrap();
        let pool = vec![days[0].clone(), later.clone()];
        let w = uniform_weights();
        let got =
            select_similar_days(days[1].date(), days[1].records(), &pool, &w, 2).unwrap();
        assert_eq!(got[0].date, later.date());
        assert_eq!(got[0].distance, got[1].distance);
    }

    #[test]
    fn target_day_is_excluded_and_shortage_is_an_error() {
        let days = history(5, 31);
        let w = uniform_weights();
        let target = days[2].clone();
        let got = select_similar_days(target.date(), target.records(), &days, &w, 4).unwrap();
        assert!(got.iter().all(|d| d.date != target.date()));
        assert!(matches!(
            select_similar_days(target.date(), target.records(), &days, &w, 5),
            Err(Error::InsufficientData { .. })
        ));
        assert!(select_similar_days(target.date(), target.records(), &days, &w, 0).is_err());
    }

    #[test]
    fn weights_outside_unit_range_are_rejected() {
        assert!(FeatureWeights::from_parts([0.0, 1.0, 0.5, 1.1]).is_err());
        assert!(FeatureWeights::from_parts([0.0, -0.1, 0.5, 1.0]).is_err());
        assert!(FeatureWeights::from_parts([f64::NAN, 0.0, 0.0, 0.0]).is_err());
    }
}
