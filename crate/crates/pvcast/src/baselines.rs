//! Comparison forecasters: persistence and a similar-day KNN regressor.

use std::fmt;

use chrono::NaiveDate;

use crate::data::{DayBatch, HourlyRecord, HOURS_PER_DAY};
use crate::error::Result;
use crate::num::Scalar;
use crate::simdays::{select_similar_days, FeatureWeights};

/// Tag distinguishing baseline tracks in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineModel {
    Persistence,
    Knn,
}

impl fmt::Display for BaselineModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineModel::Persistence => "persistence",
            BaselineModel::Knn => "knn",
        })
    }
}

/// Repeats the previous day's observations, hour for hour and bit for bit.
/// Completeness of the day is enforced by [`DayBatch`] itself.
pub fn persistence_forecast<F: Scalar>(previous: &DayBatch<F>) -> Vec<F> {
    previous.pvpg()
}

/// Mean observed output, hour by hour, over the `k` most similar history
/// days. Plain unweighted averaging keeps the baseline canonical.
pub fn knn_forecast<F: Scalar>(
    target_date: NaiveDate,
    target: &[HourlyRecord<F>],
    history: &[DayBatch<F>],
    weights: &FeatureWeights<F>,
    k: usize,
) -> Result<Vec<F>> {
    let picked = select_similar_days(target_date, target, history, weights, k)?;
    let mut forecast = vec![F::zero(); HOURS_PER_DAY];
    for neighbor in &picked {
        let day = history
            .iter()
            .find(|d| d.date() == neighbor.date)
            .expect("retrieval returns history members");
        for (h, rec) in day.records().iter().enumerate() {
            forecast[h] += rec.pvpg;
        }
    }
    let n = F::of(picked.len() as f64);
    for v in &mut forecast {
        *v /= n;
    }
    Ok(forecast)
}
