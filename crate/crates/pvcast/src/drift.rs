//! Daily batch errors, the frozen error threshold and the sliding-window
//! drift detector.
//!
//! The detector counts consecutive days whose batch error exceeds a fixed
//! threshold estimated once from a reference period. Reaching the
//! confidence cap confirms drift; any sub-threshold day resets the count.

use std::fmt;

use chrono::NaiveDate;

use crate::data::HOURS_PER_DAY;
use crate::error::{Error, Result};
use crate::num::Scalar;

/// Mean squared error over one day's 24 forecast/observation pairs.
pub fn batch_error<F: Scalar>(forecasts: &[F], observations: &[F]) -> Result<F> {
    if forecasts.len() != HOURS_PER_DAY || observations.len() != HOURS_PER_DAY {
        return Err(Error::Shape {
            what: "daily batch",
            expected: HOURS_PER_DAY,
            got: forecasts.len().min(observations.len()),
        });
    }
    let mut total = F::zero();
    for (f, o) in forecasts.iter().zip(observations) {
        let r = *f - *o;
        total += r * r;
    }
    Ok(total / F::of(HOURS_PER_DAY as f64))
}

/// Error threshold frozen after estimation: reference mean plus three
/// reference standard deviations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold<F> {
    mean: F,
    std: F,
    threshold: F,
}

impl<F: Scalar> Threshold<F> {
    /// Restores a stored threshold, e.g. from a checkpoint.
    pub fn from_parts(mean: F, std: F, threshold: F) -> Result<Self> {
        if !(mean.is_finite() && std.is_finite() && threshold.is_finite()) {
            return Err(Error::NonFinite("threshold"));
        }
        if std < F::zero() || threshold < mean {
            return Err(Error::Parameter(format!(
                "threshold {} below reference mean {}",
                threshold, mean
            )));
        }
        Ok(Threshold { mean, std, threshold })
    }

    pub fn mean(&self) -> F {
        self.mean
    }

    pub fn std(&self) -> F {
        self.std
    }

    pub fn value(&self) -> F {
        self.threshold
    }

    /// Strict exceedance test; a value exactly on the threshold does not
    /// count.
    pub fn exceeded_by(&self, error: F) -> bool {
        error > self.threshold
    }
}

/// Population mean and standard deviation of the reference errors, combined
/// into `mean + 3 * std`.
pub fn estimate_threshold<F: Scalar>(reference: &[F]) -> Result<Threshold<F>> {
    if reference.len() < 2 {
        return Err(Error::InsufficientData {
            what: "reference errors",
            need: 2,
            have: reference.len(),
        });
    }
    if reference.iter().any(|e| !e.is_finite()) {
        return Err(Error::NonFinite("reference errors"));
    }
    let n = F::of(reference.len() as f64);
    let mean = reference.iter().copied().sum::<F>() / n;
    let var = reference
        .iter()
        .map(|&e| {
            let d = e - mean;
            d * d
        })
        .sum::<F>()
        / n;
    let std = var.sqrt();
    Threshold::from_parts(mean, std, mean + F::of(3.0) * std)
}

/// What one detector step observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorEvent {
    /// Below threshold with nothing pending.
    None,
    /// Exceedance counted, confidence below the cap.
    Warning,
    /// Confidence reached the cap; monitoring stops until reset.
    DriftConfirmed,
    /// Below threshold after pending warnings; count restarted.
    Cleared,
}

impl fmt::Display for DetectorEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DetectorEvent::None => "none",
            DetectorEvent::Warning => "warning",
            DetectorEvent::DriftConfirmed => "drift_confirmed",
            DetectorEvent::Cleared => "cleared",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorStatus {
    Monitoring,
    DriftConfirmed,
}

/// Consecutive-exceedance counter with a confidence cap and a log of the
/// dates that raised warnings.
#[derive(Debug, Clone)]
pub struct DriftDetector {
    confidence: u32,
    c_max: u32,
    status: DetectorStatus,
    warnings: Vec<NaiveDate>,
}

impl DriftDetector {
    pub fn new(c_max: u32) -> Result<Self> {
        if c_max == 0 {
            return Err(Error::Parameter("confidence cap must be at least 1".into()));
        }
        Ok(DriftDetector {
            confidence: 0,
            c_max,
            status: DetectorStatus::Monitoring,
            warnings: Vec::new(),
        })
    }

    pub fn status(&self) -> DetectorStatus {
        self.status
    }

    pub fn confidence(&self) -> u32 {
        self.confidence
    }

    pub fn c_max(&self) -> u32 {
        self.c_max
    }

    pub fn warnings(&self) -> &[NaiveDate] {
        &self.warnings
    }

    /// Feeds one day's batch error. Stepping a confirmed detector is a
    /// protocol violation; callers must `reset` first.
    pub fn step<F: Scalar>(
        &mut self,
        date: NaiveDate,
        threshold: &Threshold<F>,
        error: F,
    ) -> Result<DetectorEvent> {
        if self.status == DetectorStatus::DriftConfirmed {
            return Err(Error::State(format!(
                "detector already confirmed drift; reset before stepping {}",
                date
            )));
        }
        if threshold.exceeded_by(error) {
            self.confidence += 1;
            self.warnings.push(date);
            if self.confidence >= self.c_max {
                self.status = DetectorStatus::DriftConfirmed;
                return Ok(DetectorEvent::DriftConfirmed);
            }
            return Ok(DetectorEvent::Warning);
        }
        let event = if self.confidence > 0 { DetectorEvent::Cleared } else { DetectorEvent::None };
        self.confidence = 0;
        Ok(event)
    }

    /// Back to monitoring with a zero count and an empty warning log. The
    /// threshold lives outside the detector and is untouched by design.
    pub fn reset(&mut self) {
        self.confidence = 0;
        self.status = DetectorStatus::Monitoring;
        self.warnings.clear();
    }
}
