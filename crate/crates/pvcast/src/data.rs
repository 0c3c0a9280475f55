//! Hourly records, day batches, normalization, sequence windows and the
//! synthetic stream generator.
//!
//! All tabular I/O uses one CSV schema: a timestamp column, four numeric
//! weather features and the photovoltaic output `pvpg`, which is already
//! scaled to `[0, 1]` by installed capacity. Records are strictly
//! increasing in time; days are complete when all 24 hours are present.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Number of weather features per record.
pub const FEATURES: usize = 4;

/// Records per complete day.
pub const HOURS_PER_DAY: usize = 24;

/// Feature column names, in CSV order.
pub const FEATURE_NAMES: [&str; FEATURES] =
    ["rel_humidity", "temperature", "surface_solar_rad", "top_net_solar_rad"];

/// Expected CSV header line.
pub const CSV_HEADER: &str =
    "timestamp,rel_humidity,temperature,surface_solar_rad,top_net_solar_rad,pvpg";

const TIMESTAMP_FMT: &str = "%Y-%m-%dT%H:%M";

/// One hour of weather features and observed PV output.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyRecord<F> {
    pub timestamp: NaiveDateTime,
    pub features: [F; FEATURES],
    pub pvpg: F,
}

impl<F: Scalar> HourlyRecord<F> {
    pub fn date(&self) -> NaiveDate {
        self.timestamp.date()
    }

    pub fn hour(&self) -> usize {
        self.timestamp.hour() as usize
    }
}

/// A complete day: 24 hourly records sharing one date, hours 0 through 23.
#[derive(Debug, Clone, PartialEq)]
pub struct DayBatch<F> {
    date: NaiveDate,
    records: Vec<HourlyRecord<F>>,
}

impl<F: Scalar> DayBatch<F> {
    pub fn new(records: Vec<HourlyRecord<F>>) -> Result<Self> {
        if records.len() != HOURS_PER_DAY {
            return Err(Error::Shape {
                what: "day batch records",
                expected: HOURS_PER_DAY,
                got: records.len(),
            });
        }
        let date = records[0].date();
        for (h, rec) in records.iter().enumerate() {
            if rec.date() != date || rec.hour() != h || rec.timestamp.minute() != 0 {
                return Err(Error::Parameter(format!(
                    "day batch for {} requires hour {} at position {}, got {}",
                    date, h, h, rec.timestamp
                )));
            }
        }
        Ok(DayBatch { date, records })
    }

    pub fn date(&self) -> NaiveDate {
        self.date
    }

    pub fn records(&self) -> &[HourlyRecord<F>] {
        &self.records
    }

    /// Observed output for each hour of the day.
    pub fn pvpg(&self) -> Vec<F> {
        self.records.iter().map(|r| r.pvpg).collect()
    }
}

/// Complete days extracted from a record run, plus dates that were dropped
/// for missing hours.
#[derive(Debug)]
pub struct GroupReport<F> {
    pub days: Vec<DayBatch<F>>,
    pub partial: Vec<(NaiveDate, usize)>,
}

/// Splits a strictly increasing record run into complete days. Dates with
/// missing or misaligned hours are reported, not silently kept.
pub fn group_days<F: Scalar>(records: &[HourlyRecord<F>]) -> GroupReport<F> {
    let mut days = Vec::new();
    let mut partial = Vec::new();
    let mut i = 0;
    while i < records.len() {
        let date = records[i].date();
        let mut j = i;
        while j < records.len() && records[j].date() == date {
            j += 1;
        }
        match DayBatch::new(records[i..j].to_vec()) {
            Ok(day) => days.push(day),
            Err(_) => partial.push((date, j - i)),
        }
        i = j;
    }
    GroupReport { days, partial }
}

/// Per-feature min-max scaling fitted once on historical data.
///
/// Streaming values outside the fitted range are mapped outside `[0, 1]`
/// rather than clamped, so genuinely unseen weather stays visible to the
/// model. The target column is assumed pre-scaled and passes through.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer<F> {
    mins: [F; FEATURES],
    maxs: [F; FEATURES],
}

impl<F: Scalar> Normalizer<F> {
    /// Fits feature ranges. Fails if any feature is constant, because the
    /// scale would be undefined.
    pub fn fit(records: &[HourlyRecord<F>]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Empty("normalizer fit records"));
        }
        let mut mins = records[0].features;
        let mut maxs = records[0].features;
        for rec in records {
            for k in 0..FEATURES {
                mins[k] = mins[k].min(rec.features[k]);
                maxs[k] = maxs[k].max(rec.features[k]);
            }
        }
        Self::from_parts(mins, maxs)
    }

    /// Rebuilds a normalizer from stored ranges, e.g. a checkpoint.
    pub fn from_parts(mins: [F; FEATURES], maxs: [F; FEATURES]) -> Result<Self> {
        for k in 0..FEATURES {
            if !(maxs[k] > mins[k]) {
                return Err(Error::ZeroVariance(FEATURE_NAMES[k]));
            }
        }
        Ok(Normalizer { mins, maxs })
    }

    pub fn mins(&self) -> &[F; FEATURES] {
        &self.mins
    }

    pub fn maxs(&self) -> &[F; FEATURES] {
        &self.maxs
    }

    /// Scales one record's features; `pvpg` is untouched.
    pub fn normalize(&self, rec: &HourlyRecord<F>) -> HourlyRecord<F> {
        let mut features = [F::zero(); FEATURES];
        for k in 0..FEATURES {
            features[k] = (rec.features[k] - self.mins[k]) / (self.maxs[k] - self.mins[k]);
        }
        HourlyRecord { timestamp: rec.timestamp, features, pvpg: rec.pvpg }
    }

    pub fn normalize_all(&self, records: &[HourlyRecord<F>]) -> Vec<HourlyRecord<F>> {
        records.iter().map(|r| self.normalize(r)).collect()
    }
}

/// A feature window of fixed length and the observed output at its last hour.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample<F> {
    pub window: Vec<[F; FEATURES]>,
    pub target: F,
}

/// Builds every full-length window over an hourly-contiguous record run.
/// The first `time_step - 1` records only serve as context, so the result
/// holds `records.len() - time_step + 1` samples.
pub fn make_samples<F: Scalar>(
    records: &[HourlyRecord<F>],
    time_step: usize,
) -> Result<Vec<SequenceSample<F>>> {
    if time_step == 0 {
        return Err(Error::Parameter("time step must be at least 1".into()));
    }
    if records.len() < time_step {
        return Err(Error::InsufficientData {
            what: "records for one window",
            need: time_step,
            have: records.len(),
        });
    }
    for pair in records.windows(2) {
        let gap = pair[1].timestamp - pair[0].timestamp;
        if gap != chrono::Duration::hours(1) {
            return Err(Error::Parameter(format!(
                "records must be hourly-contiguous, gap at {}",
                pair[1].timestamp
            )));
        }
    }
    let mut samples = Vec::with_capacity(records.len() - time_step + 1);
    for i in (time_step - 1)..records.len() {
        let window = records[i + 1 - time_step..=i].iter().map(|r| r.features).collect();
        samples.push(SequenceSample { window, target: records[i].pvpg });
    }
    Ok(samples)
}

/// Windows covering every hour of a day, warmed up with the `time_step - 1`
/// records that immediately precede it. Returns exactly 24 samples.
pub fn day_samples<F: Scalar>(
    warmup: &[HourlyRecord<F>],
    day: &[HourlyRecord<F>],
    time_step: usize,
) -> Result<Vec<SequenceSample<F>>> {
    if warmup.len() + 1 != time_step {
        return Err(Error::Shape {
            what: "warmup records",
            expected: time_step.saturating_sub(1),
            got: warmup.len(),
        });
    }
    let mut run = warmup.to_vec();
    run.extend_from_slice(day);
    make_samples(&run, time_step)
}

/// Step change applied to the generated output from `start_day` onward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftSpec {
    /// First affected day, counted from the start of the generated range.
    pub start_day: usize,
    /// Multiplier on observed output, strictly between 0 and 1.
    pub bias: f64,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

// Zero outside 7..=17 by construction; the sine endpoints at 6 and 18
// would otherwise leak sin(0)/sin(pi) rounding dust into the night hours.
fn daylight(hour: usize) -> f64 {
    if (7..=17).contains(&hour) {
        (std::f64::consts::PI * (hour as f64 - 6.0) / 12.0).sin()
    } else {
        0.0
    }
}

/// Generates `days` complete days of plausible plant data starting at
/// `start`.
///
/// A slow seasonal cycle modulates insolation and an hourly AR(1) cloud
/// state drives the sky. The feature columns are a day-ahead weather
/// forecast of that sky: each day the forecast misjudges the cloud state by
/// one day-level offset, so on a bad-forecast day the radiation,
/// temperature and humidity columns are consistently wrong all day while
/// the output still follows the real sky. Output additionally carries a
/// much slower daily AR(1) efficiency wander (soiling, degradation, sensor
/// drift) that touches none of the weather columns, plus multiplicative
/// daytime observation noise. Nighttime radiation and output are exactly
/// zero. With a [`DriftSpec`], output from `start_day` onward is the clean
/// value times `bias` and nothing else changes, so a drifted stream is an
/// exact per-value scaling of the clean stream generated from the same
/// seed.
pub fn synthesize_stream<F: Scalar>(
    days: usize,
    start: NaiveDate,
    seed: u64,
    drift: Option<DriftSpec>,
) -> Result<Vec<HourlyRecord<F>>> {
    if days == 0 {
        return Err(Error::Parameter("day count must be at least 1".into()));
    }
    if let Some(spec) = drift {
        if !(spec.bias > 0.0 && spec.bias < 1.0) {
            return Err(Error::Parameter(format!(
                "drift bias must lie strictly between 0 and 1, got {}",
                spec.bias
            )));
        }
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let cloud_step = Normal::new(0.0, 0.3).expect("valid sigma");
    let wander_step = Normal::new(0.0, 0.016).expect("valid sigma");
    let forecast_shift = Normal::new(0.0, 0.10).expect("valid sigma");
    let obs_noise = Normal::new(0.0, 0.035).expect("valid sigma");
    let rad_noise = Normal::new(0.0, 8.0).expect("valid sigma");
    let temp_noise = Normal::new(0.0, 0.5).expect("valid sigma");
    let rh_noise = Normal::new(0.0, 2.0).expect("valid sigma");

    let mut records = Vec::with_capacity(days * HOURS_PER_DAY);
    let mut cloud = -1.0f64;
    let mut wander = 1.0f64;
    for d in 0..days {
        let date = start
            .checked_add_days(chrono::Days::new(d as u64))
            .ok_or_else(|| Error::Parameter("date range overflow".into()))?;
        let season = 1.0 + 0.08 * (std::f64::consts::TAU * d as f64 / 120.0).sin();
        // Efficiency moves once per day inside a hard +/-5% band with a
        // roughly two-week half-life: yesterday says far more about today
        // than last year does, yet the band caps the worst error any
        // shift-free day can show well below what bad-forecast days already
        // put into a mean + 3 std ceiling.
        wander = (1.0 + 0.95 * (wander - 1.0) + wander_step.sample(&mut rng)).clamp(0.95, 1.05);
        // One forecast run per day: every weather column misjudges the
        // cloud state by the same offset for the whole day. Offsets are
        // independent across days, so a foul forecast never spans enough
        // consecutive days to imitate a persistent shift.
        let misjudged = forecast_shift.sample(&mut rng);
        for h in 0..HOURS_PER_DAY {
            cloud = 0.97 * cloud + cloud_step.sample(&mut rng);
            let sun = daylight(h);
            let clear = 1.0 - 0.85 * sigmoid(cloud);
            let clear_fc = 1.0 - 0.85 * sigmoid(cloud + misjudged);
            let (surface, top, pv) = if sun > 0.0 {
                let top = 1000.0 * season * sun;
                let surface =
                    (800.0 * season * sun * clear_fc + rad_noise.sample(&mut rng)).max(0.0);
                let raw = season * sun * clear * wander * (1.0 + obs_noise.sample(&mut rng));
                (surface, top, raw.clamp(0.0, 1.0))
            } else {
                (0.0, 0.0, 0.0)
            };
            let temperature =
                12.0 + 10.0 * season * sun * (0.5 + 0.5 * clear_fc) + temp_noise.sample(&mut rng);
            let rel_humidity =
                (70.0 - 25.0 * sun * clear_fc + rh_noise.sample(&mut rng)).clamp(5.0, 100.0);
            let pv = match drift {
                Some(spec) if d >= spec.start_day => pv * spec.bias,
                _ => pv,
            };
            let timestamp = date.and_hms_opt(h as u32, 0, 0).expect("hour in range");
            records.push(HourlyRecord {
                timestamp,
                features: [
                    F::of(rel_humidity),
                    F::of(temperature),
                    F::of(surface),
                    F::of(top),
                ],
                pvpg: F::of(pv),
            });
        }
    }
    // Consume one draw so distinct day counts cannot alias; keeps the
    // generator's behaviour a pure function of (days, start, seed, drift).
    let _: f64 = rng.gen();
    Ok(records)
}

/// Writes records in the canonical CSV schema. Values use the shortest
/// decimal form that round-trips, so written files re-read bit-exactly.
pub fn write_csv<F: Scalar>(path: &Path, records: &[HourlyRecord<F>]) -> Result<()> {
    let mut out = String::with_capacity(records.len() * 64 + CSV_HEADER.len() + 1);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for rec in records {
        let _ = write!(
            out,
            "{},{},{},{},{},{}\n",
            rec.timestamp.format(TIMESTAMP_FMT),
            rec.features[0],
            rec.features[1],
            rec.features[2],
            rec.features[3],
            rec.pvpg
        );
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads and validates a record file: exact header, six fields per row,
/// whole-hour timestamps in strictly increasing order, finite features and
/// an output inside `[0, 1]`.
pub fn read_csv<F: Scalar>(path: &Path) -> Result<Vec<HourlyRecord<F>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == CSV_HEADER => {}
        Some((_, header)) => {
            return Err(Error::parse(path, 1, format!("unexpected header {:?}", header)))
        }
        None => return Err(Error::parse(path, 1, "empty file")),
    }

    let mut records = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::parse(path, lineno, format!("expected 6 fields, got {}", fields.len())));
        }
        let timestamp = NaiveDateTime::parse_from_str(fields[0], TIMESTAMP_FMT)
            .map_err(|e| Error::parse(path, lineno, format!("bad timestamp: {}", e)))?;
        if timestamp.minute() != 0 || timestamp.second() != 0 {
            return Err(Error::parse(path, lineno, "timestamps must fall on whole hours"));
        }
        if let Some(prev) = records.last() {
            let prev: &HourlyRecord<F> = prev;
            if timestamp <= prev.timestamp {
                return Err(Error::parse(path, lineno, "timestamps must be strictly increasing"));
            }
        }
        let mut values = [0.0f64; 5];
        for (k, field) in fields[1..].iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|e| Error::parse(path, lineno, format!("bad number {:?}: {}", field, e)))?;
            if !v.is_finite() {
                return Err(Error::parse(path, lineno, "values must be finite"));
            }
            values[k] = v;
        }
        if !(0.0..=1.0).contains(&values[4]) {
            return Err(Error::parse(path, lineno, "pvpg must lie in [0, 1]"));
        }
        records.push(HourlyRecord {
            timestamp,
            features: [F::of(values[0]), F::of(values[1]), F::of(values[2]), F::of(values[3])],
            pvpg: F::of(values[4]),
        });
    }
    if records.is_empty() {
        return Err(Error::parse(path, 1, "no records after header"));
    }
    Ok(records)
}
