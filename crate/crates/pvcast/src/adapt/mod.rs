//! Two-phase adaptive forecasting.
//!
//! Phase 1 pretrains an LSTM on a historical split and freezes everything
//! derived from it: parameters, the feature normalizer, retrieval weights
//! and the drift threshold. Phase 2 replays a stream day by day; each day a
//! copy of the pretrained snapshot is fine-tuned on a supplementary set of
//! adjacent and similar days and both the adaptive and the frozen model
//! forecast the day ahead. The frozen model's daily error drives drift
//! detection, and a confirmed drift switches supplementary assembly to
//! adjacent days only.

pub mod checkpoint;

use chrono::NaiveDate;

use crate::baselines::{knn_forecast, persistence_forecast};
use crate::data::{
    day_samples, group_days, make_samples, DayBatch, HourlyRecord, Normalizer, SequenceSample,
    HOURS_PER_DAY,
};
use crate::drift::{batch_error, estimate_threshold, DetectorEvent, DriftDetector, Threshold};
use crate::error::{Error, Result};
use crate::nnet::{
    batch_loss, forward, train, EpochLoss, LstmDims, LstmParams, TrainOptions, Workspace,
};
use crate::num::Scalar;
use crate::simdays::{fit_weights, select_similar_days, FeatureWeights};

/// Split bounds and settings recorded by a pretraining run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PretrainMeta {
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
    pub valid_start: NaiveDate,
    pub valid_end: NaiveDate,
    pub seed: u64,
    pub epochs: usize,
    pub best_epoch: Option<usize>,
}

/// Everything Phase 1 produces. Phase 2 treats the model as read-only and
/// fine-tunes copies; nothing here is re-estimated during streaming.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainedModel<F> {
    pub params: LstmParams<F>,
    pub time_step: usize,
    pub normalizer: Normalizer<F>,
    pub threshold: Threshold<F>,
    pub weights: FeatureWeights<F>,
    pub meta: PretrainMeta,
}

/// Phase 1 settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainOptions {
    pub hidden: usize,
    pub time_step: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Complete days reserved, chronologically last, for validation.
    pub valid_days: usize,
    pub seed: u64,
}

impl Default for PretrainOptions {
    fn default() -> Self {
        PretrainOptions {
            hidden: 4,
            time_step: 4,
            epochs: 500,
            batch_size: 256,
            learning_rate: 0.001,
            valid_days: 90,
            seed: 0,
        }
    }
}

/// Groups records into complete days and enforces the layout streaming
/// arithmetic relies on: no interior gaps, consecutive dates, at most a
/// trailing partial day (which is dropped).
pub fn contiguous_days<F: Scalar>(
    records: &[HourlyRecord<F>],
    what: &'static str,
) -> Result<Vec<DayBatch<F>>> {
    let report = group_days(records);
    if report.days.is_empty() {
        return Err(Error::Empty(what));
    }
    let last_complete = report.days.last().expect("non-empty").date();
    for (date, hours) in &report.partial {
        if *date < last_complete {
            return Err(Error::Parameter(format!(
                "{}: day {} has only {} hours",
                what, date, hours
            )));
        }
    }
    for pair in report.days.windows(2) {
        if pair[1].date() != pair[0].date() + chrono::Days::new(1) {
            return Err(Error::Parameter(format!(
                "{}: days must be consecutive, gap between {} and {}",
                what,
                pair[0].date(),
                pair[1].date()
            )));
        }
    }
    Ok(report.days)
}

/// Offline pretraining: fits the normalizer and retrieval weights on the
/// full historical split, trains on a chronological train/validation
/// division, keeps the best-validation snapshot and freezes the drift
/// threshold from day-ahead validation errors.
pub fn pretrain<F: Scalar>(
    records: &[HourlyRecord<F>],
    opts: &PretrainOptions,
) -> Result<PretrainedModel<F>> {
    Ok(pretrain_traced(records, opts)?.0)
}

/// Like [`pretrain`], additionally returning the per-epoch loss trace.
pub fn pretrain_traced<F: Scalar>(
    records: &[HourlyRecord<F>],
    opts: &PretrainOptions,
) -> Result<(PretrainedModel<F>, Vec<EpochLoss<F>>)> {
    if !(1..=HOURS_PER_DAY).contains(&opts.time_step) {
        return Err(Error::Parameter(format!(
            "time step must lie in 1..=24, got {}",
            opts.time_step
        )));
    }
    if opts.valid_days < 2 {
        return Err(Error::Parameter(
            "validation needs at least 2 days to estimate a threshold".into(),
        ));
    }
    let days = contiguous_days(records, "historical split")?;
    if days.len() < opts.valid_days + 1 {
        return Err(Error::InsufficientData {
            what: "historical days",
            need: opts.valid_days + 1,
            have: days.len(),
        });
    }
    let train_days = days.len() - opts.valid_days;

    let normalizer = Normalizer::fit(records)?;
    // Correlation weights are affine-invariant, so raw records serve.
    let weights = fit_weights(records)?;

    let scaled = normalizer.normalize_all(records);
    let samples = make_samples(&scaled, opts.time_step)?;
    let valid_start_rec = train_days * HOURS_PER_DAY;
    let split_at = valid_start_rec + 1 - opts.time_step;
    let (train_set, valid_set) = samples.split_at(split_at);

    let dims = LstmDims::new(opts.hidden)?;
    let init = LstmParams::init(dims, opts.seed);
    let outcome = train(
        &init,
        train_set,
        valid_set,
        &TrainOptions {
            epochs: opts.epochs,
            batch_size: opts.batch_size,
            learning_rate: opts.learning_rate,
            seed: opts.seed,
        },
    )?;

    // Day-ahead validation errors, scored exactly as streaming days will
    // be, give the reference distribution for the drift threshold.
    let scaled_days = contiguous_days(&scaled, "historical split")?;
    let mut ws = Workspace::new(dims);
    let mut reference = Vec::with_capacity(opts.valid_days);
    for vd in train_days..days.len() {
        let warmup = warmup_slice(&scaled_days[vd - 1], opts.time_step);
        let forecast =
            forecast_day(&outcome.params, opts.time_step, warmup, scaled_days[vd].records(), &mut ws)?;
        reference.push(batch_error(&forecast, &scaled_days[vd].pvpg())?);
    }
    let threshold = estimate_threshold(&reference)?;

    let model = PretrainedModel {
        params: outcome.params,
        time_step: opts.time_step,
        normalizer,
        threshold,
        weights,
        meta: PretrainMeta {
            train_start: days[0].date(),
            train_end: days[train_days - 1].date(),
            valid_start: days[train_days].date(),
            valid_end: days[days.len() - 1].date(),
            seed: opts.seed,
            epochs: opts.epochs,
            best_epoch: outcome.best_epoch,
        },
    };
    Ok((model, outcome.trace))
}

fn warmup_slice<F: Scalar>(previous: &DayBatch<F>, time_step: usize) -> &[HourlyRecord<F>] {
    &previous.records()[HOURS_PER_DAY - (time_step - 1)..]
}

/// Fine-tuning data for one target day: the immediately preceding days and,
/// while no drift is confirmed, similar days retrieved from history.
#[derive(Debug, Clone, PartialEq)]
pub struct SupplementaryDataset<F> {
    pub adjacent: Vec<DayBatch<F>>,
    pub similar: Vec<DayBatch<F>>,
    /// Drift status under which the set was assembled.
    pub drifted: bool,
}

impl<F: Scalar> SupplementaryDataset<F> {
    pub fn day_count(&self) -> usize {
        self.adjacent.len() + self.similar.len()
    }
}

/// Builds the supplementary set for `target_date`.
///
/// `prior_days` is the causal timeline (historical days followed by already
/// scored stream days); the adjacent part is its last `n_ad` days, which
/// must end the day before the target. `history` is the retrieval pool for
/// similar days; days already covered by the adjacent part are skipped so
/// no day enters the set twice. A confirmed drift empties the similar part.
pub fn assemble_supplementary<F: Scalar>(
    target_date: NaiveDate,
    target_profile: &[HourlyRecord<F>],
    prior_days: &[DayBatch<F>],
    history: &[DayBatch<F>],
    weights: &FeatureWeights<F>,
    drifted: bool,
    n_ad: usize,
    k_sd: usize,
) -> Result<SupplementaryDataset<F>> {
    if n_ad == 0 {
        return Err(Error::Parameter("adjacent-day count must be at least 1".into()));
    }
    if prior_days.len() < n_ad {
        return Err(Error::InsufficientData {
            what: "prior days for the adjacent set",
            need: n_ad,
            have: prior_days.len(),
        });
    }
    let adjacent: Vec<DayBatch<F>> = prior_days[prior_days.len() - n_ad..].to_vec();
    for (j, day) in adjacent.iter().enumerate() {
        let expect = target_date - chrono::Days::new((n_ad - j) as u64);
        if day.date() != expect {
            return Err(Error::Parameter(format!(
                "adjacent days must end the day before {}, found {} where {} was expected",
                target_date,
                day.date(),
                expect
            )));
        }
    }

    let similar = if drifted || k_sd == 0 {
        Vec::new()
    } else {
        let overlaps = |d: &DayBatch<F>| adjacent.iter().any(|a| a.date() == d.date());
        let picked = if history.iter().any(overlaps) {
            let pool: Vec<DayBatch<F>> =
                history.iter().filter(|d| !overlaps(d)).cloned().collect();
            select_similar_days(target_date, target_profile, &pool, weights, k_sd)?
        } else {
            select_similar_days(target_date, target_profile, history, weights, k_sd)?
        };
        picked
            .iter()
            .map(|p| {
                history
                    .iter()
                    .find(|d| d.date() == p.date)
                    .expect("retrieval returns history members")
                    .clone()
            })
            .collect()
    };

    Ok(SupplementaryDataset { adjacent, similar, drifted })
}

/// Per-day fine-tuning settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FineTuneOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for FineTuneOptions {
    fn default() -> Self {
        FineTuneOptions { epochs: 50, batch_size: 32, learning_rate: 0.001 }
    }
}

/// Fine-tunes a copy of the pretrained snapshot on the supplementary days.
/// Days are grouped into runs of consecutive dates and windowed within each
/// run, so no window spans a calendar gap. The optimizer starts with fresh
/// moments; the base model is never modified.
pub fn fine_tune<F: Scalar>(
    base: &PretrainedModel<F>,
    supp: &SupplementaryDataset<F>,
    opts: &FineTuneOptions,
    seed: u64,
) -> Result<LstmParams<F>> {
    if supp.day_count() == 0 {
        return Err(Error::Empty("supplementary dataset"));
    }
    let mut days: Vec<&DayBatch<F>> = supp.adjacent.iter().chain(&supp.similar).collect();
    days.sort_by_key(|d| d.date());
    for pair in days.windows(2) {
        if pair[0].date() == pair[1].date() {
            return Err(Error::Parameter(format!(
                "supplementary set contains {} twice",
                pair[0].date()
            )));
        }
    }

    let mut samples: Vec<SequenceSample<F>> = Vec::new();
    let mut run: Vec<HourlyRecord<F>> = Vec::new();
    let flush = |run: &mut Vec<HourlyRecord<F>>, samples: &mut Vec<_>| -> Result<()> {
        if !run.is_empty() {
            samples.extend(make_samples(run, base.time_step)?);
            run.clear();
        }
        Ok(())
    };
    for day in &days {
        let continues = run
            .last()
            .map(|r: &HourlyRecord<F>| day.date() == r.date() + chrono::Days::new(1))
            .unwrap_or(false);
        if !continues {
            flush(&mut run, &mut samples)?;
        }
        run.extend_from_slice(day.records());
    }
    flush(&mut run, &mut samples)?;

    let outcome = train(
        &base.params,
        &samples,
        &[],
        &TrainOptions {
            epochs: opts.epochs,
            batch_size: opts.batch_size,
            learning_rate: opts.learning_rate,
            seed,
        },
    )?;
    Ok(outcome.params)
}

/// Day-ahead forecast: one forward pass per hour with windows warmed up by
/// the final records of the preceding day, outputs clamped to `[0, 1]`.
pub fn forecast_day<F: Scalar>(
    params: &LstmParams<F>,
    time_step: usize,
    warmup: &[HourlyRecord<F>],
    nwp: &[HourlyRecord<F>],
    ws: &mut Workspace<F>,
) -> Result<Vec<F>> {
    if nwp.len() != HOURS_PER_DAY {
        return Err(Error::Shape { what: "NWP rows", expected: HOURS_PER_DAY, got: nwp.len() });
    }
    let samples = day_samples(warmup, nwp, time_step)?;
    let mut out = Vec::with_capacity(HOURS_PER_DAY);
    for s in &samples {
        let y = forward(params, &s.window, ws)?;
        out.push(y.max(F::zero()).min(F::one()));
    }
    Ok(out)
}

/// Relative error reduction of the adaptive track, in percent.
pub fn improvement_rate<F: Scalar>(mse_ol: F, mse_ad: F) -> Result<F> {
    if !(mse_ol > F::zero()) {
        return Err(Error::Undefined("improvement rate with zero baseline error"));
    }
    Ok((F::one() - mse_ad / mse_ol) * F::of(100.0))
}

/// Streaming replay settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayOptions {
    pub n_ad: usize,
    pub k_sd: usize,
    pub c_max: u32,
    pub fine_tune: FineTuneOptions,
    pub knn_k: usize,
    pub seed: u64,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        ReplayOptions {
            n_ad: 3,
            k_sd: 6,
            c_max: 3,
            fine_tune: FineTuneOptions::default(),
            knn_k: 5,
            seed: 0,
        }
    }
}

/// One scored streaming day: observations, all four forecast tracks and
/// the daily errors of the two LSTM tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayDay<F> {
    pub date: NaiveDate,
    pub observed: Vec<F>,
    pub forecast_ol: Vec<F>,
    pub forecast_ad: Vec<F>,
    pub forecast_persistence: Vec<F>,
    pub forecast_knn: Vec<F>,
    pub error_ol: F,
    pub error_ad: F,
    /// Drift status when the day was forecast (before its own scoring).
    pub drifted_at_forecast: bool,
    /// Similar days used by the fine-tune set; zero after confirmed drift.
    pub similar_used: usize,
}

/// One detector row per streaming day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftLogEntry<F> {
    pub date: NaiveDate,
    pub error: F,
    pub threshold: F,
    pub confidence: u32,
    pub event: DetectorEvent,
}

/// Replay result: per-day records, the detector log and every confirmation.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutput<F> {
    pub days: Vec<ReplayDay<F>>,
    pub drift_log: Vec<DriftLogEntry<F>>,
    pub confirmations: Vec<NaiveDate>,
}

/// Derives a fine-tune seed for one replay day; a fixed mixing function so
/// per-day training is decoupled yet reproducible from the run seed.
pub(crate) fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base
        .wrapping_add(salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Replays a stream against a pretrained model.
///
/// For each stream day, in order: assemble the supplementary set under the
/// current drift status, fine-tune a copy of the snapshot and forecast the
/// day (adaptive track); forecast with the frozen snapshot (offline track)
/// and the two baselines; then score the day and feed the offline error to
/// the detector. The first confirmation permanently switches assembly to
/// adjacent days only and retires the detector, so a persistent shift is
/// reported exactly once; later rows log with zero confidence.
pub fn replay<F: Scalar>(
    pretrained: &PretrainedModel<F>,
    historical: &[HourlyRecord<F>],
    stream: &[HourlyRecord<F>],
    opts: &ReplayOptions,
) -> Result<ReplayOutput<F>> {
    let hist_days_raw = contiguous_days(historical, "historical split")?;
    let stream_days_raw = contiguous_days(stream, "stream")?;
    let boundary = hist_days_raw.last().expect("non-empty").date();
    let first = stream_days_raw[0].date();
    if first != boundary + chrono::Days::new(1) {
        return Err(Error::Parameter(format!(
            "stream must begin the day after the historical split ends ({}), got {}",
            boundary, first
        )));
    }

    let history: Vec<DayBatch<F>> =
        contiguous_days(&pretrained.normalizer.normalize_all(historical), "historical split")?;
    let stream_days: Vec<DayBatch<F>> =
        contiguous_days(&pretrained.normalizer.normalize_all(stream), "stream")?;

    let mut detector = DriftDetector::new(opts.c_max)?;
    let mut drifted = false;
    let mut retired = false;
    let mut ws = Workspace::new(pretrained.params.dims());
    let mut prior_days = history.clone();
    let mut days = Vec::with_capacity(stream_days.len());
    let mut drift_log = Vec::with_capacity(stream_days.len());
    let mut confirmations = Vec::new();

    for (index, target) in stream_days.iter().enumerate() {
        let date = target.date();
        let supp = assemble_supplementary(
            date,
            target.records(),
            &prior_days,
            &history,
            &pretrained.weights,
            drifted,
            opts.n_ad,
            opts.k_sd,
        )?;
        let adapted =
            fine_tune(pretrained, &supp, &opts.fine_tune, derive_seed(opts.seed, index as u64))?;

        let previous = prior_days.last().expect("timeline starts with history");
        let warmup = warmup_slice(previous, pretrained.time_step);
        let forecast_ad =
            forecast_day(&adapted, pretrained.time_step, warmup, target.records(), &mut ws)?;
        let forecast_ol = forecast_day(
            &pretrained.params,
            pretrained.time_step,
            warmup,
            target.records(),
            &mut ws,
        )?;
        let forecast_persistence = persistence_forecast(previous);
        let forecast_knn =
            knn_forecast(date, target.records(), &history, &pretrained.weights, opts.knn_k)?;

        let observed = target.pvpg();
        let error_ol = batch_error(&forecast_ol, &observed)?;
        let error_ad = batch_error(&forecast_ad, &observed)?;

        let entry = if retired {
            DriftLogEntry {
                date,
                error: error_ol,
                threshold: pretrained.threshold.value(),
                confidence: 0,
                event: DetectorEvent::None,
            }
        } else {
            let event = detector.step(date, &pretrained.threshold, error_ol)?;
            let entry = DriftLogEntry {
                date,
                error: error_ol,
                threshold: pretrained.threshold.value(),
                confidence: detector.confidence(),
                event,
            };
            if event == DetectorEvent::DriftConfirmed {
                drifted = true;
                retired = true;
                confirmations.push(date);
                detector.reset();
            }
            entry
        };
        drift_log.push(entry);

        days.push(ReplayDay {
            date,
            observed,
            forecast_ol,
            forecast_ad,
            forecast_persistence,
            forecast_knn,
            error_ol,
            error_ad,
            drifted_at_forecast: supp.drifted,
            similar_used: supp.similar.len(),
        });
        prior_days.push(target.clone());
    }

    Ok(ReplayOutput { days, drift_log, confirmations })
}

/// Validation-set loss of a parameter snapshot under a model's normalizer
/// and windowing; used to compare checkpoints and untrained baselines.
pub fn validation_loss<F: Scalar>(
    model: &PretrainedModel<F>,
    params: &LstmParams<F>,
    historical: &[HourlyRecord<F>],
) -> Result<F> {
    let scaled = model.normalizer.normalize_all(historical);
    let days = contiguous_days(&scaled, "historical split")?;
    let first_valid = days
        .iter()
        .position(|d| d.date() == model.meta.valid_start)
        .ok_or_else(|| Error::Parameter("validation split not present in records".into()))?;
    let samples = make_samples(&scaled, model.time_step)?;
    let split_at = first_valid * HOURS_PER_DAY + 1 - model.time_step;
    let mut ws = Workspace::new(params.dims());
    batch_loss(params, &samples[split_at..], &mut ws)
}
