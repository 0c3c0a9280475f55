//! Subcommand implementations. Every command takes a resolved
//! [`RunConfig`], reads and writes only the paths it names, and returns an
//! error instead of exiting, so the binary owns the process status.

use std::fmt;
use std::fs;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use chrono::NaiveDate;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::adapt::checkpoint;
use crate::adapt::{
    assemble_supplementary, contiguous_days, derive_seed, fine_tune, forecast_day,
    improvement_rate, pretrain_traced, replay, FineTuneOptions, PretrainOptions, PretrainedModel,
    ReplayDay, ReplayOutput,
};
use crate::cli::config::RunConfig;
use crate::data::{
    read_csv, synthesize_stream, write_csv, DayBatch, HourlyRecord, SequenceSample, HOURS_PER_DAY,
};
use crate::error::{Error, Result};
use crate::metrics;
use crate::nnet::{grad_check, LstmDims, LstmParams, Workspace};
use crate::Real;

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Synthesizes the dataset and writes the historical/stream split.
pub fn cmd_generate(cfg: &RunConfig) -> Result<()> {
    let total = cfg.hist_days + cfg.stream_days;
    let records = synthesize_stream::<Real>(total, cfg.start_date, cfg.seed, cfg.drift_spec())?;
    ensure_dir(&cfg.data_dir)?;
    let split = cfg.hist_days * HOURS_PER_DAY;
    write_csv(&cfg.historical_path(), &records[..split])?;
    write_csv(&cfg.stream_path(), &records[split..])?;
    println!(
        "wrote {} historical rows to {}",
        split,
        cfg.historical_path().display()
    );
    println!(
        "wrote {} stream rows to {}",
        records.len() - split,
        cfg.stream_path().display()
    );
    Ok(())
}

/// Pretrains on the historical split, checkpointing the model and writing
/// the per-epoch loss trace.
pub fn cmd_pretrain(cfg: &RunConfig) -> Result<()> {
    let records = read_csv::<Real>(&cfg.historical_path())?;
    let (model, trace) = pretrain_traced(&records, &cfg.pretrain_options())?;
    ensure_dir(&cfg.out_dir)?;
    checkpoint::save(&cfg.checkpoint_path(), &model)?;

    let mut out = String::from("epoch,train_mse,valid_mse\n");
    for (i, e) in trace.iter().enumerate() {
        match e.valid {
            Some(v) => writeln!(out, "{},{},{}", i + 1, e.train, v),
            None => writeln!(out, "{},{},", i + 1, e.train),
        }
        .expect("string write");
    }
    write_file(&cfg.out_dir.join("loss_trace.csv"), &out)?;

    match model.meta.best_epoch {
        Some(best) => println!(
            "checkpoint {} ({} epochs, best validation at epoch {})",
            cfg.checkpoint_path().display(),
            cfg.pretrain_epochs,
            best + 1
        ),
        None => println!(
            "checkpoint {} ({} epochs)",
            cfg.checkpoint_path().display(),
            cfg.pretrain_epochs
        ),
    }
    Ok(())
}

/// Replays the stream against the checkpoint and writes the day reports,
/// baseline forecasts, drift log and metric summary.
pub fn cmd_replay(cfg: &RunConfig) -> Result<()> {
    let model: PretrainedModel<Real> = checkpoint::load(&cfg.checkpoint_path())?;
    let hist = read_csv::<Real>(&cfg.historical_path())?;
    let stream = read_csv::<Real>(&cfg.stream_path())?;
    let out = replay(&model, &hist, &stream, &cfg.replay_options())?;
    ensure_dir(&cfg.out_dir)?;

    let mut days = String::from("date,hour,observed,forecast_ol,forecast_ad\n");
    for day in &out.days {
        for h in 0..HOURS_PER_DAY {
            writeln!(
                days,
                "{},{},{},{},{}",
                day.date, h, day.observed[h], day.forecast_ol[h], day.forecast_ad[h]
            )
            .expect("string write");
        }
    }
    write_file(&cfg.out_dir.join("days.csv"), &days)?;

    let mut baselines = String::from("model,date,hour,observed,forecast\n");
    let baseline_rows = |s: &mut String, name: &str, pick: fn(&ReplayDay<Real>) -> &Vec<Real>| {
        for day in &out.days {
            let forecast = pick(day);
            for h in 0..HOURS_PER_DAY {
                writeln!(s, "{},{},{},{},{}", name, day.date, h, day.observed[h], forecast[h])
                    .expect("string write");
            }
        }
    };
    baseline_rows(&mut baselines, "persistence", |d| &d.forecast_persistence);
    baseline_rows(&mut baselines, "knn", |d| &d.forecast_knn);
    write_file(&cfg.out_dir.join("baselines.csv"), &baselines)?;

    let mut drift = String::from("date,error,threshold,confidence,event\n");
    for e in &out.drift_log {
        writeln!(drift, "{},{},{},{},{}", e.date, e.error, e.threshold, e.confidence, e.event)
            .expect("string write");
    }
    write_file(&cfg.out_dir.join("drift_events.csv"), &drift)?;

    write_file(&cfg.out_dir.join("summary.txt"), &render_summary(cfg, &out)?)?;

    println!(
        "replayed {} days into {}; {} drift confirmation(s)",
        out.days.len(),
        cfg.out_dir.display(),
        out.confirmations.len()
    );
    Ok(())
}

/// Flat key/value metric summary over one replay: MAE/MSE/R-squared per
/// model and the adaptive track's improvement rates. MAE is also reported
/// at the x100 scale and MSE at the x1000 scale used in the report tables.
fn render_summary(cfg: &RunConfig, out: &ReplayOutput<Real>) -> Result<String> {
    let flat = |pick: fn(&ReplayDay<Real>) -> &Vec<Real>| -> Vec<Real> {
        out.days.iter().flat_map(|d| pick(d).iter().copied()).collect()
    };
    let observed = flat(|d| &d.observed);
    let models: [(&str, Vec<Real>); 4] = [
        ("persistence", flat(|d| &d.forecast_persistence)),
        ("knn", flat(|d| &d.forecast_knn)),
        ("ol_lstm", flat(|d| &d.forecast_ol)),
        ("ad_lstm", flat(|d| &d.forecast_ad)),
    ];

    let mut s = String::from("pvcast-summary v1\n");
    writeln!(s, "seed = {}", cfg.seed).expect("string write");
    writeln!(s, "config_hash = {}", cfg.hash_hex()).expect("string write");
    writeln!(s, "days = {}", out.days.len()).expect("string write");
    writeln!(s, "drift_confirmations = {}", out.confirmations.len()).expect("string write");
    match out.confirmations.first() {
        Some(date) => writeln!(s, "drift_confirmed_on = {}", date),
        None => writeln!(s, "drift_confirmed_on = none"),
    }
    .expect("string write");
    s.push_str("# mae_x100 = mae * 100; mse_x1000 = mse * 1000\n");

    let mut mse_of = [0.0; 4];
    for (i, (name, forecast)) in models.iter().enumerate() {
        let b = metrics::bundle(forecast, &observed)?;
        mse_of[i] = b.mse;
        writeln!(s, "{}.mae = {}", name, b.mae).expect("string write");
        writeln!(s, "{}.mae_x100 = {}", name, b.mae * 100.0).expect("string write");
        writeln!(s, "{}.mse = {}", name, b.mse).expect("string write");
        writeln!(s, "{}.mse_x1000 = {}", name, b.mse * 1000.0).expect("string write");
        writeln!(s, "{}.r2 = {}", name, b.r2).expect("string write");
    }
    for (i, against) in [(0, "persistence"), (1, "knn"), (2, "ol")] {
        writeln!(
            s,
            "improvement.ad_vs_{} = {}",
            against,
            improvement_rate(mse_of[i], mse_of[3])?
        )
        .expect("string write");
    }
    Ok(s)
}

/// Sensitivity sweep axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Supplementary-set size: points map to (adjacent, similar) day
    /// counts as (min(3, s), s - min(3, s)).
    SuppSize,
    /// Hidden-state width; every point pretrains its own model.
    HiddenUnits,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepAxis::SuppSize => write!(f, "supp_size"),
            SweepAxis::HiddenUnits => write!(f, "hidden_units"),
        }
    }
}

struct SweepRow {
    value: usize,
    case: usize,
    target_date: NaiveDate,
    seed: u64,
    mse_ol: Real,
    mse_ad: Real,
    improvement: Real,
    wall_seconds: f64,
}

/// Four case days, one per quarter of the stream, echoing a
/// season-per-case evaluation over a year of streaming data.
fn case_indices(stream_days: usize) -> Result<[usize; 4]> {
    if stream_days < 8 {
        return Err(Error::InsufficientData {
            what: "stream days for the four seasonal cases",
            need: 8,
            have: stream_days,
        });
    }
    Ok([stream_days / 8, 3 * stream_days / 8, 5 * stream_days / 8, 7 * stream_days / 8])
}

/// Adaptation cost and quality for one case day under one model: assembles
/// the supplementary set in monitoring mode, fine-tunes, and scores both
/// tracks on the target day. Returns (mse_ol, mse_ad, seconds).
fn sweep_case(
    model: &PretrainedModel<Real>,
    hist_days: &[DayBatch<Real>],
    stream_days: &[DayBatch<Real>],
    stream_index: usize,
    n_ad: usize,
    k_sd: usize,
    ft: &FineTuneOptions,
    seed: u64,
) -> Result<(Real, Real, f64)> {
    let start = Instant::now();
    let target = &stream_days[stream_index];
    let mut timeline = Vec::with_capacity(hist_days.len() + stream_index);
    timeline.extend_from_slice(hist_days);
    timeline.extend_from_slice(&stream_days[..stream_index]);

    let supp = assemble_supplementary(
        target.date(),
        target.records(),
        &timeline,
        hist_days,
        &model.weights,
        false,
        n_ad,
        k_sd,
    )?;
    let tuned = fine_tune(model, &supp, ft, seed)?;

    let mut ws = Workspace::new(model.params.dims());
    let previous = timeline.last().expect("timeline holds history");
    let warmup = &previous.records()[HOURS_PER_DAY - (model.time_step - 1)..];
    let f_ad = forecast_day(&tuned, model.time_step, warmup, target.records(), &mut ws)?;
    let f_ol = forecast_day(&model.params, model.time_step, warmup, target.records(), &mut ws)?;
    let observed = target.pvpg();
    Ok((
        metrics::mse(&f_ol, &observed)?,
        metrics::mse(&f_ad, &observed)?,
        start.elapsed().as_secs_f64(),
    ))
}

fn normalized_days(
    model: &PretrainedModel<Real>,
    records: &[HourlyRecord<Real>],
    what: &'static str,
) -> Result<Vec<DayBatch<Real>>> {
    contiguous_days(&model.normalizer.normalize_all(records), what)
}

/// Evaluates every case of one sweep point sequentially.
fn sweep_point(
    cfg: &RunConfig,
    axis: SweepAxis,
    value: usize,
    base: Option<&PretrainedModel<Real>>,
    hist: &[HourlyRecord<Real>],
    stream: &[HourlyRecord<Real>],
    cases: &[usize; 4],
) -> Result<Vec<SweepRow>> {
    let owned;
    let model = match axis {
        SweepAxis::SuppSize => base.expect("supp axis shares the checkpoint"),
        SweepAxis::HiddenUnits => {
            let opts = PretrainOptions {
                hidden: value,
                epochs: cfg.sweep_pretrain_epochs,
                ..cfg.pretrain_options()
            };
            owned = crate::adapt::pretrain(hist, &opts)?;
            &owned
        }
    };
    let (n_ad, k_sd) = match axis {
        SweepAxis::SuppSize => (value.min(3), value - value.min(3)),
        SweepAxis::HiddenUnits => (cfg.n_ad, cfg.k_sd),
    };
    let hist_days = normalized_days(model, hist, "historical split")?;
    let stream_days = normalized_days(model, stream, "stream")?;
    let ft = cfg.fine_tune_options();

    let mut rows = Vec::with_capacity(cases.len());
    for (case, &idx) in cases.iter().enumerate() {
        let seed = derive_seed(cfg.seed, ((value as u64) << 8) | case as u64);
        let (mse_ol, mse_ad, wall) =
            sweep_case(model, &hist_days, &stream_days, idx, n_ad, k_sd, &ft, seed)?;
        rows.push(SweepRow {
            value,
            case: case + 1,
            target_date: stream_days[idx].date(),
            seed,
            mse_ol,
            mse_ad,
            improvement: improvement_rate(mse_ol, mse_ad)?,
            wall_seconds: wall,
        });
    }
    Ok(rows)
}

/// Runs the sweep, spreading points over `workers` threads; each point
/// owns its model state and rows are written in point order regardless of
/// scheduling. Everything except the wall-clock column is reproducible.
pub fn cmd_sweep(cfg: &RunConfig, axis: SweepAxis) -> Result<()> {
    let values: &[usize] = match axis {
        SweepAxis::SuppSize => &cfg.sweep_supp,
        SweepAxis::HiddenUnits => &cfg.sweep_hidden,
    };
    if values.is_empty() {
        return Err(Error::Empty("sweep point list"));
    }
    let base: Option<PretrainedModel<Real>> = match axis {
        SweepAxis::SuppSize => Some(checkpoint::load(&cfg.checkpoint_path())?),
        SweepAxis::HiddenUnits => None,
    };
    let hist = read_csv::<Real>(&cfg.historical_path())?;
    let stream = read_csv::<Real>(&cfg.stream_path())?;
    let cases = case_indices(stream.len() / HOURS_PER_DAY)?;

    let slots: Mutex<Vec<Option<Vec<SweepRow>>>> =
        Mutex::new((0..values.len()).map(|_| None).collect());
    let first_err: Mutex<Option<Error>> = Mutex::new(None);
    let failed = AtomicBool::new(false);
    let next = AtomicUsize::new(0);
    let workers = cfg.workers.min(values.len()).max(1);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if failed.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= values.len() {
                    break;
                }
                match sweep_point(cfg, axis, values[i], base.as_ref(), &hist, &stream, &cases) {
                    Ok(rows) => slots.lock().expect("sweep lock")[i] = Some(rows),
                    Err(e) => {
                        failed.store(true, Ordering::Relaxed);
                        let mut slot = first_err.lock().expect("sweep lock");
                        if slot.is_none() {
                            *slot = Some(e);
                        }
                    }
                }
            });
        }
    });
    if let Some(e) = first_err.into_inner().expect("sweep lock") {
        return Err(e);
    }

    let mut out = String::from(
        "axis,value,case,target_date,seed,config_hash,mse_ol,mse_ad,improvement_pct,wall_seconds\n",
    );
    let hash = cfg.hash_hex();
    let mut row_count = 0;
    for rows in slots.into_inner().expect("sweep lock") {
        for r in rows.expect("every point evaluated") {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                axis,
                r.value,
                r.case,
                r.target_date,
                r.seed,
                hash,
                r.mse_ol,
                r.mse_ad,
                r.improvement,
                r.wall_seconds
            )
            .expect("string write");
            row_count += 1;
        }
    }
    ensure_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join(format!("sweep_{}.csv", axis));
    write_file(&path, &out)?;
    println!("wrote {} sweep rows to {}", row_count, path.display());
    Ok(())
}

/// Compares analytic gradients against central finite differences on
/// random parameter draws; fails if any relative error exceeds 1e-5.
pub fn cmd_gradcheck(cfg: &RunConfig) -> Result<()> {
    const FD_STEP: f64 = 1e-5;
    const TOLERANCE: f64 = 1e-5;
    let mut worst_all: Real = 0.0;
    for hidden in [2usize, 3, 4] {
        let dims = LstmDims::new(hidden)?;
        let params = LstmParams::<Real>::init(dims, derive_seed(cfg.seed, hidden as u64));
        let samples = random_samples(cfg.time_step, 5, derive_seed(cfg.seed, 100 + hidden as u64));
        let worst = grad_check(&params, &samples, FD_STEP)?;
        println!("hidden {:>2}: max relative gradient error {:.3e}", hidden, worst);
        worst_all = worst_all.max(worst);
    }
    if worst_all > TOLERANCE {
        return Err(Error::State(format!(
            "gradient check failed: worst relative error {:.3e} exceeds {:.0e}",
            worst_all, TOLERANCE
        )));
    }
    println!("gradient check passed");
    Ok(())
}

fn random_samples(time_step: usize, n: usize, seed: u64) -> Vec<SequenceSample<Real>> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| SequenceSample {
            window: (0..time_step).map(|_| std::array::from_fn(|_| rng.gen())).collect(),
            target: rng.gen(),
        })
        .collect()
}
