//! Flat-text checkpoint format for pretrained models.
//!
//! Every float is stored as the 16-digit upper-case hex of its `f64` bit
//! pattern, so a save/load cycle is exact and a reloaded checkpoint saves
//! back byte for byte. Lines are fixed in order; the parameter block is a
//! count followed by one value per line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;

use crate::data::Normalizer;
use crate::drift::Threshold;
use crate::error::{Error, Result};
use crate::nnet::{LstmDims, LstmParams};
use crate::num::Scalar;
use crate::simdays::FeatureWeights;

use super::{PretrainMeta, PretrainedModel};

const MAGIC: &str = "pvcast-checkpoint v1";
const DATE_FMT: &str = "%Y-%m-%d";

fn hex<F: Scalar>(v: F) -> String {
    format!("{:016X}", v.as_f64().to_bits())
}

fn hex_list<F: Scalar>(vs: &[F]) -> String {
    vs.iter().map(|v| hex(*v)).collect::<Vec<_>>().join(",")
}

/// Writes a checkpoint. The rendering is canonical: equal models produce
/// identical bytes.
pub fn save<F: Scalar>(path: &Path, model: &PretrainedModel<F>) -> Result<()> {
    let mut out = String::new();
    let meta = &model.meta;
    writeln!(out, "{}", MAGIC).expect("string write");
    writeln!(out, "hidden = {}", model.params.dims().hidden()).expect("string write");
    writeln!(out, "time_step = {}", model.time_step).expect("string write");
    writeln!(out, "seed = {}", meta.seed).expect("string write");
    writeln!(out, "epochs = {}", meta.epochs).expect("string write");
    match meta.best_epoch {
        Some(e) => writeln!(out, "best_epoch = {}", e),
        None => writeln!(out, "best_epoch = none"),
    }
    .expect("string write");
    writeln!(out, "train_start = {}", meta.train_start.format(DATE_FMT)).expect("string write");
    writeln!(out, "train_end = {}", meta.train_end.format(DATE_FMT)).expect("string write");
    writeln!(out, "valid_start = {}", meta.valid_start.format(DATE_FMT)).expect("string write");
    writeln!(out, "valid_end = {}", meta.valid_end.format(DATE_FMT)).expect("string write");
    writeln!(out, "threshold_mean = {}", hex(model.threshold.mean())).expect("string write");
    writeln!(out, "threshold_std = {}", hex(model.threshold.std())).expect("string write");
    writeln!(out, "threshold_value = {}", hex(model.threshold.value())).expect("string write");
    writeln!(out, "weights = {}", hex_list(model.weights.weights())).expect("string write");
    writeln!(out, "norm_min = {}", hex_list(model.normalizer.mins())).expect("string write");
    writeln!(out, "norm_max = {}", hex_list(model.normalizer.maxs())).expect("string write");
    writeln!(out, "params = {}", model.params.theta().len()).expect("string write");
    for v in model.params.theta() {
        writeln!(out, "{}", hex(*v)).expect("string write");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    path: &'a Path,
    lines: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> Reader<'a> {
    fn next(&mut self) -> Result<&'a str> {
        self.line_no += 1;
        self.lines
            .next()
            .ok_or_else(|| Error::parse(self.path, self.line_no, "unexpected end of checkpoint"))
    }

    fn fail<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::parse(self.path, self.line_no, msg))
    }

    fn value(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next()?;
        match line.split_once(" = ") {
            Some((k, v)) if k == key => Ok(v),
            Some((k, _)) => self.fail(format!("expected key `{}`, found `{}`", key, k)),
            None => self.fail(format!("expected `{} = ...`", key)),
        }
    }

    fn usize(&mut self, key: &str) -> Result<usize> {
        let v = self.value(key)?;
        v.parse().or_else(|_| self.fail(format!("`{}` is not a count: `{}`", key, v)))
    }

    fn u64(&mut self, key: &str) -> Result<u64> {
        let v = self.value(key)?;
        v.parse().or_else(|_| self.fail(format!("`{}` is not an integer: `{}`", key, v)))
    }

    fn date(&mut self, key: &str) -> Result<NaiveDate> {
        let v = self.value(key)?;
        NaiveDate::parse_from_str(v, DATE_FMT)
            .or_else(|_| self.fail(format!("`{}` is not a date: `{}`", key, v)))
    }

    fn float_raw<F: Scalar>(&self, v: &str) -> Result<F> {
        if v.len() != 16 {
            return self.fail(format!("expected 16 hex digits, found `{}`", v));
        }
        let bits = u64::from_str_radix(v, 16)
            .or_else(|_| self.fail(format!("bad hex float `{}`", v)))?;
        Ok(F::of(f64::from_bits(bits)))
    }

    fn float<F: Scalar>(&mut self, key: &str) -> Result<F> {
        let v = self.value(key)?;
        self.float_raw(v)
    }

    fn float_list<F: Scalar, const N: usize>(&mut self, key: &str) -> Result<[F; N]> {
        let v = self.value(key)?;
        let parts: Vec<&str> = v.split(',').collect();
        if parts.len() != N {
            return self.fail(format!("`{}` needs {} values, found {}", key, N, parts.len()));
        }
        let mut out = [F::zero(); N];
        for (slot, part) in out.iter_mut().zip(parts) {
            *slot = self.float_raw(part)?;
        }
        Ok(out)
    }
}

/// Reads a checkpoint back. Structural validation is delegated to the same
/// constructors the live pipeline uses, so a checkpoint can never smuggle
/// in a state the pipeline itself would reject.
pub fn load<F: Scalar>(path: &Path) -> Result<PretrainedModel<F>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { path, lines: text.lines(), line_no: 0 };

    let magic = r.next()?;
    if magic != MAGIC {
        return r.fail(format!("not a `{}` file", MAGIC));
    }
    let hidden = r.usize("hidden")?;
    let time_step = r.usize("time_step")?;
    if !(1..=crate::data::HOURS_PER_DAY).contains(&time_step) {
        return r.fail(format!("time step {} outside 1..=24", time_step));
    }
    let seed = r.u64("seed")?;
    let epochs = r.usize("epochs")?;
    let best_epoch = match r.value("best_epoch")? {
        "none" => None,
        v => Some(
            v.parse::<usize>()
                .or_else(|_| r.fail(format!("`best_epoch` is not a count: `{}`", v)))?,
        ),
    };
    let train_start = r.date("train_start")?;
    let train_end = r.date("train_end")?;
    let valid_start = r.date("valid_start")?;
    let valid_end = r.date("valid_end")?;
    let mean: F = r.float("threshold_mean")?;
    let std: F = r.float("threshold_std")?;
    let value: F = r.float("threshold_value")?;
    let weights = FeatureWeights::from_parts(r.float_list("weights")?)?;
    let mins = r.float_list("norm_min")?;
    let maxs = r.float_list("norm_max")?;

    let count = r.usize("params")?;
    let dims = LstmDims::new(hidden)?;
    if count != dims.param_count() {
        return r.fail(format!(
            "{} hidden units need {} parameters, checkpoint declares {}",
            hidden,
            dims.param_count(),
            count
        ));
    }
    let mut theta = Vec::with_capacity(count);
    for _ in 0..count {
        let line = r.next()?;
        theta.push(r.float_raw(line)?);
    }
    if let Some(extra) = r.lines.next() {
        if !extra.trim().is_empty() {
            r.line_no += 1;
            return r.fail("trailing content after parameter block");
        }
    }

    Ok(PretrainedModel {
        params: LstmParams::from_theta(dims, theta)?,
        time_step,
        normalizer: Normalizer::from_parts(mins, maxs)?,
        threshold: Threshold::from_parts(mean, std, value)?,
        weights,
        meta: PretrainMeta {
            train_start,
            train_end,
            valid_start,
            valid_end,
            seed,
            epochs,
            best_epoch,
        },
    })
}
