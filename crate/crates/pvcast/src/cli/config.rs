//! Run configuration: a versioned flat key/value text format.
//!
//! Precedence, lowest to highest: built-in defaults, config file,
//! `PVCAST_*` environment variables, command-line flags. The serialized
//! form is canonical (fixed key order, `Display`-rendered values), so a
//! configuration round-trips losslessly and equal configurations hash
//! equally.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::adapt::{FineTuneOptions, PretrainOptions, ReplayOptions};
use crate::data::{DriftSpec, FEATURES};
use crate::error::{Error, Result};

const MAGIC: &str = "pvcast-config v1";
const DATE_FMT: &str = "%Y-%m-%d";

/// Where the drift threshold comes from. Only estimation on the
/// pretraining validation split is implemented; the knob exists so config
/// files state it explicitly and unknown sources fail loudly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdSource {
    Validation,
}

impl fmt::Display for ThresholdSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdSource::Validation => write!(f, "validation"),
        }
    }
}

/// Full experiment description. See the field-by-field defaults in
/// `Default::default`; every field maps to one config key of the same name.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Checkpoint file; relative paths resolve under `out_dir`.
    pub checkpoint: PathBuf,
    pub hidden_units: usize,
    pub time_step: usize,
    pub layers: usize,
    pub input_size: usize,
    pub learning_rate: f64,
    pub pretrain_epochs: usize,
    pub pretrain_batch: usize,
    pub valid_days: usize,
    pub fine_tune_epochs: usize,
    pub fine_tune_batch: usize,
    pub n_ad: usize,
    pub k_sd: usize,
    pub c_max: u32,
    pub threshold_source: ThresholdSource,
    pub knn_k: usize,
    pub seed: u64,
    pub hist_days: usize,
    pub stream_days: usize,
    pub start_date: NaiveDate,
    /// Drift onset in days from the stream start; absent means no drift.
    pub drift_start: Option<usize>,
    pub drift_bias: f64,
    pub sweep_supp: Vec<usize>,
    pub sweep_hidden: Vec<usize>,
    /// Pretraining epochs per point of the hidden-units sweep, kept small
    /// because that axis retrains from scratch at every size.
    pub sweep_pretrain_epochs: usize,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("reports"),
            checkpoint: PathBuf::from("model.ckpt"),
            hidden_units: 4,
            time_step: 4,
            layers: 1,
            input_size: FEATURES,
            learning_rate: 0.001,
            pretrain_epochs: 500,
            pretrain_batch: 256,
            valid_days: 90,
            fine_tune_epochs: 50,
            fine_tune_batch: 32,
            n_ad: 3,
            k_sd: 6,
            c_max: 3,
            threshold_source: ThresholdSource::Validation,
            knn_k: 5,
            seed: 0,
            hist_days: 450,
            stream_days: 180,
            start_date: NaiveDate::from_ymd_opt(2014, 1, 1).expect("valid date"),
            drift_start: None,
            drift_bias: 0.5,
            sweep_supp: vec![3, 5, 7, 9],
            sweep_hidden: vec![4, 16, 64, 128, 256],
            sweep_pretrain_epochs: 2,
            workers: 1,
        }
    }
}

fn join_counts(xs: &[usize]) -> String {
    xs.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Canonical text form: the version line followed by every key in
    /// fixed order.
    pub fn serialize(&self) -> String {
        let mut s = String::with_capacity(1024);
        s.push_str(MAGIC);
        s.push('\n');
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("data_dir", self.data_dir.display().to_string());
        kv("out_dir", self.out_dir.display().to_string());
        kv("checkpoint", self.checkpoint.display().to_string());
        kv("hidden_units", self.hidden_units.to_string());
        kv("time_step", self.time_step.to_string());
        kv("layers", self.layers.to_string());
        kv("input_size", self.input_size.to_string());
        kv("learning_rate", self.learning_rate.to_string());
        kv("pretrain_epochs", self.pretrain_epochs.to_string());
        kv("pretrain_batch", self.pretrain_batch.to_string());
        kv("valid_days", self.valid_days.to_string());
        kv("fine_tune_epochs", self.fine_tune_epochs.to_string());
        kv("fine_tune_batch", self.fine_tune_batch.to_string());
        kv("n_ad", self.n_ad.to_string());
        kv("k_sd", self.k_sd.to_string());
        kv("c_max", self.c_max.to_string());
        kv("threshold_source", self.threshold_source.to_string());
        kv("knn_k", self.knn_k.to_string());
        kv("seed", self.seed.to_string());
        kv("hist_days", self.hist_days.to_string());
        kv("stream_days", self.stream_days.to_string());
        kv("start_date", self.start_date.format(DATE_FMT).to_string());
        kv(
            "drift_start",
            match self.drift_start {
                Some(d) => d.to_string(),
                None => "none".to_string(),
            },
        );
        kv("drift_bias", self.drift_bias.to_string());
        kv("sweep_supp", join_counts(&self.sweep_supp));
        kv("sweep_hidden", join_counts(&self.sweep_hidden));
        kv("sweep_pretrain_epochs", self.sweep_pretrain_epochs.to_string());
        kv("workers", self.workers.to_string());
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.serialize()).map_err(|e| Error::io(path, e))
    }

    /// Parses a config text. Defaults fill keys the text omits; unknown or
    /// repeated keys are errors. `origin` labels error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, first)) if first == MAGIC => {}
            Some((_, first)) => {
                return Err(Error::parse(
                    origin,
                    1,
                    format!("expected `{}`, found `{}`", MAGIC, first),
                ))
            }
            None => return Err(Error::parse(origin, 1, "empty config")),
        }
        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once(" = ")
                .ok_or_else(|| Error::parse(origin, line_no, "expected `key = value`"))?;
            if !seen.insert(key.to_owned()) {
                return Err(Error::parse(origin, line_no, format!("key `{}` repeated", key)));
            }
            cfg.set(key, value)
                .map_err(|msg| Error::parse(origin, line_no, msg))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Assigns one key from its text form. Returns a message, not an
    /// `Error`, so callers can attach file/line or environment context.
    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn count(key: &str, v: &str) -> std::result::Result<usize, String> {
            v.parse().map_err(|_| format!("`{}` is not a count: `{}`", key, v))
        }
        fn list(key: &str, v: &str) -> std::result::Result<Vec<usize>, String> {
            v.split(',').map(|p| count(key, p.trim())).collect()
        }
        match key {
            "data_dir" => self.data_dir = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "checkpoint" => self.checkpoint = PathBuf::from(value),
            "hidden_units" => self.hidden_units = count(key, value)?,
            "time_step" => self.time_step = count(key, value)?,
            "layers" => self.layers = count(key, value)?,
            "input_size" => self.input_size = count(key, value)?,
            "learning_rate" => {
                self.learning_rate =
                    value.parse().map_err(|_| format!("`learning_rate` is not a number: `{}`", value))?
            }
            "pretrain_epochs" => self.pretrain_epochs = count(key, value)?,
            "pretrain_batch" => self.pretrain_batch = count(key, value)?,
            "valid_days" => self.valid_days = count(key, value)?,
            "fine_tune_epochs" => self.fine_tune_epochs = count(key, value)?,
            "fine_tune_batch" => self.fine_tune_batch = count(key, value)?,
            "n_ad" => self.n_ad = count(key, value)?,
            "k_sd" => self.k_sd = count(key, value)?,
            "c_max" => {
                self.c_max =
                    value.parse().map_err(|_| format!("`c_max` is not a count: `{}`", value))?
            }
            "threshold_source" => {
                self.threshold_source = match value {
                    "validation" => ThresholdSource::Validation,
                    other => return Err(format!("unknown threshold source `{}`", other)),
                }
            }
            "knn_k" => self.knn_k = count(key, value)?,
            "seed" => {
                self.seed =
                    value.parse().map_err(|_| format!("`seed` is not an integer: `{}`", value))?
            }
            "hist_days" => self.hist_days = count(key, value)?,
            "stream_days" => self.stream_days = count(key, value)?,
            "start_date" => {
                self.start_date = NaiveDate::parse_from_str(value, DATE_FMT)
                    .map_err(|_| format!("`start_date` is not a date: `{}`", value))?
            }
            "drift_start" => {
                self.drift_start = match value {
                    "none" => None,
                    v => Some(count(key, v)?),
                }
            }
            "drift_bias" => {
                self.drift_bias =
                    value.parse().map_err(|_| format!("`drift_bias` is not a number: `{}`", value))?
            }
            "sweep_supp" => self.sweep_supp = list(key, value)?,
            "sweep_hidden" => self.sweep_hidden = list(key, value)?,
            "sweep_pretrain_epochs" => self.sweep_pretrain_epochs = count(key, value)?,
            "workers" => self.workers = count(key, value)?,
            other => return Err(format!("unknown key `{}`", other)),
        }
        Ok(())
    }

    /// Applies `PVCAST_<KEY>` variables from an explicit source; the
    /// injectable form keeps tests off the process environment.
    pub fn apply_env_pairs<I>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        for (name, value) in vars {
            if let Some(suffix) = name.strip_prefix("PVCAST_") {
                let key = suffix.to_lowercase();
                self.set(&key, &value)
                    .map_err(|msg| Error::parse("environment", 0, format!("{}: {}", name, msg)))?;
            }
        }
        Ok(())
    }

    pub fn apply_env(&mut self) -> Result<()> {
        self.apply_env_pairs(std::env::vars())
    }

    /// Rejects configurations the engine cannot honor. Checked once after
    /// all override layers are applied.
    pub fn validate(&self) -> Result<()> {
        let param = |msg: String| Err(Error::Parameter(msg));
        if self.layers != 1 {
            return param(format!("layers = {}: only a single recurrent layer is supported", self.layers));
        }
        if self.input_size != FEATURES {
            return param(format!("input_size = {}: the feature set is fixed at {}", self.input_size, FEATURES));
        }
        if !(1..=24).contains(&self.time_step) {
            return param(format!("time_step = {} outside 1..=24", self.time_step));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return param(format!("learning_rate = {} must be positive and finite", self.learning_rate));
        }
        let counts: [(&str, usize); 13] = [
            ("hidden_units", self.hidden_units),
            ("pretrain_epochs", self.pretrain_epochs),
            ("pretrain_batch", self.pretrain_batch),
            ("fine_tune_epochs", self.fine_tune_epochs),
            ("fine_tune_batch", self.fine_tune_batch),
            ("n_ad", self.n_ad),
            ("k_sd", self.k_sd),
            ("knn_k", self.knn_k),
            ("c_max", self.c_max as usize),
            ("stream_days", self.stream_days),
            ("sweep_pretrain_epochs", self.sweep_pretrain_epochs),
            ("workers", self.workers),
            ("hist_days", self.hist_days),
        ];
        for (name, v) in counts {
            if v == 0 {
                return param(format!("{} must be at least 1", name));
            }
        }
        if self.valid_days < 2 {
            return param("valid_days must be at least 2 to estimate a threshold".into());
        }
        if self.hist_days <= self.valid_days {
            return param(format!(
                "hist_days = {} leaves no training days before the {}-day validation split",
                self.hist_days, self.valid_days
            ));
        }
        if let Some(d) = self.drift_start {
            if d >= self.stream_days {
                return param(format!(
                    "drift_start = {} lies beyond the {}-day stream",
                    d, self.stream_days
                ));
            }
        }
        if !(self.drift_bias > 0.0 && self.drift_bias < 1.0) {
            return param(format!("drift_bias = {} outside (0, 1)", self.drift_bias));
        }
        for (name, xs) in [("sweep_supp", &self.sweep_supp), ("sweep_hidden", &self.sweep_hidden)] {
            if xs.is_empty() {
                return param(format!("{} must list at least one point", name));
            }
            if xs.iter().any(|&v| v == 0) {
                return param(format!("{} points must be at least 1", name));
            }
        }
        Ok(())
    }

    /// FNV-1a over the canonical serialization; recorded in reports so a
    /// row can be traced back to the exact configuration that produced it.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.serialize().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }

    pub fn hash_hex(&self) -> String {
        format!("{:016x}", self.hash())
    }

    pub fn historical_path(&self) -> PathBuf {
        self.data_dir.join("historical.csv")
    }

    pub fn stream_path(&self) -> PathBuf {
        self.data_dir.join("stream.csv")
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        if self.checkpoint.is_absolute() {
            self.checkpoint.clone()
        } else {
            self.out_dir.join(&self.checkpoint)
        }
    }

    /// Drift description in whole-dataset coordinates, as the generator
    /// expects; `drift_start` itself counts from the stream start.
    pub fn drift_spec(&self) -> Option<DriftSpec> {
        self.drift_start
            .map(|d| DriftSpec { start_day: self.hist_days + d, bias: self.drift_bias })
    }

    pub fn pretrain_options(&self) -> PretrainOptions {
        PretrainOptions {
            hidden: self.hidden_units,
            time_step: self.time_step,
            epochs: self.pretrain_epochs,
            batch_size: self.pretrain_batch,
            learning_rate: self.learning_rate,
            valid_days: self.valid_days,
            seed: self.seed,
        }
    }

    pub fn fine_tune_options(&self) -> FineTuneOptions {
        FineTuneOptions {
            epochs: self.fine_tune_epochs,
            batch_size: self.fine_tune_batch,
            learning_rate: self.learning_rate,
        }
    }

    pub fn replay_options(&self) -> ReplayOptions {
        ReplayOptions {
            n_ad: self.n_ad,
            k_sd: self.k_sd,
            c_max: self.c_max,
            fine_tune: self.fine_tune_options(),
            knn_k: self.knn_k,
            seed: self.seed,
        }
    }
}

/// Command-line flag values; the highest override layer.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub drift_start: Option<usize>,
    pub drift_bias: Option<f64>,
    pub workers: Option<usize>,
}

impl Overrides {
    pub fn apply_to(&self, cfg: &mut RunConfig) {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out_dir {
            cfg.out_dir = out.clone();
        }
        if let Some(day) = self.drift_start {
            cfg.drift_start = Some(day);
        }
        if let Some(bias) = self.drift_bias {
            cfg.drift_bias = bias;
        }
        if let Some(workers) = self.workers {
            cfg.workers = workers;
        }
    }
}

/// Defaults, then file, then environment, then flags; validates the result.
pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_env()?;
    overrides.apply_to(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serialization_round_trips_and_is_canonical() {
        let mut cfg = RunConfig::default();
        cfg.seed = 17;
        cfg.learning_rate = 0.0025;
        cfg.drift_start = Some(100);
        cfg.sweep_supp = vec![2, 11];
        let text = cfg.serialize();
        let back = RunConfig::parse(&text, "test").unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.serialize(), text);
    }

    #[test]
    fn file_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        let cfg = RunConfig { drift_start: Some(3), ..Default::default() };
        cfg.save(&path).unwrap();
        assert_eq!(RunConfig::load(&path).unwrap(), cfg);
    }

    #[test]
    fn omitted_keys_fall_back_to_defaults() {
        let cfg = RunConfig::parse("pvcast-config v1\nseed = 9\n", "test").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.hidden_units, RunConfig::default().hidden_units);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg =
            RunConfig::parse("pvcast-config v1\n\n# tuning run\nseed = 4\n", "test").unwrap();
        assert_eq!(cfg.seed, 4);
    }

    #[test]
    fn malformed_configs_are_rejected() {
        for text in [
            "pvcast-config v2\n",
            "pvcast-config v1\nseed = 1\nseed = 2\n",
            "pvcast-config v1\nmystery = 1\n",
            "pvcast-config v1\nseed: 1\n",
            "pvcast-config v1\nhidden_units = four\n",
            "pvcast-config v1\nstart_date = 2014-13-01\n",
            "pvcast-config v1\nthreshold_source = folklore\n",
            "",
        ] {
            assert!(RunConfig::parse(text, "test").is_err(), "accepted: {:?}", text);
        }
    }

    #[test]
    fn environment_overrides_file_and_flags_override_both() {
        let mut cfg = RunConfig::parse("pvcast-config v1\nseed = 1\nworkers = 2\n", "test").unwrap();
        cfg.apply_env_pairs([
            ("PVCAST_SEED".to_string(), "5".to_string()),
            ("PVCAST_HIDDEN_UNITS".to_string(), "8".to_string()),
            ("HOME".to_string(), "/root".to_string()),
        ])
        .unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.hidden_units, 8);
        assert_eq!(cfg.workers, 2);

        let flags = Overrides { seed: Some(9), workers: Some(3), ..Default::default() };
        flags.apply_to(&mut cfg);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.workers, 3);
        assert_eq!(cfg.hidden_units, 8);
    }

    #[test]
    fn bad_environment_values_are_reported() {
        let mut cfg = RunConfig::default();
        assert!(cfg
            .apply_env_pairs([("PVCAST_SEED".to_string(), "soon".to_string())])
            .is_err());
        assert!(cfg
            .apply_env_pairs([("PVCAST_MYSTERY".to_string(), "1".to_string())])
            .is_err());
    }

    #[test]
    fn validation_rejects_unsupported_settings() {
        let cases: Vec<Box<dyn Fn(&mut RunConfig)>> = vec![
            Box::new(|c| c.layers = 2),
            Box::new(|c| c.input_size = 5),
            Box::new(|c| c.time_step = 0),
            Box::new(|c| c.time_step = 25),
            Box::new(|c| c.learning_rate = 0.0),
            Box::new(|c| c.learning_rate = f64::NAN),
            Box::new(|c| c.hidden_units = 0),
            Box::new(|c| c.valid_days = 1),
            Box::new(|c| c.hist_days = 90),
            Box::new(|c| c.drift_start = Some(500)),
            Box::new(|c| c.drift_bias = 1.0),
            Box::new(|c| c.drift_bias = 0.0),
            Box::new(|c| c.sweep_supp = vec![]),
            Box::new(|c| c.sweep_hidden = vec![4, 0]),
            Box::new(|c| c.workers = 0),
        ];
        assert!(RunConfig::default().validate().is_ok());
        for (i, mutate) in cases.iter().enumerate() {
            let mut cfg = RunConfig::default();
            mutate(&mut cfg);
            assert!(cfg.validate().is_err(), "case {} passed validation", i);
        }
    }

    #[test]
    fn hash_tracks_configuration_identity() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash_hex().len(), 16);
    }

    #[test]
    fn derived_paths_and_options_wire_through() {
        let mut cfg = RunConfig::default();
        cfg.drift_start = Some(100);
        assert_eq!(cfg.historical_path(), PathBuf::from("data/historical.csv"));
        assert_eq!(cfg.checkpoint_path(), PathBuf::from("reports/model.ckpt"));
        cfg.checkpoint = PathBuf::from("/tmp/m.ckpt");
        assert_eq!(cfg.checkpoint_path(), PathBuf::from("/tmp/m.ckpt"));
        let spec = cfg.drift_spec().unwrap();
        assert_eq!(spec.start_day, cfg.hist_days + 100);
        assert_eq!(spec.bias, cfg.drift_bias);
        assert_eq!(cfg.pretrain_options().epochs, cfg.pretrain_epochs);
        assert_eq!(cfg.replay_options().fine_tune.batch_size, cfg.fine_tune_batch);
    }

    #[test]
    fn resolve_layers_defaults_when_no_file_is_given() {
        let cfg = resolve(None, &Overrides::default()).unwrap();
        assert_eq!(cfg, RunConfig::default());
        let bad = Overrides { workers: Some(0), ..Default::default() };
        assert!(resolve(None, &bad).is_err());
    }
}
