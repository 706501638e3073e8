//! Run configuration: a flat TOML document of named parameters.
//!
//! Powers carry an explicit unit (`"0.1 W"`, `"10 dBm"` or `"off"`) and keep
//! it for re-emission, so `parse(emit(c)) == c` holds exactly.

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::denoising::DenoisePolicy;
use crate::energy::EnergyParams;
use crate::learning::{Batching, ModelKind, ModelSpec};
use crate::scheduling::{SchedulerKind, SchedulerVariant};
use crate::topology::{Band, Placement};
use crate::{Error, Result};

/// A transmit or noise power as written by the user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Power {
    Off,
    Watts(f64),
    Dbm(f64),
}

impl Power {
    pub fn watts(self) -> f64 {
        match self {
            Power::Off => 0.0,
            Power::Watts(w) => w,
            Power::Dbm(dbm) => dbm_to_watts(dbm),
        }
    }
}

/// `10^((dBm − 30)/10)`.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl fmt::Display for Power {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Power::Off => f.write_str("off"),
            Power::Watts(w) => write!(f, "{w:?} W"),
            Power::Dbm(d) => write!(f, "{d:?} dBm"),
        }
    }
}

impl FromStr for Power {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("off") {
            return Ok(Power::Off);
        }
        let (num, ctor): (&str, fn(f64) -> Power) = if let Some(n) = s.strip_suffix("dBm") {
            (n, Power::Dbm)
        } else if let Some(n) = s.strip_suffix('W') {
            (n, Power::Watts)
        } else {
            return Err(format!(
                "`{s}` has no unit (write e.g. \"0.1 W\", \"10 dBm\" or \"off\")"
            ));
        };
        let v: f64 = num
            .trim()
            .parse()
            .map_err(|_| format!("`{s}` is not a number followed by a unit"))?;
        if !v.is_finite() {
            return Err(format!("`{s}` is not finite"));
        }
        Ok(ctor(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Synthetic,
    Idx,
}

impl DatasetKind {
    fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Synthetic => "synthetic",
            DatasetKind::Idx => "idx",
        }
    }
}

/// Every parameter of a run. Field docs give the TOML key.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// `seed`
    pub seed: u64,
    /// `T`: communication rounds.
    pub rounds: usize,
    /// `M`: devices.
    pub devices: usize,
    /// `I`: in-band sources (harvesting and CCI).
    pub inband: usize,
    /// `K`: out-band sources (harvesting only).
    pub outband: usize,
    /// `device_band`, `inband_band`, `outband_band`: `[lo, hi]` per axis, meters.
    pub device_band: Band,
    pub inband_band: Band,
    pub outband_band: Band,
    pub delta_m: f64,
    pub xi: f64,
    pub p_in: Power,
    pub p_out: Power,
    pub p_up: Power,
    /// `E_up`, joules per transmission.
    pub e_up: f64,
    /// `T_h`, seconds.
    pub t_h: f64,
    pub n0: Power,
    pub b_max: f64,
    pub b_init: f64,
    pub eta: f64,
    pub kappa: f64,
    pub c_m: f64,
    pub f_m: f64,
    pub samples_per_device: usize,
    pub model: ModelKind,
    pub hidden_units: usize,
    pub input_dim: usize,
    pub num_classes: usize,
    /// Class-mean separation of the synthetic task.
    pub separation: f64,
    /// Held-out samples for the synthetic task.
    pub test_samples: usize,
    pub dataset: DatasetKind,
    pub idx_train_images: Option<PathBuf>,
    pub idx_train_labels: Option<PathBuf>,
    pub idx_test_images: Option<PathBuf>,
    pub idx_test_labels: Option<PathBuf>,
    pub scheduler: SchedulerVariant,
    pub fixed_tau: u32,
    /// `tau_cap`: integer or `"off"`.
    pub tau_cap: Option<u32>,
    pub denoise: DenoisePolicy,
    /// Evaluate loss and accuracy every this many rounds (and at the last).
    pub eval_every: usize,
    /// `batch_size`: `"full"` or a positive integer.
    pub batch_size: Option<usize>,
    /// Threads for the per-device fan-out; 0 uses all cores.
    pub workers: usize,
    /// `smoothness_L` used by the convergence diagnostic.
    pub smoothness_l: f64,
    /// `oracle_aggregate`: replace the denoised aggregate by the ideal mean.
    pub oracle_aggregate: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            rounds: 100,
            devices: 25,
            inband: 100,
            outband: 100,
            device_band: Band::new(20.0, 100.0),
            inband_band: Band::new(120.0, 140.0),
            outband_band: Band::new(25.0, 100.0),
            delta_m: 0.9,
            xi: 2.5,
            p_in: Power::Watts(0.1),
            p_out: Power::Watts(0.1),
            p_up: Power::Dbm(10.0),
            e_up: 1e-3,
            t_h: 1.0,
            n0: Power::Dbm(-80.0),
            b_max: 50.0,
            b_init: 50.0,
            eta: 0.01,
            kappa: 1e-28,
            c_m: 1.3e4,
            f_m: 2e9,
            samples_per_device: 1200,
            model: ModelKind::LogisticRegression,
            hidden_units: 32,
            input_dim: 20,
            num_classes: 10,
            separation: 4.0,
            test_samples: 2000,
            dataset: DatasetKind::Synthetic,
            idx_train_images: None,
            idx_train_labels: None,
            idx_test_images: None,
            idx_test_labels: None,
            scheduler: SchedulerVariant::Adaptive,
            fixed_tau: 2,
            tau_cap: Some(5),
            denoise: DenoisePolicy::VarianceEmpirical,
            eval_every: 1,
            batch_size: None,
            workers: 0,
            smoothness_l: 1.0,
            oracle_aggregate: false,
        }
    }
}

/// Every accepted key, in emission order.
pub const KEYS: &[&str] = &[
    "seed",
    "T",
    "M",
    "I",
    "K",
    "device_band",
    "inband_band",
    "outband_band",
    "delta_m",
    "xi",
    "P_in",
    "P_out",
    "P_up",
    "E_up",
    "T_h",
    "N0",
    "B_max",
    "B_init",
    "eta",
    "kappa",
    "C_m",
    "f_m",
    "samples_per_device",
    "model",
    "hidden_units",
    "input_dim",
    "num_classes",
    "separation",
    "test_samples",
    "dataset",
    "idx_train_images",
    "idx_train_labels",
    "idx_test_images",
    "idx_test_labels",
    "scheduler",
    "fixed_tau",
    "tau_cap",
    "denoise",
    "eval_every",
    "batch_size",
    "workers",
    "smoothness_L",
    "oracle_aggregate",
];

fn bad(field: &str, value: &toml::Value, expected: &str) -> Error {
    Error::config(field, format!("expected {expected}, got {value}"))
}

fn get_f64(field: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(bad(field, v, "a number")),
    }
}

fn get_u64(field: &str, v: &toml::Value) -> Result<u64> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(bad(field, v, "a non-negative integer")),
    }
}

fn get_usize(field: &str, v: &toml::Value) -> Result<usize> {
    Ok(get_u64(field, v)? as usize)
}

fn get_u32(field: &str, v: &toml::Value) -> Result<u32> {
    u32::try_from(get_u64(field, v)?).map_err(|_| bad(field, v, "an integer below 2^32"))
}

fn get_str<'a>(field: &str, v: &'a toml::Value) -> Result<&'a str> {
    v.as_str().ok_or_else(|| bad(field, v, "a string"))
}

fn get_power(field: &str, v: &toml::Value) -> Result<Power> {
    match v {
        toml::Value::String(s) => s.parse().map_err(|m: String| Error::config(field, m)),
        toml::Value::Float(_) | toml::Value::Integer(_) => Err(Error::config(
            field,
            format!("power `{v}` has no unit (write e.g. \"0.1 W\" or \"10 dBm\")"),
        )),
        _ => Err(bad(field, v, "a power such as \"0.1 W\"")),
    }
}

fn get_band(field: &str, v: &toml::Value) -> Result<Band> {
    match v.as_array().map(Vec::as_slice) {
        Some([lo, hi]) => Ok(Band::new(get_f64(field, lo)?, get_f64(field, hi)?)),
        _ => Err(bad(field, v, "[lo, hi]")),
    }
}

fn get_path(field: &str, v: &toml::Value) -> Result<Option<PathBuf>> {
    let s = get_str(field, v)?;
    Ok((!s.is_empty()).then(|| PathBuf::from(s)))
}

fn get_optional_count<T: TryFrom<u64>>(
    field: &str,
    v: &toml::Value,
    word: &str,
) -> Result<Option<T>> {
    if v.as_str() == Some(word) {
        return Ok(None);
    }
    let n = get_u64(field, v).map_err(|_| bad(field, v, &format!("an integer or \"{word}\"")))?;
    T::try_from(n)
        .map(Some)
        .map_err(|_| bad(field, v, "a smaller integer"))
}

/// Parses the right-hand side of `--set key=value`. Anything that is not a
/// TOML literal is taken as a bare string, so `P_in=50 dBm` works unquoted.
pub fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    }
}

/// Splits `key=value`.
pub fn parse_override(s: &str) -> Result<(String, toml::Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::config(s, "override must look like key=value"))?;
    Ok((k.trim().to_string(), parse_value(v.trim())))
}

impl SimConfig {
    /// Applies one key. Unknown keys are rejected with the list of valid ones.
    pub fn set(&mut self, key: &str, v: &toml::Value) -> Result<()> {
        match key {
            // TOML integers stop at 2^63 - 1; larger seeds travel as strings.
            "seed" => {
                self.seed = match v {
                    toml::Value::String(s) => s.parse().map_err(|_| bad(key, v, "a u64"))?,
                    _ => get_u64(key, v)?,
                }
            }
            "T" => self.rounds = get_usize(key, v)?,
            "M" => self.devices = get_usize(key, v)?,
            "I" => self.inband = get_usize(key, v)?,
            "K" => self.outband = get_usize(key, v)?,
            "device_band" => self.device_band = get_band(key, v)?,
            "inband_band" => self.inband_band = get_band(key, v)?,
            "outband_band" => self.outband_band = get_band(key, v)?,
            "delta_m" => self.delta_m = get_f64(key, v)?,
            "xi" => self.xi = get_f64(key, v)?,
            "P_in" => self.p_in = get_power(key, v)?,
            "P_out" => self.p_out = get_power(key, v)?,
            "P_up" => self.p_up = get_power(key, v)?,
            "E_up" => self.e_up = get_f64(key, v)?,
            "T_h" => self.t_h = get_f64(key, v)?,
            "N0" => self.n0 = get_power(key, v)?,
            "B_max" => self.b_max = get_f64(key, v)?,
            "B_init" => self.b_init = get_f64(key, v)?,
            "eta" => self.eta = get_f64(key, v)?,
            "kappa" => self.kappa = get_f64(key, v)?,
            "C_m" => self.c_m = get_f64(key, v)?,
            "f_m" => self.f_m = get_f64(key, v)?,
            "samples_per_device" => self.samples_per_device = get_usize(key, v)?,
            "model" => self.model = get_str(key, v)?.parse()?,
            "hidden_units" => self.hidden_units = get_usize(key, v)?,
            "input_dim" => self.input_dim = get_usize(key, v)?,
            "num_classes" => self.num_classes = get_usize(key, v)?,
            "separation" => self.separation = get_f64(key, v)?,
            "test_samples" => self.test_samples = get_usize(key, v)?,
            "dataset" => {
                self.dataset = match get_str(key, v)? {
                    "synthetic" => DatasetKind::Synthetic,
                    "idx" => DatasetKind::Idx,
                    other => {
                        return Err(Error::config(
                            key,
                            format!("unknown dataset `{other}` (expected synthetic or idx)"),
                        ))
                    }
                }
            }
            "idx_train_images" => self.idx_train_images = get_path(key, v)?,
            "idx_train_labels" => self.idx_train_labels = get_path(key, v)?,
            "idx_test_images" => self.idx_test_images = get_path(key, v)?,
            "idx_test_labels" => self.idx_test_labels = get_path(key, v)?,
            "scheduler" => self.scheduler = get_str(key, v)?.parse()?,
            "fixed_tau" => self.fixed_tau = get_u32(key, v)?,
            "tau_cap" => self.tau_cap = get_optional_count(key, v, "off")?,
            "denoise" => self.denoise = get_str(key, v)?.parse()?,
            "eval_every" => self.eval_every = get_usize(key, v)?,
            "batch_size" => self.batch_size = get_optional_count(key, v, "full")?,
            "workers" => self.workers = get_usize(key, v)?,
            "smoothness_L" => self.smoothness_l = get_f64(key, v)?,
            "oracle_aggregate" => {
                self.oracle_aggregate = v.as_bool().ok_or_else(|| bad(key, v, "true or false"))?
            }
            other => {
                return Err(Error::config(
                    other,
                    format!("unknown key; valid keys are: {}", KEYS.join(", ")),
                ))
            }
        }
        Ok(())
    }

    /// Parses a TOML document on top of the defaults and validates it.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Self::from_toml_with_overrides(s, &[])
    }

    pub fn from_toml_with_overrides(s: &str, overrides: &[(String, toml::Value)]) -> Result<Self> {
        let table: toml::Table = s
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<document>", e.message().to_string()))?;
        let mut cfg = SimConfig::default();
        for (k, v) in &table {
            cfg.set(k, v)?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (or starts from defaults when `None`) and applies
    /// overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[(String, toml::Value)]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.energy_params().validate()?;
        self.device_band.validate("device_band")?;
        self.inband_band.validate("inband_band")?;
        self.outband_band.validate("outband_band")?;
        self.model_spec().validate()?;
        self.scheduler_kind().validate()?;
        for (field, v) in [("N0", self.n0.watts()), ("P_up", self.p_up.watts())] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(field, "power must be finite and >= 0"));
            }
        }
        if !(self.b_init >= 0.0 && self.b_init <= self.b_max) {
            return Err(Error::config("B_init", "must lie in [0, B_max]"));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::config("eta", "must be finite and >= 0"));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::config("separation", "must be finite and >= 0"));
        }
        if !(self.smoothness_l > 0.0 && self.smoothness_l.is_finite()) {
            return Err(Error::config("smoothness_L", "must be > 0"));
        }
        if self.devices == 0 {
            return Err(Error::config("M", "need at least one device"));
        }
        if self.samples_per_device == 0 {
            return Err(Error::config("samples_per_device", "must be >= 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every", "must be >= 1"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::config("batch_size", "must be >= 1 or \"full\""));
        }
        match self.dataset {
            DatasetKind::Synthetic => {
                if self.test_samples == 0 {
                    return Err(Error::config("test_samples", "must be >= 1"));
                }
            }
            DatasetKind::Idx => {
                for (field, p) in [
                    ("idx_train_images", &self.idx_train_images),
                    ("idx_train_labels", &self.idx_train_labels),
                    ("idx_test_images", &self.idx_test_images),
                    ("idx_test_labels", &self.idx_test_labels),
                ] {
                    if p.is_none() {
                        return Err(Error::config(field, "required when dataset = \"idx\""));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn energy_params(&self) -> EnergyParams {
        EnergyParams {
            t_h: self.t_h,
            delta: self.delta_m,
            xi: self.xi,
            p_in: vec![self.p_in.watts(); self.inband],
            p_out: vec![self.p_out.watts(); self.outband],
            kappa: self.kappa,
            c_m: self.c_m,
            f_m: self.f_m,
            e_up: self.e_up,
            b_max: self.b_max,
        }
    }

    pub fn placement(&self) -> Placement {
        Placement {
            devices: self.devices,
            inband: self.inband,
            outband: self.outband,
            device_band: self.device_band,
            inband_band: self.inband_band,
            outband_band: self.outband_band,
        }
    }

    pub fn model_spec(&self) -> ModelSpec {
        match self.model {
            ModelKind::LogisticRegression => ModelSpec::logistic(self.input_dim, self.num_classes),
            ModelKind::OneHiddenLayerMlp => {
                ModelSpec::mlp(self.input_dim, self.hidden_units, self.num_classes)
            }
        }
    }

    pub fn scheduler_kind(&self) -> SchedulerKind {
        SchedulerKind {
            variant: self.scheduler,
            fixed_tau: self.fixed_tau,
            tau_cap: self.tau_cap,
        }
    }

    pub fn batching(&self) -> Batching {
        match self.batch_size {
            None => Batching::FullBatch,
            Some(b) => Batching::MiniBatch(b),
        }
    }

    /// Serializes every key in a fixed order.
    pub fn emit(&self) -> String {
        fn band(b: Band) -> String {
            format!("[{:?}, {:?}]", b.lo, b.hi)
        }
        fn quoted(s: &str) -> String {
            toml::Value::String(s.to_string()).to_string()
        }
        fn path(p: &Option<PathBuf>) -> String {
            quoted(
                &p.as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            )
        }
        let entries: Vec<(&str, String)> = vec![
            (
                "seed",
                if self.seed > i64::MAX as u64 {
                    quoted(&self.seed.to_string())
                } else {
                    self.seed.to_string()
                },
            ),
            ("T", self.rounds.to_string()),
            ("M", self.devices.to_string()),
            ("I", self.inband.to_string()),
            ("K", self.outband.to_string()),
            ("device_band", band(self.device_band)),
            ("inband_band", band(self.inband_band)),
            ("outband_band", band(self.outband_band)),
            ("delta_m", format!("{:?}", self.delta_m)),
            ("xi", format!("{:?}", self.xi)),
            ("P_in", quoted(&self.p_in.to_string())),
            ("P_out", quoted(&self.p_out.to_string())),
            ("P_up", quoted(&self.p_up.to_string())),
            ("E_up", format!("{:?}", self.e_up)),
            ("T_h", format!("{:?}", self.t_h)),
            ("N0", quoted(&self.n0.to_string())),
            ("B_max", format!("{:?}", self.b_max)),
            ("B_init", format!("{:?}", self.b_init)),
            ("eta", format!("{:?}", self.eta)),
            ("kappa", format!("{:?}", self.kappa)),
            ("C_m", format!("{:?}", self.c_m)),
            ("f_m", format!("{:?}", self.f_m)),
            ("samples_per_device", self.samples_per_device.to_string()),
            ("model", quoted(self.model.as_str())),
            ("hidden_units", self.hidden_units.to_string()),
            ("input_dim", self.input_dim.to_string()),
            ("num_classes", self.num_classes.to_string()),
            ("separation", format!("{:?}", self.separation)),
            ("test_samples", self.test_samples.to_string()),
            ("dataset", quoted(self.dataset.as_str())),
            ("idx_train_images", path(&self.idx_train_images)),
            ("idx_train_labels", path(&self.idx_train_labels)),
            ("idx_test_images", path(&self.idx_test_images)),
            ("idx_test_labels", path(&self.idx_test_labels)),
            ("scheduler", quoted(self.scheduler.as_str())),
            ("fixed_tau", self.fixed_tau.to_string()),
            (
                "tau_cap",
                self.tau_cap
                    .map_or_else(|| quoted("off"), |c| c.to_string()),
            ),
            ("denoise", quoted(self.denoise.as_str())),
            ("eval_every", self.eval_every.to_string()),
            (
                "batch_size",
                self.batch_size
                    .map_or_else(|| quoted("full"), |b| b.to_string()),
            ),
            ("workers", self.workers.to_string()),
            ("smoothness_L", format!("{:?}", self.smoothness_l)),
            ("oracle_aggregate", self.oracle_aggregate.to_string()),
        ];
        debug_assert_eq!(entries.len(), KEYS.len());
        let mut out = String::new();
        for (k, v) in entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
