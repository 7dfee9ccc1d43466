//! Experiment configuration.
//!
//! A TOML file whose top-level tables mirror the simulation components.
//! Every section and key is optional; unknown keys are rejected. Command-line
//! overrides (`section.key=value`) are applied to the parsed document before
//! it is checked, so they obey the same rules as the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tbqkd_core::analysis::{ErrorCorrection, KeyRateParams, DEFAULT_EC_EFFICIENCY, DEFAULT_SIFTING};
use tbqkd_core::detection::{Apparatus, DetectorModel, SlotLayout};
use tbqkd_core::optics::SwitchModel;
use tbqkd_core::source::{DriftModel, LossBudget, SourceConfig};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: SourceConfig,
    pub budget: BudgetConfig,
    pub switch: SwitchModel,
    pub detector: DetectorModel,
    pub layout: SlotLayout,
    pub drift: DriftModel,
    pub analysis: AnalysisConfig,
    pub run: RunConfig,
    pub sweep: SweepConfig,
    pub scan: ScanConfig,
    pub stability: StabilityConfig,
    pub output: OutputConfig,
}

/// Losses ahead of the detector. The detector's own loss is
/// `detector.efficiency_db`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    pub channel_db: f64,
    pub coupling_db: f64,
    pub receiver_optics_db: f64,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        let b = LossBudget::default();
        BudgetConfig {
            channel_db: b.channel_db,
            coupling_db: b.coupling_db,
            receiver_optics_db: b.receiver_optics_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Sifting efficiency `q`.
    pub q: f64,
    /// Error-correction inefficiency: a number or a list of `[E, f]` knots.
    pub f: ErrorCorrection,
    /// Search interval for the decoy-intensity optimizer.
    pub nu_min: f64,
    pub nu_max: f64,
    /// Parametric-bootstrap resamples for the key-rate uncertainty.
    pub bootstrap: u32,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            q: DEFAULT_SIFTING,
            f: ErrorCorrection::Constant(DEFAULT_EC_EFFICIENCY),
            nu_min: 0.01,
            nu_max: 0.5,
            bootstrap: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub pulses_per_setting: u64,
    /// Pulses per independently seeded block.
    pub block_size: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 20_240_801,
            pulses_per_setting: 10_000_000,
            block_size: 1 << 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub channel_db: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let mut channel_db = vec![0.45];
        channel_db.extend((1..=12).map(f64::from));
        SweepConfig { channel_db }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub start_ps: f64,
    pub stop_ps: f64,
    pub step_ps: f64,
    pub pulses_per_setting: u64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            start_ps: -6.0,
            stop_ps: 10.5,
            step_ps: 0.1,
            pulses_per_setting: 100_000,
        }
    }
}

impl ScanConfig {
    pub fn delays(&self) -> Result<Vec<f64>> {
        let ok = [self.start_ps, self.stop_ps, self.step_ps].iter().all(|x| x.is_finite())
            && self.step_ps > 0.0
            && self.stop_ps >= self.start_ps;
        if !ok {
            return Err(Error::config("scan", "need finite start <= stop and step > 0"));
        }
        let n = ((self.stop_ps - self.start_ps) / self.step_ps + 1e-9).floor() as usize;
        Ok((0..=n).map(|k| self.start_ps + self.step_ps * k as f64).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub hours: f64,
    pub samples_per_hour: u32,
    /// Pulses per preparation setting in each sample.
    pub pulses_per_sample: u64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            hours: 28.0,
            samples_per_hour: 12,
            pulses_per_sample: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::Usage(format!("unknown format `{s}` (expected csv or json)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Standard output when absent.
    pub path: Option<PathBuf>,
    pub format: Format,
}

impl ExperimentConfig {
    /// Parses `text`, applies `overrides` and validates the result.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| Error::config("<file>", e.message()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(toml::Value::Table(doc)).map_err(|e| {
            let key = e.path().to_string();
            Error::config(key, e.into_inner().message())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let section = |key: &'static str| move |e: tbqkd_core::Error| Error::config(key, e);
        self.source.validate().map_err(section("source"))?;
        if !self.source.vacuum_included || self.source.class_probabilities[2] <= 0.0 {
            return Err(Error::config(
                "source.vacuum_included",
                "the decoy analysis needs a vacuum class with nonzero probability",
            ));
        }
        self.loss_budget().validate().map_err(section("budget"))?;
        self.switch.validate().map_err(section("switch"))?;
        self.detector.validate().map_err(section("detector"))?;
        self.apparatus().validate().map_err(section("layout"))?;
        self.drift.validate().map_err(section("drift"))?;
        self.key_rate_params().validate().map_err(section("analysis"))?;
        let a = &self.analysis;
        if !(a.nu_min > 0.0 && a.nu_min <= a.nu_max && a.nu_max < self.source.mu) {
            return Err(Error::config("analysis.nu_min", "need 0 < nu_min <= nu_max < source.mu"));
        }
        if self.run.pulses_per_setting == 0 {
            return Err(Error::config("run.pulses_per_setting", "must be > 0"));
        }
        if self.run.block_size == 0 {
            return Err(Error::config("run.block_size", "must be > 0"));
        }
        if self.sweep.channel_db.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::config("sweep.channel_db", "losses must be finite and >= 0"));
        }
        self.scan.delays()?;
        if self.scan.pulses_per_setting == 0 {
            return Err(Error::config("scan.pulses_per_setting", "must be > 0"));
        }
        let s = &self.stability;
        if !(s.hours.is_finite() && s.hours > 0.0) {
            return Err(Error::config("stability.hours", "must be > 0"));
        }
        if s.samples_per_hour == 0 || s.pulses_per_sample == 0 {
            return Err(Error::config("stability", "samples_per_hour and pulses_per_sample must be > 0"));
        }
        Ok(())
    }

    pub fn loss_budget(&self) -> LossBudget {
        LossBudget {
            channel_db: self.budget.channel_db,
            coupling_db: self.budget.coupling_db,
            detector_db: self.detector.efficiency_db,
            receiver_optics_db: self.budget.receiver_optics_db,
        }
    }

    pub fn apparatus(&self) -> Apparatus {
        Apparatus {
            source: self.source,
            budget: self.loss_budget(),
            switch: self.switch,
            detector: self.detector,
            layout: self.layout,
        }
    }

    pub fn key_rate_params(&self) -> KeyRateParams {
        KeyRateParams {
            sifting: self.analysis.q,
            error_correction: self.analysis.f.clone(),
            rep_rate_hz: self.source.rep_rate_hz,
        }
    }
}

/// Applies one `section.key=value` override. The value is read as a TOML
/// value when possible and as a bare string otherwise.
pub fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Usage(format!("override `{spec}` is not of the form key=value")))?;
    let key = key.trim();
    let path: Vec<&str> = key.split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Usage(format!("override `{spec}` has an empty key segment")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));

    let (last, parents) = path.split_last().expect("nonempty path");
    let mut table = doc;
    for (depth, p) in parents.iter().enumerate() {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(path[..=depth].join("."), "is not a table"))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}
