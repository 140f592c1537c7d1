//! Experiment configuration: a flat `key = value` file with every key
//! overridable by the CLI flag of the same name. Unknown keys are errors.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::CliError;

/// Training protocol selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Cl,
    Fl,
    FlActiveOnly,
    Hfcl,
    HfclSdt,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Cl => "cl",
            Mode::Fl => "fl",
            Mode::FlActiveOnly => "fl-active-only",
            Mode::Hfcl => "hfcl",
            Mode::HfclSdt => "hfcl-sdt",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cl" => Ok(Mode::Cl),
            "fl" => Ok(Mode::Fl),
            "fl-active-only" => Ok(Mode::FlActiveOnly),
            "hfcl" => Ok(Mode::Hfcl),
            "hfcl-sdt" => Ok(Mode::HfclSdt),
            other => Err(format!(
                "unknown mode '{other}' (expected cl, fl, fl-active-only, hfcl, or hfcl-sdt)"
            )),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Model preset: the trainable desk classifier or the reference CNN
/// filter counts used for overhead arithmetic only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelPreset {
    DeskMlp,
    PaperCnnCount,
}

impl ModelPreset {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelPreset::DeskMlp => "desk-mlp",
            ModelPreset::PaperCnnCount => "paper-cnn-count",
        }
    }
}

impl FromStr for ModelPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk-mlp" => Ok(ModelPreset::DeskMlp),
            "paper-cnn-count" => Ok(ModelPreset::PaperCnnCount),
            other => Err(format!(
                "unknown model preset '{other}' (expected desk-mlp or paper-cnn-count)"
            )),
        }
    }
}

/// Resolved run parameters. Defaults are the desk-scale preset.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub clients: usize,
    pub passive: usize,
    pub rounds: usize,
    pub bits: u32,
    pub snr_db: f64,
    pub eta: f64,
    pub minibatches: Option<usize>,
    pub batch_size: usize,
    pub model: ModelPreset,
    pub images: PathBuf,
    pub labels: PathBuf,
    pub downsample: bool,
    pub seed: u64,
    pub out: PathBuf,
}

/// Desk defaults: train on a seeded 1,000-sample subset, validate on the
/// next 500, 14x14 inputs, 50 rounds across 10 clients.
pub const DESK_TRAIN_SAMPLES: usize = 1_000;
pub const DESK_VAL_SAMPLES: usize = 500;
pub const DESK_CLIENTS: usize = 10;
pub const DESK_ROUNDS: usize = 50;
pub const DESK_BITS: u32 = 5;
pub const DESK_SNR_DB: f64 = 20.0;
/// Desk default learning rate. The hybrid update sums two group means,
/// so its effective step is up to twice a centralized step; this rate
/// keeps every protocol variant stable over the 50-round budget.
pub const DESK_ETA: f64 = 0.3;
pub const DESK_BATCH_SIZE: usize = 128;

/// Builder holding optional values from the config file and CLI flags.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverlay {
    pub mode: Option<Mode>,
    pub clients: Option<usize>,
    pub passive: Option<usize>,
    pub rounds: Option<usize>,
    pub bits: Option<u32>,
    pub snr_db: Option<f64>,
    pub eta: Option<f64>,
    pub minibatches: Option<usize>,
    pub batch_size: Option<usize>,
    pub model: Option<ModelPreset>,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub downsample: Option<bool>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub sweep: Option<String>,
    pub seeds: Option<String>,
}

impl ConfigOverlay {
    /// Later entries win: `self` is the base (config file), `top` the
    /// CLI flags.
    pub fn merged_with(mut self, top: ConfigOverlay) -> ConfigOverlay {
        macro_rules! take {
            ($field:ident) => {
                if top.$field.is_some() {
                    self.$field = top.$field;
                }
            };
        }
        take!(mode);
        take!(clients);
        take!(passive);
        take!(rounds);
        take!(bits);
        take!(snr_db);
        take!(eta);
        take!(minibatches);
        take!(batch_size);
        take!(model);
        take!(images);
        take!(labels);
        take!(downsample);
        take!(seed);
        take!(out);
        take!(sweep);
        take!(seeds);
        self
    }

    /// Parses the flat `key = value` config file format. Blank lines and
    /// `#` comments are skipped; unknown keys are errors.
    pub fn from_file(path: &Path) -> Result<ConfigOverlay, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_str_contents(&text)
    }

    pub fn from_str_contents(text: &str) -> Result<ConfigOverlay, CliError> {
        let mut overlay = ConfigOverlay::default();
        let mut seen: BTreeMap<String, ()> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
            let key = key.trim();
            let value = value.trim();
            if seen.insert(key.to_string(), ()).is_some() {
                return Err(CliError::Config(format!("duplicate config key '{key}'")));
            }
            overlay.set(key, value)?;
        }
        Ok(overlay)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
        where
            T::Err: fmt::Display,
        {
            value
                .parse::<T>()
                .map_err(|e| CliError::Config(format!("bad value for '{key}': {e}")))
        }

        match key {
            "mode" => self.mode = Some(parse(key, value)?),
            "clients" => self.clients = Some(parse(key, value)?),
            "passive" => self.passive = Some(parse(key, value)?),
            "rounds" => self.rounds = Some(parse(key, value)?),
            "bits" => self.bits = Some(parse(key, value)?),
            "snr-db" => self.snr_db = Some(parse(key, value)?),
            "eta" => self.eta = Some(parse(key, value)?),
            "minibatches" => self.minibatches = Some(parse(key, value)?),
            "batch-size" => self.batch_size = Some(parse(key, value)?),
            "model" => self.model = Some(parse(key, value)?),
            "images" => self.images = Some(PathBuf::from(value)),
            "labels" => self.labels = Some(PathBuf::from(value)),
            "downsample" => self.downsample = Some(parse(key, value)?),
            "seed" => self.seed = Some(parse(key, value)?),
            "out" => self.out = Some(PathBuf::from(value)),
            "sweep" => self.sweep = Some(value.to_string()),
            "seeds" => self.seeds = Some(value.to_string()),
            other => return Err(CliError::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Resolves into a full config, applying desk defaults for anything
    /// still unset. Mode and dataset paths have no defaults.
    pub fn resolve(self) -> Result<ExperimentConfig, CliError> {
        let mode = self
            .mode
            .ok_or_else(|| CliError::Config("missing 'mode' (flag --mode or config key)".into()))?;
        let images = self
            .images
            .ok_or_else(|| CliError::Config("missing 'images' dataset path".into()))?;
        let labels = self
            .labels
            .ok_or_else(|| CliError::Config("missing 'labels' dataset path".into()))?;
        let config = ExperimentConfig {
            mode,
            clients: self.clients.unwrap_or(DESK_CLIENTS),
            passive: self.passive.unwrap_or(0),
            rounds: self.rounds.unwrap_or(DESK_ROUNDS),
            bits: self.bits.unwrap_or(DESK_BITS),
            snr_db: self.snr_db.unwrap_or(DESK_SNR_DB),
            eta: self.eta.unwrap_or(DESK_ETA),
            minibatches: self.minibatches,
            batch_size: self.batch_size.unwrap_or(DESK_BATCH_SIZE),
            model: self.model.unwrap_or(ModelPreset::DeskMlp),
            images,
            labels,
            downsample: self.downsample.unwrap_or(true),
            seed: self.seed.unwrap_or(0),
            out: self.out.unwrap_or_else(|| PathBuf::from("metrics.csv")),
        };
        config.validate()?;
        Ok(config)
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.clients == 0 {
            return Err(CliError::Config("clients must be at least 1".into()));
        }
        if self.passive > self.clients {
            return Err(CliError::Config(format!(
                "passive count {} exceeds client count {}",
                self.passive, self.clients
            )));
        }
        match self.mode {
            Mode::Fl if self.passive != 0 => {
                return Err(CliError::Config("mode fl requires passive = 0".into()));
            }
            Mode::FlActiveOnly if self.passive >= self.clients => {
                return Err(CliError::Config(
                    "mode fl-active-only cannot work with every client passive".into(),
                ));
            }
            _ => {}
        }
        if !(self.eta > 0.0) {
            return Err(CliError::Config("eta must be positive".into()));
        }
        if self.rounds == 0 {
            return Err(CliError::Config("rounds must be at least 1".into()));
        }
        if !(1..=32).contains(&self.bits) {
            return Err(CliError::Config("bits must be in 1..=32".into()));
        }
        if self.batch_size == 0 {
            return Err(CliError::Config("batch-size must be at least 1".into()));
        }
        if self.minibatches == Some(0) {
            return Err(CliError::Config("minibatches must be at least 1".into()));
        }
        Ok(())
    }

    /// Serializes back into the config-file format; parsing the result
    /// reproduces this config exactly.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        use std::fmt::Write;
        writeln!(s, "mode = {}", self.mode).unwrap();
        writeln!(s, "clients = {}", self.clients).unwrap();
        writeln!(s, "passive = {}", self.passive).unwrap();
        writeln!(s, "rounds = {}", self.rounds).unwrap();
        writeln!(s, "bits = {}", self.bits).unwrap();
        writeln!(s, "snr-db = {}", self.snr_db).unwrap();
        writeln!(s, "eta = {}", self.eta).unwrap();
        if let Some(m) = self.minibatches {
            writeln!(s, "minibatches = {m}").unwrap();
        }
        writeln!(s, "batch-size = {}", self.batch_size).unwrap();
        writeln!(s, "model = {}", self.model.as_str()).unwrap();
        writeln!(s, "images = {}", self.images.display()).unwrap();
        writeln!(s, "labels = {}", self.labels.display()).unwrap();
        writeln!(s, "downsample = {}", self.downsample).unwrap();
        writeln!(s, "seed = {}", self.seed).unwrap();
        writeln!(s, "out = {}", self.out.display()).unwrap();
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_text() -> &'static str {
        "mode = hfcl\nclients = 10\npassive = 3\nimages = data/i.idx\nlabels = data/l.idx\n"
    }

    #[test]
    fn parses_and_applies_desk_defaults() {
        let cfg = ConfigOverlay::from_str_contents(base_text()).unwrap().resolve().unwrap();
        assert_eq!(cfg.mode, Mode::Hfcl);
        assert_eq!(cfg.passive, 3);
        assert_eq!(cfg.rounds, DESK_ROUNDS);
        assert_eq!(cfg.bits, DESK_BITS);
        assert!(cfg.downsample);
        assert_eq!(cfg.out, PathBuf::from("metrics.csv"));
    }

    #[test]
    fn rejects_unknown_keys() {
        let err = ConfigOverlay::from_str_contents("unknown-key = 3\n");
        assert!(matches!(err, Err(CliError::Config(msg)) if msg.contains("unknown-key")));
    }

    #[test]
    fn rejects_duplicate_keys() {
        let err = ConfigOverlay::from_str_contents("seed = 1\nseed = 2\n");
        assert!(matches!(err, Err(CliError::Config(msg)) if msg.contains("duplicate")));
    }

    #[test]
    fn flags_override_file_values() {
        let file = ConfigOverlay::from_str_contents(base_text()).unwrap();
        let flags = ConfigOverlay {
            passive: Some(7),
            seed: Some(42),
            ..Default::default()
        };
        let cfg = file.merged_with(flags).resolve().unwrap();
        assert_eq!(cfg.passive, 7);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.clients, 10);
    }

    #[test]
    fn mode_specific_validation() {
        let mut overlay = ConfigOverlay::from_str_contents(base_text()).unwrap();
        overlay.mode = Some(Mode::Fl);
        assert!(matches!(overlay.clone().resolve(), Err(CliError::Config(_))));

        overlay.mode = Some(Mode::FlActiveOnly);
        overlay.passive = Some(10);
        let err = overlay.resolve();
        assert!(matches!(err, Err(CliError::Config(msg)) if msg.contains("cannot work")));
    }

    #[test]
    fn snr_accepts_inf() {
        let overlay = ConfigOverlay::from_str_contents("snr-db = inf\n").unwrap();
        assert_eq!(overlay.snr_db, Some(f64::INFINITY));
    }

    #[test]
    fn config_round_trips_through_text() {
        let text = "mode = hfcl-sdt\nclients = 4\npassive = 2\nrounds = 9\nbits = 3\nsnr-db = 12.5\neta = 0.75\nminibatches = 2\nbatch-size = 64\nmodel = desk-mlp\nimages = a.idx\nlabels = b.idx\ndownsample = false\nseed = 17\nout = o.csv\n";
        let cfg = ConfigOverlay::from_str_contents(text).unwrap().resolve().unwrap();
        let round = ConfigOverlay::from_str_contents(&cfg.to_config_string())
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(cfg, round);
    }
}
