//! Experiment orchestration: configs, cached artifacts and the commands that
//! emit report files.

mod artifacts;
mod commands;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::autodiff::Activation;
use crate::data::DatasetConfig;
use crate::error::{Error, Result};
use crate::inversion::InversionConfig;
use crate::metrics::DEFAULT_ACCURACY_FLOOR;
use crate::training::{DecoderConfig, OptimizerConfig, ProjectorSourceKind, TrainConfig};

pub use artifacts::{Policy, Replicate};
pub use commands::{
    cmd_alignmi_eval, cmd_gen_data, cmd_hypothesis, cmd_measure_alignment, cmd_report, cmd_train_aligned,
    cmd_train_decoder, cmd_train_target, has_interior_maximum, AlignmiReplicate, AlignmiReport, DataSummary, DecoderSummary,
    HypothesisReplicate, HypothesisReport, HypothesisRow, MeasureReplicate, MeasureReport, MethodRow, TimingRow,
    TrainSummary,
};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "INVGEO_OUT";
pub const DEFAULT_OUT: &str = "invgeo-out";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    MeasureAlignment,
    Hypothesis,
    AlignmiEval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: vec![32, 32],
            activation: Activation::Tanh,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
    pub accuracy_floor: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            epochs: 40,
            optimizer: OptimizerConfig::default(),
            accuracy_floor: DEFAULT_ACCURACY_FLOOR,
        }
    }
}

/// Training settings shared by the vanilla and alignment-aware targets. The
/// trade-off weight comes from `ExperimentConfig::beta` or the sweep, and the
/// seed from the replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSettings {
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub projector_source: ProjectorSourceKind,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        TrainingSettings {
            optimizer: OptimizerConfig::default(),
            epochs: 20,
            batch_size: 32,
            projector_source: ProjectorSourceKind::Oracle,
        }
    }
}

impl TrainingSettings {
    pub fn train_config(&self, beta: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            optimizer: self.optimizer.clone(),
            epochs: self.epochs,
            batch_size: self.batch_size,
            beta,
            seed,
            projector_source: self.projector_source,
            checkpoint_dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// When set, the command run must match.
    pub kind: Option<ExperimentKind>,
    /// First replicate seed; replicate `i` uses `seed + i`.
    pub seed: u64,
    pub replicates: usize,
    pub dataset: DatasetConfig,
    /// Share of each private class held out for testing.
    pub test_fraction: f64,
    pub target: ModelConfig,
    pub eval: EvalConfig,
    pub training: TrainingSettings,
    /// Trade-off weight of the alignment-aware target.
    pub beta: f64,
    /// Sweep for the hypothesis experiment.
    pub betas: Vec<f64>,
    pub decoder: DecoderConfig,
    /// Attack settings; `seed` is mixed with the replicate, class and run.
    pub inversion: InversionConfig,
    pub runs_per_class: usize,
    /// Repetitions behind each wall-clock timing.
    pub timing_repeats: usize,
    /// Runs per class in the timed subset.
    pub timing_runs_per_class: usize,
    /// Not part of the config hash.
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kind: None,
            seed: 0,
            replicates: 1,
            dataset: DatasetConfig::default(),
            test_fraction: 0.25,
            target: ModelConfig::default(),
            eval: EvalConfig::default(),
            training: TrainingSettings::default(),
            beta: 0.5,
            betas: vec![0.1, 0.5, 1.0, 2.0],
            decoder: DecoderConfig::default(),
            inversion: InversionConfig::default(),
            runs_per_class: 8,
            timing_repeats: 3,
            timing_runs_per_class: 1,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.replicates == 0 || self.runs_per_class == 0 || self.timing_repeats == 0 {
            return bad("replicates, runs_per_class and timing_repeats must be positive".into());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction));
        }
        if self.betas.is_empty() {
            return bad("betas must not be empty".into());
        }
        for &b in self.betas.iter().chain([&self.beta]) {
            if !(b.is_finite() && b >= 0.0) {
                return bad(format!("beta values must be finite and non-negative, got {b}"));
            }
        }
        if self.eval.epochs == 0 || !(0.0..=1.0).contains(&self.eval.accuracy_floor) {
            return bad("eval needs epochs >= 1 and an accuracy floor in [0, 1]".into());
        }
        self.eval.optimizer.validate()?;
        self.training.train_config(self.beta, 0).validate()?;
        self.inversion.validate()?;
        Ok(())
    }

    pub fn check_kind(&self, kind: ExperimentKind) -> Result<()> {
        match self.kind {
            Some(k) if k != kind => Err(Error::Config(format!("config is for {k:?}, command runs {kind:?}"))),
            _ => Ok(()),
        }
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        sha256_hex(&serde_json::to_vec(&c).expect("config serializes"))
    }

    pub fn replicate_seeds(&self) -> Vec<u64> {
        (0..self.replicates as u64).map(|i| self.seed + i).collect()
    }

    pub fn stamp(&self) -> Stamp {
        Stamp {
            version: crate::VERSION.to_string(),
            config_hash: self.config_hash(),
        }
    }

    /// `--out` beats the config's `output_dir`, which beats `$INVGEO_OUT`.
    pub fn resolve_output(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = &self.output_dir {
            return p.clone();
        }
        match std::env::var_os(OUT_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => PathBuf::from(DEFAULT_OUT),
        }
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads a JSON config (or the defaults) and applies `key.path=value`
/// overrides. Values parse as JSON and fall back to plain strings.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let base = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str::<ExperimentConfig>(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => ExperimentConfig::default(),
    };
    let mut value = serde_json::to_value(&base)?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let cfg: ExperimentConfig =
        serde_json::from_value(value).map_err(|e| Error::Config(format!("after overrides: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Sets one dotted path in a JSON document. Every segment must already exist,
/// so typos fail instead of being ignored.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let new = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    for seg in path.split('.') {
        node = match node {
            Value::Object(m) => m
                .get_mut(seg)
                .ok_or_else(|| Error::Config(format!("unknown config key `{path}`")))?,
            Value::Array(a) => {
                let i: usize = seg
                    .parse()
                    .map_err(|_| Error::Config(format!("`{seg}` in `{path}` is not an index")))?;
                let len = a.len();
                a.get_mut(i)
                    .ok_or_else(|| Error::Config(format!("index {i} out of range ({len}) in `{path}`")))?
            }
            _ => return Err(Error::Config(format!("`{path}` descends into a scalar"))),
        };
    }
    *node = new;
    Ok(())
}

/// Version and config hash written into every output file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub version: String,
    pub config_hash: String,
}

impl Stamp {
    pub fn csv_header(&self) -> String {
        format!("# invgeo {} config {}\n", self.version, self.config_hash)
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct Stamped<T> {
    pub version: String,
    pub config_hash: String,
    #[serde(flatten)]
    pub body: T,
}

pub(crate) fn write_csv(path: &Path, stamp: &Stamp, body: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, format!("{}{body}", stamp.csv_header()))?;
    Ok(())
}

pub(crate) fn write_json<T: Serialize>(path: &Path, stamp: &Stamp, body: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let doc = Stamped {
        version: stamp.version.clone(),
        config_hash: stamp.config_hash.clone(),
        body,
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Process exit status for an error: 2 config, 3 numeric, 4 missing
/// artifact, 1 anything else.
pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Config(_) | Error::InvalidArgument(_) => 2,
        Error::NonFinite { .. }
        | Error::Capacity { .. }
        | Error::DegenerateTangent { .. }
        | Error::ZeroGradient
        | Error::TrainingDiverged { .. }
        | Error::DecoderUnderfit { .. }
        | Error::DegenerateDecoder { .. }
        | Error::InversionDiverged { .. } => 3,
        Error::MissingArtifact(_) => 4,
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 4,
        _ => 1,
    }
}
