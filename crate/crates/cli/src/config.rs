//! TOML experiment configuration. Every table rejects unknown keys.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mlms::anc::{AncTopology, SyntheticSceneSpec};
use mlms::filters::{Algorithm, FilterConfig};
use mlms::systems::{JumpSystemSpec, RegressorGen};
use mlms::theory::QMode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Environment variable naming the root of a recorded corpus.
pub const CORPUS_ENV: &str = "MLMS_CORPUS_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    SynthTrack,
    Anc,
    SweepBeta,
    StabilityProbe,
    Validate,
}

impl Experiment {
    pub fn subcommand(self) -> &'static str {
        match self {
            Experiment::SynthTrack => "synth-track",
            Experiment::Anc => "anc",
            Experiment::SweepBeta => "sweep-beta",
            Experiment::StabilityProbe => "stability-probe",
            Experiment::Validate => "validate",
        }
    }

    /// Value of the `experiment` key.
    pub fn key(self) -> &'static str {
        match self {
            Experiment::SynthTrack => "synth_track",
            Experiment::Anc => "anc",
            Experiment::SweepBeta => "sweep_beta",
            Experiment::StabilityProbe => "stability_probe",
            Experiment::Validate => "validate",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.subcommand())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub algorithms: Vec<AlgorithmEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<JumpSystemSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenes: Option<SceneSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub admissibility: Option<AdmissibilitySection>,
}

/// One filter to run. Unset hyperparameters take the library defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmEntry {
    pub algorithm: Algorithm,
    /// Column name in outputs; defaults to the algorithm's short name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_forget: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_half_width: Option<f64>,
}

impl AlgorithmEntry {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.algorithm.label().to_string())
    }

    pub fn filter_config(&self, dim: usize) -> FilterConfig {
        let mut c = FilterConfig::new(self.algorithm, dim);
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut c.mu, self.mu);
        set(&mut c.delta, self.delta);
        set(&mut c.beta, self.beta);
        set(&mut c.lambda_forget, self.lambda_forget);
        set(&mut c.rho, self.rho);
        set(&mut c.box_half_width, self.box_half_width);
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    #[serde(default = "default_taps")]
    pub taps: usize,
    #[serde(default = "default_topology")]
    pub topology: AncTopology,
    /// Input SNR levels for `anc`.
    #[serde(default = "default_levels")]
    pub snr_levels: Vec<f64>,
    /// Number of synthetic scenes per level.
    #[serde(default = "default_utterances")]
    pub utterances: usize,
    /// Use synthetic scenes when the configured corpus cannot be found.
    #[serde(default)]
    pub synthetic_fallback: bool,
    #[serde(default)]
    pub synthetic: SyntheticSceneSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<CorpusSection>,
}

impl Default for SceneSection {
    fn default() -> Self {
        Self {
            taps: default_taps(),
            topology: default_topology(),
            snr_levels: default_levels(),
            utterances: default_utterances(),
            synthetic_fallback: false,
            synthetic: SyntheticSceneSpec::default(),
            corpus: None,
        }
    }
}

fn default_taps() -> usize {
    50
}
fn default_topology() -> AncTopology {
    AncTopology::CleanSupervised
}
fn default_levels() -> Vec<f64> {
    vec![5.0, 10.0, 15.0]
}
fn default_utterances() -> usize {
    10
}

/// Recorded clean utterances plus one noise recording, all 16-bit PCM WAV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    /// Root for the relative paths below; falls back to `MLMS_CORPUS_DIR`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub clean: Vec<PathBuf>,
    pub noise: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_fir: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "default_betas")]
    pub betas: Vec<f64>,
    #[serde(default)]
    pub snr_db: f64,
}

pub fn default_betas() -> Vec<f64> {
    (0..=12).map(|i| i as f64 * 0.05).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    #[serde(default = "RegressorGen::cycling")]
    pub regressors: RegressorGen,
    pub dim: usize,
    /// Defaults to the admissible bound computed from `alpha` and `kappa`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default = "one")]
    pub delta: f64,
    /// Defaults to `mu^2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Block length; defaults to `dim`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<usize>,
    #[serde(default = "one_u32")]
    pub p: u32,
    #[serde(default = "default_blocks")]
    pub max_blocks: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default = "two")]
    pub kappa: f64,
    #[serde(default = "default_q_mode")]
    pub q_mode: QMode,
    #[serde(default)]
    pub allow_inadmissible: bool,
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn one_u32() -> u32 {
    1
}
fn default_blocks() -> usize {
    30
}
fn default_q_mode() -> QMode {
    QMode::Homogeneous
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmissibilitySection {
    pub alpha: f64,
    pub h: usize,
    #[serde(default = "one_u32")]
    pub p: u32,
    #[serde(default = "two")]
    pub kappa: f64,
    #[serde(default = "default_q_mode")]
    pub q_mode: QMode,
    /// Filter dimension used for the algorithm checks.
    #[serde(default = "default_validate_dim")]
    pub dim: usize,
}

fn default_validate_dim() -> usize {
    1
}

/// Parsed configuration plus its stable digest.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: ExperimentConfig,
    pub digest: String,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if self.trials == Some(0) {
            bail!("`trials` must be at least 1");
        }
        let mut labels = std::collections::HashSet::new();
        for a in &self.algorithms {
            if !labels.insert(a.label()) {
                bail!("duplicate algorithm label `{}` in [[algorithms]]; set `label` to tell them apart", a.label());
            }
        }
        if let Some(s) = &self.scenes {
            if s.taps == 0 {
                bail!("`scenes.taps` must be at least 1");
            }
            if s.utterances == 0 {
                bail!("`scenes.utterances` must be at least 1");
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical re-serialization, so formatting and
    /// comments in the file do not change it.
    pub fn digest(&self) -> Result<String> {
        let canonical = toml::to_string(self).context("serializing config for its digest")?;
        Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
    }

    pub fn trials_or(&self, default: usize) -> usize {
        self.trials.unwrap_or(default)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("out").join(self.experiment.subcommand()))
    }
}

pub fn load(path: &Path) -> Result<Loaded> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let config = ExperimentConfig::parse(&text).with_context(|| format!("invalid config {}", path.display()))?;
    let digest = config.digest()?;
    Ok(Loaded { config, digest })
}
