//! Experiment configuration.
//!
//! Configs are JSON documents; every field is optional and falls back to the
//! defaults below. After loading, [`TrainConfig::resolve`] fills derived
//! values so the echoed `config.resolved` fully describes a run.

use std::fs;
use std::path::{Path, PathBuf};

use dali_core::{AdamConfig, ArchConfig, EvalSettings, MixtureConfig, ModelConfig, VariantKind};
use serde::{Deserialize, Serialize};

use crate::error::RunError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub n_gen: usize,
    pub test_m: usize,
    pub k_sigma: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let s = EvalSettings::default();
        Self {
            n_gen: s.n_gen,
            test_m: s.test_m,
            k_sigma: s.k_sigma,
        }
    }
}

impl From<&EvalConfig> for EvalSettings {
    fn from(c: &EvalConfig) -> Self {
        EvalSettings {
            n_gen: c.n_gen,
            test_m: c.test_m,
            k_sigma: c.k_sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: VariantKind,
    pub latent_dim: usize,
    /// Weight of the latent reconstruction term; `1 / latent_dim` when unset.
    pub lambda: Option<f64>,
    pub batch_size: usize,
    pub total_steps: u64,
    pub eval_every: u64,
    pub seeds: Vec<u64>,
    /// Discriminator updates per generator/encoder update.
    pub disc_steps: usize,
    /// Draw a separate prior batch for the generator/encoder substep.
    pub fresh_latent: bool,
    /// Record elapsed milliseconds in `metrics.csv`. Off by default so that
    /// repeated runs produce identical files.
    pub record_wall_time: bool,
    pub optimizer: AdamConfig,
    pub architecture: ArchConfig,
    pub mixture: MixtureConfig,
    pub eval: EvalConfig,
    pub output_dir: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: VariantKind::Dali,
            latent_dim: 2,
            lambda: None,
            batch_size: 256,
            total_steps: 30_000,
            eval_every: 1000,
            seeds: vec![0, 1, 2],
            disc_steps: 1,
            fresh_latent: false,
            record_wall_time: false,
            optimizer: AdamConfig::default(),
            architecture: ArchConfig::default(),
            mixture: MixtureConfig::default(),
            eval: EvalConfig::default(),
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        serde_json::from_str(text).map_err(|e| RunError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
            .map_err(|e| RunError::Config(format!("{}: {}", path.display(), e.message())))
    }

    pub fn lambda(&self) -> f64 {
        self.lambda.unwrap_or(1.0 / self.latent_dim.max(1) as f64)
    }

    /// Fills derived fields and validates. The result serializes to a
    /// self-contained config.
    pub fn resolve(mut self) -> Result<Self, RunError> {
        self.lambda = Some(self.lambda());
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |msg: String| Err(RunError::Config(msg));
        if self.latent_dim == 0 {
            return bad("latent_dim must be at least 1".into());
        }
        let lambda = self.lambda();
        if !(lambda > 0.0 && lambda.is_finite()) {
            return bad(format!("lambda must be positive and finite, got {lambda}"));
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1".into());
        }
        if self.total_steps != 0 && self.total_steps < self.eval_every {
            return bad(format!(
                "total_steps ({}) must be at least eval_every ({}) or zero",
                self.total_steps, self.eval_every
            ));
        }
        if self.seeds.is_empty() {
            return bad("seeds must list at least one seed".into());
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if self.disc_steps == 0 {
            return bad("disc_steps must be at least 1".into());
        }
        if self.eval.n_gen == 0 {
            return bad("eval.n_gen must be at least 1".into());
        }
        if self.variant.has_encoder() && self.eval.test_m == 0 {
            return bad("eval.test_m must be at least 1 for variants with an encoder".into());
        }
        if !(self.eval.k_sigma > 0.0) {
            return bad(format!("eval.k_sigma must be positive, got {}", self.eval.k_sigma));
        }
        self.optimizer.validate().map_err(|e| RunError::Config(e.to_string()))?;
        self.mixture.build().map_err(|e| RunError::Config(e.to_string()))?;
        dali_core::ModelBundle::empty(self.model_config())
            .map_err(|e| RunError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            variant: self.variant,
            latent_dim: self.latent_dim,
            data_dim: 2,
            arch: self.architecture.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Steps at which an evaluation is logged: 0, every `eval_every`, and the
    /// final step.
    pub fn eval_steps(&self) -> Vec<u64> {
        let mut steps: Vec<u64> = (0..=self.total_steps).step_by(self.eval_every as usize).collect();
        if steps.last() != Some(&self.total_steps) {
            steps.push(self.total_steps);
        }
        steps
    }
}
