//! Run configuration: one JSON file describing schedule, model, training,
//! task, and sampler.  Every block is optional and falls back to library
//! defaults, so `{}` is a valid config.  All randomness downstream derives
//! from `master_seed`; seed fields are deliberately absent from the blocks.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use flowbridge_core::flow::OdeMethod;
use flowbridge_core::harness::{ExperimentConfig, SourceKind, TaskSpec};
use flowbridge_core::nn::{Mlp, MlpConfig, TrainConfig};
use flowbridge_core::schedule::{GouSchedule, ScheduleConfig};
use flowbridge_core::{Error, ModelKind, Result};

/// Which reverse process the model drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Bridge,
    Flow,
}

impl SamplerKind {
    pub fn model(self) -> ModelKind {
        match self {
            SamplerKind::Bridge => ModelKind::Db,
            SamplerKind::Flow => ModelKind::Fm,
        }
    }
}

/// Task block: [`TaskSpec`] minus the seed, which the CLI derives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskBlock {
    pub source: SourceKind,
    pub dim: usize,
    pub difficulty: f64,
    pub pair_noise: f64,
    pub n_train: usize,
    pub n_test: usize,
}

impl Default for TaskBlock {
    fn default() -> Self {
        let spec = TaskSpec::default();
        TaskBlock {
            source: spec.source,
            dim: spec.dim,
            difficulty: spec.difficulty,
            pair_noise: spec.pair_noise,
            n_train: spec.n_train,
            n_test: spec.n_test,
        }
    }
}

impl TaskBlock {
    pub fn to_spec(&self, seed: u64) -> TaskSpec {
        TaskSpec {
            source: self.source,
            dim: self.dim,
            difficulty: self.difficulty,
            pair_noise: self.pair_noise,
            n_train: self.n_train,
            n_test: self.n_test,
            seed,
        }
    }
}

/// Training block: [`TrainConfig`] minus the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainBlock {
    pub batch_size: usize,
    pub steps: u64,
    pub learning_rate: f64,
    pub lr_decay: Vec<(u64, f64)>,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
}

impl Default for TrainBlock {
    fn default() -> Self {
        let tc = ExperimentConfig::default().train;
        TrainBlock {
            batch_size: tc.batch_size,
            steps: tc.steps,
            learning_rate: tc.learning_rate,
            lr_decay: tc.lr_decay,
            adam_beta1: tc.adam_beta1,
            adam_beta2: tc.adam_beta2,
        }
    }
}

impl TrainBlock {
    pub fn to_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            steps: self.steps,
            learning_rate: self.learning_rate,
            lr_decay: self.lr_decay.clone(),
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerBlock {
    pub kind: SamplerKind,
    pub n_steps: usize,
    pub ode_method: OdeMethod,
}

impl Default for SamplerBlock {
    fn default() -> Self {
        SamplerBlock {
            kind: SamplerKind::Bridge,
            n_steps: ExperimentConfig::default().sample_steps,
            ode_method: OdeMethod::Heun,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schedule: ScheduleConfig,
    pub model: MlpConfig,
    pub train: TrainBlock,
    pub task: TaskBlock,
    pub sampler: SamplerBlock,
    pub out_dir: PathBuf,
    pub master_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let exp = ExperimentConfig::default();
        RunConfig {
            schedule: exp.schedule,
            model: exp.mlp,
            train: TrainBlock::default(),
            task: TaskBlock::default(),
            sampler: SamplerBlock::default(),
            out_dir: PathBuf::from("runs"),
            master_seed: 17,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))
    }

    /// Validates every block before any work starts.
    pub fn validate(&self) -> Result<()> {
        GouSchedule::new(self.schedule.clone())?;
        Mlp::new(self.model.clone(), 0)?;
        self.task.to_spec(0).validate()?;
        if self.model.state_dim != self.task.dim {
            return Err(Error::SizeMismatch {
                expected: self.task.dim,
                got: self.model.state_dim,
            });
        }
        if self.train.batch_size == 0 || self.train.steps == 0 {
            return Err(Error::Config(
                "train.batch_size and train.steps must be positive".into(),
            ));
        }
        if !(self.train.learning_rate > 0.0 && self.train.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "train.learning_rate must be positive and finite, got {}",
                self.train.learning_rate
            )));
        }
        if self.sampler.n_steps == 0 {
            return Err(Error::Config("sampler.n_steps must be positive".into()));
        }
        Ok(())
    }

    /// The harness view of this config (seeds filled in downstream).
    pub fn experiment_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            schedule: self.schedule.clone(),
            mlp: self.model.clone(),
            train: self.train.to_config(0),
            sample_steps: self.sampler.n_steps,
            ode_method: self.sampler.ode_method,
        }
    }

    /// Writes the fully resolved config snapshot next to the run outputs.
    pub fn write_resolved(&self, out_dir: &Path) -> Result<()> {
        fs::create_dir_all(out_dir)
            .map_err(|e| Error::Config(format!("cannot create {}: {e}", out_dir.display())))?;
        let path = out_dir.join("resolved_config.json");
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("cannot serialize config: {e}")))?;
        fs::write(&path, text + "\n")
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
    }
}
