use std::path::{Path, PathBuf};

use serde::de::{DeserializeOwned, Deserializer, Error as _};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::CliError;
use crate::acc::LinkConfig;
use crate::channel::ChannelMode;
use crate::dataset::TaskTrainConfig;
use crate::gjscc::CodecDims;
use crate::numerics::derive_seed;
use crate::training::TrainConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Share of the link budget granted to a 32×32 image: its pixel count
/// relative to a 224×224 reference frame.
pub const DESK_BUDGET_SHARE: f64 = 1024.0 / 50176.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub count: usize,
    pub classes: usize,
    pub noise_level: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            count: 2000,
            classes: 6,
            noise_level: 0.03,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub snr_db: Vec<f64>,
    pub delays_s: Vec<f64>,
    pub channel: ChannelMode,
    /// Cap on test images per cell; all when absent.
    pub max_images: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            snr_db: vec![0.0, 4.0, 8.0, 12.0, 16.0, 20.0],
            delays_s: vec![1e-3, 1e-2, 2e-2],
            channel: ChannelMode::Awgn,
            max_images: None,
        }
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Reads a config section as a patch over that section of
/// [`RunConfig::default`], so partial sections keep the run defaults.
fn over_default<'de, D, T, F>(d: D, pick: F) -> Result<T, D::Error>
where
    D: Deserializer<'de>,
    T: Serialize + DeserializeOwned,
    F: FnOnce(RunConfig) -> T,
{
    let patch = Value::deserialize(d)?;
    let mut base = serde_json::to_value(pick(RunConfig::default())).map_err(D::Error::custom)?;
    merge(&mut base, patch);
    serde_json::from_value(base).map_err(D::Error::custom)
}

macro_rules! section {
    ($name:ident, $field:ident, $ty:ty) => {
        fn $name<'de, D: Deserializer<'de>>(d: D) -> Result<$ty, D::Error> {
            over_default(d, |c| c.$field)
        }
    };
}

section!(dataset_section, dataset, DatasetConfig);
section!(task_section, task, TaskTrainConfig);
section!(codec_section, codec, CodecDims);
section!(link_section, link, LinkConfig);
section!(pretrain_section, pretrain, TrainConfig);
section!(finetune_section, finetune, TrainConfig);
section!(sweep_section, sweep, SweepConfig);

/// Everything a run needs. Missing keys, at any depth, take the values of
/// [`RunConfig::default`]. Stage seeds are derived from `seed`; the `seed`
/// fields inside `pretrain` and `finetune` are overwritten at run time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(deserialize_with = "dataset_section")]
    pub dataset: DatasetConfig,
    #[serde(deserialize_with = "task_section")]
    pub task: TaskTrainConfig,
    #[serde(deserialize_with = "codec_section")]
    pub codec: CodecDims,
    #[serde(deserialize_with = "link_section")]
    pub link: LinkConfig,
    #[serde(deserialize_with = "pretrain_section")]
    pub pretrain: TrainConfig,
    #[serde(deserialize_with = "finetune_section")]
    pub finetune: TrainConfig,
    #[serde(deserialize_with = "sweep_section")]
    pub sweep: SweepConfig,
    /// Save codec checkpoints every this many epochs (0 = final only).
    pub checkpoint_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut link = LinkConfig::reference(12.0);
        link.budget_share = DESK_BUDGET_SHARE;
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            dataset: DatasetConfig::default(),
            task: TaskTrainConfig::default(),
            codec: CodecDims::default(),
            link,
            pretrain: TrainConfig { epochs: 50, ..TrainConfig::pretrain() },
            finetune: TrainConfig { epochs: 20, ..TrainConfig::finetune() },
            sweep: SweepConfig::default(),
            checkpoint_every: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let invalid = |m: String| Err(CliError::Validation(m));
        if self.schema_version != SCHEMA_VERSION {
            return invalid(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.dataset.count < 2 || self.dataset.classes < 2 {
            return invalid("dataset needs at least 2 images and 2 classes".into());
        }
        if self.sweep.snr_db.is_empty() || self.sweep.delays_s.is_empty() {
            return invalid("sweep grid is empty".into());
        }
        self.codec.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        self.link.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        self.pretrain.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        self.finetune.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(())
    }

    pub fn dataset_seed(&self) -> u64 {
        derive_seed(self.seed, "dataset", 0)
    }

    pub fn task_seed(&self) -> u64 {
        derive_seed(self.seed, "task", 0)
    }

    pub fn sweep_seed(&self) -> u64 {
        derive_seed(self.seed, "sweep", 0)
    }

    /// Stage configs with their derived seeds filled in.
    pub fn stage_configs(&self) -> (TrainConfig, TrainConfig) {
        let mut pre = self.pretrain.clone();
        pre.seed = derive_seed(self.seed, "pretrain", 0);
        let mut fine = self.finetune.clone();
        fine.seed = derive_seed(self.seed, "finetune", 0);
        (pre, fine)
    }
}
