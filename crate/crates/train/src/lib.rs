//! Training schedule, checkpoints, configuration, and the clip recovery
//! pipeline shared by the command-line tools.

pub mod ckpt;
pub mod config;
pub mod data;
pub mod error;
pub mod pipeline;
pub mod stages;

pub use ckpt::{AdamState, Checkpoint, CKPT_MAGIC, CKPT_VERSION};
pub use config::{generate_spec_from, model_config_from, Config, GenerateSpec, TrainConfig};
pub use data::{clip_seed, generate_dataset, ClipTensors, Dataset};
pub use error::{ErrorKind, Result, TrainError};
pub use pipeline::{recover_clip, RecoveryOutput, RecoverySettings};
pub use stages::{train_stage1, train_stage2, train_stage3, TrainReport};

use mgdm_model::Models;
use mgdm_tensor::rng::{seeded_rng, streams};
use mgdm_tensor::ParamStore;

/// Rebuild the model stack that a checkpoint was trained with, using the
/// configuration echoed inside it.
pub fn models_from_checkpoint(ckpt: &Checkpoint) -> Result<(Models, ParamStore<f32>)> {
    let config = ckpt.config()?;
    let mc = model_config_from(&config)?;
    let seed = config.u64("seed", 0)?;
    let mut init_store = ParamStore::<f32>::new();
    let mut rng = seeded_rng(seed, streams::PARAM_INIT);
    let models = Models::build(mc, &mut init_store, &mut rng)?;
    for name in init_store.names() {
        if !ckpt.params.contains(name) {
            return Err(TrainError::format(
                "checkpoint",
                format!("missing parameter {name}"),
            ));
        }
    }
    let mut params = ParamStore::<f32>::new();
    for (name, arr) in ckpt.params.iter() {
        params.insert(name, arr.clone());
    }
    Ok((models, params))
}
