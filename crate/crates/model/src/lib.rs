//! Recovery model stack: dual-stream metadata encoder, latent video
//! diffusion U-Net with a deterministic sampler, prior-driven mask predictor,
//! hard compositor with a Swin-based refiner, and a patch discriminator.

pub mod attention;
pub mod autoencoder;
pub mod disc;
pub mod dme;
pub mod error;
pub mod layout;
pub mod pmp;
pub mod prm;
pub mod schedule;
pub mod unet;

pub use attention::Mha;
pub use autoencoder::{AeConfig, Autoencoder};
pub use disc::{hinge_d_loss, hinge_g_loss, DiscConfig, Discriminator};
pub use dme::{DmeConfig, Metadata, MetadataEncoder};
pub use error::{ErrorKind, ModelError, Result};
pub use layout::{
    depth_to_space, fold_frames, frame_type_one_hot, frames_to_model, mask_to_model,
    model_to_frames, motion_to_model, space_to_depth, stack_batch, unfold_frames,
};
pub use pmp::{MaskPredictor, PmpConfig, PseudoMask};
pub use prm::{hard_compose, soft_compose, window_partition_map, PrmConfig, Refiner};
pub use schedule::{ddim_sample, NoiseSchedule, ScheduleKind};
pub use unet::{TransformerBlock, UNet, UNetConfig, UNetOutput};

use mgdm_tensor::{ParamStore, Scalar};
use rand::Rng;

/// Geometry and hyper-parameters shared by the whole stack.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub ae: AeConfig,
    pub dme: DmeConfig,
    pub unet: UNetConfig,
    pub pmp_widths: [usize; 4],
    pub mask_threshold: f32,
    pub prm: PrmConfig,
    pub disc: DiscConfig,
    pub schedule: ScheduleKind,
    pub sample_steps: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            frames: 16,
            height: 64,
            width: 64,
            ae: AeConfig::default(),
            dme: DmeConfig::default(),
            unet: UNetConfig::default(),
            pmp_widths: [64, 64, 32, 32],
            mask_threshold: 0.5,
            prm: PrmConfig::default(),
            disc: DiscConfig::default(),
            schedule: ScheduleKind::Cosine,
            sample_steps: 20,
        }
    }
}

/// All module definitions, bound to parameter names in one store.
pub struct Models {
    pub cfg: ModelConfig,
    pub ae: Autoencoder,
    pub dme: MetadataEncoder,
    pub unet: UNet,
    pub pmp: MaskPredictor,
    pub prm: Refiner,
    pub disc: Discriminator,
    pub schedule: NoiseSchedule,
}

impl Models {
    /// Register every module's parameters. Registration order is fixed, so a
    /// given seed always produces the same initialization.
    pub fn build<F: Scalar, R: Rng + ?Sized>(
        cfg: ModelConfig,
        store: &mut ParamStore<F>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut cfg = cfg;
        // keep dependent dimensions consistent
        cfg.unet.c_lat = cfg.ae.c_lat;
        cfg.unet.d_ctx = cfg.dme.d_ctx;
        let ae = Autoencoder::register(store, cfg.ae.clone(), rng)?;
        let dme = MetadataEncoder::register(store, cfg.dme.clone(), true, rng);
        let unet = UNet::register(store, cfg.unet.clone(), true, rng);
        let pmp_cfg = PmpConfig {
            c_lat: cfg.ae.c_lat,
            d_p: cfg.dme.d_p,
            c_att: cfg.unet.c_att(),
            widths: cfg.pmp_widths,
            factor: cfg.ae.factor,
            threshold: cfg.mask_threshold,
        };
        let pmp = MaskPredictor::register(store, pmp_cfg, true, rng);
        let prm = Refiner::register(store, cfg.prm.clone(), true, rng);
        let disc = Discriminator::register(store, cfg.disc.clone(), rng);
        let schedule = NoiseSchedule::new(cfg.schedule, cfg.unet.t_max);
        Ok(Models {
            cfg,
            ae,
            dme,
            unet,
            pmp,
            prm,
            disc,
            schedule,
        })
    }

    /// Latent grid size for the configured geometry.
    pub fn latent_dims(&self) -> (usize, usize) {
        (
            self.cfg.height / self.cfg.ae.factor,
            self.cfg.width / self.cfg.ae.factor,
        )
    }
}
