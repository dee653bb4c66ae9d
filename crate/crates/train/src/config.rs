//! Flat `key=value` configuration with stage-aware defaults.

use crate::error::{Result, TrainError};
use mgdm_codec::{parse_frame_pattern, CodecConfig, DropScope};
use mgdm_model::{
    AeConfig, DiscConfig, DmeConfig, ModelConfig, PrmConfig, ScheduleKind, UNetConfig,
};
use std::collections::BTreeMap;
use std::path::Path;

/// Parsed configuration file: `#` comments, blank lines, `key = value`.
#[derive(Debug, Clone, Default)]
pub struct Config {
    map: BTreeMap<String, String>,
    /// Raw file bytes, echoed verbatim into checkpoints.
    pub raw: Vec<u8>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                TrainError::Config(format!("line {}: expected key=value", lineno + 1))
            })?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Config {
            map,
            raw: text.as_bytes().to_vec(),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TrainError::io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.map.insert(key.to_string(), value.to_string());
        self.raw = self.render().into_bytes();
    }

    fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.map {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| TrainError::Config(format!("{key}: not a number: {v:?}"))),
        }
    }

    pub fn usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| TrainError::Config(format!("{key}: not an integer: {v:?}"))),
        }
    }

    pub fn u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| TrainError::Config(format!("{key}: not an integer: {v:?}"))),
        }
    }

    pub fn bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.map.get(key).map(|s| s.as_str()) {
            None => Ok(default),
            Some("true" | "1") => Ok(true),
            Some("false" | "0") => Ok(false),
            Some(v) => Err(TrainError::Config(format!("{key}: not a bool: {v:?}"))),
        }
    }

    pub fn usize_list(&self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.map.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse()
                        .map_err(|_| TrainError::Config(format!("{key}: bad list entry {p:?}")))
                })
                .collect(),
        }
    }

    /// Clip geometry `size=64` or `size=WxH`.
    pub fn geometry(&self) -> Result<(usize, usize)> {
        match self.map.get("size") {
            None => Ok((64, 64)),
            Some(v) => {
                if let Some((w, h)) = v.split_once('x') {
                    let w = w.trim().parse().map_err(|_| {
                        TrainError::Config(format!("size: bad width {w:?}"))
                    })?;
                    let h = h.trim().parse().map_err(|_| {
                        TrainError::Config(format!("size: bad height {h:?}"))
                    })?;
                    Ok((w, h))
                } else {
                    let s = v
                        .parse()
                        .map_err(|_| TrainError::Config(format!("size: bad value {v:?}")))?;
                    Ok((s, s))
                }
            }
        }
    }
}

/// Per-stage schedule: step counts, per-module learning rates, loss weights.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub stage: u8,
    pub steps: usize,
    pub ae_steps: usize,
    pub lr_ae: f64,
    pub lr_unet: f64,
    pub lr_dme: f64,
    pub lr_pmp: f64,
    pub lr_prm: f64,
    pub lr_disc: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub w_adv: f64,
    pub batch: usize,
    pub accum: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Defaults mirror the published protocol: stage-1 rate 1e-5; stage-2
    /// rates 1e-6 / 1e-4 / 1e-4 for the denoiser, metadata encoder and mask
    /// predictor; stage-3 rate 1e-5; loss weights lambda1=1, lambda2=1e-3.
    /// Step counts are the desk-scale 500/2000/1000 (full scale ran
    /// 100k/100k/50k at batch 64 on 16 GPUs).
    pub fn from_config(config: &Config, stage: u8) -> Result<Self> {
        if !(1..=3).contains(&stage) {
            return Err(TrainError::Input(format!("stage must be 1..=3, got {stage}")));
        }
        let default_steps = match stage {
            1 => 500,
            2 => 2000,
            _ => 1000,
        };
        let default_lr_unet = if stage == 1 { 1e-5 } else { 1e-6 };
        let (width, height) = config.geometry()?;
        let lr_prm = config.f64("lr.prm", 1e-5)?;
        Ok(TrainConfig {
            stage,
            steps: config.usize("steps", default_steps)?,
            ae_steps: config.usize("ae_steps", 500)?,
            lr_ae: config.f64("lr.ae", 1e-3)?,
            lr_unet: config.f64("lr.unet", default_lr_unet)?,
            lr_dme: config.f64("lr.dme", 1e-4)?,
            lr_pmp: config.f64("lr.pmp", 1e-4)?,
            lr_prm,
            lr_disc: config.f64("lr.disc", lr_prm)?,
            lambda1: config.f64("lambda1", 1.0)?,
            lambda2: config.f64("lambda2", 1e-3)?,
            w_adv: config.f64("loss.w_adv", 0.01)?,
            batch: config.usize("batch", 2)?,
            accum: config.usize("accum", 1)?,
            frames: config.usize("frames", 16)?,
            height,
            width,
            seed: config.u64("seed", 0)?,
        })
    }
}

/// Assemble the model stack's hyper-parameters.
pub fn model_config_from(config: &Config) -> Result<ModelConfig> {
    let (width, height) = config.geometry()?;
    let factor = config.usize("latent.factor", 4)?;
    let c_lat = config.usize("latent.channels", 4)?;
    let dme_widths = config.usize_list("dme.widths", &[32, 64])?;
    if dme_widths.len() != 2 {
        return Err(TrainError::Config("dme.widths: expected two entries".into()));
    }
    let d_ctx = config.usize("dme.d_ctx", 128)?;
    let unet_widths = config.usize_list("unet.widths", &[64, 128, 256])?;
    let pmp_widths = config.usize_list("pmp.widths", &[64, 64, 32, 32])?;
    if pmp_widths.len() != 4 {
        return Err(TrainError::Config("pmp.widths: expected four entries".into()));
    }
    let t_max = config.usize("diffusion.T", 1000)?;
    Ok(ModelConfig {
        frames: config.usize("frames", 16)?,
        height,
        width,
        ae: AeConfig {
            base: config.usize("ae.base", 32)?,
            c_lat,
            factor,
        },
        dme: DmeConfig {
            conv_widths: (dme_widths[0], dme_widths[1]),
            mlp_hidden: config.usize("dme.mlp_hidden", 64)?,
            heads: config.usize("dme.heads", 4)?,
            d_ctx,
            d_p: config.usize("dme.d_p", 32)?,
            temporal: config.bool("dme.temporal", true)?,
        },
        unet: UNetConfig {
            c_lat,
            widths: unet_widths,
            d_ctx,
            heads: config.usize("unet.heads", 4)?,
            temb_dim: config.usize("unet.temb", 128)?,
            ffn_mult: config.usize("unet.ffn_mult", 4)?,
            t_max,
        },
        pmp_widths: [pmp_widths[0], pmp_widths[1], pmp_widths[2], pmp_widths[3]],
        mask_threshold: config.f64("mask.threshold", 0.5)? as f32,
        prm: PrmConfig {
            width: config.usize("prm.width", 64)?,
            window: config.usize("prm.window", 8)?,
            heads: config.usize("prm.heads", 4)?,
            blocks: config.usize("prm.blocks", 2)?,
            ffn_mult: config.usize("prm.ffn_mult", 2)?,
        },
        disc: DiscConfig {
            widths: [32, 64, 64],
        },
        schedule: ScheduleKind::parse(config.get("diffusion.schedule").unwrap_or("cosine"))
            .map_err(TrainError::Model)?,
        sample_steps: config.usize("diffusion.sample_steps", 20)?,
    })
}

/// Data-generation settings for the built-in codec and scene synthesizer.
#[derive(Debug, Clone)]
pub struct GenerateSpec {
    pub codec: CodecConfig,
    pub drop_probability: f64,
    pub scope: DropScope,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub sprites: usize,
    pub max_speed: i32,
    pub mask_threshold: f32,
    pub mask_dilation: usize,
}

pub fn generate_spec_from(config: &Config) -> Result<GenerateSpec> {
    let (width, height) = config.geometry()?;
    let pattern_str = config.get("codec.pattern").unwrap_or("IPPP");
    let frame_pattern = parse_frame_pattern(pattern_str)?;
    let codec = CodecConfig {
        gop_length: config.usize("codec.gop", frame_pattern.len())?,
        frame_pattern,
        block_size: config.usize("codec.block", 8)?,
        search_range: config.usize("codec.search", 4)?,
        packet_blocks: config.usize("codec.packet_blocks", 16)?,
    };
    codec.validate()?;
    Ok(GenerateSpec {
        codec,
        drop_probability: config.f64("corrupt.drop_probability", 0.4)?,
        scope: DropScope::parse(config.get("corrupt.scope").unwrap_or("all_packets"))?,
        frames: config.usize("frames", 16)?,
        height,
        width,
        sprites: config.usize("scene.sprites", 3)?,
        max_speed: config.usize("scene.max_speed", 3)? as i32,
        mask_threshold: config.f64("mask.gt_threshold", 8.0 / 255.0)? as f32,
        mask_dilation: config.usize("mask.gt_dilation", 1)?,
    })
}
