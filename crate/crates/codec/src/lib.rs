//! Toy block-motion codec with packet-loss corruption.
//!
//! The encoder is lossless (intra blocks store raw pixels, inter blocks store
//! an exact motion-compensated residual), so every decoded artifact comes
//! from concealment of dropped packets: co-located copies produce trailing,
//! duplication and misalignment patterns that propagate through inter
//! prediction until the next intact I frame.

pub mod bundle;
pub mod corrupt;
pub mod decode;
pub mod encode;
pub mod error;
pub mod mask;
pub mod metadata;
pub mod scene;
pub mod types;

pub use bundle::{list_clip_dirs, read_bundle, write_bundle, MOTION_MAGIC};
pub use corrupt::{corrupt, kept_packet_indices};
pub use decode::decode;
pub use encode::{block_match, encode, encoder_reconstruction};
pub use error::{CodecError, ErrorKind, Result};
pub use mask::{
    dilate, ground_truth_mask, ground_truth_mask_owned, DEFAULT_MASK_DILATION,
    DEFAULT_MASK_THRESHOLD,
};
pub use metadata::extract_metadata;
pub use scene::{synth_clip, SceneParams};
pub use types::{
    parse_frame_pattern, BlockMv, CleanClip, ClipBundle, CodecConfig, CorruptionParams,
    DropScope, EncodedClip, FrameKind, Packet, PayloadKind,
};

use serde_json::json;

/// Run the full generation pipeline for one clip:
/// encode, corrupt, decode, extract metadata, derive the ground-truth mask.
pub fn generate_bundle(
    clip: &CleanClip,
    config: &CodecConfig,
    corruption: &CorruptionParams,
    mask_threshold: f32,
    mask_dilation: usize,
) -> Result<ClipBundle> {
    let encoded = encode(clip, config)?;
    let damaged = corrupt(&encoded, corruption);
    let corrupted = decode(&damaged);
    let (motion, frame_types) = extract_metadata(&damaged);
    let gt = ground_truth_mask(&corrupted.view(), &clip.frames.view(), mask_threshold, mask_dilation)?;
    let meta = json!({
        "clip_id": clip.clip_id,
        "codec": config,
        "corruption": corruption,
        "mask_threshold": mask_threshold,
        "mask_dilation": mask_dilation,
        "provenance": {
            "source": "synthetic-toy-codec",
            // Recorded verbatim when ingesting externally extracted
            // metadata; never reinterpreted here.
            "external_corruption_params": serde_json::Value::Null,
        },
    });
    Ok(ClipBundle {
        clip_id: clip.clip_id.clone(),
        clean: Some(clip.frames.clone()),
        corrupted,
        motion,
        frame_types,
        gt_mask: Some(gt),
        meta,
    })
}
