use crate::error::{CodecError, Result};
use ndarray::{Array3, Array4};
use serde::{Deserialize, Serialize};

/// Frame coding kind inside a group of pictures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameKind {
    I,
    P,
    B,
}

impl FrameKind {
    pub fn as_char(self) -> char {
        match self {
            FrameKind::I => 'I',
            FrameKind::P => 'P',
            FrameKind::B => 'B',
        }
    }

    pub fn from_char(c: char) -> Result<Self> {
        match c {
            'I' => Ok(FrameKind::I),
            'P' => Ok(FrameKind::P),
            'B' => Ok(FrameKind::B),
            other => Err(CodecError::Input(format!(
                "unknown frame type symbol {other:?} (expected I, P or B)"
            ))),
        }
    }

    pub fn is_anchor(self) -> bool {
        matches!(self, FrameKind::I | FrameKind::P)
    }
}

/// Parse a pattern string such as `"IPPP"`.
pub fn parse_frame_pattern(s: &str) -> Result<Vec<FrameKind>> {
    s.chars().map(FrameKind::from_char).collect()
}

/// Uncorrupted source frames, `[N, H, W, 3]`, 8-bit.
#[derive(Debug, Clone)]
pub struct CleanClip {
    pub frames: Array4<u8>,
    pub clip_id: String,
}

impl CleanClip {
    pub fn n_frames(&self) -> usize {
        self.frames.shape()[0]
    }
    pub fn height(&self) -> usize {
        self.frames.shape()[1]
    }
    pub fn width(&self) -> usize {
        self.frames.shape()[2]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CodecConfig {
    pub gop_length: usize,
    pub frame_pattern: Vec<FrameKind>,
    /// Block edge in pixels; must divide both frame dimensions.
    pub block_size: usize,
    /// Exhaustive-search radius in pixels for inter blocks.
    pub search_range: usize,
    /// Consecutive blocks of one frame grouped into a packet.
    pub packet_blocks: usize,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            gop_length: 4,
            frame_pattern: vec![FrameKind::I, FrameKind::P, FrameKind::P, FrameKind::P],
            block_size: 8,
            search_range: 4,
            packet_blocks: 16,
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gop_length == 0 || self.block_size == 0 || self.packet_blocks == 0 {
            return Err(CodecError::Config(
                "gop_length, block_size and packet_blocks must be positive".into(),
            ));
        }
        if self.frame_pattern.len() != self.gop_length {
            return Err(CodecError::Config(format!(
                "frame pattern length {} does not match gop_length {}",
                self.frame_pattern.len(),
                self.gop_length
            )));
        }
        if self.frame_pattern[0] != FrameKind::I {
            return Err(CodecError::Config(
                "frame pattern must begin with an I frame".into(),
            ));
        }
        Ok(())
    }

    /// Frame kinds for a clip of `n` frames (pattern tiled).
    pub fn frame_types(&self, n: usize) -> Vec<FrameKind> {
        (0..n)
            .map(|i| self.frame_pattern[i % self.gop_length])
            .collect()
    }
}

/// Block displacement in pixels. The vector is the motion of content from the
/// reference frame to the current frame: prediction reads the reference at
/// `pos - mv`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BlockMv {
    pub fwd: (i32, i32),
    pub bwd: Option<(i32, i32)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadKind {
    Intra,
    Inter,
}

/// A packet covers `block_count` raster-order blocks of one frame.
#[derive(Debug, Clone)]
pub struct Packet {
    pub frame_index: usize,
    pub block_start: usize,
    pub block_count: usize,
    pub kind: PayloadKind,
    /// Intra: raw RGB bytes per block. Inter: residual i16 little-endian per
    /// channel, block by block.
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct EncodedClip {
    pub clip_id: String,
    pub width: usize,
    pub height: usize,
    pub block_size: usize,
    pub gop_length: usize,
    pub frame_types: Vec<FrameKind>,
    /// Per frame, per raster block.
    pub block_mvs: Vec<Vec<BlockMv>>,
    pub packets: Vec<Packet>,
}

impl EncodedClip {
    pub fn blocks_x(&self) -> usize {
        self.width / self.block_size
    }
    pub fn blocks_y(&self) -> usize {
        self.height / self.block_size
    }
    pub fn blocks_per_frame(&self) -> usize {
        self.blocks_x() * self.blocks_y()
    }
    pub fn n_frames(&self) -> usize {
        self.frame_types.len()
    }
}

/// Which packets are eligible for dropping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropScope {
    AllPackets,
    IOnly,
    POnly,
    BOnly,
}

impl DropScope {
    pub fn covers(self, kind: FrameKind) -> bool {
        match self {
            DropScope::AllPackets => true,
            DropScope::IOnly => kind == FrameKind::I,
            DropScope::POnly => kind == FrameKind::P,
            DropScope::BOnly => kind == FrameKind::B,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "all_packets" | "all" => Ok(DropScope::AllPackets),
            "i_only" => Ok(DropScope::IOnly),
            "p_only" => Ok(DropScope::POnly),
            "b_only" => Ok(DropScope::BOnly),
            other => Err(CodecError::Input(format!("unknown drop scope {other:?}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DropScope::AllPackets => "all_packets",
            DropScope::IOnly => "i_only",
            DropScope::POnly => "p_only",
            DropScope::BOnly => "b_only",
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CorruptionParams {
    pub drop_probability: f64,
    pub seed: u64,
    pub scope: DropScope,
}

impl Default for CorruptionParams {
    fn default() -> Self {
        CorruptionParams {
            drop_probability: 0.4,
            seed: 0,
            scope: DropScope::AllPackets,
        }
    }
}

/// One clip's aligned arrays: frames, dense motion, frame kinds and the
/// ground-truth corruption mask. `clean`/`gt_mask` are absent for
/// unsupervised bundles built from externally extracted metadata.
#[derive(Debug, Clone)]
pub struct ClipBundle {
    pub clip_id: String,
    pub clean: Option<Array4<u8>>,
    pub corrupted: Array4<u8>,
    /// `[N, H, W, 4]`: forward dx, forward dy, backward dx, backward dy.
    pub motion: Array4<f32>,
    pub frame_types: Vec<FrameKind>,
    /// `[N, H, W]` of 0/1.
    pub gt_mask: Option<Array3<u8>>,
    pub meta: serde_json::Value,
}

impl ClipBundle {
    pub fn is_supervised(&self) -> bool {
        self.clean.is_some()
    }

    pub fn n_frames(&self) -> usize {
        self.corrupted.shape()[0]
    }
    pub fn height(&self) -> usize {
        self.corrupted.shape()[1]
    }
    pub fn width(&self) -> usize {
        self.corrupted.shape()[2]
    }
}
