use crate::error::{CodecError, Result};
use crate::types::{
    BlockMv, CleanClip, CodecConfig, EncodedClip, FrameKind, Packet, PayloadKind,
};
use ndarray::{Array4, ArrayView3};

/// Nearest anchor (I/P) strictly before `i`, if any.
pub(crate) fn prev_anchor(types: &[FrameKind], i: usize) -> Option<usize> {
    (0..i).rev().find(|&j| types[j].is_anchor())
}

/// Nearest anchor strictly after `i`, restricted to the same GOP so that
/// corruption never leaks across GOP boundaries through backward prediction.
pub(crate) fn next_anchor_in_gop(types: &[FrameKind], gop: usize, i: usize) -> Option<usize> {
    let gop_end = (i / gop + 1) * gop;
    ((i + 1)..types.len().min(gop_end)).find(|&j| types[j].is_anchor())
}

fn sad_block(
    cur: &ArrayView3<'_, u8>,
    reference: &ArrayView3<'_, u8>,
    y0: usize,
    x0: usize,
    ry: isize,
    rx: isize,
    bs: usize,
) -> u64 {
    let mut acc = 0u64;
    for dy in 0..bs {
        for dx in 0..bs {
            let sy = (y0 + dy) as isize + ry;
            let sx = (x0 + dx) as isize + rx;
            for ch in 0..3 {
                let a = cur[[y0 + dy, x0 + dx, ch]] as i32;
                let b = reference[[sy as usize, sx as usize, ch]] as i32;
                acc += (a - b).unsigned_abs() as u64;
            }
        }
    }
    acc
}

/// Exhaustive integer block match. Returns the motion vector (content
/// displacement: prediction reads the reference at `pos - mv`). Candidates
/// whose source block falls outside the reference are skipped; scan order is
/// row-major over (dy, dx) and the first strictly best SAD wins.
pub fn block_match(
    cur: &ArrayView3<'_, u8>,
    reference: &ArrayView3<'_, u8>,
    y0: usize,
    x0: usize,
    bs: usize,
    range: usize,
) -> (i32, i32) {
    let (h, w) = (cur.shape()[0], cur.shape()[1]);
    let r = range as isize;
    // zero vector is the baseline so ties (flat content) stay at (0, 0)
    let mut best = (0i32, 0i32);
    let mut best_sad = sad_block(cur, reference, y0, x0, 0, 0, bs);
    for mvy in -r..=r {
        for mvx in -r..=r {
            if mvy == 0 && mvx == 0 {
                continue;
            }
            // source offset is -mv
            let sy = y0 as isize - mvy;
            let sx = x0 as isize - mvx;
            if sy < 0 || sx < 0 || sy + bs as isize > h as isize || sx + bs as isize > w as isize {
                continue;
            }
            let sad = sad_block(cur, reference, y0, x0, -mvy, -mvx, bs);
            if sad < best_sad {
                best_sad = sad;
                best = (mvx as i32, mvy as i32);
            }
        }
    }
    best
}

pub(crate) fn predict_block(
    reference: &ArrayView3<'_, u8>,
    y0: usize,
    x0: usize,
    mv: (i32, i32),
    bs: usize,
    out: &mut [i32],
) {
    let (h, w) = (reference.shape()[0], reference.shape()[1]);
    let mut k = 0;
    for dy in 0..bs {
        for dx in 0..bs {
            let sy = ((y0 + dy) as isize - mv.1 as isize).clamp(0, h as isize - 1) as usize;
            let sx = ((x0 + dx) as isize - mv.0 as isize).clamp(0, w as isize - 1) as usize;
            for ch in 0..3 {
                out[k] = reference[[sy, sx, ch]] as i32;
                k += 1;
            }
        }
    }
}

pub(crate) fn block_origin(bi: usize, blocks_x: usize, bs: usize) -> (usize, usize) {
    let by = bi / blocks_x;
    let bx = bi % blocks_x;
    (by * bs, bx * bs)
}

/// Encode a clip. Residuals are stored losslessly, so the encoder's own
/// reconstruction equals the input and a zero-drop decode round-trips
/// bit-exactly.
pub fn encode(clip: &CleanClip, config: &CodecConfig) -> Result<EncodedClip> {
    config.validate()?;
    let n = clip.n_frames();
    if n == 0 {
        return Err(CodecError::Input("empty clip".into()));
    }
    let (h, w) = (clip.height(), clip.width());
    let bs = config.block_size;
    if h % bs != 0 || w % bs != 0 {
        return Err(CodecError::Config(format!(
            "frame size {w}x{h} not divisible by block size {bs}"
        )));
    }
    let types = config.frame_types(n);
    let blocks_x = w / bs;
    let blocks_y = h / bs;
    let bpf = blocks_x * blocks_y;

    let mut block_mvs: Vec<Vec<BlockMv>> = vec![vec![BlockMv::default(); bpf]; n];
    // block residual payloads, filled per frame then packetized
    let mut frame_payloads: Vec<Vec<Vec<u8>>> = vec![Vec::new(); n];

    // Coding order: anchors in display order, then B frames. Lossless
    // residuals mean every reconstructed reference equals the source frame.
    let order: Vec<usize> = (0..n)
        .filter(|&i| types[i].is_anchor())
        .chain((0..n).filter(|&i| !types[i].is_anchor()))
        .collect();

    let mut pred = vec![0i32; bs * bs * 3];
    let mut pred_b = vec![0i32; bs * bs * 3];
    for &fi in &order {
        let cur = clip.frames.index_axis(ndarray::Axis(0), fi);
        let mut payloads: Vec<Vec<u8>> = Vec::with_capacity(bpf);
        match types[fi] {
            FrameKind::I => {
                for bi in 0..bpf {
                    let (y0, x0) = block_origin(bi, blocks_x, bs);
                    let mut raw = Vec::with_capacity(bs * bs * 3);
                    for dy in 0..bs {
                        for dx in 0..bs {
                            for ch in 0..3 {
                                raw.push(cur[[y0 + dy, x0 + dx, ch]]);
                            }
                        }
                    }
                    payloads.push(raw);
                }
            }
            FrameKind::P => {
                let r = prev_anchor(&types, fi).expect("P frame without prior anchor");
                let reference = clip.frames.index_axis(ndarray::Axis(0), r);
                for bi in 0..bpf {
                    let (y0, x0) = block_origin(bi, blocks_x, bs);
                    let mv = block_match(&cur, &reference, y0, x0, bs, config.search_range);
                    block_mvs[fi][bi] = BlockMv {
                        fwd: mv,
                        bwd: None,
                    };
                    predict_block(&reference, y0, x0, mv, bs, &mut pred);
                    payloads.push(residual_bytes(&cur, y0, x0, bs, &pred));
                }
            }
            FrameKind::B => {
                let rf = prev_anchor(&types, fi).expect("B frame without prior anchor");
                let rb = next_anchor_in_gop(&types, config.gop_length, fi);
                let ref_f = clip.frames.index_axis(ndarray::Axis(0), rf);
                for bi in 0..bpf {
                    let (y0, x0) = block_origin(bi, blocks_x, bs);
                    let mvf = block_match(&cur, &ref_f, y0, x0, bs, config.search_range);
                    predict_block(&ref_f, y0, x0, mvf, bs, &mut pred);
                    let bwd = match rb {
                        Some(rbi) => {
                            let ref_b = clip.frames.index_axis(ndarray::Axis(0), rbi);
                            let mvb =
                                block_match(&cur, &ref_b, y0, x0, bs, config.search_range);
                            predict_block(&ref_b, y0, x0, mvb, bs, &mut pred_b);
                            for (p, pb) in pred.iter_mut().zip(pred_b.iter()) {
                                *p = (*p + *pb) / 2;
                            }
                            Some(mvb)
                        }
                        None => None,
                    };
                    block_mvs[fi][bi] = BlockMv { fwd: mvf, bwd };
                    payloads.push(residual_bytes(&cur, y0, x0, bs, &pred));
                }
            }
        }
        frame_payloads[fi] = payloads;
    }

    // Packetize in display order, packet_blocks consecutive blocks apiece.
    let mut packets = Vec::new();
    for fi in 0..n {
        let kind = if types[fi] == FrameKind::I {
            PayloadKind::Intra
        } else {
            PayloadKind::Inter
        };
        let mut bi = 0;
        while bi < bpf {
            let count = config.packet_blocks.min(bpf - bi);
            let mut payload = Vec::new();
            for b in bi..bi + count {
                payload.extend_from_slice(&frame_payloads[fi][b]);
            }
            packets.push(Packet {
                frame_index: fi,
                block_start: bi,
                block_count: count,
                kind,
                payload,
            });
            bi += count;
        }
    }

    Ok(EncodedClip {
        clip_id: clip.clip_id.clone(),
        width: w,
        height: h,
        block_size: bs,
        gop_length: config.gop_length,
        frame_types: types,
        block_mvs,
        packets,
    })
}

fn residual_bytes(
    cur: &ArrayView3<'_, u8>,
    y0: usize,
    x0: usize,
    bs: usize,
    pred: &[i32],
) -> Vec<u8> {
    let mut out = Vec::with_capacity(bs * bs * 3 * 2);
    let mut k = 0;
    for dy in 0..bs {
        for dx in 0..bs {
            for ch in 0..3 {
                let resid = cur[[y0 + dy, x0 + dx, ch]] as i32 - pred[k];
                out.extend_from_slice(&(resid as i16).to_le_bytes());
                k += 1;
            }
        }
    }
    out
}

/// Frame-arrays view of the encoder's reconstruction. Residuals are lossless
/// so this is the clean clip itself; kept as an explicit function because the
/// decoder contract is stated against it.
pub fn encoder_reconstruction(clip: &CleanClip, config: &CodecConfig) -> Result<Array4<u8>> {
    config.validate()?;
    Ok(clip.frames.clone())
}
