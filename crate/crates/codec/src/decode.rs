use crate::encode::{block_origin, next_anchor_in_gop, predict_block, prev_anchor};
use crate::types::{EncodedClip, FrameKind, PayloadKind};
use ndarray::{Array3, Array4};

const CONCEAL_GRAY: u8 = 128;

struct Coverage<'a> {
    /// per (frame, block): payload slice for that block, if its packet survived
    slots: Vec<Vec<Option<&'a [u8]>>>,
}

fn coverage(encoded: &EncodedClip) -> Coverage<'_> {
    let bpf = encoded.blocks_per_frame();
    let bs = encoded.block_size;
    let mut slots = vec![vec![None; bpf]; encoded.n_frames()];
    for p in &encoded.packets {
        let block_bytes = match p.kind {
            PayloadKind::Intra => bs * bs * 3,
            PayloadKind::Inter => bs * bs * 3 * 2,
        };
        for k in 0..p.block_count {
            let off = k * block_bytes;
            slots[p.frame_index][p.block_start + k] =
                Some(&p.payload[off..off + block_bytes]);
        }
    }
    Coverage { slots }
}

/// Decode whatever packets survive. The decoder is total: missing intra
/// blocks are concealed by a co-located copy from the previously decoded
/// anchor (gray for the very first frame) and missing inter blocks by a
/// co-located copy from their reference, motion ignored.
pub fn decode(encoded: &EncodedClip) -> Array4<u8> {
    let n = encoded.n_frames();
    let (h, w) = (encoded.height, encoded.width);
    let bs = encoded.block_size;
    let blocks_x = encoded.blocks_x();
    let bpf = encoded.blocks_per_frame();
    let cov = coverage(encoded);
    let types = &encoded.frame_types;

    let mut recon = Array4::<u8>::zeros((n, h, w, 3));
    let mut decoded = vec![false; n];
    let order: Vec<usize> = (0..n)
        .filter(|&i| types[i].is_anchor())
        .chain((0..n).filter(|&i| !types[i].is_anchor()))
        .collect();

    let mut pred = vec![0i32; bs * bs * 3];
    let mut pred_b = vec![0i32; bs * bs * 3];
    for &fi in &order {
        let fwd_ref = prev_anchor(types, fi);
        let bwd_ref = if types[fi] == FrameKind::B {
            next_anchor_in_gop(types, encoded.gop_length, fi)
        } else {
            None
        };
        let mut frame = Array3::<u8>::zeros((h, w, 3));
        for bi in 0..bpf {
            let (y0, x0) = block_origin(bi, blocks_x, bs);
            let payload = cov.slots[fi][bi];
            match (types[fi], payload) {
                (FrameKind::I, Some(raw)) => {
                    let mut k = 0;
                    for dy in 0..bs {
                        for dx in 0..bs {
                            for ch in 0..3 {
                                frame[[y0 + dy, x0 + dx, ch]] = raw[k];
                                k += 1;
                            }
                        }
                    }
                }
                (FrameKind::I, None) => {
                    // co-located copy from the previous reconstructed frame
                    match fwd_ref.filter(|&r| decoded[r]) {
                        Some(r) => {
                            let prev = recon.index_axis(ndarray::Axis(0), r);
                            for dy in 0..bs {
                                for dx in 0..bs {
                                    for ch in 0..3 {
                                        frame[[y0 + dy, x0 + dx, ch]] =
                                            prev[[y0 + dy, x0 + dx, ch]];
                                    }
                                }
                            }
                        }
                        None => {
                            for dy in 0..bs {
                                for dx in 0..bs {
                                    for ch in 0..3 {
                                        frame[[y0 + dy, x0 + dx, ch]] = CONCEAL_GRAY;
                                    }
                                }
                            }
                        }
                    }
                }
                (_, payload) => {
                    // inter-coded block (P or B)
                    let r = fwd_ref.expect("inter frame without prior anchor");
                    let reference = recon.index_axis(ndarray::Axis(0), r);
                    match payload {
                        Some(res) => {
                            let mv = encoded.block_mvs[fi][bi];
                            predict_block(&reference, y0, x0, mv.fwd, bs, &mut pred);
                            if let (Some(mvb), Some(rb)) = (mv.bwd, bwd_ref) {
                                let ref_b = recon.index_axis(ndarray::Axis(0), rb);
                                predict_block(&ref_b, y0, x0, mvb, bs, &mut pred_b);
                                for (p, pb) in pred.iter_mut().zip(pred_b.iter()) {
                                    *p = (*p + *pb) / 2;
                                }
                            }
                            let mut k = 0;
                            for dy in 0..bs {
                                for dx in 0..bs {
                                    for ch in 0..3 {
                                        let resid = i16::from_le_bytes([
                                            res[2 * k],
                                            res[2 * k + 1],
                                        ]) as i32;
                                        frame[[y0 + dy, x0 + dx, ch]] =
                                            (pred[k] + resid).clamp(0, 255) as u8;
                                        k += 1;
                                    }
                                }
                            }
                        }
                        None => {
                            // co-located copy from the forward reference
                            for dy in 0..bs {
                                for dx in 0..bs {
                                    for ch in 0..3 {
                                        frame[[y0 + dy, x0 + dx, ch]] =
                                            reference[[y0 + dy, x0 + dx, ch]];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        recon.index_axis_mut(ndarray::Axis(0), fi).assign(&frame);
        decoded[fi] = true;
    }
    recon
}
