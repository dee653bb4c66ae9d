use crate::encode::block_origin;
use crate::types::{EncodedClip, FrameKind, PayloadKind};
use ndarray::Array4;

/// Densify block motion vectors into a `[N, H, W, 4]` flow field with
/// channels `[fwd_dx, fwd_dy, bwd_dx, bwd_dy]`. Extraction reads the (possibly
/// corrupted) packet stream: blocks whose packet was dropped read as zero, as
/// do intra blocks and absent backward references.
pub fn extract_metadata(encoded: &EncodedClip) -> (Array4<f32>, Vec<FrameKind>) {
    let n = encoded.n_frames();
    let (h, w) = (encoded.height, encoded.width);
    let bs = encoded.block_size;
    let blocks_x = encoded.blocks_x();
    let mut field = Array4::<f32>::zeros((n, h, w, 4));
    for p in &encoded.packets {
        if p.kind != PayloadKind::Inter {
            continue;
        }
        for k in 0..p.block_count {
            let bi = p.block_start + k;
            let mv = encoded.block_mvs[p.frame_index][bi];
            let (y0, x0) = block_origin(bi, blocks_x, bs);
            for dy in 0..bs {
                for dx in 0..bs {
                    field[[p.frame_index, y0 + dy, x0 + dx, 0]] = mv.fwd.0 as f32;
                    field[[p.frame_index, y0 + dy, x0 + dx, 1]] = mv.fwd.1 as f32;
                    if let Some(bwd) = mv.bwd {
                        field[[p.frame_index, y0 + dy, x0 + dx, 2]] = bwd.0 as f32;
                        field[[p.frame_index, y0 + dy, x0 + dx, 3]] = bwd.1 as f32;
                    }
                }
            }
        }
    }
    (field, encoded.frame_types.clone())
}
