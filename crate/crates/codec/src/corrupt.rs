use crate::types::{CorruptionParams, EncodedClip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Drop packets by independent Bernoulli trials. One uniform draw is consumed
/// per packet in order, so the drop set is a pure function of the seed and
/// the packet list; surviving packets keep their order.
pub fn corrupt(encoded: &EncodedClip, params: &CorruptionParams) -> EncodedClip {
    let mut rng = ChaCha20Rng::seed_from_u64(params.seed);
    let mut out = encoded.clone();
    out.packets = encoded
        .packets
        .iter()
        .filter(|p| {
            let u: f64 = rng.gen();
            let in_scope = params.scope.covers(encoded.frame_types[p.frame_index]);
            !(in_scope && u < params.drop_probability)
        })
        .cloned()
        .collect();
    out
}

/// Indices (into the original packet list) that a given corruption keeps.
pub fn kept_packet_indices(encoded: &EncodedClip, params: &CorruptionParams) -> Vec<usize> {
    let mut rng = ChaCha20Rng::seed_from_u64(params.seed);
    encoded
        .packets
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            let u: f64 = rng.gen();
            let in_scope = params.scope.covers(encoded.frame_types[p.frame_index]);
            !(in_scope && u < params.drop_probability)
        })
        .map(|(i, _)| i)
        .collect()
}
