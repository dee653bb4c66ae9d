use crate::types::CleanClip;
use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Synthetic moving-scene parameters. All velocities are integer pixels per
/// frame so block matching can lock on exactly.
#[derive(Debug, Clone)]
pub struct SceneParams {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub sprites: usize,
    pub max_speed: i32,
    /// Overrides the random background drift when set.
    pub background_velocity: Option<(i32, i32)>,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            frames: 16,
            height: 64,
            width: 64,
            sprites: 3,
            max_speed: 3,
            background_velocity: None,
        }
    }
}

struct Sprite {
    x: i32,
    y: i32,
    w: i32,
    h: i32,
    vx: i32,
    vy: i32,
    tint: [i32; 3],
    texture: Vec<u8>,
}

/// Textured background with integer drift plus a few textured sprites moving
/// on a torus. Deterministic in (seed, params).
pub fn synth_clip(seed: u64, params: &SceneParams, clip_id: &str) -> CleanClip {
    let (n, h, w) = (params.frames, params.height, params.width);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    // base texture, lightly smoothed noise
    let mut base = vec![0u8; h * w * 3];
    for v in base.iter_mut() {
        *v = rng.gen_range(0..=255);
    }
    let smoothed: Vec<u8> = (0..h * w * 3)
        .map(|i| {
            let ch = i % 3;
            let pix = i / 3;
            let (y, x) = (pix / w, pix % w);
            let mut acc = 0u32;
            let mut cnt = 0u32;
            for dy in -1i32..=1 {
                for dx in -1i32..=1 {
                    let sy = (y as i32 + dy).rem_euclid(h as i32) as usize;
                    let sx = (x as i32 + dx).rem_euclid(w as i32) as usize;
                    acc += base[(sy * w + sx) * 3 + ch] as u32;
                    cnt += 1;
                }
            }
            (acc / cnt) as u8
        })
        .collect();

    let (bvx, bvy) = params
        .background_velocity
        .unwrap_or_else(|| (rng.gen_range(-2..=2), rng.gen_range(-2..=2)));

    let mut sprites: Vec<Sprite> = (0..params.sprites)
        .map(|_| {
            let sw = rng.gen_range(10..=24).min(w as i32 - 1);
            let sh = rng.gen_range(10..=24).min(h as i32 - 1);
            let mut texture = vec![0u8; (sw * sh * 3) as usize];
            for v in texture.iter_mut() {
                *v = rng.gen_range(0..=255);
            }
            Sprite {
                x: rng.gen_range(0..w as i32),
                y: rng.gen_range(0..h as i32),
                w: sw,
                h: sh,
                vx: rng.gen_range(-params.max_speed..=params.max_speed),
                vy: rng.gen_range(-params.max_speed..=params.max_speed),
                tint: [
                    rng.gen_range(-60..=60),
                    rng.gen_range(-60..=60),
                    rng.gen_range(-60..=60),
                ],
                texture,
            }
        })
        .collect();

    let mut frames = Array4::<u8>::zeros((n, h, w, 3));
    for fi in 0..n {
        let (ox, oy) = (bvx * fi as i32, bvy * fi as i32);
        for y in 0..h {
            for x in 0..w {
                let sy = (y as i32 - oy).rem_euclid(h as i32) as usize;
                let sx = (x as i32 - ox).rem_euclid(w as i32) as usize;
                for ch in 0..3 {
                    frames[[fi, y, x, ch]] = smoothed[(sy * w + sx) * 3 + ch];
                }
            }
        }
        for s in &sprites {
            for dy in 0..s.h {
                for dx in 0..s.w {
                    let y = (s.y + dy).rem_euclid(h as i32) as usize;
                    let x = (s.x + dx).rem_euclid(w as i32) as usize;
                    for ch in 0..3 {
                        let t = s.texture[((dy * s.w + dx) * 3) as usize + ch] as i32;
                        let v = (t / 2 + 96 + s.tint[ch]).clamp(0, 255) as u8;
                        frames[[fi, y, x, ch]] = v;
                    }
                }
            }
        }
        for s in sprites.iter_mut() {
            s.x += s.vx;
            s.y += s.vy;
        }
    }
    CleanClip {
        frames,
        clip_id: clip_id.to_string(),
    }
}
