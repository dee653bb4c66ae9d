use crate::error::{CodecError, Result};
use crate::types::{parse_frame_pattern, ClipBundle};
use ndarray::{Array3, Array4};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

pub const MOTION_MAGIC: &[u8; 8] = b"MGDM-MV1";

fn png_path(dir: &Path, sub: &str, i: usize) -> std::path::PathBuf {
    dir.join(sub).join(format!("{i:05}.png"))
}

fn write_png_rgb(path: &Path, h: usize, w: usize, data: &[u8]) -> Result<()> {
    let img = image::RgbImage::from_raw(w as u32, h as u32, data.to_vec())
        .expect("raw buffer size mismatch");
    img.save(path)
        .map_err(|e| CodecError::format(path.display().to_string(), e.to_string()))
}

fn write_png_gray(path: &Path, h: usize, w: usize, data: &[u8]) -> Result<()> {
    let img = image::GrayImage::from_raw(w as u32, h as u32, data.to_vec())
        .expect("raw buffer size mismatch");
    img.save(path)
        .map_err(|e| CodecError::format(path.display().to_string(), e.to_string()))
}

fn read_png_rgb(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let img = image::open(path)
        .map_err(|e| CodecError::format(path.display().to_string(), e.to_string()))?
        .to_rgb8();
    Ok((img.height() as usize, img.width() as usize, img.into_raw()))
}

fn read_png_gray(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let img = image::open(path)
        .map_err(|e| CodecError::format(path.display().to_string(), e.to_string()))?
        .to_luma8();
    Ok((img.height() as usize, img.width() as usize, img.into_raw()))
}

/// Write one clip directory:
/// `frames_clean/%05d.png`, `frames_corrupt/%05d.png`, `motion.bin`,
/// `frame_types.txt`, `mask/%05d.png`, `meta.json`.
pub fn write_bundle(bundle: &ClipBundle, dir: &Path) -> Result<()> {
    let (n, h, w) = (bundle.n_frames(), bundle.height(), bundle.width());
    let mkdir = |sub: &str| {
        fs::create_dir_all(dir.join(sub))
            .map_err(|e| CodecError::io(dir.join(sub).display().to_string(), e))
    };
    mkdir("frames_corrupt")?;
    for i in 0..n {
        let frame = bundle.corrupted.index_axis(ndarray::Axis(0), i);
        let buf = frame.as_standard_layout();
        write_png_rgb(&png_path(dir, "frames_corrupt", i), h, w, buf.as_slice().unwrap())?;
    }
    if let Some(clean) = &bundle.clean {
        mkdir("frames_clean")?;
        for i in 0..n {
            let frame = clean.index_axis(ndarray::Axis(0), i);
            let buf = frame.as_standard_layout();
            write_png_rgb(&png_path(dir, "frames_clean", i), h, w, buf.as_slice().unwrap())?;
        }
    }
    if let Some(mask) = &bundle.gt_mask {
        mkdir("mask")?;
        for i in 0..n {
            let frame = mask.index_axis(ndarray::Axis(0), i);
            let bytes: Vec<u8> = frame.iter().map(|&v| if v != 0 { 255 } else { 0 }).collect();
            write_png_gray(&png_path(dir, "mask", i), h, w, &bytes)?;
        }
    }

    // motion.bin: magic, u32 N/H/W little-endian, f32 data row-major
    let motion_path = dir.join("motion.bin");
    let mut buf = Vec::with_capacity(8 + 12 + n * h * w * 4 * 4);
    buf.extend_from_slice(MOTION_MAGIC);
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    buf.extend_from_slice(&(h as u32).to_le_bytes());
    buf.extend_from_slice(&(w as u32).to_le_bytes());
    let std = bundle.motion.as_standard_layout();
    for &v in std.as_slice().unwrap() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::File::create(&motion_path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| CodecError::io(motion_path.display().to_string(), e))?;

    let types_path = dir.join("frame_types.txt");
    let mut txt = String::with_capacity(2 * n);
    for t in &bundle.frame_types {
        txt.push(t.as_char());
        txt.push('\n');
    }
    fs::write(&types_path, txt).map_err(|e| CodecError::io(types_path.display().to_string(), e))?;

    let meta_path = dir.join("meta.json");
    let meta = serde_json::to_string_pretty(&bundle.meta).expect("meta serializes");
    fs::write(&meta_path, meta).map_err(|e| CodecError::io(meta_path.display().to_string(), e))?;
    Ok(())
}

fn read_frame_dir(dir: &Path, sub: &str, n_hint: Option<usize>) -> Result<Array4<u8>> {
    let sub_dir = dir.join(sub);
    let mut count = 0usize;
    while png_path(dir, sub, count).exists() {
        count += 1;
    }
    if count == 0 {
        return Err(CodecError::format(
            sub_dir.display().to_string(),
            "no frames found",
        ));
    }
    if let Some(n) = n_hint {
        if n != count {
            return Err(CodecError::format(
                sub_dir.display().to_string(),
                format!("expected {n} frames, found {count}"),
            ));
        }
    }
    let (h, w, first) = read_png_rgb(&png_path(dir, sub, 0))?;
    let mut out = Array4::<u8>::zeros((count, h, w, 3));
    out.index_axis_mut(ndarray::Axis(0), 0)
        .assign(&ndarray::ArrayView3::from_shape((h, w, 3), &first).unwrap());
    for i in 1..count {
        let (hi, wi, data) = read_png_rgb(&png_path(dir, sub, i))?;
        if hi != h || wi != w {
            return Err(CodecError::format(
                png_path(dir, sub, i).display().to_string(),
                "frame size differs from first frame",
            ));
        }
        out.index_axis_mut(ndarray::Axis(0), i)
            .assign(&ndarray::ArrayView3::from_shape((h, w, 3), &data).unwrap());
    }
    Ok(out)
}

/// Read one clip directory. `frames_clean/` and `mask/` are optional; their
/// absence yields an unsupervised bundle.
pub fn read_bundle(dir: &Path) -> Result<ClipBundle> {
    let corrupted = read_frame_dir(dir, "frames_corrupt", None)?;
    let n = corrupted.shape()[0];
    let (h, w) = (corrupted.shape()[1], corrupted.shape()[2]);

    let motion_path = dir.join("motion.bin");
    let mut raw = Vec::new();
    fs::File::open(&motion_path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| CodecError::io(motion_path.display().to_string(), e))?;
    if raw.len() < 20 || &raw[0..8] != MOTION_MAGIC {
        return Err(CodecError::format(
            motion_path.display().to_string(),
            "bad magic (expected MGDM-MV1)",
        ));
    }
    let rd_u32 = |off: usize| u32::from_le_bytes(raw[off..off + 4].try_into().unwrap()) as usize;
    let (mn, mh, mw) = (rd_u32(8), rd_u32(12), rd_u32(16));
    if mn != n || mh != h || mw != w {
        return Err(CodecError::format(
            motion_path.display().to_string(),
            format!("motion dims {mn}x{mh}x{mw} do not match frames {n}x{h}x{w}"),
        ));
    }
    let need = 20 + mn * mh * mw * 4 * 4;
    if raw.len() != need {
        return Err(CodecError::format(
            motion_path.display().to_string(),
            format!("truncated: {} bytes, expected {need}", raw.len()),
        ));
    }
    let mut motion = Array4::<f32>::zeros((n, h, w, 4));
    {
        let flat = motion.as_slice_mut().unwrap();
        for (i, v) in flat.iter_mut().enumerate() {
            let off = 20 + i * 4;
            *v = f32::from_le_bytes(raw[off..off + 4].try_into().unwrap());
        }
    }

    let types_path = dir.join("frame_types.txt");
    let txt = fs::read_to_string(&types_path)
        .map_err(|e| CodecError::io(types_path.display().to_string(), e))?;
    let joined: String = txt.split_whitespace().collect();
    let frame_types = parse_frame_pattern(&joined).map_err(|e| {
        CodecError::format(types_path.display().to_string(), e.to_string())
    })?;
    if frame_types.len() != n {
        return Err(CodecError::format(
            types_path.display().to_string(),
            format!("{} frame types for {n} frames", frame_types.len()),
        ));
    }

    let clean = if dir.join("frames_clean").is_dir() {
        Some(read_frame_dir(dir, "frames_clean", Some(n))?)
    } else {
        None
    };
    let gt_mask = if dir.join("mask").is_dir() {
        let mut out = Array3::<u8>::zeros((n, h, w));
        for i in 0..n {
            let p = png_path(dir, "mask", i);
            let (hi, wi, data) = read_png_gray(&p)?;
            if hi != h || wi != w {
                return Err(CodecError::format(
                    p.display().to_string(),
                    "mask size differs from frames",
                ));
            }
            let view = ndarray::ArrayView2::from_shape((h, w), &data).unwrap();
            out.index_axis_mut(ndarray::Axis(0), i)
                .assign(&view.mapv(|v| u8::from(v >= 128)));
        }
        Some(out)
    } else {
        None
    };

    let meta_path = dir.join("meta.json");
    let meta = if meta_path.exists() {
        let txt = fs::read_to_string(&meta_path)
            .map_err(|e| CodecError::io(meta_path.display().to_string(), e))?;
        serde_json::from_str(&txt)
            .map_err(|e| CodecError::format(meta_path.display().to_string(), e.to_string()))?
    } else {
        serde_json::Value::Null
    };

    let clip_id = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "clip".to_string());

    Ok(ClipBundle {
        clip_id,
        clean,
        corrupted,
        motion,
        frame_types,
        gt_mask,
        meta,
    })
}

/// Clip subdirectories of a dataset directory, sorted by name.
pub fn list_clip_dirs(dataset: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut out = Vec::new();
    let entries = fs::read_dir(dataset)
        .map_err(|e| CodecError::io(dataset.display().to_string(), e))?;
    for entry in entries {
        let entry = entry.map_err(|e| CodecError::io(dataset.display().to_string(), e))?;
        let path = entry.path();
        if path.is_dir() && path.join("frames_corrupt").is_dir() {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(CodecError::Input(format!(
            "no clip directories found under {}",
            dataset.display()
        )));
    }
    Ok(out)
}

/// Used by tests to confirm type round-trips without touching the payloads.
pub fn bundles_equal(a: &ClipBundle, b: &ClipBundle) -> bool {
    a.clean == b.clean
        && a.corrupted == b.corrupted
        && a.motion == b.motion
        && a.frame_types == b.frame_types
        && a.gt_mask == b.gt_mask
        && a.meta == b.meta
}
