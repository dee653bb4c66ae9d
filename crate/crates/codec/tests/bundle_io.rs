use mgdm_codec::*;
use std::fs;

fn sample_bundle() -> ClipBundle {
    let clip = synth_clip(55, &SceneParams::default(), "io");
    generate_bundle(
        &clip,
        &CodecConfig::default(),
        &CorruptionParams {
            drop_probability: 0.4,
            seed: 3,
            scope: DropScope::AllPackets,
        },
        DEFAULT_MASK_THRESHOLD,
        DEFAULT_MASK_DILATION,
    )
    .unwrap()
}

#[test]
fn bundle_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = sample_bundle();
    write_bundle(&bundle, dir.path()).unwrap();
    let back = read_bundle(dir.path()).unwrap();
    assert_eq!(back.clean.as_ref(), bundle.clean.as_ref());
    assert_eq!(back.corrupted, bundle.corrupted);
    assert_eq!(back.motion, bundle.motion);
    assert_eq!(back.frame_types, bundle.frame_types);
    assert_eq!(back.gt_mask.as_ref(), bundle.gt_mask.as_ref());
    assert_eq!(back.meta, bundle.meta);
}

#[test]
fn sidecar_only_bundle_reads_as_unsupervised() {
    let dir = tempfile::tempdir().unwrap();
    let mut bundle = sample_bundle();
    bundle.clean = None;
    bundle.gt_mask = None;
    bundle.meta = serde_json::json!({
        "provenance": {
            "source": "external-sidecar",
            "external_corruption_params": "(1/16, 0.4, 4096)",
        }
    });
    write_bundle(&bundle, dir.path()).unwrap();
    let back = read_bundle(dir.path()).unwrap();
    assert!(!back.is_supervised());
    assert!(back.gt_mask.is_none());
    assert_eq!(
        back.meta["provenance"]["external_corruption_params"],
        serde_json::json!("(1/16, 0.4, 4096)")
    );
}

#[test]
fn corrupt_motion_magic_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = sample_bundle();
    write_bundle(&bundle, dir.path()).unwrap();
    let motion = dir.path().join("motion.bin");
    let mut raw = fs::read(&motion).unwrap();
    raw[0..8].copy_from_slice(b"BADMAGIC");
    fs::write(&motion, raw).unwrap();
    let err = read_bundle(dir.path()).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Format);
    assert!(err.to_string().contains("motion.bin"));
}

#[test]
fn truncated_motion_file_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = sample_bundle();
    write_bundle(&bundle, dir.path()).unwrap();
    let motion = dir.path().join("motion.bin");
    let raw = fs::read(&motion).unwrap();
    fs::write(&motion, &raw[..raw.len() / 2]).unwrap();
    let err = read_bundle(dir.path()).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Format);
    assert!(err.to_string().contains("truncated"));
}

#[test]
fn missing_files_are_reported_with_names() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = sample_bundle();
    write_bundle(&bundle, dir.path()).unwrap();
    fs::remove_file(dir.path().join("frame_types.txt")).unwrap();
    let err = read_bundle(dir.path()).unwrap_err();
    assert!(err.to_string().contains("frame_types.txt"));
}

#[test]
fn list_clip_dirs_finds_and_sorts_clips() {
    let root = tempfile::tempdir().unwrap();
    for name in ["clip_00002", "clip_00000", "clip_00001"] {
        let b = sample_bundle();
        write_bundle(&b, &root.path().join(name)).unwrap();
    }
    let dirs = list_clip_dirs(root.path()).unwrap();
    let names: Vec<String> = dirs
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, vec!["clip_00000", "clip_00001", "clip_00002"]);
    let empty = tempfile::tempdir().unwrap();
    assert!(list_clip_dirs(empty.path()).is_err());
}
