use mgdm_eval::*;
use mgdm_train::{generate_dataset, generate_spec_from, train_stage1, Config};
use std::path::Path;

fn tiny_cfg(extra: &str) -> Config {
    Config::parse(&format!(
        "frames=4\nsize=32\nbatch=2\nseed=5\n\
         ae.base=8\nlatent.channels=2\n\
         dme.widths=8,16\ndme.d_ctx=16\ndme.d_p=4\ndme.heads=2\ndme.mlp_hidden=8\n\
         unet.widths=8,16\nunet.heads=2\nunet.temb=16\nunet.ffn_mult=2\n\
         pmp.widths=8,8,4,4\nprm.width=8\nprm.window=4\nprm.heads=2\nprm.blocks=1\n\
         diffusion.T=50\ndiffusion.sample_steps=5\n{extra}"
    ))
    .unwrap()
}

fn make_data(dir: &Path) {
    let cfg = tiny_cfg("");
    let spec = generate_spec_from(&cfg).unwrap();
    generate_dataset(&spec, dir, 8, 1).unwrap();
}

/// A checkpoint whose mask predictor and refiner are still at their neutral
/// initialization: recovery must return the corrupted input untouched, so
/// recovered PSNR equals corrupted PSNR exactly.
#[test]
fn transparent_checkpoint_reports_equal_psnrs() {
    let data = tempfile::tempdir().unwrap();
    make_data(data.path());
    let cfg = tiny_cfg("ae_steps=3\nsteps=3\nlr.ae=0\nlr.unet=0\n");
    let (ckpt, _) = train_stage1(&cfg, data.path()).unwrap();
    let ck_path = data.path().join("init.ckpt");
    ckpt.save(&ck_path).unwrap();

    let report = evaluate(&ck_path, data.path(), &EvaluateOptions::default()).unwrap();
    assert_eq!(report.clips.len(), 1);
    let c = &report.clips[0];
    let (pc, pr) = (c.psnr_corrupted.unwrap(), c.psnr_recovered.unwrap());
    assert!(
        (pc - pr).abs() <= 1e-6,
        "identity pipeline: corrupted {pc} vs recovered {pr}"
    );
    assert_eq!(c.psnr_composed.unwrap(), pc);
}

#[test]
fn evaluate_errors_on_empty_dataset_and_writes_no_report() {
    let data = tempfile::tempdir().unwrap();
    make_data(data.path());
    let cfg = tiny_cfg("ae_steps=2\nsteps=2\n");
    let (ckpt, _) = train_stage1(&cfg, data.path()).unwrap();
    let ck_path = data.path().join("init.ckpt");
    ckpt.save(&ck_path).unwrap();

    let empty = tempfile::tempdir().unwrap();
    let err = evaluate(&ck_path, empty.path(), &EvaluateOptions::default()).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Input);
}

#[test]
fn evaluate_is_deterministic_and_skips_unsupervised_clips() {
    let data = tempfile::tempdir().unwrap();
    make_data(data.path());
    let cfg = tiny_cfg("ae_steps=3\nsteps=3\n");
    let (ckpt, _) = train_stage1(&cfg, data.path()).unwrap();
    let ck_path = data.path().join("t.ckpt");
    ckpt.save(&ck_path).unwrap();

    // an unsupervised sidecar clip joins the dataset only for evaluation
    let mut bundle = mgdm_codec::read_bundle(&data.path().join("clip_00000")).unwrap();
    bundle.clean = None;
    bundle.gt_mask = None;
    mgdm_codec::write_bundle(&bundle, &data.path().join("clip_sidecar")).unwrap();

    let a = evaluate(&ck_path, data.path(), &EvaluateOptions::default()).unwrap();
    let b = evaluate(&ck_path, data.path(), &EvaluateOptions::default()).unwrap();
    assert_eq!(a.to_jsonl(), b.to_jsonl(), "reports must be byte-identical");
    assert_eq!(a.aggregate.clips, 2);
    assert_eq!(a.aggregate.scored_clips, 1);
    let side = a.clips.iter().find(|c| c.clip_id == "clip_sidecar").unwrap();
    assert!(!side.supervised && side.psnr_recovered.is_none());

    // timing is excluded from the file unless requested
    assert!(a.aggregate.wall_time_s.is_none());
    let timed = evaluate(
        &ck_path,
        data.path(),
        &EvaluateOptions {
            timing: true,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(timed.aggregate.wall_time_s.is_some());
}
