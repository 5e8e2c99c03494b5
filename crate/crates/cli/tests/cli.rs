//! End-to-end checks of the `psfnet` binary: exit codes, file outputs, and
//! report determinism.

use std::path::Path;
use std::process::{Command, Output};

use psfnet::synth::write_synth_dataset;

fn psfnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psfnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Tiny config shared by the smoke runs.
fn write_config(path: &Path) {
    std::fs::write(
        path,
        "model.channels = 4\n\
         model.num_psfb = 1\n\
         model.num_rdab = 1\n\
         model.sffb_reduction = 4\n\
         train.epochs = 2\n\
         train.batch_size = 2\n\
         train.seed = 3\n\
         train.checkpoint_every = 0\n\
         train.patch_size = 24\n\
         train.stride = 24\n",
    )
    .unwrap();
}

#[test]
fn no_subcommand_is_a_usage_error() {
    let out = psfnet(&[]);
    assert_eq!(code(&out), 1);
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.to_lowercase().contains("usage"), "{text}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = psfnet(&["train", "--bogus"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn help_exits_zero() {
    let out = psfnet(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("train") && text.contains("infer"), "{text}");
}

#[test]
fn missing_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg");
    write_config(&cfg);
    let out = psfnet(&[
        "train",
        "--data",
        dir.path().join("nope").to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn train_infer_eval_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_synth_dataset(&data, 2, 24, 32, 17).unwrap();
    let cfg = dir.path().join("cfg");
    write_config(&cfg);
    let out_dir = dir.path().join("run");

    let out = psfnet(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let ckpt = out_dir.join("ckpt_epoch2.bin");
    assert!(ckpt.is_file());
    assert!(out_dir.join("train_log.jsonl").is_file());

    // inference on a scene without ground truth succeeds without metrics
    let gtless = dir.path().join("gtless");
    std::fs::create_dir_all(&gtless).unwrap();
    copy_dir(&data.join("001"), &gtless.join("001"));
    std::fs::remove_file(gtless.join("001").join("HDRImg.hdr")).unwrap();
    let infer_out = dir.path().join("infer");
    let out = psfnet(&[
        "infer",
        "--scene",
        gtless.join("001").to_str().unwrap(),
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--out",
        infer_out.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(infer_out.join("001.hdr").is_file());
    assert!(infer_out.join("001_preview.png").is_file());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(!text.contains("psnr_mu"), "metrics printed without GT: {text}");

    // evaluation writes CSV + JSON, deterministically
    let report_a = dir.path().join("report_a.csv");
    let report_b = dir.path().join("report_b.csv");
    for report in [&report_a, &report_b] {
        let out = psfnet(&[
            "eval",
            "--data",
            data.to_str().unwrap(),
            "--ckpt",
            ckpt.to_str().unwrap(),
            "--report",
            report.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let csv_a = std::fs::read(&report_a).unwrap();
    let csv_b = std::fs::read(&report_b).unwrap();
    assert_eq!(csv_a, csv_b, "eval reports must be byte-identical");
    let csv = String::from_utf8(csv_a).unwrap();
    assert!(csv.starts_with("scene,psnr_mu,psnr_l,ssim_mu,ssim_l\n"));
    assert_eq!(csv.lines().count(), 4, "2 scenes + header + average: {csv}");
    assert!(csv.lines().last().unwrap().starts_with("average,"));
    assert!(report_a.with_extension("json").is_file());

    // corrupt checkpoint is a data/config error
    let bad = dir.path().join("bad.bin");
    std::fs::write(&bad, b"not a checkpoint").unwrap();
    let out = psfnet(&[
        "eval",
        "--data",
        data.to_str().unwrap(),
        "--ckpt",
        bad.to_str().unwrap(),
        "--report",
        dir.path().join("r.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn ablate_fusion_matrix_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_synth_dataset(&data, 1, 24, 24, 29).unwrap();
    let cfg = dir.path().join("cfg");
    std::fs::write(
        &cfg,
        "model.channels = 4\n\
         model.num_psfb = 1\n\
         model.num_rdab = 0\n\
         model.sffb_reduction = 4\n\
         train.epochs = 1\n\
         train.batch_size = 1\n\
         train.seed = 5\n\
         train.checkpoint_every = 0\n\
         train.patch_size = 24\n\
         train.stride = 24\n",
    )
    .unwrap();
    let out_dir = dir.path().join("ablate");
    let out = psfnet(&[
        "ablate",
        "--data",
        data.to_str().unwrap(),
        "--matrix",
        "fusion",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("ablation.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "variant,psnr_mu,psnr_l,ssim_mu,ssim_l");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("summation,"));
    assert!(lines[2].starts_with("concatenation,"));
    assert!(lines[3].starts_with("sffb,"));
}

#[test]
fn ablate_accepts_custom_matrix_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_synth_dataset(&data, 1, 24, 24, 31).unwrap();
    let cfg = dir.path().join("cfg");
    std::fs::write(
        &cfg,
        "model.channels = 4\n\
         model.num_psfb = 0\n\
         model.num_rdab = 0\n\
         model.sffb_reduction = 4\n\
         train.epochs = 1\n\
         train.batch_size = 1\n\
         train.seed = 5\n\
         train.checkpoint_every = 0\n\
         train.patch_size = 24\n\
         train.stride = 24\n",
    )
    .unwrap();
    let matrix = dir.path().join("matrix.txt");
    std::fs::write(
        &matrix,
        "# two variants\n\
         narrow |\n\
         no skips | model.enable_local_skip=false model.enable_global_skip=false\n",
    )
    .unwrap();
    let out_dir = dir.path().join("ablate");
    let out = psfnet(&[
        "ablate",
        "--data",
        data.to_str().unwrap(),
        "--matrix",
        matrix.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.contains("\nnarrow,"));
    assert!(csv.contains("\nno skips,"));
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), to.join(entry.file_name())).unwrap();
    }
}
