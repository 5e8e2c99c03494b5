use super::*;
use crate::model::{Model, ModelConfig};
use crate::synth::{synth_scene, write_synth_dataset};
use crate::tonemap::TonemapParams;

fn quick_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 2,
        seed: 11,
        checkpoint_every: 0,
        patch: crate::data::PatchSpec {
            patch_size: 24,
            stride: 24,
            ..Default::default()
        },
        ..TrainConfig::default()
    }
}

#[test]
fn single_steps_reduce_loss_on_one_sample() {
    let sample = synth_scene(32, 32, 21, "overfit");
    let batch = single_sample_batch(&sample).unwrap();
    let mut model = Model::new(ModelConfig::tiny(4, 1, 1), 3).unwrap();
    let mut adam = Adam::new(&model.params, 0.9, 0.999, 1e-8);
    let tm = TonemapParams::default();
    let first = train_step(&mut model, &mut adam, &batch, 1e-3, tm, None).unwrap();
    let mut last = first;
    for _ in 0..30 {
        last = train_step(&mut model, &mut adam, &batch, 1e-3, tm, None).unwrap();
    }
    assert!(last < first, "loss did not improve: {first} -> {last}");
}

#[test]
fn training_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_synth_dataset(&data, 1, 24, 24, 77).unwrap();

    let run = |out: &Path| {
        train(
            &data,
            ModelConfig::tiny(4, 1, 0),
            &quick_config(2),
            out,
            LoadOptions::default(),
        )
        .unwrap()
    };
    let a = run(&dir.path().join("a"));
    let b = run(&dir.path().join("b"));
    assert_eq!(a.step_losses, b.step_losses, "runs must be bit-identical");
}

#[test]
fn checkpoint_roundtrip_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let model = Model::new(ModelConfig::tiny(4, 2, 1), 5).unwrap();
    let path = dir.path().join("ckpt.bin");
    save_checkpoint(&path, &model, None).unwrap();
    let restored = load_checkpoint(&path).unwrap().model;
    assert_eq!(restored.config, model.config);

    let sample = synth_scene(24, 24, 9, "probe");
    let input = crate::data::build_network_input(&sample.bracket).unwrap();
    let a = model.predict(&input).unwrap();
    let b = restored.predict(&input).unwrap();
    assert_eq!(a, b, "restored model must reproduce forward outputs exactly");
}

#[test]
fn checkpoint_rejects_mismatched_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let model = Model::new(ModelConfig::tiny(4, 1, 1), 5).unwrap();
    let path = dir.path().join("ckpt.bin");
    save_checkpoint(&path, &model, None).unwrap();

    // corrupt one tensor dimension in place
    let mut bytes = std::fs::read(&path).unwrap();
    let name = b"extract.weight";
    let pos = bytes
        .windows(name.len())
        .position(|w| w == name)
        .expect("tensor name present");
    let shape_pos = pos + name.len();
    bytes[shape_pos] = bytes[shape_pos].wrapping_add(1);
    std::fs::write(&path, &bytes).unwrap();
    assert!(load_checkpoint(&path).is_err());
}

#[test]
fn truncated_checkpoint_fails_loudly() {
    let dir = tempfile::tempdir().unwrap();
    let model = Model::new(ModelConfig::tiny(4, 1, 0), 5).unwrap();
    let path = dir.path().join("ckpt.bin");
    save_checkpoint(&path, &model, None).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert!(load_checkpoint(&path).is_err());
    std::fs::write(&path, b"garbage").unwrap();
    assert!(matches!(
        load_checkpoint(&path),
        Err(crate::Error::Config(_)) | Err(crate::Error::Io(_))
    ));
}

#[test]
fn resume_continues_schedule_and_steps() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_synth_dataset(&data, 1, 24, 24, 31).unwrap();

    // uninterrupted 4-epoch run, checkpointing at epoch 2
    let mut cfg = quick_config(4);
    cfg.checkpoint_every = 2;
    let full = train(
        &data,
        ModelConfig::tiny(4, 1, 0),
        &cfg,
        &dir.path().join("full"),
        LoadOptions::default(),
    )
    .unwrap();

    // continue from the mid-run checkpoint as if the run had been interrupted
    let second_half = resume(
        &dir.path().join("full").join("ckpt_epoch2.bin"),
        &data,
        &quick_config(4),
        &dir.path().join("resumed"),
        LoadOptions::default(),
    )
    .unwrap();

    let steps_per_epoch = full.step_losses.len() / 4;
    assert_eq!(
        second_half.step_losses,
        full.step_losses[2 * steps_per_epoch..],
        "resume must be bit-compatible"
    );

    // schedule position carries over: resumed run starts at epoch 2's lr
    let c4 = quick_config(4);
    let lr2 = lr_at(2, &c4).unwrap();
    let logged = std::fs::read_to_string(&second_half.log_path).unwrap();
    let first_line = logged.lines().next().unwrap();
    assert!(first_line.contains("\"epoch\": 2"), "{first_line}");
    assert!(first_line.contains(&format!("{lr2:e}")), "{first_line}");
}

#[test]
fn empty_dataset_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir_all(&data).unwrap();
    let err = train(
        &data,
        ModelConfig::tiny(4, 1, 0),
        &quick_config(1),
        &dir.path().join("out"),
        LoadOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, crate::Error::Config(_)), "{err}");
}

#[test]
fn log_is_one_json_record_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_synth_dataset(&data, 1, 24, 24, 41).unwrap();
    let outcome = train(
        &data,
        ModelConfig::tiny(4, 0, 0),
        &quick_config(3),
        &dir.path().join("out"),
        LoadOptions::default(),
    )
    .unwrap();
    let log = std::fs::read_to_string(&outcome.log_path).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 3);
    for (i, line) in lines.iter().enumerate() {
        assert!(line.starts_with(&format!("{{\"epoch\": {i},")), "{line}");
        assert!(line.contains("\"lr\": "));
        assert!(line.contains("\"train_loss\": "));
        assert!(line.contains("\"wall_time\": "));
    }
    assert_eq!(outcome.epoch_losses.len(), 3);
}

#[test]
fn ablation_reports_follow_variant_order() {
    let base = ModelConfig::tiny(4, 1, 0);
    let fusion = fusion_matrix(&base);
    assert_eq!(
        fusion.iter().map(|v| v.name.as_str()).collect::<Vec<_>>(),
        ["summation", "concatenation", "sffb"]
    );
    let components = component_matrix(&base);
    assert_eq!(components.len(), 5);
    assert_eq!(components[0].name, "w/o PSFBs");
    assert!(!components[0].config.enable_psfb_stack);
    assert_eq!(components[4].name, "full");
    let blocks = block_count_matrix(&base);
    assert_eq!(blocks.len(), 5);
    assert_eq!(blocks[0].config.num_psfb, 4);
    assert_eq!(blocks[4].config.num_psfb, 8);

    // empty matrix: header-only report, success
    let empty = AblationReport { rows: vec![] };
    assert_eq!(empty.to_csv(), "variant,psnr_mu,psnr_l,ssim_mu,ssim_l\n");
}
