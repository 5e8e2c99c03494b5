//! Training loop: Adam over tone-mapped L1, cosine-annealed learning rate,
//! seeded shuffling/augmentation, JSONL logging, and resumable checkpoints.

mod ablation;
mod adam;
mod checkpoint;
mod schedule;

pub use ablation::{
    parse_matrix,
    block_count_matrix, component_matrix, fusion_matrix, run_ablation, AblationReport,
    AblationVariant,
};
pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use schedule::lr_at;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array4;
use rand::seq::SliceRandom;

use crate::data::{
    build_network_input, extract_patches, list_scene_dirs, load_scene_with, LoadOptions,
    PatchSpec, SceneSample,
};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{Model, ModelConfig};
use crate::tonemap::TonemapParams;
use crate::util::{batch_of_one, hwc_to_chw, rng_for};

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr_initial: f64,
    pub lr_final: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    /// Checkpoint interval in epochs; the final epoch is always saved.
    pub checkpoint_every: usize,
    /// Optional global-norm gradient clip.
    pub grad_clip: Option<f64>,
    pub patch: PatchSpec,
    pub augment: bool,
    pub tonemap: TonemapParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_initial: 1e-4,
            lr_final: 1e-6,
            epochs: 210,
            batch_size: 8,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
            checkpoint_every: 50,
            grad_clip: None,
            patch: PatchSpec::default(),
            augment: true,
            tonemap: TonemapParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_final < self.lr_initial) {
            return Err(Error::Config(format!(
                "lr_final {} must be below lr_initial {}",
                self.lr_final, self.lr_initial
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        self.patch.validate()
    }
}

/// Mutable training state carried across epochs and checkpoints.
#[derive(Debug, Clone)]
pub struct TrainState {
    /// Next epoch to run.
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: usize,
    pub best_metric: f64,
    pub seed: u64,
    pub adam: Adam,
}

impl TrainState {
    pub fn fresh(model: &Model, config: &TrainConfig) -> Self {
        Self {
            epoch: 0,
            step: 0,
            best_metric: f64::INFINITY,
            seed: config.seed,
            adam: Adam::new(
                &model.params,
                config.adam_beta1,
                config.adam_beta2,
                config.adam_epsilon,
            ),
        }
    }
}

/// One training batch in network layout.
pub struct Batch {
    pub inputs: [Array4<f64>; 3],
    pub target: Array4<f64>,
}

/// Stacks patch samples (all with ground truth, identical sizes) into a batch.
pub fn make_batch(patches: &[&SceneSample]) -> Result<Batch> {
    if patches.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let (h, w) = patches[0].bracket.dims();
    let b = patches.len();
    let mut inputs = [
        Array4::zeros((b, 6, h, w)),
        Array4::zeros((b, 6, h, w)),
        Array4::zeros((b, 6, h, w)),
    ];
    let mut target = Array4::zeros((b, 3, h, w));
    for (bi, patch) in patches.iter().enumerate() {
        if patch.bracket.dims() != (h, w) {
            return Err(Error::InvalidArgument(
                "batch patches must share dimensions".into(),
            ));
        }
        let net = build_network_input(&patch.bracket)?;
        for (slot, plane) in inputs.iter_mut().zip(net.channels.iter()) {
            slot.index_axis_mut(ndarray::Axis(0), bi).assign(plane);
        }
        let gt = patch.ground_truth.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!("patch {} has no ground truth", patch.scene_id))
        })?;
        target
            .index_axis_mut(ndarray::Axis(0), bi)
            .assign(&hwc_to_chw(gt));
    }
    Ok(Batch { inputs, target })
}

/// Forward, backward, and one Adam update. Returns the batch loss, which the
/// caller must check for finiteness.
pub fn train_step(
    model: &mut Model,
    adam: &mut Adam,
    batch: &Batch,
    lr: f64,
    tonemap: TonemapParams,
    grad_clip: Option<f64>,
) -> Result<f64> {
    let mut g = Graph::new();
    let bound = model.params.bind(&mut g);
    let ids = [
        g.input(batch.inputs[0].clone()),
        g.input(batch.inputs[1].clone()),
        g.input(batch.inputs[2].clone()),
    ];
    let pred = model.forward(&mut g, &bound, ids)?;
    let target = g.input(batch.target.clone());
    let loss_node = g.tonemapped_l1(pred, target, tonemap.mu);
    let loss = g.scalar(loss_node);
    if !loss.is_finite() {
        return Ok(loss);
    }

    let mut grads = g.backward(loss_node);
    let mut grad_vec: Vec<Array4<f64>> = model
        .params
        .ids()
        .map(|id| {
            grads
                .take(bound.node(id))
                .unwrap_or_else(|| Array4::zeros(model.params.value(id).dim()))
        })
        .collect();

    if let Some(max_norm) = grad_clip {
        let norm = grad_vec
            .iter()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        if norm > max_norm {
            let scale = max_norm / norm;
            for g in &mut grad_vec {
                g.mapv_inplace(|v| v * scale);
            }
        }
    }

    adam.step(&mut model.params, &grad_vec, lr);
    Ok(loss)
}

/// Result of a training run.
#[derive(Debug)]
pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub log_path: PathBuf,
    /// Mean loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
}

/// Loads all ground-truth scenes under `root`.
pub fn load_training_scenes(root: &Path, load: LoadOptions) -> Result<Vec<SceneSample>> {
    let dirs = list_scene_dirs(root)?;
    let mut scenes = Vec::new();
    for dir in dirs {
        let sample = load_scene_with(&dir, load)?;
        if sample.ground_truth.is_some() {
            scenes.push(sample);
        }
    }
    if scenes.is_empty() {
        return Err(Error::Config(format!(
            "no training scene with ground truth under {}",
            root.display()
        )));
    }
    Ok(scenes)
}

/// Trains a fresh model on the scenes under `data_root`.
pub fn train(
    data_root: &Path,
    model_config: ModelConfig,
    config: &TrainConfig,
    out_dir: &Path,
    load: LoadOptions,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut model = Model::new(model_config, config.seed)?;
    let mut state = TrainState::fresh(&model, config);
    let scenes = load_training_scenes(data_root, load)?;
    run_training(&mut model, &mut state, &scenes, config, out_dir)
}

/// Continues a checkpointed run (bit-compatible in step count and schedule
/// position with an uninterrupted run).
pub fn resume(
    checkpoint_path: &Path,
    data_root: &Path,
    config: &TrainConfig,
    out_dir: &Path,
    load: LoadOptions,
) -> Result<TrainOutcome> {
    config.validate()?;
    let ckpt = load_checkpoint(checkpoint_path)?;
    let mut model = ckpt.model;
    let mut state = ckpt.train_state.ok_or_else(|| {
        Error::Config(format!(
            "{} holds no training state; cannot resume",
            checkpoint_path.display()
        ))
    })?;
    let scenes = load_training_scenes(data_root, load)?;
    run_training(&mut model, &mut state, &scenes, config, out_dir)
}

fn run_training(
    model: &mut Model,
    state: &mut TrainState,
    scenes: &[SceneSample],
    config: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    std::fs::create_dir_all(out_dir)?;
    let log_path = out_dir.join("train_log.jsonl");
    let mut log = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)?;

    let mut epoch_losses = Vec::new();
    let mut step_losses = Vec::new();
    let started = Instant::now();

    while state.epoch < config.epochs {
        let epoch = state.epoch;
        let lr = lr_at(epoch, config)?;
        let epoch_seed = rng_seed_for_epoch(state.seed, epoch);

        // fresh augmentation draw per epoch over the fixed patch grid
        let mut patches = Vec::new();
        for scene in scenes {
            patches.extend(extract_patches(
                scene,
                &config.patch,
                config.augment,
                epoch_seed,
            )?);
        }
        let mut order: Vec<usize> = (0..patches.len()).collect();
        order.shuffle(&mut rng_for(state.seed, &[b"shuffle", &(epoch as u64).to_le_bytes()]));

        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let members: Vec<&SceneSample> = chunk.iter().map(|&i| &patches[i]).collect();
            let batch = make_batch(&members)?;
            let loss = train_step(
                model,
                &mut state.adam,
                &batch,
                lr,
                config.tonemap,
                config.grad_clip,
            )?;
            if !loss.is_finite() {
                let dump = dump_diagnostics(out_dir, state, lr, &step_losses);
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step: state.step,
                    dump: dump.ok(),
                });
            }
            state.step += 1;
            step_losses.push(loss);
            epoch_loss += loss;
            batches += 1;
        }
        let mean_loss = epoch_loss / batches.max(1) as f64;
        epoch_losses.push(mean_loss);
        state.best_metric = state.best_metric.min(mean_loss);
        state.epoch += 1;

        writeln!(
            log,
            "{{\"epoch\": {epoch}, \"lr\": {lr:e}, \"train_loss\": {mean_loss}, \"wall_time\": {:.3}}}",
            started.elapsed().as_secs_f64()
        )?;

        let is_last = state.epoch == config.epochs;
        if is_last || (config.checkpoint_every > 0 && state.epoch % config.checkpoint_every == 0) {
            let path = out_dir.join(format!("ckpt_epoch{}.bin", state.epoch));
            save_checkpoint(&path, model, Some(state))?;
        }
    }

    let final_checkpoint = out_dir.join(format!("ckpt_epoch{}.bin", config.epochs));
    if !final_checkpoint.is_file() {
        save_checkpoint(&final_checkpoint, model, Some(state))?;
    }
    Ok(TrainOutcome {
        final_checkpoint,
        log_path,
        epoch_losses,
        step_losses,
    })
}

fn rng_seed_for_epoch(seed: u64, epoch: usize) -> u64 {
    crate::util::fnv1a64(&[&seed.to_le_bytes()[..], &(epoch as u64).to_le_bytes()[..]].concat())
}

fn dump_diagnostics(
    out_dir: &Path,
    state: &TrainState,
    lr: f64,
    step_losses: &[f64],
) -> Result<PathBuf> {
    let path = out_dir.join("diagnostic.json");
    let tail: Vec<String> = step_losses
        .iter()
        .rev()
        .take(20)
        .rev()
        .map(|l| l.to_string())
        .collect();
    let body = format!(
        "{{\"epoch\": {}, \"step\": {}, \"lr\": {lr:e}, \"recent_losses\": [{}]}}\n",
        state.epoch,
        state.step,
        tail.join(", ")
    );
    std::fs::write(&path, body)?;
    Ok(path)
}

/// Batch of one: helper for single-sample experiments.
pub fn single_sample_batch(sample: &SceneSample) -> Result<Batch> {
    let net = build_network_input(&sample.bracket)?;
    let gt = sample.ground_truth.as_ref().ok_or_else(|| {
        Error::InvalidArgument("single-sample batch needs ground truth".into())
    })?;
    Ok(Batch {
        inputs: [
            batch_of_one(&net.channels[0]),
            batch_of_one(&net.channels[1]),
            batch_of_one(&net.channels[2]),
        ],
        target: batch_of_one(&hwc_to_chw(gt)),
    })
}

#[cfg(test)]
mod tests;
