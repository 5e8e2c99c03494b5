//! Versioned binary checkpoints: model configuration, named parameter
//! tensors, and (optionally) the optimizer/trainer state needed to resume.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array4;

use crate::config::{model_config_to_kv, parse_model_config};
use crate::error::{Error, Result};
use crate::model::Model;

use super::{Adam, TrainState};

const MAGIC: &[u8; 4] = b"PSFN";
const VERSION: u32 = 1;

/// A loaded checkpoint.
pub struct Checkpoint {
    pub model: Model,
    pub train_state: Option<TrainState>,
}

pub fn save_checkpoint(path: &Path, model: &Model, state: Option<&TrainState>) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;

    let config = model_config_to_kv(&model.config);
    w.write_all(&(config.len() as u32).to_le_bytes())?;
    w.write_all(config.as_bytes())?;

    w.write_all(&(model.params.len() as u32).to_le_bytes())?;
    for (name, value) in model.params.iter() {
        write_tensor(&mut w, name, value)?;
    }

    match state {
        None => w.write_all(&[0u8])?,
        Some(s) => {
            w.write_all(&[1u8])?;
            w.write_all(&(s.epoch as u64).to_le_bytes())?;
            w.write_all(&(s.step as u64).to_le_bytes())?;
            w.write_all(&s.best_metric.to_le_bytes())?;
            w.write_all(&s.seed.to_le_bytes())?;
            w.write_all(&s.adam.beta1.to_le_bytes())?;
            w.write_all(&s.adam.beta2.to_le_bytes())?;
            w.write_all(&s.adam.epsilon.to_le_bytes())?;
            w.write_all(&s.adam.t.to_le_bytes())?;
            for t in s.adam.m.iter().chain(s.adam.v.iter()) {
                write_raw(&mut w, t)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|_| Error::NotFound(path.to_path_buf()))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Config(format!(
            "{} is not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Config(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }

    let config_len = read_u32(&mut r)? as usize;
    let mut config_bytes = vec![0u8; config_len];
    r.read_exact(&mut config_bytes)?;
    let config_text = String::from_utf8(config_bytes)
        .map_err(|_| Error::Config("checkpoint config block is not UTF-8".into()))?;
    let config = parse_model_config(&config_text)?;

    let mut model = Model::new(config, 0)?;
    let param_count = read_u32(&mut r)? as usize;
    if param_count != model.params.len() {
        return Err(Error::Config(format!(
            "checkpoint has {param_count} tensors, model expects {}",
            model.params.len()
        )));
    }
    let mut filled = vec![false; model.params.len()];
    for _ in 0..param_count {
        let (name, value) = read_tensor(&mut r)?;
        let id = model
            .params
            .ids()
            .find(|&id| model.params.name(id) == name)
            .ok_or_else(|| Error::Config(format!("unexpected tensor {name:?} in checkpoint")))?;
        if model.params.value(id).dim() != value.dim() {
            return Err(Error::Config(format!(
                "tensor {name:?} has shape {:?}, model expects {:?}",
                value.dim(),
                model.params.value(id).dim()
            )));
        }
        if std::mem::replace(&mut filled[id_index(&model, id)], true) {
            return Err(Error::Config(format!("duplicate tensor {name:?}")));
        }
        *model.params.value_mut(id) = value;
    }
    if !filled.iter().all(|&f| f) {
        return Err(Error::Config("checkpoint is missing tensors".into()));
    }

    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let train_state = if flag[0] == 1 {
        let epoch = read_u64(&mut r)? as usize;
        let step = read_u64(&mut r)? as usize;
        let best_metric = read_f64(&mut r)?;
        let seed = read_u64(&mut r)?;
        let beta1 = read_f64(&mut r)?;
        let beta2 = read_f64(&mut r)?;
        let epsilon = read_f64(&mut r)?;
        let t = read_u64(&mut r)?;
        let mut adam = Adam::new(&model.params, beta1, beta2, epsilon);
        adam.t = t;
        for slot in adam.m.iter_mut().chain(adam.v.iter_mut()) {
            read_raw(&mut r, slot)?;
        }
        Some(TrainState {
            epoch,
            step,
            best_metric,
            seed,
            adam,
        })
    } else {
        None
    };

    Ok(Checkpoint { model, train_state })
}

fn id_index(model: &Model, id: crate::nn::ParamId) -> usize {
    model.params.ids().position(|other| other == id).unwrap()
}

fn write_tensor(w: &mut impl Write, name: &str, value: &Array4<f64>) -> Result<()> {
    let name_bytes = name.as_bytes();
    w.write_all(&(name_bytes.len() as u16).to_le_bytes())?;
    w.write_all(name_bytes)?;
    let (a, b, c, d) = value.dim();
    for dim in [a, b, c, d] {
        w.write_all(&(dim as u32).to_le_bytes())?;
    }
    write_raw(w, value)
}

fn write_raw(w: &mut impl Write, value: &Array4<f64>) -> Result<()> {
    for &v in value.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_tensor(r: &mut impl Read) -> Result<(String, Array4<f64>)> {
    let mut len = [0u8; 2];
    r.read_exact(&mut len)?;
    let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
    r.read_exact(&mut name)?;
    let name =
        String::from_utf8(name).map_err(|_| Error::Config("tensor name is not UTF-8".into()))?;
    let mut dims = [0usize; 4];
    for d in &mut dims {
        *d = read_u32(r)? as usize;
    }
    let mut value = Array4::zeros((dims[0], dims[1], dims[2], dims[3]));
    read_raw(r, &mut value)?;
    Ok((name, value))
}

fn read_raw(r: &mut impl Read, value: &mut Array4<f64>) -> Result<()> {
    let mut buf = [0u8; 8];
    for v in value.iter_mut() {
        r.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}
