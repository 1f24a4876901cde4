//! Checkpoint file, all integers little-endian:
//!
//! ```text
//! magic       8 bytes "HOODCK1\0"
//! version     u16     1
//! flags       u16     bit 0: optimizer state present
//! latent_dim  u32
//! input_hw    u32
//! [step u64, lr f64, beta1 f64, beta2 f64, eps f64]   if bit 0
//! n_tensors   u32
//! directory   n_tensors x (name_len u16, name utf-8, ndims u32,
//!                          dims u32 x ndims, offset u64 in floats)
//! payload     f32 values
//! crc32       u32 of the payload bytes
//! ```
//!
//! Model tensors are named `<network>.<layer>.<tensor>`; optimizer moments
//! are `adamax.m.<param>` and `adamax.u.<param>`.

use std::collections::HashMap;
use std::path::Path;

use super::bytes::{dim_u32, put_f32s, write_atomic, Cursor};
use crate::model::{HoodModel, ModelConfig};
use crate::nn::{AdamaxConfig, AdamaxState, Real, Tensor};
use crate::{HoodError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HOODCK1\0";
pub const CHECKPOINT_VERSION: u16 = 1;
const FLAG_OPTIMIZER: u16 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint<T> {
    pub model: HoodModel<T>,
    pub optimizer: Option<AdamaxState<T>>,
    /// CRC32 of the payload, as a short hex id.
    pub id: String,
}

impl<T: Real> Checkpoint<T> {
    pub fn require_optimizer(&self) -> Result<&AdamaxState<T>> {
        self.optimizer.as_ref().ok_or(HoodError::MissingOptimizerState)
    }
}

fn param_names<T: Real>(model: &HoodModel<T>) -> Vec<String> {
    model
        .networks()
        .iter()
        .flat_map(|(net, seq)| {
            seq.layers
                .iter()
                .enumerate()
                .flat_map(move |(i, l)| l.params().into_iter().map(move |(n, _)| format!("{net}.{i}.{n}")))
        })
        .collect()
}

fn model_id(payload: &[u8]) -> String {
    format!("ck-{:08x}", crc32fast::hash(payload))
}

/// Serializes `model` and, if given, the optimizer state. Returns the
/// checkpoint id.
pub fn write_checkpoint<T: Real>(
    path: &Path,
    model: &HoodModel<T>,
    optimizer: Option<&AdamaxState<T>>,
) -> Result<String> {
    let mut tensors: Vec<(String, &Tensor<T>)> = model.named_state();
    let names = param_names(model);
    if let Some(opt) = optimizer {
        if opt.m.len() != names.len() {
            return Err(HoodError::Shape(format!(
                "optimizer tracks {} tensors, model has {} parameters",
                opt.m.len(),
                names.len()
            )));
        }
        for (n, m) in names.iter().zip(&opt.m) {
            tensors.push((format!("adamax.m.{n}"), m));
        }
        for (n, u) in names.iter().zip(&opt.u) {
            tensors.push((format!("adamax.u.{n}"), u));
        }
    }

    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(if optimizer.is_some() { FLAG_OPTIMIZER } else { 0 }).to_le_bytes());
    out.extend_from_slice(&dim_u32(model.config.latent_dim, "latent_dim")?.to_le_bytes());
    out.extend_from_slice(&dim_u32(model.config.input_hw, "input_hw")?.to_le_bytes());
    if let Some(opt) = optimizer {
        out.extend_from_slice(&opt.t.to_le_bytes());
        for v in [opt.config.lr, opt.config.beta1, opt.config.beta2, opt.config.eps] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&dim_u32(tensors.len(), "tensor count")?.to_le_bytes());
    let mut offset = 0u64;
    for (name, t) in &tensors {
        let len =
            u16::try_from(name.len()).map_err(|_| HoodError::InvalidConfig(format!("tensor name too long: {name}")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&dim_u32(t.shape().len(), "rank")?.to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&dim_u32(d, "dimension")?.to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        offset += t.len() as u64;
    }
    let start = out.len();
    for (_, t) in &tensors {
        let values: Vec<f32> = t.data().iter().map(|v| v.to_f64_lossy() as f32).collect();
        put_f32s(&mut out, &values);
    }
    let crc = crc32fast::hash(&out[start..]);
    let id = model_id(&out[start..]);
    out.extend_from_slice(&crc.to_le_bytes());
    write_atomic(path, &out)?;
    Ok(id)
}

struct Entry {
    shape: Vec<usize>,
    offset: usize,
}

pub fn read_checkpoint<T: Real>(path: &Path) -> Result<Checkpoint<T>> {
    let buf = std::fs::read(path)?;
    let mut c = Cursor::new(&buf, path);
    c.magic(CHECKPOINT_MAGIC)?;
    c.version(CHECKPOINT_VERSION)?;
    let flags = c.u16("flags")?;
    if flags & !FLAG_OPTIMIZER != 0 {
        return Err(c.schema(format!("unknown flag bits {flags:#06x}")));
    }
    let config = ModelConfig { latent_dim: c.u32("latent_dim")? as usize, input_hw: c.u32("input_hw")? as usize };
    config.validate().map_err(|e| c.schema(e.to_string()))?;
    let opt_header = if flags & FLAG_OPTIMIZER != 0 {
        let t = c.u64("optimizer step")?;
        let cfg = AdamaxConfig { lr: c.f64("lr")?, beta1: c.f64("beta1")?, beta2: c.f64("beta2")?, eps: c.f64("eps")? };
        Some((t, cfg))
    } else {
        None
    };

    let n = c.u32("tensor count")? as usize;
    let mut dir: HashMap<String, Entry> = HashMap::new();
    for _ in 0..n {
        let len = c.u16("name length")? as usize;
        let name = std::str::from_utf8(c.take(len, "tensor name")?)
            .map_err(|_| c.schema("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = c.u32("rank")? as usize;
        if rank > 8 {
            return Err(c.schema(format!("tensor {name} has implausible rank {rank}")));
        }
        let shape = (0..rank).map(|_| Ok(c.u32("dimension")? as usize)).collect::<Result<Vec<_>>>()?;
        let offset = c.u64("offset")? as usize;
        if dir.insert(name.clone(), Entry { shape, offset }).is_some() {
            return Err(c.schema(format!("tensor {name} appears twice")));
        }
    }
    let total = dir.values().map(|e| e.shape.iter().product::<usize>()).sum::<usize>();
    let (payload, raw) = c.f32s(total, "payload")?;
    c.checksum(raw)?;

    let mut take = |name: &str, want: &[usize]| -> Result<Vec<f32>> {
        let e = dir.remove(name).ok_or_else(|| c.schema(format!("tensor {name} is missing")))?;
        if e.shape != want {
            return Err(c.schema(format!("tensor {name} has shape {:?}, model expects {want:?}", e.shape)));
        }
        let len: usize = want.iter().product();
        payload
            .get(e.offset..e.offset + len)
            .map(<[f32]>::to_vec)
            .ok_or_else(|| c.schema(format!("tensor {name} lies outside the payload")))
    };

    let mut model = HoodModel::<T>::new(config, 0)?;
    for (name, t) in model.named_state_mut() {
        let values = take(&name, t.shape())?;
        t.data_mut().iter_mut().zip(values).for_each(|(d, v)| *d = T::from_f64_lossy(f64::from(v)));
    }
    let optimizer = match opt_header {
        Some((step, cfg)) => {
            let names = param_names(&model);
            let shapes = model.param_shapes();
            let mut load = |prefix: &str| -> Result<Vec<Tensor<T>>> {
                names
                    .iter()
                    .zip(&shapes)
                    .map(|(n, s)| {
                        let v = take(&format!("adamax.{prefix}.{n}"), s)?;
                        Tensor::from_vec(s, v.into_iter().map(|x| T::from_f64_lossy(f64::from(x))).collect())
                    })
                    .collect()
            };
            let m = load("m")?;
            let u = load("u")?;
            Some(AdamaxState { config: cfg, m, u, t: step })
        }
        None => None,
    };
    if let Some(extra) = dir.keys().min() {
        return Err(HoodError::Schema { path: path.to_path_buf(), detail: format!("unknown tensor {extra}") });
    }
    Ok(Checkpoint { model, optimizer, id: model_id(raw) })
}
