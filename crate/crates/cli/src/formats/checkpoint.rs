//! Binary training checkpoints.
//!
//! A checkpoint is the complete resumable state of a run: the training
//! configuration it was started with, the completed-epoch counter, the last
//! recorded loss, and for every convolution layer its weights, biases and
//! optimizer momentum. Loading one reconstructs a [`TrainState`] that
//! continues bit-identically to a run that was never interrupted.
//!
//! Layout (all little-endian) — magic `KDCK`, version 1, config hash,
//! training config, completed epoch, optional last loss, then the layer
//! stack with per-layer parameters and momentum.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use keydet_core::losses::{LossConfig, LossVariant};
use keydet_core::nn::{ConvGrad, ConvLayer, Layer, Network, OptimizerConfig, SgdMomentum};
use keydet_core::tensor::Tensor;
use keydet_core::trainer::{TrainConfig, TrainState};
use sha2::{Digest, Sha256};

use super::{
    check_magic, check_version, invalid, read_count, read_f32_vec, read_f64, read_hash,
    read_u64, write_f32_slice, write_f64, write_hash, write_u32, write_u64,
};
use crate::error::{CliError, Result};

const MAGIC: &[u8; 4] = b"KDCK";
const VERSION: u32 = 1;
/// The stack is five convolutions and two pools; anything near this limit
/// is a corrupt file, not a bigger model.
const MAX_LAYERS: u64 = 64;
const MAX_CHANNELS: u64 = 1 << 16;
const MAX_KERNEL: u64 = 1 << 8;

fn write_train_config(w: &mut impl Write, c: &TrainConfig) -> std::io::Result<()> {
    write_u64(w, c.epochs as u64)?;
    write_u64(w, c.batch_size as u64)?;
    write_u64(w, c.chunk_size as u64)?;
    write_u64(w, c.seed)?;
    write_f64(w, c.grad_clip_norm)?;
    write_u64(w, c.checkpoint_interval as u64)?;
    let tag = LossVariant::ALL
        .iter()
        .position(|v| *v == c.loss.variant)
        .expect("variant is one of ALL") as u64;
    write_u64(w, tag)?;
    write_f64(w, c.loss.alpha)?;
    write_f64(w, c.loss.beta)?;
    write_f64(w, c.loss.identity_weight)?;
    write_u64(w, c.loss.affine_enabled_epoch as u64)?;
    write_f64(w, c.opt.lr0)?;
    write_f64(w, c.opt.momentum)?;
    write_f64(w, c.opt.decay)
}

fn read_train_config(r: &mut impl Read) -> std::io::Result<TrainConfig> {
    let epochs = read_u64(r)? as usize;
    let batch_size = read_u64(r)? as usize;
    let chunk_size = read_u64(r)? as usize;
    let seed = read_u64(r)?;
    let grad_clip_norm = read_f64(r)?;
    let checkpoint_interval = read_u64(r)? as usize;
    let tag = read_u64(r)?;
    let variant = *LossVariant::ALL
        .get(tag as usize)
        .ok_or_else(|| invalid(format!("unknown loss variant tag {tag}")))?;
    let loss = LossConfig {
        variant,
        alpha: read_f64(r)?,
        beta: read_f64(r)?,
        identity_weight: read_f64(r)?,
        affine_enabled_epoch: read_u64(r)? as usize,
    };
    let opt = OptimizerConfig {
        lr0: read_f64(r)?,
        momentum: read_f64(r)?,
        decay: read_f64(r)?,
    };
    Ok(TrainConfig {
        epochs,
        batch_size,
        chunk_size,
        loss,
        opt,
        seed,
        grad_clip_norm,
        checkpoint_interval,
    })
}

fn write_state(w: &mut impl Write, state: &TrainState<f32>, config_hash: &str) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    write_u32(w, VERSION)?;
    write_hash(w, config_hash)?;
    write_train_config(w, &state.config)?;
    write_u64(w, state.epoch() as u64)?;
    match state.last_loss {
        Some(loss) => {
            write_u64(w, 1)?;
            write_f64(w, loss)?;
        }
        None => {
            write_u64(w, 0)?;
            write_f64(w, 0.0)?;
        }
    }
    let layers = state.net.layers();
    let velocity = state.opt.velocity();
    write_u64(w, layers.len() as u64)?;
    for (layer, vel) in layers.iter().zip(velocity) {
        match layer {
            Layer::Conv(conv) => {
                write_u64(w, 0)?;
                write_u64(w, conv.in_ch as u64)?;
                write_u64(w, conv.out_ch as u64)?;
                write_u64(w, conv.kernel as u64)?;
                write_u64(w, u64::from(conv.relu))?;
                write_f32_slice(w, conv.weights.data())?;
                write_f32_slice(w, conv.bias.data())?;
                let vel = vel.as_ref().expect("conv layers carry momentum");
                write_f32_slice(w, &vel.dw)?;
                write_f32_slice(w, &vel.db)?;
            }
            Layer::MaxPool2 => write_u64(w, 1)?,
        }
    }
    Ok(())
}

fn read_state(r: &mut impl Read) -> std::io::Result<(TrainState<f32>, String)> {
    check_magic(r, MAGIC, "checkpoint")?;
    check_version(r, VERSION, "checkpoint")?;
    let config_hash = read_hash(r)?;
    let config = read_train_config(r)?;
    let completed_epoch = read_u64(r)? as usize;
    let has_loss = read_u64(r)?;
    let loss_value = read_f64(r)?;
    let last_loss = match has_loss {
        0 => None,
        1 => Some(loss_value),
        other => return Err(invalid(format!("bad last-loss flag {other}"))),
    };

    let layer_count = read_count(r, MAX_LAYERS, "layer")?;
    let mut layers = Vec::with_capacity(layer_count);
    let mut velocities = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        match read_u64(r)? {
            0 => {
                let in_ch = read_count(r, MAX_CHANNELS, "input channel")?;
                let out_ch = read_count(r, MAX_CHANNELS, "output channel")?;
                let kernel = read_count(r, MAX_KERNEL, "kernel size")?;
                let relu = match read_u64(r)? {
                    0 => false,
                    1 => true,
                    other => return Err(invalid(format!("bad relu flag {other}"))),
                };
                let w_len = out_ch * in_ch * kernel * kernel;
                let weights = read_f32_vec(r, w_len)?;
                let bias = read_f32_vec(r, out_ch)?;
                let dw = read_f32_vec(r, w_len)?;
                let db = read_f32_vec(r, out_ch)?;
                let weights = Tensor::from_vec(&[out_ch, in_ch, kernel, kernel], weights)
                    .map_err(|e| invalid(format!("weight shape: {e}")))?;
                let bias = Tensor::from_vec(&[out_ch], bias)
                    .map_err(|e| invalid(format!("bias shape: {e}")))?;
                layers.push(Layer::Conv(ConvLayer {
                    in_ch,
                    out_ch,
                    kernel,
                    relu,
                    weights,
                    bias,
                }));
                velocities.push(Some(ConvGrad { dw, db }));
            }
            1 => {
                layers.push(Layer::MaxPool2);
                velocities.push(None);
            }
            other => return Err(invalid(format!("bad layer tag {other}"))),
        }
    }
    // Reject trailing garbage: a well-formed checkpoint ends exactly here.
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(invalid("trailing bytes after checkpoint payload".to_string()));
    }

    let net = Network::new(layers);
    let mut opt = SgdMomentum::new(config.opt, &net);
    if opt.velocity().len() != velocities.len() {
        return Err(invalid("momentum table does not match layer stack".to_string()));
    }
    for (slot, loaded) in opt.velocity_mut().iter_mut().zip(velocities) {
        match (slot, loaded) {
            (Some(slot), Some(loaded)) => {
                if slot.dw.len() != loaded.dw.len() || slot.db.len() != loaded.db.len() {
                    return Err(invalid("momentum shape does not match layer".to_string()));
                }
                *slot = loaded;
            }
            (None, None) => {}
            _ => return Err(invalid("momentum table does not match layer stack".to_string())),
        }
    }
    opt.set_epoch(completed_epoch);

    Ok((
        TrainState {
            net,
            opt,
            config,
            last_loss,
        },
        config_hash,
    ))
}

/// Writes `state` as a checkpoint file.
pub fn save(path: &Path, state: &TrainState<f32>, config_hash: &str) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_state(&mut w, state, config_hash).map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads a checkpoint back into a resumable state plus the configuration
/// hash it was produced under.
pub fn load(path: &Path) -> Result<(TrainState<f32>, String)> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = BufReader::new(file);
    read_state(&mut r).map_err(|e| CliError::io(path, e))
}

/// SHA-256 of the checkpoint file's bytes, for stamping into keypoint
/// files so detections are traceable to the exact weights.
pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for byte in digest {
        use std::fmt::Write as _;
        write!(hex, "{byte:02x}").expect("writing to a String cannot fail");
    }
    Ok(hex)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn test_hash() -> String {
        "0123456789abcdef".repeat(4)
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("state.kdck");
        let config = TrainConfig {
            seed: 42,
            ..TrainConfig::default()
        };
        let mut state = TrainState::<f32>::new(config).unwrap();
        state.last_loss = Some(12.25);
        // Make the momentum table nontrivial so the round trip covers it.
        for slot in state.opt.velocity_mut().iter_mut().flatten() {
            for (i, v) in slot.dw.iter_mut().enumerate() {
                *v = (i as f32).sin();
            }
        }
        save(&path, &state, &test_hash()).unwrap();
        let (loaded, hash) = load(&path).unwrap();
        assert_eq!(hash, test_hash());
        assert_eq!(loaded.config, state.config);
        assert_eq!(loaded.last_loss, state.last_loss);
        assert_eq!(loaded.epoch(), state.epoch());
        assert_eq!(loaded.net, state.net);
        assert_eq!(loaded.opt.velocity(), state.opt.velocity());
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("state.kdck");
        let state = TrainState::<f32>::new(TrainConfig::default()).unwrap();
        save(&path, &state, &test_hash()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        let err = load(&path).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("state.kdck");
        std::fs::write(&path, b"JUNKJUNKJUNKJUNK").unwrap();
        let err = load(&path).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("checkpoint"));
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("state.kdck");
        let state = TrainState::<f32>::new(TrainConfig::default()).unwrap();
        save(&path, &state, &test_hash()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, &bytes).unwrap();
        assert!(load(&path).is_err());
    }
}
