//! Flat binary container for [`ToyMLP`] parameters with a JSON sidecar.
//!
//! Layout, all little-endian: `b"BFNW"`, `u32` version, `u32` layer count,
//! one `u32` per layer size, then for each layer its `(out, in)` weights
//! row-major followed by its biases as `f64`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::mlp::{Modality, OptimizerSpec, ToyMLP, TIME_FREQUENCIES};
use crate::error::{BfnError, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"BFNW";
pub const WEIGHTS_VERSION: u32 = 1;

/// Hyperparameters stored next to a weights file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsSidecar {
    pub format_version: u32,
    pub modality: Modality,
    pub hidden: Vec<usize>,
    pub time_frequencies: usize,
    pub sigma1: Option<f64>,
    pub beta1: Option<f64>,
    pub optimizer: Option<OptimizerSpec>,
    pub epochs: usize,
    pub seed: u64,
}

impl WeightsSidecar {
    pub fn for_model(model: &ToyMLP) -> Self {
        Self {
            format_version: WEIGHTS_VERSION,
            modality: model.modality(),
            hidden: model.hidden().to_vec(),
            time_frequencies: TIME_FREQUENCIES,
            sigma1: None,
            beta1: None,
            optimizer: None,
            epochs: 0,
            seed: 0,
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn encode_weights(model: &ToyMLP) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + 4 * model.sizes().len() + 8 * model.n_params());
    buf.extend_from_slice(WEIGHTS_MAGIC);
    buf.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    buf.extend_from_slice(&(model.sizes().len() as u32).to_le_bytes());
    for &s in model.sizes() {
        buf.extend_from_slice(&(s as u32).to_le_bytes());
    }
    for p in model.params() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    buf
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| BfnError::Format(format!("truncated weights file at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_weights(buf: &[u8], modality: Modality) -> Result<ToyMLP> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != WEIGHTS_MAGIC {
        return Err(BfnError::Format("bad magic bytes".into()));
    }
    let version = r.u32()?;
    if version != WEIGHTS_VERSION {
        return Err(BfnError::Format(format!("unsupported weights version {version}")));
    }
    let n = r.u32()? as usize;
    if !(2..=64).contains(&n) {
        return Err(BfnError::Format(format!("implausible layer count {n}")));
    }
    let sizes = (0..n).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let mut weights = Vec::with_capacity(n - 1);
    let mut biases = Vec::with_capacity(n - 1);
    for pair in sizes.windows(2) {
        let w = (0..pair[0] * pair[1]).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let b = (0..pair[1]).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        weights.push(w);
        biases.push(b);
    }
    if r.pos != buf.len() {
        return Err(BfnError::Format(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    ToyMLP::from_parts(modality, sizes, weights, biases)
}

/// Writes `path` and `path.json`.
pub fn save_weights(model: &ToyMLP, sidecar: &WeightsSidecar, path: &Path) -> Result<()> {
    if sidecar.modality != model.modality() {
        return Err(BfnError::Argument("sidecar modality differs from the model".into()));
    }
    fs::write(path, encode_weights(model))?;
    let json = serde_json::to_string_pretty(sidecar).map_err(|e| BfnError::Format(e.to_string()))?;
    fs::write(sidecar_path(path), json + "\n")?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<(ToyMLP, WeightsSidecar)> {
    let json = fs::read_to_string(sidecar_path(path))?;
    let sidecar: WeightsSidecar = serde_json::from_str(&json).map_err(|e| BfnError::Format(e.to_string()))?;
    if sidecar.time_frequencies != TIME_FREQUENCIES {
        return Err(BfnError::Format(format!(
            "model uses {} time frequencies, this build uses {TIME_FREQUENCIES}",
            sidecar.time_frequencies
        )));
    }
    let model = decode_weights(&fs::read(path)?, sidecar.modality)?;
    if model.hidden() != sidecar.hidden.as_slice() {
        return Err(BfnError::Format("sidecar hidden sizes disagree with the weights header".into()));
    }
    Ok((model, sidecar))
}
