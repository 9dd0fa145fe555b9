//! Parameter files.
//!
//! JSON form (`pinn-params`, version 1):
//!
//! ```text
//! { "format": "pinn-params", "version": 1,
//!   "arch": "mlp-tanh", "layer_widths": [2, 64, 1],
//!   "layout": [ { "layer": 0, "fan_in": 2, "fan_out": 64,
//!                 "weights": {"start": 0, "end": 128},
//!                 "biases": {"start": 128, "end": 192} }, ... ],
//!   "values": [ ... ] }
//! ```
//!
//! Binary form, little endian: magic `PINNPRM1`, `u32` arch (0 = mlp-tanh,
//! 1 = fls), `u32` width count, that many `u32` widths, `u64` value count,
//! then the `f64` values in layout order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Arch, FlatParams, LayerLayout, ModelConfig};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"PINNPRM1";
const FORMAT: &str = "pinn-params";

#[derive(Serialize, Deserialize)]
struct ParamsDoc {
    format: String,
    version: u32,
    arch: Arch,
    layer_widths: Vec<usize>,
    layout: Vec<LayerLayout>,
    values: Vec<f64>,
}

pub fn to_json(config: &ModelConfig, params: &FlatParams) -> Result<String> {
    params.check(config)?;
    let doc = ParamsDoc {
        format: FORMAT.into(),
        version: 1,
        arch: config.arch,
        layer_widths: config.layer_widths.clone(),
        layout: params.layout.clone(),
        values: params.values.clone(),
    };
    Ok(serde_json::to_string(&doc)?)
}

/// Parses a JSON parameter document. The model config is rebuilt from the
/// header; `init_seed` is not stored and comes back as 0.
pub fn from_json(text: &str) -> Result<(ModelConfig, FlatParams)> {
    let doc: ParamsDoc = serde_json::from_str(text)?;
    if doc.format != FORMAT || doc.version != 1 {
        return Err(Error::Format {
            what: "parameter file",
            detail: format!("unsupported format {} v{}", doc.format, doc.version),
        });
    }
    let config = ModelConfig::new(doc.arch, doc.layer_widths, 0)?;
    if doc.layout != config.layout() {
        return Err(Error::Format {
            what: "parameter file",
            detail: "layout header does not match layer widths".into(),
        });
    }
    let params = FlatParams::from_values(&config, doc.values)?;
    Ok((config, params))
}

pub fn to_bytes(config: &ModelConfig, params: &FlatParams) -> Result<Vec<u8>> {
    params.check(config)?;
    let mut out = Vec::with_capacity(32 + 8 * params.len());
    out.extend_from_slice(MAGIC);
    let arch: u32 = match config.arch {
        Arch::MlpTanh => 0,
        Arch::Fls => 1,
    };
    out.extend_from_slice(&arch.to_le_bytes());
    out.extend_from_slice(&(config.layer_widths.len() as u32).to_le_bytes());
    for &w in &config.layer_widths {
        out.extend_from_slice(&(w as u32).to_le_bytes());
    }
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in &params.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<(ModelConfig, FlatParams)> {
    let bad = |detail: &str| Error::Format {
        what: "binary parameter file",
        detail: detail.into(),
    };
    let mut cur = bytes;
    let mut take = |n: usize| -> Result<&[u8]> {
        if cur.len() < n {
            return Err(bad("truncated"));
        }
        let (head, rest) = cur.split_at(n);
        cur = rest;
        Ok(head)
    };
    if take(8)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
    let arch = match u32_at(take(4)?) {
        0 => Arch::MlpTanh,
        1 => Arch::Fls,
        other => return Err(bad(&format!("unknown arch tag {other}"))),
    };
    let n_widths = u32_at(take(4)?) as usize;
    let mut widths = Vec::with_capacity(n_widths);
    for _ in 0..n_widths {
        widths.push(u32_at(take(4)?) as usize);
    }
    let count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        values.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
    }
    if !cur.is_empty() {
        return Err(bad("trailing bytes"));
    }
    let config = ModelConfig::new(arch, widths, 0)?;
    let params = FlatParams::from_values(&config, values)?;
    Ok((config, params))
}

pub fn save_json(path: &Path, config: &ModelConfig, params: &FlatParams) -> Result<()> {
    std::fs::write(path, to_json(config, params)?).map_err(|e| Error::io(path, e))
}

pub fn load_json(path: &Path) -> Result<(ModelConfig, FlatParams)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}
