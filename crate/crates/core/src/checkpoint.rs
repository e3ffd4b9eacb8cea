//! Versioned JSON checkpoints.
//!
//! ```text
//! {
//!   "format": "cnl-checkpoint",
//!   "version": 1,
//!   "arch": { "input_dim": 2, "hidden": [16], "classes": 3, "activation": "tanh" },
//!   "manifest": [ { "name": "layer0.weight", "offset": 0, "shape": [2, 16] }, ... ],
//!   "values": [ ... ]
//! }
//! ```
//!
//! Values are written in shortest round-trip decimal form, so a save/load
//! cycle reproduces every bit. `arch` may be `null` for vectors that do not
//! belong to an MLP.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelArch;
use crate::params::{Manifest, ParamSlot, ParamVector};

pub const CHECKPOINT_FORMAT: &str = "cnl-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    arch: Option<ModelArch>,
    manifest: Vec<ParamSlot>,
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: Option<ModelArch>,
    pub params: ParamVector,
}

pub fn to_json(params: &ParamVector, arch: Option<&ModelArch>) -> String {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        arch: arch.cloned(),
        manifest: params.manifest().slots().to_vec(),
        values: params.as_slice().to_vec(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("checkpoint serializes");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> Result<Checkpoint> {
    let file: CheckpointFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(Error::Format(format!("not a checkpoint (format tag {:?})", file.format)));
    }
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {}", file.version)));
    }
    let params = ParamVector::new(file.values, Manifest::from_slots(file.manifest)?)?;
    if let Some(arch) = &file.arch {
        arch.check_params(&params)?;
    }
    Ok(Checkpoint { arch: file.arch, params })
}

pub fn save(path: &Path, params: &ParamVector, arch: Option<&ModelArch>) -> Result<()> {
    fs::write(path, to_json(params, arch))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    from_json(&fs::read_to_string(path)?)
}
