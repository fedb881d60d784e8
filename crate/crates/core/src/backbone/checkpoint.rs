//! Versioned JSON checkpoints: config plus every parameter tensor with its shape.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TcnState;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "fsnet-tcn";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    state: TcnState,
}

pub fn save_checkpoint(state: &TcnState, path: &Path) -> Result<()> {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        state: state.clone(),
    };
    crate::io::write_atomic(path, serde_json::to_string(&file)?.as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<TcnState> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: CheckpointFile = serde_json::from_str(&text)?;
    if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint {} v{} (expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION})",
            file.format, file.version
        )));
    }
    file.state.config.validate()?;
    if file.state.blocks.len() != file.state.config.num_blocks {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} blocks but its config declares {}",
            file.state.blocks.len(),
            file.state.config.num_blocks
        )));
    }
    Ok(file.state)
}
