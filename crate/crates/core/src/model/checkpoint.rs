//! JSON checkpoints of trained networks.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ModelError, MtShlNetwork};

pub const CHECKPOINT_FORMAT: &str = "xdata-mtshl/1";

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    network: MtShlNetwork,
}

pub fn save_checkpoint(net: &MtShlNetwork, writer: impl Write) -> Result<(), ModelError> {
    let ck = Checkpoint { format: CHECKPOINT_FORMAT.to_string(), network: net.clone() };
    serde_json::to_writer(writer, &ck).map_err(|e| ModelError::Checkpoint(e.to_string()))
}

pub fn load_checkpoint(reader: impl Read) -> Result<MtShlNetwork, ModelError> {
    let ck: Checkpoint = serde_json::from_reader(reader).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    if ck.format != CHECKPOINT_FORMAT {
        return Err(ModelError::Checkpoint(format!("unsupported checkpoint format '{}'", ck.format)));
    }
    Ok(ck.network)
}
