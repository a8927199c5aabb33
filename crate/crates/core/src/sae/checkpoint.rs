use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainedSae;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "saetbl-sae";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<M> {
    format: String,
    version: u32,
    model: M,
}

pub fn checkpoint_to_json(model: &TrainedSae) -> Result<String> {
    let env = Envelope {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        model,
    };
    Ok(serde_json::to_string(&env)?)
}

pub fn checkpoint_from_json(text: &str) -> Result<TrainedSae> {
    let env: Envelope<TrainedSae> = serde_json::from_str(text)?;
    if env.format != CHECKPOINT_FORMAT || env.version != CHECKPOINT_VERSION {
        return Err(Error::Serde(format!(
            "unsupported checkpoint {} v{}",
            env.format, env.version
        )));
    }
    let m = env.model;
    m.architecture.validate()?;
    m.params.check_shapes(&m.architecture)?;
    if m.feature_names.len() != m.architecture.input_dim
        || m.standardizer.mean.len() != m.architecture.input_dim
        || m.standardizer.std.len() != m.architecture.input_dim
    {
        return Err(Error::Shape("checkpoint feature metadata does not match the architecture".into()));
    }
    Ok(m)
}

pub fn save_checkpoint(model: &TrainedSae, path: &Path) -> Result<()> {
    crate::market_data::write_text(path, &checkpoint_to_json(model)?)
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedSae> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_json(&text)
}
