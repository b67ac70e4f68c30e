//! Versioned JSON container for a trained pool.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ModelPool, TrainedModel};
use crate::{Error, Real, Result};

pub const POOL_FORMAT: &str = "stlf-dms-pool";
pub const POOL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
struct Header<'a, T> {
    format: &'a str,
    version: u32,
    models: &'a [TrainedModel<T>],
}

#[derive(Deserialize)]
struct Owned<T> {
    format: String,
    version: u32,
    models: Vec<TrainedModel<T>>,
}

/// Writes `{"format", "version", "models": [...]}`. Floats round-trip exactly.
pub fn write_pool<T: Real + Serialize, W: Write>(pool: &ModelPool<T>, w: W) -> Result<()> {
    let doc = Header {
        format: POOL_FORMAT,
        version: POOL_FORMAT_VERSION,
        models: &pool.models,
    };
    serde_json::to_writer_pretty(w, &doc)?;
    Ok(())
}

pub fn read_pool<T: Real + for<'de> Deserialize<'de>, R: Read>(r: R) -> Result<ModelPool<T>> {
    let doc: Owned<T> = serde_json::from_reader(r)?;
    if doc.format != POOL_FORMAT {
        return Err(Error::Artifact(format!("unknown format `{}`", doc.format)));
    }
    if doc.version != POOL_FORMAT_VERSION {
        return Err(Error::Artifact(format!(
            "unsupported version {} (expected {POOL_FORMAT_VERSION})",
            doc.version
        )));
    }
    Ok(ModelPool { models: doc.models })
}
