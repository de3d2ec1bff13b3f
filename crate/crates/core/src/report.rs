//! JSON report files: a canonical payload wrapped in an envelope.
//!
//! The payload is a pure function of the inputs and flags. The envelope
//! adds the tool version, a generation timestamp and the SHA-256 of the
//! canonical payload text, so two runs can be compared by digest even
//! though their files differ in the timestamp.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TOOL: &str = "oodkit";

#[derive(Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub generated_unix_secs: u64,
    pub payload_sha256: String,
    pub payload: T,
}

/// Canonical text of a payload: compact JSON in struct field order.
pub fn canonical_json<T: Serialize>(payload: &T) -> Result<String> {
    serde_json::to_string(payload)
        .map_err(|e| Error::InvalidArgument(format!("payload is not serializable: {e}")))
}

pub fn payload_digest<T: Serialize>(payload: &T) -> Result<String> {
    let text = canonical_json(payload)?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

pub fn envelope<T: Serialize>(command: &str, payload: T) -> Result<Envelope<T>> {
    let generated_unix_secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Ok(Envelope {
        tool: TOOL.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        generated_unix_secs,
        payload_sha256: payload_digest(&payload)?,
        payload,
    })
}

pub fn write_report<T: Serialize>(path: impl AsRef<Path>, command: &str, payload: T) -> Result<()> {
    let path = path.as_ref();
    let env = envelope(command, payload)?;
    let mut text = serde_json::to_string_pretty(&env).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_report<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Envelope<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}
