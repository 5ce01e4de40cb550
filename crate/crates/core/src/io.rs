//! Flat little-endian f64 arrays with SHA-256 checksums, plus JSON manifests.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `values` as little-endian f64 and returns the checksum of the bytes.
pub fn write_f64s(path: &Path, values: &[f64]) -> Result<String> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let digest = sha256_hex(&bytes);
    fs::write(path, &bytes)?;
    Ok(digest)
}

/// Reads a little-endian f64 array, verifying its length and checksum.
pub fn read_f64s(path: &Path, expected_len: usize, checksum: &str) -> Result<Vec<f64>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.display().to_string()));
    }
    let bytes = fs::read(path)?;
    let digest = sha256_hex(&bytes);
    if digest != checksum {
        return Err(Error::Integrity(format!("checksum mismatch for {}", path.display())));
    }
    if bytes.len() != expected_len * 8 {
        return Err(Error::Integrity(format!(
            "{} holds {} bytes, expected {}",
            path.display(),
            bytes.len(),
            expected_len * 8
        )));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.display().to_string()));
    }
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// Digest of any serializable value (its compact JSON form).
pub fn json_digest<T: Serialize>(value: &T) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(value)?))
}
