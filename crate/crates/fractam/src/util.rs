//! Small shared helpers.

use sha2::{Digest, Sha256};

/// Lowercase hex SHA-256 of the input bytes.
pub fn sha256_hex(data: &[u8]) -> String {
    let digest = Sha256::digest(data);
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// First 8 hex chars of the SHA-256, for compact deterministic labels.
pub fn short_digest(data: &[u8]) -> String {
    sha256_hex(data)[..8].to_string()
}
