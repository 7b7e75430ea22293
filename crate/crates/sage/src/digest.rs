//! Content digests shared by the response cache and the embedding sidecar.

use sha2::{Digest, Sha256};

/// Hex-encoded SHA-256 of the given bytes.
pub fn hex_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of a text, the key used for stored embeddings.
pub fn text_digest(text: &str) -> String {
    hex_digest(text.as_bytes())
}
