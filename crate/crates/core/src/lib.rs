//! Core library for measuring elite polarization from parliamentary speech.

pub mod corpus;
pub mod extraction;
pub mod gateway;
pub mod index;
pub mod jsonl;
pub mod pipeline;
pub mod resolution;
pub mod review;
pub mod synthetic;
pub mod validation;

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes.as_ref()))
}
