use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Example, TrainConfig};
use crate::lm::LmConfig;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of a dataset: each example's ids as little-endian `u32` followed by
/// its mask bytes, with lengths prefixed.
pub fn examples_hash(data: &[Example]) -> String {
    let mut h = Sha256::new();
    h.update((data.len() as u64).to_le_bytes());
    for e in data {
        h.update((e.ids.len() as u64).to_le_bytes());
        for id in &e.ids {
            h.update(id.to_le_bytes());
        }
        h.update(e.mask.iter().map(|&m| m as u8).collect::<Vec<_>>());
    }
    hex::encode(h.finalize())
}

/// Everything needed to reproduce one training stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub stage_tag: String,
    pub model: LmConfig,
    pub train: TrainConfig,
    pub data_sha256: String,
    pub start_sha256: String,
    pub final_sha256: String,
    pub tokens_seen: u64,
    pub steps: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn dataset_hash_sees_mask() {
        let a = Example::document("hi");
        let mut b = a.clone();
        b.mask[0] = false;
        assert_ne!(examples_hash(std::slice::from_ref(&a)), examples_hash(&[b]));
        assert_eq!(examples_hash(std::slice::from_ref(&a)), examples_hash(&[a]));
    }
}
