//! Byte-level tokenizer: ids 0..=255 are raw bytes, followed by two specials.

use super::LmError;

pub const BOS: u32 = 256;
pub const EOT: u32 = 257;
pub const VOCAB_SIZE: usize = 258;

/// `[BOS]` followed by one id per byte.
pub fn encode(text: impl AsRef<[u8]>) -> Vec<u32> {
    let bytes = text.as_ref();
    let mut ids = Vec::with_capacity(bytes.len() + 1);
    ids.push(BOS);
    ids.extend(bytes.iter().map(|&b| b as u32));
    ids
}

/// Encoded document terminated by `EOT`, the form used for training.
pub fn encode_document(text: impl AsRef<[u8]>) -> Vec<u32> {
    let mut ids = encode(text);
    ids.push(EOT);
    ids
}

/// Inverse of [`encode`]; special ids are dropped.
pub fn decode(ids: &[u32]) -> Result<Vec<u8>, LmError> {
    let mut out = Vec::with_capacity(ids.len());
    for &id in ids {
        match id {
            0..=255 => out.push(id as u8),
            BOS | EOT => {}
            _ => return Err(LmError::TokenOutOfRange { id, vocab: VOCAB_SIZE }),
        }
    }
    Ok(out)
}

/// Decodes to text, replacing invalid UTF-8 sequences.
pub fn decode_lossy(ids: &[u32]) -> Result<String, LmError> {
    Ok(String::from_utf8_lossy(&decode(ids)?).into_owned())
}
