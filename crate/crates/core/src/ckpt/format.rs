//! `MSCK` checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "MSCK" | u32 version=1 | u32 tensor_count
//! per tensor: u16 name_len | name (UTF-8) | u8 dtype (0 = f32) | u8 rank
//!             | rank × u64 dims | payload (f32 LE)
//! u32 metadata_len | metadata JSON {tokens_seen, step, run_id, stage_tag, created_at}
//! u32 CRC32 of every preceding byte
//! ```
//!
//! The checksum is verified before anything else is interpreted, so any
//! corrupted byte reports [`CkptError::Checksum`]. The remaining errors
//! describe files whose checksum is intact but whose content is not a
//! version-1 checkpoint.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{CheckpointMeta, CheckpointRecord, CkptError};
use crate::params::NamedParamMap;
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"MSCK";
pub const FORMAT_VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;
/// Header plus an empty metadata length and the checksum.
const MIN_LEN: usize = 4 + 4 + 4 + 4 + 4;

pub fn encode_record(record: &CheckpointRecord) -> Vec<u8> {
    let mut out = Vec::with_capacity(record.params.numel() * 4 + 256);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(record.params.len() as u32).to_le_bytes());
    for (name, t) in record.params.iter() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(DTYPE_F32);
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let meta = serde_json::to_vec(&record.meta).expect("metadata serializes");
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    /// Total file length, for error reporting.
    len: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CkptError> {
        if self.buf.len() - self.pos < n {
            return Err(CkptError::Truncated { offset: self.pos, needed: n, len: self.len });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CkptError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CkptError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, CkptError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CkptError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_record(bytes: &[u8]) -> Result<CheckpointRecord, CkptError> {
    if bytes.len() < MIN_LEN {
        return Err(CkptError::Truncated { offset: 0, needed: MIN_LEN, len: bytes.len() });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(CkptError::Checksum { stored, computed });
    }

    let mut r = Reader { buf: body, pos: 0, len: bytes.len() };
    let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(CkptError::BadMagic(magic));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CkptError::Version(version));
    }
    let count = r.u32()?;
    let mut params = NamedParamMap::new();
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|e| CkptError::Malformed(format!("tensor name: {e}")))?
            .to_string();
        let dtype = r.u8()?;
        if dtype != DTYPE_F32 {
            return Err(CkptError::Dtype(dtype));
        }
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(usize::try_from(r.u64()?).map_err(|_| CkptError::Malformed("dimension overflow".into()))?);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| CkptError::Malformed(format!("tensor `{name}` too large")))?;
        let payload = r.take(numel)?;
        let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        let t = Tensor::new(shape, data).expect("length derived from shape");
        if params.insert(name.clone(), t).is_some() {
            return Err(CkptError::Malformed(format!("duplicate tensor `{name}`")));
        }
    }
    let meta_len = r.u32()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)
        .map_err(|e| CkptError::Malformed(format!("metadata: {e}")))?;
    if r.pos != body.len() {
        return Err(CkptError::Malformed(format!("{} trailing bytes", body.len() - r.pos)));
    }
    Ok(CheckpointRecord { params, meta })
}

/// Writes atomically: the bytes go to a sibling temporary file which is then
/// renamed over `path`.
pub fn save(record: &CheckpointRecord, path: &Path) -> Result<(), CkptError> {
    write_atomic(path, &encode_record(record))
}

pub fn load(path: &Path) -> Result<CheckpointRecord, CkptError> {
    decode_record(&fs::read(path)?)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CkptError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let file_name = path.file_name().and_then(|f| f.to_str()).unwrap_or("checkpoint");
    let tmp = dir.join(format!(".{file_name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{build_model, LmConfig};
    use proptest::prelude::*;

    fn meta() -> CheckpointMeta {
        CheckpointMeta { tokens_seen: 1234, step: 7, run_id: "run-a".into(), stage_tag: "pretrain".into(), created_at: 0 }
    }

    fn small_model_record() -> CheckpointRecord {
        let cfg = LmConfig { d_model: 16, n_heads: 2, d_ff: 32, max_seq_len: 16, ..Default::default() };
        CheckpointRecord { params: build_model(&cfg).unwrap().params, meta: meta() }
    }

    #[test]
    fn two_layer_model_round_trips_and_resaves_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.msck");
        let rec = small_model_record();
        save(&rec, &path).unwrap();
        let back = load(&path).unwrap();
        assert!(back.params.bit_eq(&rec.params));
        assert_eq!(back.meta, rec.meta);
        let path2 = dir.path().join("m2.msck");
        save(&back, &path2).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn flipped_payload_byte_fails_checksum() {
        let mut bytes = encode_record(&small_model_record());
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(decode_record(&bytes), Err(CkptError::Checksum { .. })));
    }

    /// Builds bytes by hand with a valid checksum.
    fn sealed(mut body: Vec<u8>) -> Vec<u8> {
        let crc = crc32fast::hash(&body);
        body.extend_from_slice(&crc.to_le_bytes());
        body
    }

    fn header(magic: &[u8; 4], version: u32, count: u32) -> Vec<u8> {
        let mut b = magic.to_vec();
        b.extend_from_slice(&version.to_le_bytes());
        b.extend_from_slice(&count.to_le_bytes());
        b
    }

    fn meta_bytes() -> Vec<u8> {
        let m = serde_json::to_vec(&meta()).unwrap();
        let mut b = (m.len() as u32).to_le_bytes().to_vec();
        b.extend_from_slice(&m);
        b
    }

    #[test]
    fn distinct_errors_for_sealed_but_invalid_files() {
        let mut bad_magic = header(b"MSCX", 1, 0);
        bad_magic.extend(meta_bytes());
        assert_eq!(decode_record(&sealed(bad_magic)).unwrap_err().code(), "bad_magic");

        let mut v2 = header(b"MSCK", 2, 0);
        v2.extend(meta_bytes());
        assert_eq!(decode_record(&sealed(v2)).unwrap_err().code(), "version");

        // One tensor declaring 4 elements but carrying 2.
        let mut short = header(b"MSCK", 1, 1);
        short.extend_from_slice(&1u16.to_le_bytes());
        short.push(b'w');
        short.extend_from_slice(&[0, 1]);
        short.extend_from_slice(&4u64.to_le_bytes());
        short.extend_from_slice(&1.0f32.to_le_bytes());
        short.extend_from_slice(&2.0f32.to_le_bytes());
        assert_eq!(decode_record(&sealed(short)).unwrap_err().code(), "truncated");

        assert_eq!(decode_record(b"MSCK").unwrap_err().code(), "truncated");
    }

    #[test]
    fn hand_assembled_file_loads() {
        // Layout written field by field, independent of `encode_record`.
        let mut b = header(b"MSCK", 1, 2);
        for (name, dims, vals) in [("a", vec![2u64], vec![1.5f32, -2.0]), ("b.c", vec![], vec![0.25])] {
            b.extend_from_slice(&(name.len() as u16).to_le_bytes());
            b.extend_from_slice(name.as_bytes());
            b.push(0);
            b.push(dims.len() as u8);
            for d in dims {
                b.extend_from_slice(&d.to_le_bytes());
            }
            for v in vals {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        b.extend(meta_bytes());
        let bytes = sealed(b);
        let rec = decode_record(&bytes).unwrap();
        assert_eq!(rec.params.get("a").unwrap().data(), &[1.5, -2.0]);
        assert_eq!(rec.params.get("b.c").unwrap().shape(), &[] as &[usize]);
        assert_eq!(rec.meta, meta());
        assert_eq!(encode_record(&rec), bytes);
    }

    fn arb_record() -> impl Strategy<Value = CheckpointRecord> {
        let tensor = proptest::collection::vec(0usize..4, 0..4).prop_flat_map(|shape| {
            let n: usize = shape.iter().product();
            (Just(shape), proptest::collection::vec(any::<u32>().prop_map(f32::from_bits), n))
        });
        (
            proptest::collection::btree_map("[a-z.0-9_é]{1,12}", tensor, 0..6),
            any::<u64>(),
            any::<u64>(),
            "[ -~]{0,10}",
            "[a-z]{0,8}",
        )
            .prop_map(|(tensors, tokens_seen, step, run_id, stage_tag)| CheckpointRecord {
                params: tensors.into_iter().map(|(k, (s, d))| (k, Tensor::new(s, d).unwrap())).collect(),
                meta: CheckpointMeta { tokens_seen, step, run_id, stage_tag, created_at: 0 },
            })
    }

    proptest! {
        #[test]
        fn random_schemas_round_trip_bit_exactly(rec in arb_record()) {
            let bytes = encode_record(&rec);
            let back = decode_record(&bytes).unwrap();
            prop_assert!(back.params.bit_eq(&rec.params));
            prop_assert_eq!(&back.meta, &rec.meta);
            prop_assert_eq!(encode_record(&back), bytes);
        }

        #[test]
        fn any_single_byte_corruption_fails_checksum(rec in arb_record(), pos in any::<proptest::sample::Index>(), flip in 1u8..=255) {
            let mut bytes = encode_record(&rec);
            let i = pos.index(bytes.len());
            bytes[i] ^= flip;
            prop_assert_eq!(decode_record(&bytes).unwrap_err().code(), "checksum");
        }
    }
}
