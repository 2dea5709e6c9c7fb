//! Binary model files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "PCAM"  u32 version  u64 H  u64 l  u8 f_kind  u8 h_kind  u64 seed
//! f64[H*H] W_H   f64[l*H] W_out   f64[H] cue      (row-major)
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{MemoryModel, Nonlinearity};
use crate::error::{PcamError, Result};

pub const MODEL_MAGIC: [u8; 4] = *b"PCAM";
pub const MODEL_FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 1 + 1 + 8;

pub fn save_model(model: &MemoryModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| PcamError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = |bytes: &[u8]| out.write_all(bytes).map_err(|e| PcamError::io(path, e));

    write(&MODEL_MAGIC)?;
    write(&MODEL_FORMAT_VERSION.to_le_bytes())?;
    write(&(model.hidden_dim() as u64).to_le_bytes())?;
    write(&(model.segment_len() as u64).to_le_bytes())?;
    write(&[model.output_fn.code(), model.hidden_fn.code()])?;
    write(&model.seed.to_le_bytes())?;
    for v in model
        .w_hidden
        .iter()
        .chain(model.w_out.iter())
        .chain(model.cue.iter())
    {
        write(&v.to_le_bytes())?;
    }
    out.flush().map_err(|e| PcamError::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MemoryModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| PcamError::io(path, e))?;
    decode(&bytes)
}

fn decode(bytes: &[u8]) -> Result<MemoryModel> {
    if bytes.len() < 4 {
        return Err(PcamError::ModelFormat(format!(
            "file is {} bytes, too short for a header",
            bytes.len()
        )));
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if magic != MODEL_MAGIC {
        return Err(PcamError::BadMagic(magic));
    }
    if bytes.len() < HEADER_LEN {
        return Err(PcamError::ModelFormat(format!(
            "file is {} bytes, header needs {HEADER_LEN}",
            bytes.len()
        )));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));

    let version = u32_at(4);
    if version != MODEL_FORMAT_VERSION {
        return Err(PcamError::VersionMismatch(version));
    }
    let hidden = u64_at(8);
    let seg_len = u64_at(16);
    let output_fn = Nonlinearity::from_code(bytes[24])
        .ok_or_else(|| PcamError::ModelFormat(format!("unknown f kind {}", bytes[24])))?;
    let hidden_fn = Nonlinearity::from_code(bytes[25])
        .ok_or_else(|| PcamError::ModelFormat(format!("unknown h kind {}", bytes[25])))?;
    let seed = u64_at(26);
    if hidden == 0 || seg_len == 0 {
        return Err(PcamError::ModelFormat(format!(
            "degenerate dimensions H={hidden}, l={seg_len}"
        )));
    }

    let payload = (bytes.len() - HEADER_LEN) as u64;
    let n_values = hidden
        .checked_mul(hidden)
        .and_then(|hh| seg_len.checked_mul(hidden).and_then(|lh| hh.checked_add(lh)))
        .and_then(|n| n.checked_add(hidden));
    let expected = n_values.and_then(|n| n.checked_mul(8)).ok_or_else(|| {
        PcamError::ModelFormat(format!("dimensions H={hidden}, l={seg_len} overflow"))
    })?;
    if payload != expected {
        return Err(PcamError::PayloadSize {
            expected,
            actual: payload,
        });
    }

    let (h, l) = (hidden as usize, seg_len as usize);
    let mut values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };
    let w_hidden = Array2::from_shape_vec((h, h), take(h * h)).expect("sized by header");
    let w_out = Array2::from_shape_vec((l, h), take(l * h)).expect("sized by header");
    let cue = Array1::from(take(h));
    MemoryModel::from_parts(w_hidden, w_out, cue, output_fn, hidden_fn, seed)
}

#[cfg(test)]
mod tests {
    use super::super::WriteConfig;
    use super::*;

    fn model() -> MemoryModel {
        MemoryModel::init(
            6,
            5,
            Nonlinearity::Tanh,
            Nonlinearity::Relu,
            42,
            &WriteConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pcam");
        let m = model();
        save_model(&m, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + (36 + 30 + 6) * 8);
        assert_eq!(&bytes[..4], b"PCAM");
        let back = load_model(&path).unwrap();
        assert_eq!(back, m);
        for (a, b) in back.w_out().iter().zip(m.w_out().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_damaged_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pcam");
        save_model(&model(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(
            decode(truncated),
            Err(PcamError::PayloadSize { .. })
        ));

        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(decode(&magic), Err(PcamError::BadMagic(_))));

        let mut version = bytes.clone();
        version[4] = 7;
        assert!(matches!(decode(&version), Err(PcamError::VersionMismatch(7))));

        let mut kind = bytes.clone();
        kind[24] = 200;
        assert!(matches!(decode(&kind), Err(PcamError::ModelFormat(_))));

        let mut dims = bytes.clone();
        dims[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(decode(&dims), Err(PcamError::ModelFormat(_))));

        assert!(decode(&bytes[..10]).is_err());
    }
}
