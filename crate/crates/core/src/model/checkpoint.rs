//! Checkpoint layout:
//!
//! ```text
//! magic       8 bytes  "S2AM2Mv1"
//! header_len  u64 LE
//! header      JSON {"format_version", "config", "tensors": [{"name", "shape"}]}
//! data        f32 LE, tensors back to back in header order, row-major
//! ```

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{M2MConfig, M2MModel, Params};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"S2AM2Mv1";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: M2MConfig,
    tensors: Vec<TensorEntry>,
}

pub fn checkpoint_bytes(model: &M2MModel) -> Result<Vec<u8>> {
    let named = model.params.named_tensors();
    let header = Header {
        format_version: FORMAT_VERSION,
        config: model.config.clone(),
        tensors: named
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: [t.nrows(), t.ncols()],
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + 4 * model.n_params());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in named {
        for &v in t.iter() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<M2MModel> {
    let bad = |m: String| Error::Checkpoint(m);
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("missing checkpoint magic".into()));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("header runs past end of file".into()))?;
    let header: Header = serde_json::from_slice(&bytes[16..header_end])?;
    if header.format_version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {}", header.format_version)));
    }
    header.config.validate()?;
    let mut params = Params::zeros(&header.config);
    let expected: Vec<(String, [usize; 2])> = params
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, [t.nrows(), t.ncols()]))
        .collect();
    if expected.len() != header.tensors.len()
        || expected
            .iter()
            .zip(&header.tensors)
            .any(|((n, s), e)| *n != e.name || *s != e.shape)
    {
        return Err(bad("tensor table does not match the configuration".into()));
    }
    let mut data = &bytes[header_end..];
    for (tensor, (_, shape)) in params.tensors_mut().into_iter().zip(&expected) {
        let count = shape[0] * shape[1];
        if data.len() < 4 * count {
            return Err(bad("tensor data truncated".into()));
        }
        let values: Vec<f64> = data[..4 * count]
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect();
        *tensor = Array2::from_shape_vec((shape[0], shape[1]), values)
            .map_err(|e| bad(e.to_string()))?;
        data = &data[4 * count..];
    }
    if !data.is_empty() {
        return Err(bad(format!("{} trailing bytes", data.len())));
    }
    Ok(M2MModel::from_params(header.config, params))
}

pub fn save_checkpoint(model: &M2MModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<M2MModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_rounds_to_f32() {
        let cfg = M2MConfig {
            seed: 5,
            ..M2MConfig::with_shape(1, 16, 2, 32, 2)
        };
        let model = M2MModel::new(cfg).unwrap();
        let bytes = checkpoint_bytes(&model).unwrap();
        assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
        let back = model_from_bytes(&bytes).unwrap();
        assert_eq!(back.config, model.config);
        for (a, b) in back.params.tensors().iter().zip(model.params.tensors()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(*x, f64::from(*y as f32));
            }
        }
        // a re-saved checkpoint is byte identical
        assert_eq!(checkpoint_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let model = M2MModel::new(M2MConfig::with_shape(1, 16, 2, 32, 2)).unwrap();
        let mut bytes = checkpoint_bytes(&model).unwrap();
        assert!(model_from_bytes(&bytes[..bytes.len() - 4]).is_err());
        bytes[0] = b'X';
        assert!(matches!(model_from_bytes(&bytes), Err(Error::Checkpoint(_))));
    }
}
