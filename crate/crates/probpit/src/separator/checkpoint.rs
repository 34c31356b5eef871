//! Versioned binary model container: magic, version, a JSON header with
//! the config, layout map, and training metadata, then the flat
//! parameters as little-endian f64. Save -> load -> save is bit
//! identical.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{build_layout, LayoutEntry, SeparatorConfig, SeparatorModel};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PPCK";
const VERSION: u32 = 1;

/// Training provenance stored alongside the parameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CheckpointMeta {
    pub train_seed: u64,
    /// "pit" for gamma = 0 runs, "prob_pit" otherwise.
    pub loss_kind: String,
    pub gamma: f64,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Header {
    config: SeparatorConfig,
    layout: Vec<LayoutEntry>,
    meta: CheckpointMeta,
}

/// Writes atomically (temp file + rename).
pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &SeparatorModel,
    meta: &CheckpointMeta,
) -> Result<()> {
    let path = path.as_ref();
    let header = Header {
        config: model.config().clone(),
        layout: model.layout().to_vec(),
        meta: meta.clone(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::Data(format!("checkpoint header serialization failed: {e}")))?;

    let mut bytes = Vec::with_capacity(16 + header_json.len() + model.num_params() * 8);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    bytes.extend_from_slice(&(model.num_params() as u64).to_le_bytes());
    for p in model.params() {
        bytes.extend_from_slice(&p.to_le_bytes());
    }

    let tmp = path.with_extension("ckpt.tmp");
    let display = path.display().to_string();
    let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&display, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(&display, e))?;
    file.sync_all().map_err(|e| Error::io(&display, e))?;
    drop(file);
    fs::rename(&tmp, path).map_err(|e| Error::io(&display, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(SeparatorModel, CheckpointMeta)> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let bytes = fs::read(path).map_err(|e| Error::io(&display, e))?;

    let need = |n: usize, at: usize| -> Result<()> {
        if bytes.len() < at + n {
            Err(Error::Data(format!("{display}: truncated checkpoint")))
        } else {
            Ok(())
        }
    };
    need(12, 0)?;
    if &bytes[0..4] != MAGIC {
        return Err(Error::Data(format!("{display}: not a checkpoint file")));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::CheckpointVersion { found: version, expected: VERSION });
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    need(header_len, 12)?;
    let header: Header = serde_json::from_slice(&bytes[12..12 + header_len])
        .map_err(|e| Error::Data(format!("{display}: bad checkpoint header: {e}")))?;

    let mut at = 12 + header_len;
    need(8, at)?;
    let count = u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize;
    at += 8;
    need(count * 8, at)?;
    let mut params = Vec::with_capacity(count);
    for i in 0..count {
        let off = at + i * 8;
        params.push(f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
    }

    let model = SeparatorModel::from_parts(header.config, params)?;
    if build_layout(model.config()) != header.layout {
        return Err(Error::Data(format!(
            "{display}: stored layout does not match the config-derived layout"
        )));
    }
    Ok((model, header.meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        let cfg = SeparatorConfig {
            input_dim: 9,
            hidden_ff: 6,
            hidden_rec: 5,
            num_rec_layers: 2,
            num_sources: 2,
            dropout_rate: 0.2,
            seed: 77,
        };
        let model = SeparatorModel::init(cfg).unwrap();
        let meta =
            CheckpointMeta { train_seed: 3, loss_kind: "prob_pit".into(), gamma: 12.5 };
        save_checkpoint(&p1, &model, &meta).unwrap();
        let (loaded, meta2) = load_checkpoint(&p1).unwrap();
        assert_eq!(meta2, meta);
        assert_eq!(loaded.params(), model.params());
        save_checkpoint(&p2, &loaded, &meta2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.ckpt");
        let model = SeparatorModel::init(SeparatorConfig {
            input_dim: 4,
            hidden_ff: 3,
            hidden_rec: 3,
            num_rec_layers: 1,
            num_sources: 2,
            dropout_rate: 0.0,
            seed: 0,
        })
        .unwrap();
        let meta = CheckpointMeta { train_seed: 0, loss_kind: "pit".into(), gamma: 0.0 };
        save_checkpoint(&path, &model, &meta).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
        fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::CheckpointVersion { found: 99, expected: 1 })
        ));
    }

    #[test]
    fn garbage_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.ckpt");
        fs::write(&path, b"not a checkpoint at all").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Data(_))));
    }
}
