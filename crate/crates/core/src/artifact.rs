//! Versioned binary model files: 8-byte magic, little-endian format
//! version, one kind byte, then a bincode payload.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CERANK01";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ArtifactKind {
    Ranker = 1,
    TopicModel = 2,
    Embedder = 3,
    CrimeVocabulary = 4,
}

impl ArtifactKind {
    fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            1 => ArtifactKind::Ranker,
            2 => ArtifactKind::TopicModel,
            3 => ArtifactKind::Embedder,
            4 => ArtifactKind::CrimeVocabulary,
            _ => return None,
        })
    }
}

pub fn encode<T: Serialize>(kind: ArtifactKind, value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(HEADER_LEN + 1024);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(kind as u8);
    bincode::serialize_into(&mut out, value).map_err(|e| Error::Serialization(e.to_string()))?;
    Ok(out)
}

pub fn decode<T: DeserializeOwned>(path: &Path, kind: ArtifactKind, bytes: &[u8]) -> Result<T> {
    let bad = |reason: String| Error::Artifact {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(bad("missing CERANK01 header".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(bad(format!("format version {version}, expected {FORMAT_VERSION}")));
    }
    match ArtifactKind::from_byte(bytes[12]) {
        Some(k) if k == kind => {}
        Some(k) => return Err(bad(format!("holds a {k:?}, expected a {kind:?}"))),
        None => return Err(bad(format!("unknown artifact kind {}", bytes[12]))),
    }
    bincode::deserialize(&bytes[HEADER_LEN..]).map_err(|e| bad(format!("corrupt payload: {e}")))
}

pub fn write<T: Serialize>(path: &Path, kind: ArtifactKind, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, encode(kind, value)?).map_err(|e| Error::io(path, e))
}

pub fn read<T: DeserializeOwned>(path: &Path, kind: ArtifactKind) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(path, kind, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_header_checks() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        let value = vec![1.5f64, -0.25, 1e-300];
        write(&p, ArtifactKind::Embedder, &value).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..8], b"CERANK01");
        let back: Vec<f64> = read(&p, ArtifactKind::Embedder).unwrap();
        assert_eq!(back, value);

        assert!(matches!(
            read::<Vec<f64>>(&p, ArtifactKind::Ranker),
            Err(Error::Artifact { .. })
        ));
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(decode::<Vec<f64>>(&p, ArtifactKind::Embedder, &wrong).is_err());
        let mut future = bytes.clone();
        future[8] = 9;
        assert!(decode::<Vec<f64>>(&p, ArtifactKind::Embedder, &future).is_err());
        assert!(decode::<Vec<f64>>(&p, ArtifactKind::Embedder, &bytes[..bytes.len() - 3]).is_err());
    }
}
