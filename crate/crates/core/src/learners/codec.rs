//! Model file layout (little endian):
//!
//! ```text
//! magic "TGMODEL\0" | format version u16 | kind u8 | payload length u64 | payload
//! ```
//!
//! The payload is the bincode encoding of the model.

use thiserror::Error;

use super::{ClassifierKind, Model};

const MAGIC: &[u8; 8] = b"TGMODEL\0";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 8 + 2 + 1 + 8;

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("not a model file (bad magic)")]
    Magic,
    #[error("unsupported model format version {0}")]
    Version(u16),
    #[error("unknown model kind tag {0}")]
    Kind(u8),
    #[error("model file truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("corrupt model payload: {0}")]
    Payload(String),
}

fn kind_tag(kind: ClassifierKind) -> u8 {
    match kind {
        ClassifierKind::Ht => 1,
        ClassifierKind::Arf => 2,
        ClassifierKind::Slr => 3,
    }
}

pub(super) fn encode(model: &Model) -> Vec<u8> {
    let payload = bincode::serialize(model).expect("model serializes");
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(kind_tag(model.kind()));
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

pub(super) fn decode(bytes: &[u8]) -> Result<Model, DecodeError> {
    if bytes.len() < HEADER_LEN {
        if !MAGIC.starts_with(&bytes[..bytes.len().min(MAGIC.len())]) {
            return Err(DecodeError::Magic);
        }
        return Err(DecodeError::Truncated { expected: HEADER_LEN, found: bytes.len() });
    }
    if &bytes[..8] != MAGIC {
        return Err(DecodeError::Magic);
    }
    let version = u16::from_le_bytes([bytes[8], bytes[9]]);
    if version != FORMAT_VERSION {
        return Err(DecodeError::Version(version));
    }
    let tag = bytes[10];
    if !(1..=3).contains(&tag) {
        return Err(DecodeError::Kind(tag));
    }
    let len = u64::from_le_bytes(bytes[11..19].try_into().expect("8 bytes")) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != len {
        return Err(DecodeError::Truncated { expected: HEADER_LEN.saturating_add(len), found: bytes.len() });
    }
    let model: Model = bincode::deserialize(body).map_err(|e| DecodeError::Payload(e.to_string()))?;
    if kind_tag(model.kind()) != tag {
        return Err(DecodeError::Payload("header kind disagrees with payload".into()));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::LearnerParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trained(kind: ClassifierKind) -> Model {
        let mut m = Model::new(kind, &LearnerParams::default(), 2, 4, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for s in 0..3000 {
            let x: Vec<f64> = (0..4).map(|_| rng.random()).collect();
            let y = usize::from(x[1] > 0.3);
            m.train(&x, y, s).unwrap();
        }
        m
    }

    #[test]
    fn round_trip_predicts_identically() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for kind in [ClassifierKind::Ht, ClassifierKind::Arf, ClassifierKind::Slr] {
            let m = trained(kind);
            let back = Model::from_bytes(&m.to_bytes()).unwrap();
            assert_eq!(back, m);
            for _ in 0..1000 {
                let x: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 2.0 - 0.5).collect();
                assert_eq!(back.predict(&x), m.predict(&x));
            }
        }
    }

    #[test]
    fn damaged_buffers_are_rejected() {
        let bytes = trained(ClassifierKind::Ht).to_bytes();
        for cut in [0, 5, HEADER_LEN, bytes.len() / 2, bytes.len() - 1] {
            assert!(Model::from_bytes(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut v = bytes.clone();
        v[8] = 9;
        assert_eq!(Model::from_bytes(&v), Err(DecodeError::Version(9)));
        let mut v = bytes.clone();
        v[0] = b'X';
        assert_eq!(Model::from_bytes(&v), Err(DecodeError::Magic));
        let mut v = bytes;
        v[10] = 3;
        assert!(Model::from_bytes(&v).is_err());
    }
}
