//! Model checkpoint container (little-endian):
//!
//! ```text
//! "PLTC" | u32 version = 1 | u32 K | u32 d | u8 distance tag | u8 scheme tag
//!        | K*d f64 prototypes (row-major) | f64 temperatures (count set by scheme)
//! ```
//!
//! Distance tags: 0 euclidean, 1 sqeuclidean, 2 cosine. Scheme tags: 0 none,
//! 1 channel (d values), 2 class (K values), 3 dense (K*d values).
//!
//! Linear softmax models use distance tag 255 with scheme tag 0; the payload is
//! `W` (K*d f64) followed by the bias (K f64).

use std::fs;
use std::path::Path;

use crate::baseline::LinearModel;
use crate::error::{Error, Result};
use crate::geometry::{DistanceKind, SchemeKind, TemperatureScheme};
use crate::linalg::Matrix;
use crate::model::PrototypeModel;

const MAGIC: &[u8; 4] = b"PLTC";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 18;
const LINEAR_TAG: u8 = 255;

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Prototype(PrototypeModel),
    Linear(LinearModel),
}

impl Checkpoint {
    pub fn num_classes(&self) -> usize {
        match self {
            Checkpoint::Prototype(m) => m.num_classes(),
            Checkpoint::Linear(m) => m.num_classes(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Checkpoint::Prototype(m) => m.dim(),
            Checkpoint::Linear(m) => m.dim(),
        }
    }

    /// Class vectors: prototypes or linear weight rows.
    pub fn class_vectors(&self) -> &Matrix {
        match self {
            Checkpoint::Prototype(m) => m.prototypes(),
            Checkpoint::Linear(m) => m.weights(),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        match self {
            Checkpoint::Prototype(m) => m.predict(x),
            Checkpoint::Linear(m) => crate::baseline::predict_linear(m, x),
        }
    }
}

fn kind_tag(kind: DistanceKind) -> u8 {
    match kind {
        DistanceKind::Euclidean => 0,
        DistanceKind::SquaredEuclidean => 1,
        DistanceKind::Cosine => 2,
    }
}

fn scheme_tag(kind: SchemeKind) -> u8 {
    match kind {
        SchemeKind::None => 0,
        SchemeKind::Channel => 1,
        SchemeKind::Class => 2,
        SchemeKind::Dense => 3,
    }
}

fn header(out: &mut Vec<u8>, k: usize, d: usize, kind: u8, scheme: u8) -> Result<()> {
    let to_u32 =
        |v: usize| u32::try_from(v).map_err(|_| Error::InvalidConfig("model too large".into()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(k)?.to_le_bytes());
    out.extend_from_slice(&to_u32(d)?.to_le_bytes());
    out.push(kind);
    out.push(scheme);
    Ok(())
}

fn put(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    match ckpt {
        Checkpoint::Prototype(m) => {
            header(
                &mut out,
                m.num_classes(),
                m.dim(),
                kind_tag(m.kind()),
                scheme_tag(m.temps().kind()),
            )?;
            put(&mut out, m.prototypes().as_slice());
            put(&mut out, m.temps().params());
        }
        Checkpoint::Linear(m) => {
            header(&mut out, m.num_classes(), m.dim(), LINEAR_TAG, 0)?;
            put(&mut out, m.weights().as_slice());
            put(&mut out, m.bias());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic { expected: "PLTC" });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedPayload {
            expected: HEADER_LEN,
            got: bytes.len(),
        });
    }
    let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let k = u32_at(8) as usize;
    let d = u32_at(12) as usize;
    let (kind_byte, scheme_byte) = (bytes[16], bytes[17]);

    let kind = match kind_byte {
        0 => Some(DistanceKind::Euclidean),
        1 => Some(DistanceKind::SquaredEuclidean),
        2 => Some(DistanceKind::Cosine),
        LINEAR_TAG => None,
        tag => {
            return Err(Error::UnknownTag {
                what: "distance kind",
                tag,
            })
        }
    };
    let scheme = match scheme_byte {
        0 => SchemeKind::None,
        1 => SchemeKind::Channel,
        2 => SchemeKind::Class,
        3 => SchemeKind::Dense,
        tag => {
            return Err(Error::UnknownTag {
                what: "temperature scheme",
                tag,
            })
        }
    };
    if kind.is_none() && scheme != SchemeKind::None {
        return Err(Error::UnknownTag {
            what: "linear model scheme",
            tag: scheme_byte,
        });
    }

    let kd = k.checked_mul(d);
    let extra = match (kind, scheme) {
        (None, _) => Some(k),
        (_, SchemeKind::None) => Some(0),
        (_, SchemeKind::Channel) => Some(d),
        (_, SchemeKind::Class) => Some(k),
        (_, SchemeKind::Dense) => kd,
    };
    let expected = kd
        .zip(extra)
        .and_then(|(a, b)| a.checked_add(b))
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .unwrap_or(usize::MAX);
    if bytes.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            got: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::TrailingBytes(bytes.len() - expected));
    }

    let values: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let (main, rest) = values.split_at(k * d);
    let main = Matrix::from_vec(k, d, main.to_vec())?;
    match kind {
        None => Ok(Checkpoint::Linear(LinearModel::new(main, rest.to_vec())?)),
        Some(kind) => {
            let temps = TemperatureScheme::from_params(scheme, k, d, rest.to_vec())?;
            Ok(Checkpoint::Prototype(PrototypeModel::new(
                main, temps, kind,
            )?))
        }
    }
}

pub fn save(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, encode(ckpt)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn proto(scheme: SchemeKind) -> Checkpoint {
        let c = Matrix::from_rows(&[[1.0, -2.0, 0.5], [0.25, 3.0, -1.0]]).unwrap();
        let mut temps = TemperatureScheme::ones(scheme, 2, 3);
        for (i, t) in temps.params_mut().iter_mut().enumerate() {
            *t = 0.5 + i as f64;
        }
        Checkpoint::Prototype(PrototypeModel::new(c, temps, DistanceKind::Euclidean).unwrap())
    }

    #[test]
    fn every_scheme_survives() {
        for scheme in SchemeKind::ALL {
            let ckpt = proto(scheme);
            assert_eq!(decode(&encode(&ckpt).unwrap()).unwrap(), ckpt);
        }
        let lin = Checkpoint::Linear(
            LinearModel::new(Matrix::from_rows(&[[1.0], [2.0]]).unwrap(), vec![0.5, -0.5]).unwrap(),
        );
        assert_eq!(decode(&encode(&lin).unwrap()).unwrap(), lin);
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&proto(SchemeKind::Channel)).unwrap();
        assert_eq!(&bytes[..4], b"PLTC");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &3u32.to_le_bytes());
        assert_eq!((bytes[16], bytes[17]), (0, 1));
        assert_eq!(bytes.len(), HEADER_LEN + (6 + 3) * 8);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode(&proto(SchemeKind::Dense)).unwrap();
        assert!(matches!(
            decode(&bytes[..bytes.len() - 1]),
            Err(Error::TruncatedPayload { .. })
        ));
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(decode(&longer), Err(Error::TrailingBytes(1))));
        let mut tag = bytes.clone();
        tag[16] = 7;
        assert!(matches!(
            decode(&tag),
            Err(Error::UnknownTag { tag: 7, .. })
        ));
        let mut neg = bytes.clone();
        let last = neg.len() - 8;
        neg[last..].copy_from_slice(&(-1.0f64).to_le_bytes());
        assert!(matches!(decode(&neg), Err(Error::InvalidTemperatures(_))));
        // temperatures with a non-euclidean tag
        let mut cos = encode(&proto(SchemeKind::Channel)).unwrap();
        cos[16] = 2;
        assert!(matches!(decode(&cos), Err(Error::IncompatibleScheme(_))));
    }
}
