//! `QFA1` binary container for intermediate arrays.
//!
//! Little-endian layout:
//!
//! ```text
//! b"QFA1" | version u16 | kind u8 | spec kind u8
//! m u32 | L u32 | n u32 | extent u32
//! levels: L x f64
//! freqs: extent x u32            (qspec only)
//! payload: f64 values, complex as (re, im)
//! ```
//!
//! `extent` is `n` for qdft, qser and qacf and the number of frequencies
//! `V` for qspec. Payload orders: qdft `(j·L+ℓ)·n+v`; qser the series
//! `(j·L+ℓ)·n+t` followed by the `m·L` level means; qacf
//! `((j·m+j′)·L+ℓ)·n+τ`; qspec `((ℓ·V+i)·m+j)·m+j′`.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use qfa_core::qdft::QdftArray;
use qfa_core::qseries::{QSpecMatrix, QacfArray, QuantileSeriesArray, SpecKind};

use crate::error::CliError;

pub const MAGIC: &[u8; 4] = b"QFA1";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContainerKind {
    Qdft = 0,
    Qser = 1,
    Qacf = 2,
    Qspec = 3,
}

impl ContainerKind {
    fn from_tag(t: u8) -> Result<Self, CliError> {
        Ok(match t {
            0 => Self::Qdft,
            1 => Self::Qser,
            2 => Self::Qacf,
            3 => Self::Qspec,
            _ => return Err(CliError::Validation(format!("unknown container kind tag {t}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Qdft => "qdft",
            Self::Qser => "qser",
            Self::Qacf => "qacf",
            Self::Qspec => "qspec",
        }
    }
}

fn spec_kind_tag(k: SpecKind) -> u8 {
    match k {
        SpecKind::Periodogram => 0,
        SpecKind::LwEstimate => 1,
        SpecKind::Truth => 2,
        SpecKind::Smoothed => 3,
    }
}

fn spec_kind_from_tag(t: u8) -> Result<SpecKind, CliError> {
    Ok(match t {
        0 => SpecKind::Periodogram,
        1 => SpecKind::LwEstimate,
        2 => SpecKind::Truth,
        3 => SpecKind::Smoothed,
        _ => return Err(CliError::Validation(format!("unknown spectrum kind tag {t}"))),
    })
}

/// A decoded container holding one of the pipeline arrays.
#[derive(Debug, Clone, PartialEq)]
pub enum Container {
    Qdft(QdftArray),
    Qser(QuantileSeriesArray),
    Qacf(QacfArray),
    Qspec(QSpecMatrix),
}

fn complex_to_f64(z: &[Complex64]) -> Vec<f64> {
    z.iter().flat_map(|c| [c.re, c.im]).collect()
}

fn f64_to_complex(v: &[f64]) -> Vec<Complex64> {
    v.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect()
}

fn dim(x: usize) -> Result<u32, CliError> {
    u32::try_from(x).map_err(|_| CliError::Validation(format!("dimension {x} exceeds u32")))
}

impl Container {
    pub fn kind(&self) -> ContainerKind {
        match self {
            Self::Qdft(_) => ContainerKind::Qdft,
            Self::Qser(_) => ContainerKind::Qser,
            Self::Qacf(_) => ContainerKind::Qacf,
            Self::Qspec(_) => ContainerKind::Qspec,
        }
    }

    pub fn levels(&self) -> &[f64] {
        match self {
            Self::Qdft(a) => a.levels(),
            Self::Qser(a) => a.levels(),
            Self::Qacf(a) => a.levels(),
            Self::Qspec(a) => a.levels(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CliError> {
        let (m, n, extent, spec, freqs, payload) = match self {
            Self::Qdft(a) => (a.m(), a.n(), a.n(), 0, vec![], complex_to_f64(a.values())),
            Self::Qser(a) => {
                let mut p = a.values().to_vec();
                p.extend_from_slice(a.means());
                (a.m(), a.n(), a.n(), 0, vec![], p)
            }
            Self::Qacf(a) => (a.m(), a.n(), a.n(), 0, vec![], a.values().to_vec()),
            Self::Qspec(a) => (
                a.m(),
                a.n(),
                a.freqs().len(),
                spec_kind_tag(a.kind()),
                a.freqs().to_vec(),
                complex_to_f64(a.values()),
            ),
        };
        let levels = self.levels();
        let mut out = Vec::with_capacity(32 + 8 * (levels.len() + payload.len()) + 4 * freqs.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.kind() as u8);
        out.push(spec);
        for d in [m, levels.len(), n, extent] {
            out.extend_from_slice(&dim(d)?.to_le_bytes());
        }
        for l in levels {
            out.extend_from_slice(&l.to_le_bytes());
        }
        for f in freqs {
            out.extend_from_slice(&dim(f)?.to_le_bytes());
        }
        for v in payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CliError> {
        let bad = |msg: &str| CliError::Validation(format!("malformed container: {msg}"));
        if bytes.len() < 24 || &bytes[..4] != MAGIC {
            return Err(bad("missing QFA1 header"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let kind = ContainerKind::from_tag(bytes[6])?;
        let spec = bytes[7];
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let (m, l, n, extent) = (u32_at(8), u32_at(12), u32_at(16), u32_at(20));
        let mut pos = 24;
        let need = |pos: usize, k: usize| -> Result<(), CliError> {
            if bytes.len() < pos + k {
                Err(bad("truncated"))
            } else {
                Ok(())
            }
        };
        need(pos, 8 * l)?;
        let read_f64s = |pos: usize, k: usize| -> Vec<f64> {
            bytes[pos..pos + 8 * k]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect()
        };
        let levels = read_f64s(pos, l);
        pos += 8 * l;
        let mut freqs = Vec::new();
        if kind == ContainerKind::Qspec {
            need(pos, 4 * extent)?;
            freqs = (0..extent).map(|i| u32_at(pos + 4 * i)).collect();
            pos += 4 * extent;
        } else if extent != n {
            return Err(bad("extent must equal n"));
        }
        let count = match kind {
            ContainerKind::Qdft => 2 * m * l * n,
            ContainerKind::Qser => m * l * n + m * l,
            ContainerKind::Qacf => m * m * l * n,
            ContainerKind::Qspec => 2 * l * extent * m * m,
        };
        if bytes.len() != pos + 8 * count {
            return Err(bad("payload length does not match the dimensions"));
        }
        let payload = read_f64s(pos, count);
        Ok(match kind {
            ContainerKind::Qdft => {
                Self::Qdft(QdftArray::from_parts(m, n, levels, f64_to_complex(&payload))?)
            }
            ContainerKind::Qser => {
                let split = m * l * n;
                Self::Qser(QuantileSeriesArray::from_parts(
                    m,
                    n,
                    levels,
                    payload[..split].to_vec(),
                    payload[split..].to_vec(),
                )?)
            }
            ContainerKind::Qacf => Self::Qacf(QacfArray::from_parts(m, n, levels, payload)?),
            ContainerKind::Qspec => Self::Qspec(QSpecMatrix::from_parts(
                m,
                n,
                levels,
                freqs,
                spec_kind_from_tag(spec)?,
                f64_to_complex(&payload),
            )?),
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        f.write_all(&bytes).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn expect_qdft(self) -> Result<QdftArray, CliError> {
        match self {
            Self::Qdft(a) => Ok(a),
            other => Err(other.mismatch("qdft")),
        }
    }

    pub fn expect_qspec(self) -> Result<QSpecMatrix, CliError> {
        match self {
            Self::Qspec(a) => Ok(a),
            other => Err(other.mismatch("qspec")),
        }
    }

    pub fn expect_qacf(self) -> Result<QacfArray, CliError> {
        match self {
            Self::Qacf(a) => Ok(a),
            other => Err(other.mismatch("qacf")),
        }
    }

    pub fn mismatch(&self, expected: &str) -> CliError {
        CliError::Validation(format!(
            "expected a {expected} container, found {}",
            self.kind().name()
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let q = QdftArray::from_parts(
            1,
            2,
            vec![0.5],
            vec![Complex64::new(1.0, 0.0), Complex64::new(2.0, -1.0)],
        )
        .unwrap();
        let b = Container::Qdft(q).to_bytes().unwrap();
        assert_eq!(&b[..4], b"QFA1");
        assert_eq!(&b[4..6], &[1, 0]);
        assert_eq!(b[6], 0);
        assert_eq!(&b[8..12], &[1, 0, 0, 0]);
        assert_eq!(b.len(), 24 + 8 + 4 * 8);
        assert_eq!(f64::from_le_bytes(b[24..32].try_into().unwrap()), 0.5);
        assert_eq!(f64::from_le_bytes(b[56..64].try_into().unwrap()), -1.0);
    }

    #[test]
    fn rejects_corruption() {
        let q = QdftArray::from_parts(1, 1, vec![0.5], vec![Complex64::new(1.0, 0.0)]).unwrap();
        let b = Container::Qdft(q).to_bytes().unwrap();
        assert!(Container::from_bytes(&b[..b.len() - 1]).is_err());
        let mut c = b.clone();
        c[0] = b'X';
        assert!(Container::from_bytes(&c).is_err());
        let mut c = b;
        c[6] = 9;
        assert!(Container::from_bytes(&c).is_err());
    }
}
