//! Per-frame log-posterior matrices and the `FPM1` binary format.
//!
//! Layout (all little-endian):
//!
//! ```text
//! offset 0   4 bytes  magic "FPM1"
//! offset 4   u32      T, number of frames
//! offset 8   u32      V, number of symbols
//! offset 12  T*V f32  natural-log posteriors, row-major (frame by frame)
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::logmath::log_sum_exp;

pub const MAGIC: &[u8; 4] = b"FPM1";

/// Largest tolerated `|logsumexp(row)|`.
pub const ROW_TOLERANCE: f64 = 1e-3;

/// A `T x V` grid of natural-log posteriors.
///
/// Values are stored as `f32` so that a write/load round trip is bit-exact;
/// accessors widen to `f64`. Every row is a normalized distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMatrix {
    frames: usize,
    symbols: usize,
    values: Vec<f32>,
}

impl PosteriorMatrix {
    pub fn new(frames: usize, symbols: usize, values: Vec<f32>) -> Result<Self> {
        if frames == 0 || symbols == 0 {
            return Err(Error::Dimensions(format!(
                "need at least one frame and one symbol, got {frames}x{symbols}"
            )));
        }
        if values.len() != frames * symbols {
            return Err(Error::Dimensions(format!(
                "{frames}x{symbols} matrix needs {} values, got {}",
                frames * symbols,
                values.len()
            )));
        }
        for (frame, row) in values.chunks_exact(symbols).enumerate() {
            if let Some(symbol) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { frame, symbol });
            }
            let logsumexp = log_sum_exp(row.iter().map(|&v| f64::from(v)));
            if logsumexp.abs() > ROW_TOLERANCE {
                return Err(Error::Unnormalized { frame, logsumexp });
            }
        }
        Ok(Self {
            frames,
            symbols,
            values,
        })
    }

    /// Builds a matrix from rows of log-posteriors.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let symbols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * symbols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != symbols {
                return Err(Error::Dimensions("ragged rows".into()));
            }
            values.extend(row.iter().map(|&v| v as f32));
        }
        Self::new(rows.len(), symbols, values)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn symbols(&self) -> usize {
        self.symbols
    }

    #[inline]
    pub fn get(&self, frame: usize, symbol: usize) -> f64 {
        f64::from(self.values[frame * self.symbols + symbol])
    }

    pub fn row(&self, frame: usize) -> &[f32] {
        &self.values[frame * self.symbols..(frame + 1) * self.symbols]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Per-frame argmax (lowest id wins ties).
    pub fn argmax_path(&self) -> Vec<usize> {
        (0..self.frames)
            .map(|t| {
                let row = self.row(t);
                let mut best = 0;
                for (s, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = s;
                    }
                }
                best
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.frames as u32).to_le_bytes());
        out.extend_from_slice(&(self.symbols as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        if bytes.len() < 12 {
            return Err(Error::Truncated {
                expected: 12,
                found: bytes.len(),
            });
        }
        let frames = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let symbols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let expected = frames
            .checked_mul(symbols)
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(12))
            .ok_or_else(|| Error::Dimensions(format!("{frames}x{symbols} overflows")))?;
        if bytes.len() != expected {
            if bytes.len() < expected {
                return Err(Error::Truncated {
                    expected,
                    found: bytes.len(),
                });
            }
            return Err(Error::Dimensions(format!(
                "{} trailing bytes after payload",
                bytes.len() - expected
            )));
        }
        let values = bytes[12..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(frames, symbols, values)
    }

    pub fn read_from<R: Read>(mut reader: R) -> Result<Self> {
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn write_to<W: Write>(&self, mut writer: W) -> Result<()> {
        writer.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}
