//! Binary greyscale PGM (`P5`, maxval 255).
//!
//! Pixels map to `[-1, 1]` as `2p/255 - 1`; saving inverts that map with
//! round-half-to-even. Files are written with the fixed header
//! `P5\n<width> <height>\n255\n`, so a 16×16 image occupies 13 + 256 bytes.
//!
//! Malformed input is rejected with one [`PgmError`] class per failure mode,
//! each carrying the byte offset where parsing stopped.

use std::path::Path;

use thiserror::Error;

use crate::error::Result;
use crate::tensor::Tensor;

/// Largest accepted width or height.
pub const MAX_DIMENSION: usize = 1 << 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PgmError {
    #[error("byte {offset}: not a binary PGM (expected magic `P5`)")]
    BadMagic { offset: usize },
    #[error("byte {offset}: file ended inside the header while reading {field}")]
    UnexpectedEof { offset: usize, field: &'static str },
    #[error("byte {offset}: {field} is not a decimal integer")]
    InvalidNumber { offset: usize, field: &'static str },
    #[error("byte {offset}: {field} is zero")]
    ZeroDimension { offset: usize, field: &'static str },
    #[error("byte {offset}: {field} {value} exceeds {MAX_DIMENSION}")]
    DimensionTooLarge {
        offset: usize,
        field: &'static str,
        value: u64,
    },
    #[error("byte {offset}: unsupported maxval {maxval} (only 255)")]
    UnsupportedMaxval { offset: usize, maxval: u64 },
    #[error("byte {offset}: raster truncated, expected {expected} bytes, found {found}")]
    TruncatedRaster {
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("byte {offset}: {extra} unexpected bytes after the raster")]
    TrailingData { offset: usize, extra: usize },
    #[error("image must be [1, 1, H, W] with finite values: {0}")]
    InvalidImage(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, field: &'static str) -> Result<(u64, usize), PgmError> {
        self.skip_space_and_comments();
        let start = self.pos;
        if start >= self.bytes.len() {
            return Err(PgmError::UnexpectedEof { offset: start, field });
        }
        let mut value: u64 = 0;
        while let Some(&b) = self.bytes.get(self.pos) {
            if !b.is_ascii_digit() {
                break;
            }
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add(u64::from(b - b'0')))
                .ok_or(PgmError::InvalidNumber { offset: start, field })?;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(PgmError::InvalidNumber { offset: start, field });
        }
        match self.bytes.get(self.pos) {
            None => Err(PgmError::UnexpectedEof { offset: self.pos, field }),
            Some(b) if b.is_ascii_whitespace() || *b == b'#' => Ok((value, start)),
            Some(_) => Err(PgmError::InvalidNumber { offset: start, field }),
        }
    }

    fn dimension(&mut self, field: &'static str) -> Result<usize, PgmError> {
        let (v, offset) = self.number(field)?;
        if v == 0 {
            return Err(PgmError::ZeroDimension { offset, field });
        }
        if v > MAX_DIMENSION as u64 {
            return Err(PgmError::DimensionTooLarge { offset, field, value: v });
        }
        Ok(v as usize)
    }
}

/// Parses a P5 file into a `[1, 1, H, W]` tensor with values in `[-1, 1]`.
pub fn parse_pgm(bytes: &[u8]) -> Result<Tensor, PgmError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(PgmError::BadMagic { offset: 0 });
    }
    let mut cur = Cursor { bytes, pos: 2 };
    match bytes.get(2) {
        None => return Err(PgmError::UnexpectedEof { offset: 2, field: "width" }),
        Some(b) if !b.is_ascii_whitespace() && *b != b'#' => return Err(PgmError::BadMagic { offset: 0 }),
        _ => {}
    }
    let width = cur.dimension("width")?;
    let height = cur.dimension("height")?;
    let (maxval, offset) = cur.number("maxval")?;
    if maxval != 255 {
        return Err(PgmError::UnsupportedMaxval { offset, maxval });
    }
    // Exactly one whitespace byte separates maxval from the raster.
    if !bytes[cur.pos].is_ascii_whitespace() {
        return Err(PgmError::InvalidNumber { offset, field: "maxval" });
    }
    cur.pos += 1;
    let expected = width * height;
    let found = bytes.len() - cur.pos;
    if found < expected {
        return Err(PgmError::TruncatedRaster {
            offset: cur.pos,
            expected,
            found,
        });
    }
    if found > expected {
        return Err(PgmError::TrailingData {
            offset: cur.pos + expected,
            extra: found - expected,
        });
    }
    let data = bytes[cur.pos..]
        .iter()
        .map(|&p| 2.0 * f64::from(p) / 255.0 - 1.0)
        .collect();
    Ok(Tensor::new(vec![1, 1, height, width], data).expect("dimensions validated"))
}

/// Encodes a `[1, 1, H, W]` image; values are clamped to `[-1, 1]` first.
pub fn encode_pgm(image: &Tensor) -> Result<Vec<u8>, PgmError> {
    let (h, w) = match *image.shape() {
        [1, 1, h, w] => (h, w),
        ref s => return Err(PgmError::InvalidImage(format!("shape {s:?}"))),
    };
    if !image.all_finite() {
        return Err(PgmError::InvalidImage("non-finite pixel".into()));
    }
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(image.data().iter().map(|&v| {
        let p = ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round_ties_even();
        p.clamp(0.0, 255.0) as u8
    }));
    Ok(out)
}

pub fn load_pgm(path: &Path) -> Result<Tensor, PgmError> {
    let bytes = std::fs::read(path).map_err(|e| PgmError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_pgm(&bytes)
}

pub fn save_pgm(image: &Tensor, path: &Path) -> Result<(), PgmError> {
    let bytes = encode_pgm(image)?;
    std::fs::write(path, bytes).map_err(|e| PgmError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
