//! Binary checkpoint of a generator/discriminator pair.
//!
//! Layout, all integers little-endian `u32`, all reals little-endian IEEE-754
//! `f64`:
//!
//! ```text
//! magic        8 bytes  "FFBEGAN1"
//! config       4 × u32  latent_dim, base_size, channels, stages
//! block count  u32
//! per block    u32 name length, UTF-8 name bytes,
//!              u32 rank, rank × u32 extents,
//!              product(extents) × f64 values
//! ```
//!
//! Generator blocks are named `generator/<param>` and precede the
//! `discriminator/<param>` blocks; within a network, blocks follow the
//! layout order. Saving a loaded checkpoint reproduces the file byte for byte.

use std::path::Path;

use thiserror::Error;

use super::{Discriminator, Generator, GeneratorConfig, ParamSet};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"FFBEGAN1";

const GEN_PREFIX: &str = "generator/";
const DISC_PREFIX: &str = "discriminator/";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("checkpoint truncated at byte {offset} while reading {what}")]
    Truncated { offset: usize, what: &'static str },
    #[error("invalid config block: {0}")]
    InvalidConfig(String),
    #[error("parameter block {index}: expected {expected}, found {found}")]
    UnexpectedBlock {
        index: usize,
        expected: String,
        found: String,
    },
    #[error("parameter {name}: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("{0} trailing bytes after last block")]
    TrailingBytes(usize),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub generator: Generator,
    pub discriminator: Discriminator,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        if self.bytes.len() - self.pos < n {
            return Err(CheckpointError::Truncated { offset: self.pos, what });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<usize, CheckpointError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("checkpoint field fits in u32").to_le_bytes());
}

impl Checkpoint {
    pub fn new(generator: Generator, discriminator: Discriminator) -> Result<Self, CheckpointError> {
        if generator.config() != discriminator.config() {
            return Err(CheckpointError::InvalidConfig(format!(
                "generator {:?} and discriminator {:?} disagree",
                generator.config(),
                discriminator.config()
            )));
        }
        Ok(Self {
            generator,
            discriminator,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        self.generator.config()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = self.config();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        for v in [cfg.latent_dim, cfg.base_size, cfg.channels, cfg.stages] {
            put_u32(&mut out, v);
        }
        let blocks = self.generator.params.len() + self.discriminator.params.len();
        put_u32(&mut out, blocks);
        for (prefix, set) in [(GEN_PREFIX, &self.generator.params), (DISC_PREFIX, &self.discriminator.params)] {
            for (name, t) in set.names().iter().zip(set.tensors()) {
                let full = format!("{prefix}{name}");
                put_u32(&mut out, full.len());
                out.extend_from_slice(full.as_bytes());
                put_u32(&mut out, t.shape().len());
                for &e in t.shape() {
                    put_u32(&mut out, e);
                }
                for v in t.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let mut r = Reader {
            bytes,
            pos: MAGIC.len(),
        };
        let config = GeneratorConfig {
            latent_dim: r.u32("config")?,
            base_size: r.u32("config")?,
            channels: r.u32("config")?,
            stages: r.u32("config")?,
        };
        config
            .validate()
            .map_err(|e| CheckpointError::InvalidConfig(e.to_string()))?;
        let gen_layout = config.generator_layout();
        let disc_layout = config.discriminator_layout();
        let count = r.u32("block count")?;
        let expected: Vec<(String, &Vec<usize>)> = gen_layout
            .iter()
            .map(|(n, s, _)| (format!("{GEN_PREFIX}{n}"), s))
            .chain(disc_layout.iter().map(|(n, s, _)| (format!("{DISC_PREFIX}{n}"), s)))
            .collect();
        if count != expected.len() {
            return Err(CheckpointError::InvalidConfig(format!(
                "{count} parameter blocks, config implies {}",
                expected.len()
            )));
        }
        let mut tensors = Vec::with_capacity(count);
        for (index, (want_name, want_shape)) in expected.iter().enumerate() {
            let len = r.u32("name length")?;
            let name = String::from_utf8_lossy(r.take(len, "name")?).into_owned();
            if &name != want_name {
                return Err(CheckpointError::UnexpectedBlock {
                    index,
                    expected: want_name.clone(),
                    found: name,
                });
            }
            let rank = r.u32("rank")?;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(r.u32("extent")?);
            }
            if &shape != *want_shape {
                return Err(CheckpointError::ShapeMismatch {
                    name,
                    expected: want_shape.to_vec(),
                    found: shape,
                });
            }
            let numel: usize = shape.iter().product();
            let raw = r.take(numel * 8, "values")?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push(Tensor::new(shape, data).expect("shape checked against layout"));
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
        }
        let disc_tensors = tensors.split_off(gen_layout.len());
        let names = |l: &[(String, Vec<usize>, usize)]| l.iter().map(|(n, _, _)| n.clone()).collect();
        Ok(Self {
            generator: Generator::from_params(config, ParamSet::from_parts(names(&gen_layout), tensors)),
            discriminator: Discriminator::from_params(config, ParamSet::from_parts(names(&disc_layout), disc_tensors)),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}
