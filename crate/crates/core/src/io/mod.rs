//! Snapshot files: a flat little-endian binary grid, CSV tables and JSON manifests.
//!
//! Binary grid layout: eight little-endian `u64` header words
//!
//! | word | content                                  |
//! |------|------------------------------------------|
//! | 0    | magic `b"ZRPGRID\0"`                     |
//! | 1    | format version (1)                       |
//! | 2    | dimension `d`                            |
//! | 3    | side `N`                                 |
//! | 4    | dtype code (1 = `f64`, 2 = `u32`)        |
//! | 5    | number of fields                         |
//! | 6    | seed                                     |
//! | 7    | reserved, 0                              |
//!
//! followed by each field in turn, `N^d` values in site order.

use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::environment::EnvironmentField;
use crate::error::{Error, Result};
use crate::lattice::{DensityField, LatticeShape, ParticleConfig};

pub const GRID_MAGIC: [u8; 8] = *b"ZRPGRID\0";
pub const GRID_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum GridData {
    F64(Vec<Vec<f64>>),
    U32(Vec<Vec<u32>>),
}

impl GridData {
    fn dtype(&self) -> u64 {
        match self {
            GridData::F64(_) => 1,
            GridData::U32(_) => 2,
        }
    }

    fn field_count(&self) -> usize {
        match self {
            GridData::F64(f) => f.len(),
            GridData::U32(f) => f.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFile {
    pub shape: LatticeShape,
    pub seed: u64,
    pub data: GridData,
}

impl GridFile {
    pub fn from_config(cfg: &ParticleConfig, seed: u64) -> Self {
        Self { shape: cfg.shape(), seed, data: GridData::U32(vec![cfg.occupations().to_vec()]) }
    }

    pub fn from_field(field: &DensityField, seed: u64) -> Self {
        Self { shape: field.shape, seed, data: GridData::F64(vec![field.values.clone()]) }
    }

    /// Two `f64` fields, molecule counts then rates; the count field is zero
    /// for environments without molecules.
    pub fn from_environment(env: &EnvironmentField) -> Self {
        let zeta: Vec<f64> = if env.zeta().is_empty() {
            vec![0.0; env.shape().volume()]
        } else {
            env.zeta().iter().map(|&z| z as f64).collect()
        };
        Self { shape: env.shape(), seed: env.seed(), data: GridData::F64(vec![zeta, env.rates().to_vec()]) }
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let volume = self.shape.volume();
        let lengths_ok = match &self.data {
            GridData::F64(f) => f.iter().all(|v| v.len() == volume),
            GridData::U32(f) => f.iter().all(|v| v.len() == volume),
        };
        if !lengths_ok {
            return Err(Error::GridMismatch("field length differs from lattice volume".into()));
        }
        let header = [
            u64::from_le_bytes(GRID_MAGIC),
            GRID_VERSION,
            self.shape.d as u64,
            self.shape.n as u64,
            self.data.dtype(),
            self.data.field_count() as u64,
            self.seed,
            0,
        ];
        let mut buf = Vec::with_capacity(64 + volume * 8 * self.data.field_count());
        for word in header {
            buf.extend_from_slice(&word.to_le_bytes());
        }
        match &self.data {
            GridData::F64(fields) => fields.iter().flatten().for_each(|v| buf.extend_from_slice(&v.to_le_bytes())),
            GridData::U32(fields) => fields.iter().flatten().for_each(|v| buf.extend_from_slice(&v.to_le_bytes())),
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut head = [0u8; 64];
        r.read_exact(&mut head).map_err(|_| Error::Format("truncated grid header".into()))?;
        let word = |i: usize| u64::from_le_bytes(head[8 * i..8 * i + 8].try_into().unwrap());
        if head[..8] != GRID_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        if word(1) != GRID_VERSION {
            return Err(Error::Format(format!("unsupported version {}", word(1))));
        }
        let shape = LatticeShape::new(word(2) as usize, word(3) as usize)?;
        let count = word(5) as usize;
        let volume = shape.volume();
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        let data = match word(4) {
            1 => {
                if body.len() != count * volume * 8 {
                    return Err(Error::Format(format!("expected {} data bytes, found {}", count * volume * 8, body.len())));
                }
                let vals: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
                GridData::F64(vals.chunks(volume.max(1)).map(<[f64]>::to_vec).take(count).collect())
            }
            2 => {
                if body.len() != count * volume * 4 {
                    return Err(Error::Format(format!("expected {} data bytes, found {}", count * volume * 4, body.len())));
                }
                let vals: Vec<u32> = body.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
                GridData::U32(vals.chunks(volume.max(1)).map(<[u32]>::to_vec).take(count).collect())
            }
            code => return Err(Error::Format(format!("unknown dtype code {code}"))),
        };
        Ok(Self { shape, seed: word(6), data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        self.write_to(&mut bytes)?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

/// `u1,…,ud,value` rows at cell centres.
pub fn field_csv(field: &DensityField) -> String {
    let d = field.shape.d;
    let mut s: String = (1..=d).map(|i| format!("u{i},")).collect();
    s.push_str("value\n");
    for (j, v) in field.values.iter().enumerate() {
        for c in field.shape.cell_center(j) {
            s.push_str(&format!("{c},"));
        }
        s.push_str(&format!("{v}\n"));
    }
    s
}

/// `x1,…,xd,eta` rows.
pub fn config_csv(cfg: &ParticleConfig) -> String {
    let shape = cfg.shape();
    let mut s: String = (1..=shape.d).map(|i| format!("x{i},")).collect();
    s.push_str("eta\n");
    for x in 0..shape.volume() {
        for c in shape.coords(x) {
            s.push_str(&format!("{c},"));
        }
        s.push_str(&format!("{}\n", cfg.get(x)));
    }
    s
}

/// Lower-case hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of the little-endian bytes of a float slice.
pub fn hash_values(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    values.iter().for_each(|v| bytes.extend_from_slice(&v.to_le_bytes()));
    sha256_hex(&bytes)
}

/// Run metadata written next to every output set.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub code_version: String,
    pub config_hash: String,
    pub base_seed: u64,
    pub seeds: Vec<u64>,
    pub files: Vec<String>,
    pub details: serde_json::Value,
}

impl Manifest {
    pub fn new(experiment: &str, config_text: &str, base_seed: u64) -> Self {
        Self {
            experiment: experiment.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: sha256_hex(config_text.as_bytes()),
            base_seed,
            seeds: Vec::new(),
            files: Vec::new(),
            details: serde_json::Value::Null,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}
