//! Training sets and their binary file format.
//!
//! Layout (all integers and floats little-endian):
//!
//! | bytes            | content                                          |
//! |------------------|--------------------------------------------------|
//! | 8                | magic `PPPDATA\0`                                |
//! | 4                | format version, `u32` (currently 1)              |
//! | 8                | header length `h`, `u64`                         |
//! | `h`              | UTF-8 JSON [`DatasetMeta`]                       |
//! | `8·n·m`          | curves, `f64`, row-major (`n` rows, `m` r-values)|
//! | `8·n`            | point counts, `f64`                              |
//! | `8·n·k`          | parameter vectors, `f64`, row-major              |
//! | `8·n`            | random stream of each row, `u64`                 |
//! | `n`              | flags, `u8`; bit 0 marks a degenerate pattern    |

use std::fs;
use std::path::Path;

use ppp_core::nn::Examples;
use ppp_core::simulate::{ModelKind, SimulationSettings};
use ppp_core::sumstats::r_grid;
use ppp_core::Window;
use serde::{Deserialize, Serialize};

use crate::error::IoContext;
use crate::io::WindowRecord;
use crate::{Error, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"PPPDATA\0";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub resolution: usize,
    pub strauss_iterations: usize,
    pub lgcp_strauss_iterations: usize,
}

impl From<SimulationSettings> for SimulationRecord {
    fn from(s: SimulationSettings) -> Self {
        Self {
            resolution: s.resolution,
            strauss_iterations: s.strauss_iterations,
            lgcp_strauss_iterations: s.lgcp_strauss_iterations,
        }
    }
}

impl From<SimulationRecord> for SimulationSettings {
    fn from(s: SimulationRecord) -> Self {
        Self {
            resolution: s.resolution,
            strauss_iterations: s.strauss_iterations,
            lgcp_strauss_iterations: s.lgcp_strauss_iterations,
        }
    }
}

/// A row whose simulation failed twice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRow {
    pub stream: u64,
    pub theta: Vec<f64>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub model: String,
    pub parameter_names: Vec<String>,
    pub ranges: Vec<[f64; 2]>,
    pub window: WindowRecord,
    pub r_max: f64,
    pub grid_len: usize,
    pub seed: u64,
    pub simulation: SimulationRecord,
    pub rows: usize,
    #[serde(default)]
    pub failed: Vec<FailedRow>,
}

impl DatasetMeta {
    pub fn kind(&self) -> Result<ModelKind> {
        ModelKind::parse(&self.model)
            .ok_or_else(|| Error::Invalid(format!("unknown model {:?}", self.model)))
    }

    pub fn window(&self) -> Result<Window> {
        self.window.try_into()
    }

    pub fn r_grid(&self) -> Vec<f64> {
        r_grid(self.r_max, self.grid_len)
    }
}

/// Rows of (centred L curve, point count, parameter vector) with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub meta: DatasetMeta,
    pub curves: Vec<f64>,
    pub counts: Vec<f64>,
    pub thetas: Vec<f64>,
    pub streams: Vec<u64>,
    pub degenerate: Vec<bool>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn grid_len(&self) -> usize {
        self.meta.grid_len
    }

    pub fn dim(&self) -> usize {
        self.meta.parameter_names.len()
    }

    pub fn curve(&self, i: usize) -> &[f64] {
        let m = self.grid_len();
        &self.curves[i * m..(i + 1) * m]
    }

    pub fn theta(&self, i: usize) -> &[f64] {
        let k = self.dim();
        &self.thetas[i * k..(i + 1) * k]
    }

    /// Raw-scale network examples.
    pub fn examples(&self) -> Result<Examples> {
        Ok(Examples::from_parts(
            self.grid_len(),
            self.dim(),
            self.curves.clone(),
            self.counts.clone(),
            self.thetas.clone(),
        )?)
    }

    /// The first `n` rows.
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len());
        let (m, k) = (self.grid_len(), self.dim());
        let mut meta = self.meta.clone();
        meta.rows = n;
        Self {
            meta,
            curves: self.curves[..n * m].to_vec(),
            counts: self.counts[..n].to_vec(),
            thetas: self.thetas[..n * k].to_vec(),
            streams: self.streams[..n].to_vec(),
            degenerate: self.degenerate[..n].to_vec(),
        }
    }

    /// Reject a set whose grid or window differs from the expected one.
    pub fn check_compatible(&self, window: &Window, r_max: f64, grid_len: usize) -> Result<()> {
        if self.meta.grid_len != grid_len || self.meta.r_max != r_max {
            return Err(Error::Incompatible(format!(
                "data grid has {} values up to {}, expected {} up to {}",
                self.meta.grid_len, self.meta.r_max, grid_len, r_max
            )));
        }
        if self.meta.window()? != *window {
            return Err(Error::Incompatible(
                "data were simulated on a different window".into(),
            ));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.meta)?;
        let n = self.len();
        let mut out = Vec::with_capacity(20 + header.len() + n * (8 * (self.grid_len() + self.dim() + 2) + 1));
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for block in [&self.curves, &self.counts, &self.thetas] {
            for v in block.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for s in &self.streams {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out.extend(self.degenerate.iter().map(|&d| d as u8));
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |detail: &str| Error::Corrupt {
            what: "training set",
            detail: detail.to_string(),
        };
        if bytes.len() < 20 || &bytes[..8] != DATASET_MAGIC {
            return Err(Error::BadMagic {
                expected: "training set",
            });
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != DATASET_VERSION {
            return Err(Error::Version {
                what: "training set",
                found: version,
                expected: DATASET_VERSION,
            });
        }
        let h = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body_start = 20usize.checked_add(h).filter(|&e| e <= bytes.len()).ok_or_else(|| corrupt("truncated header"))?;
        let meta: DatasetMeta = serde_json::from_slice(&bytes[20..body_start])?;
        let (n, m, k) = (meta.rows, meta.grid_len, meta.parameter_names.len());
        if meta.ranges.len() != k {
            return Err(corrupt("ranges and parameter names differ in length"));
        }
        let expected = n * (8 * (m + k + 2) + 1);
        let body = &bytes[body_start..];
        if body.len() != expected {
            return Err(corrupt(&format!(
                "body has {} bytes, header implies {expected}",
                body.len()
            )));
        }
        let f64s = |b: &[u8]| -> Vec<f64> {
            b.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect()
        };
        let (curves, rest) = body.split_at(8 * n * m);
        let (counts, rest) = rest.split_at(8 * n);
        let (thetas, rest) = rest.split_at(8 * n * k);
        let (streams, flags) = rest.split_at(8 * n);
        Ok(Self {
            meta,
            curves: f64s(curves),
            counts: f64s(counts),
            thetas: f64s(thetas),
            streams: streams
                .chunks_exact(8)
                .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            degenerate: flags.iter().map(|&f| f & 1 == 1).collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).at(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).at(path)?)
    }
}
