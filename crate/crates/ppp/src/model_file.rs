//! Trained networks and the `.ppnn` file format.
//!
//! Layout (little-endian):
//!
//! | bytes   | content                                           |
//! |---------|---------------------------------------------------|
//! | 8       | magic `PPPNNET\0`                                 |
//! | 4       | format version, `u32` (currently 1)               |
//! | 8       | header length `h`, `u64`                          |
//! | `h`     | UTF-8 JSON [`ModelHeader`]                        |
//! | `8·p`   | network parameters, `f64`, `p = header.n_params`  |
//!
//! Parameters are stored layer by layer: for each convolution the weights
//! `[filter][input channel][tap]` then the biases, then for each dense layer
//! the row-major weights `[output][input]` then the biases.

use std::fs;
use std::path::Path;

use ppp_core::nn::{Architecture, ConvSpec, Network, Standardizer};
use ppp_core::simulate::ModelKind;
use ppp_core::sumstats::{l_centered_or_zero, r_grid};
use ppp_core::{PointPattern, Window};
use serde::{Deserialize, Serialize};

use crate::error::IoContext;
use crate::io::WindowRecord;
use crate::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"PPPNNET\0";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureRecord {
    pub input_len: usize,
    /// `[filters, kernel, pool]` per convolution.
    pub conv: Vec<[usize; 3]>,
    pub dense: Vec<usize>,
    pub outputs: usize,
}

impl From<&Architecture> for ArchitectureRecord {
    fn from(a: &Architecture) -> Self {
        Self {
            input_len: a.input_len,
            conv: a.conv.iter().map(|c| [c.filters, c.kernel, c.pool]).collect(),
            dense: a.dense.clone(),
            outputs: a.outputs,
        }
    }
}

impl From<&ArchitectureRecord> for Architecture {
    fn from(a: &ArchitectureRecord) -> Self {
        Self {
            input_len: a.input_len,
            conv: a
                .conv
                .iter()
                .map(|&[filters, kernel, pool]| ConvSpec {
                    filters,
                    kernel,
                    pool,
                })
                .collect(),
            dense: a.dense.clone(),
            outputs: a.outputs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizerRecord {
    pub curve_mean: f64,
    pub curve_sd: f64,
    pub count_mean: f64,
    pub count_sd: f64,
    pub theta_mean: Vec<f64>,
    pub theta_sd: Vec<f64>,
}

impl From<&Standardizer> for StandardizerRecord {
    fn from(s: &Standardizer) -> Self {
        Self {
            curve_mean: s.curve_mean,
            curve_sd: s.curve_sd,
            count_mean: s.count_mean,
            count_sd: s.count_sd,
            theta_mean: s.theta_mean.clone(),
            theta_sd: s.theta_sd.clone(),
        }
    }
}

impl From<&StandardizerRecord> for Standardizer {
    fn from(s: &StandardizerRecord) -> Self {
        Self {
            curve_mean: s.curve_mean,
            curve_sd: s.curve_sd,
            count_mean: s.count_mean,
            count_sd: s.count_sd,
            theta_mean: s.theta_mean.clone(),
            theta_sd: s.theta_sd.clone(),
        }
    }
}

/// Everything needed to apply a network to a new pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub model: String,
    pub parameter_names: Vec<String>,
    pub ranges: Vec<[f64; 2]>,
    pub window: WindowRecord,
    pub r_max: f64,
    pub grid_len: usize,
    /// Smallest and largest point count in the training data.
    pub count_range: [f64; 2],
    pub training_rows: usize,
    pub architecture: ArchitectureRecord,
    pub standardizer: StandardizerRecord,
    pub n_params: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub header: ModelHeader,
    pub network: Network,
    pub standardizer: Standardizer,
}

/// A network estimate with the inputs it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub theta: Vec<f64>,
    pub count: usize,
    pub curve: Vec<f64>,
}

impl TrainedModel {
    pub fn new(
        network: Network,
        standardizer: Standardizer,
        mut header: ModelHeader,
    ) -> Result<Self> {
        header.architecture = network.architecture().into();
        header.standardizer = (&standardizer).into();
        header.n_params = network.n_params();
        if header.grid_len != network.input_len() || header.parameter_names.len() != network.outputs()
        {
            return Err(Error::Incompatible(format!(
                "network maps {} inputs to {} outputs, header says {} and {}",
                network.input_len(),
                network.outputs(),
                header.grid_len,
                header.parameter_names.len()
            )));
        }
        Ok(Self {
            header,
            network,
            standardizer,
        })
    }

    pub fn kind(&self) -> Result<ModelKind> {
        ModelKind::parse(&self.header.model)
            .ok_or_else(|| Error::Invalid(format!("unknown model {:?}", self.header.model)))
    }

    pub fn window(&self) -> Result<Window> {
        self.header.window.try_into()
    }

    pub fn r_grid(&self) -> Vec<f64> {
        r_grid(self.header.r_max, self.header.grid_len)
    }

    /// Predict θ from a precomputed centred L curve and count.
    pub fn predict(&self, curve: &[f64], count: f64) -> Result<Vec<f64>> {
        let z = self.network.predict(
            &self.standardizer.standardize_curve(curve),
            self.standardizer.standardize_count(count),
        )?;
        Ok(self.standardizer.destandardize_theta(&z))
    }

    /// Estimate θ for an observed pattern on the training window.
    pub fn estimate(&self, pattern: &PointPattern) -> Result<Estimate> {
        if *pattern.window() != self.window()? {
            return Err(Error::Incompatible(format!(
                "pattern window {:?} differs from the training window {:?}",
                WindowRecord::from(pattern.window()),
                self.header.window
            )));
        }
        let curve = l_centered_or_zero(pattern, &self.r_grid())?;
        let n = pattern.n();
        let [lo, hi] = self.header.count_range;
        if (n as f64) < lo || (n as f64) > hi {
            log::warn!(
                "{n} points lies outside the training counts [{lo}, {hi}]; the estimate is an extrapolation"
            );
        }
        let theta = self.predict(&curve.values, n as f64)?;
        Ok(Estimate {
            theta,
            count: n,
            curve: curve.values,
        })
    }

    /// The model at `theta` moved into the training ranges. Network outputs
    /// are unclamped and may leave the parameter space near its edges.
    pub fn fitted_model(&self, theta: &[f64]) -> Result<ppp_core::simulate::Model> {
        let clamped: Vec<f64> = theta
            .iter()
            .zip(&self.header.ranges)
            .zip(&self.header.parameter_names)
            .map(|((&v, &[lo, hi]), name)| {
                let c = v.clamp(lo, hi);
                if c != v {
                    log::warn!("{name} = {v} lies outside the training range [{lo}, {hi}]; using {c}");
                }
                c
            })
            .collect();
        Ok(self.kind()?.with_theta(&clamped)?)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let params = self.network.params();
        let mut out = Vec::with_capacity(20 + header.len() + 8 * params.len());
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for p in params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |detail: String| Error::Corrupt {
            what: "model",
            detail,
        };
        if bytes.len() < 20 || &bytes[..8] != MODEL_MAGIC {
            return Err(Error::BadMagic { expected: "model" });
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != MODEL_VERSION {
            return Err(Error::Version {
                what: "model",
                found: version,
                expected: MODEL_VERSION,
            });
        }
        let h = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let end = 20usize
            .checked_add(h)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| corrupt("truncated header".into()))?;
        let header: ModelHeader = serde_json::from_slice(&bytes[20..end])?;
        let body = &bytes[end..];
        if body.len() != 8 * header.n_params {
            return Err(corrupt(format!(
                "{} parameter bytes, header implies {}",
                body.len(),
                8 * header.n_params
            )));
        }
        let params = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let network = Network::from_params((&header.architecture).into(), params)
            .map_err(|e| corrupt(e.to_string()))?;
        let standardizer = (&header.standardizer).into();
        Self::new(network, standardizer, header)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).at(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).at(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ppp_core::nn::Examples;
    use ppp_core::Point;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_model() -> TrainedModel {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = 256;
        let arch = Architecture::standard(m, 2);
        let net = Network::glorot(arch.clone(), &mut rng).unwrap();
        let mut ex = Examples::new(m, 2);
        for _ in 0..10 {
            let c: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
            ex.push(&c, rng.random_range(10.0..50.0), &[rng.random(), rng.random()])
                .unwrap();
        }
        let st = Standardizer::fit(&ex).unwrap();
        let header = ModelHeader {
            model: "lgcp".into(),
            parameter_names: vec!["a".into(), "b".into()],
            ranges: vec![[0.0, 1.0]; 2],
            window: (&Window::unit_square()).into(),
            r_max: 0.25,
            grid_len: m,
            count_range: [10.0, 50.0],
            training_rows: 10,
            architecture: (&arch).into(),
            standardizer: (&st).into(),
            n_params: 0,
        };
        TrainedModel::new(net, st, header).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let m = toy_model();
        let back = TrainedModel::from_bytes(&m.to_bytes().unwrap()).unwrap();
        assert_eq!(back, m);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let c: Vec<f64> = (0..256).map(|_| rng.random::<f64>() - 0.5).collect();
            let n = rng.random_range(0.0..100.0);
            let a = m.predict(&c, n).unwrap();
            let b = back.predict(&c, n).unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let b = toy_model().to_bytes().unwrap();
        assert!(matches!(
            TrainedModel::from_bytes(&b[..b.len() - 3]),
            Err(Error::Corrupt { .. })
        ));
        assert!(matches!(
            TrainedModel::from_bytes(&b[..30]),
            Err(Error::Corrupt { .. })
        ));
        let mut v = b;
        v[8..12].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(TrainedModel::from_bytes(&v), Err(Error::Version { .. })));
    }

    #[test]
    fn estimate_is_deterministic_and_checks_window() {
        let m = toy_model();
        let pts = vec![Point::new(0.2, 0.3), Point::new(0.7, 0.1), Point::new(0.5, 0.5)];
        let p = PointPattern::new(pts.clone(), Window::unit_square()).unwrap();
        let a = m.estimate(&p).unwrap();
        assert_eq!(a, m.estimate(&p).unwrap());
        assert_eq!(a.count, 3);
        let q = PointPattern::new(pts, Window::new(0.0, 2.0, 0.0, 1.0).unwrap()).unwrap();
        assert!(matches!(m.estimate(&q), Err(Error::Incompatible(_))));
    }

    #[test]
    fn fitted_model_is_clamped_to_ranges() {
        let mut m = toy_model();
        m.header.model = "strauss".into();
        m.header.parameter_names = vec!["beta".into(), "gamma".into(), "R".into()];
        m.header.ranges = vec![[200.0, 900.0], [0.0, 1.0], [0.0, 0.05]];
        let fit = m.fitted_model(&[950.0, -0.1, 0.02]).unwrap();
        assert_eq!(fit.theta(), vec![900.0, 0.0, 0.02]);
    }
}
