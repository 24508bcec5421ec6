//! Training-data generation, training, evaluation and the diagnostics built
//! on top of them.

use std::sync::atomic::{AtomicUsize, Ordering};

use ppp_core::envelopes::{global_envelope, global_envelope_curves, EnvelopeResult};
use ppp_core::nn::{train, Architecture, History, Network, Standardizer};
use ppp_core::simulate::{simulate_with, FactorSource, Model};
use ppp_core::sumstats::{default_grid_for, estimate, l_centered_or_zero, SummaryKind};
use ppp_core::PointPattern;
use rand::Rng;
use rayon::prelude::*;

use crate::config::{RunConfig, TrainingConfig};
use crate::dataset::{DatasetMeta, FailedRow, TrainingSet};
use crate::model_file::{ModelHeader, TrainedModel};
use crate::rng::{substream, VALIDATION_STREAMS};
use crate::{Error, Result};

struct Row {
    stream: u64,
    theta: Vec<f64>,
    outcome: std::result::Result<(Vec<f64>, usize, bool), String>,
}

/// Simulate `rows` patterns with θ drawn uniformly from the configured
/// ranges. Row `i` uses random stream `first_stream + i` of `cfg.seed`; a row
/// whose simulation fails is retried once on the same stream and then left
/// out and listed in the metadata.
pub fn generate_training_data<F: FactorSource + Sync + ?Sized>(
    cfg: &RunConfig,
    rows: usize,
    first_stream: u64,
    factors: &F,
) -> Result<TrainingSet> {
    cfg.validate()?;
    let kind = cfg.kind()?;
    let window = cfg.window()?;
    let ranges = cfg.ordered_ranges()?;
    let r = cfg.r_grid()?;
    let settings = cfg.settings();
    let done = AtomicUsize::new(0);
    let step = (rows / 10).max(1);

    let results: Vec<Row> = (0..rows)
        .into_par_iter()
        .map(|i| {
            let stream = first_stream + i as u64;
            let mut rng = substream(cfg.seed, stream);
            let theta: Vec<f64> = ranges
                .iter()
                .map(|&[lo, hi]| rng.random_range(lo..hi))
                .collect();
            let mut attempt = || -> ppp_core::Result<(Vec<f64>, usize, bool)> {
                let model = kind.with_theta(&theta)?;
                let x = simulate_with(&model, &window, &settings, factors, &mut rng)?;
                let l = l_centered_or_zero(&x, &r)?;
                Ok((l.values, x.n(), l.degenerate))
            };
            let outcome = attempt()
                .or_else(|e| {
                    log::debug!("stream {stream}: {e}; retrying");
                    attempt()
                })
                .map_err(|e| e.to_string());
            let k = done.fetch_add(1, Ordering::Relaxed) + 1;
            if k % step == 0 {
                log::info!("simulated {k} of {rows} patterns");
            }
            Row {
                stream,
                theta,
                outcome,
            }
        })
        .collect();

    let m = r.len();
    let mut set = TrainingSet {
        meta: DatasetMeta {
            model: kind.name().into(),
            parameter_names: kind.parameter_names().iter().map(|s| s.to_string()).collect(),
            ranges,
            window: (&window).into(),
            r_max: cfg.r_max()?,
            grid_len: m,
            seed: cfg.seed,
            simulation: settings.into(),
            rows: 0,
            failed: Vec::new(),
        },
        curves: Vec::with_capacity(rows * m),
        counts: Vec::with_capacity(rows),
        thetas: Vec::with_capacity(rows * kind.dim()),
        streams: Vec::with_capacity(rows),
        degenerate: Vec::with_capacity(rows),
    };
    for row in results {
        match row.outcome {
            Ok((curve, n, degenerate)) => {
                set.curves.extend_from_slice(&curve);
                set.counts.push(n as f64);
                set.thetas.extend_from_slice(&row.theta);
                set.streams.push(row.stream);
                set.degenerate.push(degenerate);
            }
            Err(error) => {
                log::warn!("stream {} failed twice: {error}", row.stream);
                set.meta.failed.push(FailedRow {
                    stream: row.stream,
                    theta: row.theta,
                    error,
                });
            }
        }
    }
    set.meta.rows = set.counts.len();
    let flagged = set.degenerate.iter().filter(|&&d| d).count();
    if flagged > 0 {
        log::info!("{flagged} patterns have fewer than 2 points and a zero curve");
    }
    Ok(set)
}

/// Fit the standardizer on `data`, initialise the standard network from
/// `opts.seed` and train it. `test`, when given, is scaled with the training
/// standardizer and scored after every epoch.
pub fn train_model(
    data: &TrainingSet,
    test: Option<&TrainingSet>,
    opts: &TrainingConfig,
) -> Result<(TrainedModel, History)> {
    let window = data.meta.window()?;
    if let Some(t) = test {
        t.check_compatible(&window, data.meta.r_max, data.meta.grid_len)?;
        if t.meta.model != data.meta.model {
            return Err(Error::Incompatible(format!(
                "test set model {} differs from training model {}",
                t.meta.model, data.meta.model
            )));
        }
    }
    let raw = data.examples()?;
    let standardizer = Standardizer::fit(&raw)?;
    let z = standardizer.standardize(&raw)?;
    let z_test = test
        .map(|t| t.examples().and_then(|e| Ok(standardizer.standardize(&e)?)))
        .transpose()?;
    let mut rng = substream(opts.seed, 0);
    let arch = Architecture::standard(data.grid_len(), data.dim());
    let mut net = Network::glorot(arch.clone(), &mut rng)?;
    let history = train(&mut net, &z, z_test.as_ref(), &opts.options(), &mut rng)?;

    let lo = data.counts.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.counts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let header = ModelHeader {
        model: data.meta.model.clone(),
        parameter_names: data.meta.parameter_names.clone(),
        ranges: data.meta.ranges.clone(),
        window: data.meta.window,
        r_max: data.meta.r_max,
        grid_len: data.meta.grid_len,
        count_range: [lo, hi],
        training_rows: data.len(),
        architecture: (&arch).into(),
        standardizer: (&standardizer).into(),
        n_params: net.n_params(),
    };
    Ok((TrainedModel::new(net, standardizer, header)?, history))
}

/// Test-set predictions and error summaries on the natural scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub parameter_names: Vec<String>,
    /// Row-major `rows × k` true values.
    pub truth: Vec<f64>,
    /// Row-major `rows × k` predictions.
    pub predicted: Vec<f64>,
    pub rmse: Vec<f64>,
    pub bias: Vec<f64>,
    pub correlation: Vec<f64>,
    /// Per-parameter MSE divided by the test-set variance of that parameter.
    pub standardized_mse: Vec<f64>,
    /// Mean of [`Self::standardized_mse`].
    pub overall_mse: f64,
}

impl Evaluation {
    pub fn rows(&self) -> usize {
        self.truth.len() / self.parameter_names.len().max(1)
    }

    /// Column `j` of the truth and prediction tables.
    pub fn column(&self, j: usize) -> (Vec<f64>, Vec<f64>) {
        let k = self.parameter_names.len();
        let t = self.truth.iter().skip(j).step_by(k).copied().collect();
        let p = self.predicted.iter().skip(j).step_by(k).copied().collect();
        (t, p)
    }

    /// Error summaries from explicit truth and prediction tables.
    pub fn from_predictions(
        parameter_names: Vec<String>,
        truth: Vec<f64>,
        predicted: Vec<f64>,
    ) -> Result<Self> {
        let k = parameter_names.len();
        if k == 0 || truth.len() != predicted.len() || truth.len() % k != 0 || truth.is_empty() {
            return Err(Error::Invalid("prediction table has the wrong shape".into()));
        }
        let mut e = Self {
            parameter_names,
            truth,
            predicted,
            rmse: Vec::new(),
            bias: Vec::new(),
            correlation: Vec::new(),
            standardized_mse: Vec::new(),
            overall_mse: 0.0,
        };
        for j in 0..k {
            let (t, p) = e.column(j);
            let n = t.len() as f64;
            let mse = t.iter().zip(&p).map(|(a, b)| (b - a).powi(2)).sum::<f64>() / n;
            let bias = t.iter().zip(&p).map(|(a, b)| b - a).sum::<f64>() / n;
            let mean = t.iter().sum::<f64>() / n;
            let var = t.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
            e.rmse.push(mse.sqrt());
            e.bias.push(bias);
            e.correlation.push(correlation(&t, &p));
            e.standardized_mse.push(if var > 0.0 { mse / var } else { f64::NAN });
        }
        e.overall_mse = e.standardized_mse.iter().sum::<f64>() / k as f64;
        Ok(e)
    }
}

/// Pearson correlation; NaN when either input is constant.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Predict every row of `test` and summarise the errors.
pub fn evaluate_on_test(model: &TrainedModel, test: &TrainingSet) -> Result<Evaluation> {
    test.check_compatible(&model.window()?, model.header.r_max, model.header.grid_len)?;
    if test.dim() != model.network.outputs() {
        return Err(Error::Incompatible("test set has a different parameter count".into()));
    }
    let predicted: Vec<Vec<f64>> = (0..test.len())
        .into_par_iter()
        .map(|i| model.predict(test.curve(i), test.counts[i]))
        .collect::<Result<_>>()?;
    Evaluation::from_predictions(
        model.header.parameter_names.clone(),
        test.thetas.clone(),
        predicted.concat(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeResult {
    pub n_train: usize,
    pub evaluation: Evaluation,
    pub history: History,
}

/// Train one network per size on the first `size` rows of `data`, all from
/// the same initial seed, and score each on `test`.
pub fn size_study(
    data: &TrainingSet,
    test: &TrainingSet,
    sizes: &[usize],
    opts: &TrainingConfig,
) -> Result<Vec<SizeResult>> {
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid("sizes must be strictly increasing".into()));
    }
    if let Some(&last) = sizes.last() {
        if last > data.len() {
            return Err(Error::Invalid(format!(
                "largest size {last} exceeds the {} training rows",
                data.len()
            )));
        }
    }
    sizes
        .iter()
        .map(|&n| {
            log::info!("size study: training on {n} rows");
            let (model, history) = train_model(&data.head(n), Some(test), opts)?;
            let evaluation = evaluate_on_test(&model, test)?;
            log::info!("size study: {n} rows, test mse {:.5}", evaluation.overall_mse);
            Ok(SizeResult {
                n_train: n,
                evaluation,
                history,
            })
        })
        .collect()
}

/// Whether an observed pattern is well represented in a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub count: usize,
    /// Fraction of training counts at or below the observed count.
    pub count_quantile: f64,
    pub count_range: [f64; 2],
    pub envelope: EnvelopeResult,
}

impl CoverageReport {
    pub fn curve_inside(&self) -> bool {
        self.envelope.contains_data()
    }
}

/// Count quantile and the global envelope of the training curves around the
/// observed centred L curve.
pub fn coverage_check(data: &TrainingSet, pattern: &PointPattern, alpha: f64) -> Result<CoverageReport> {
    data.check_compatible(pattern.window(), data.meta.r_max, data.meta.grid_len)?;
    let r = data.meta.r_grid();
    let observed = l_centered_or_zero(pattern, &r)?;
    let n = pattern.n();
    let below = data.counts.iter().filter(|&&c| c <= n as f64).count();
    let sims: Vec<&[f64]> = (0..data.len()).map(|i| data.curve(i)).collect();
    let envelope = global_envelope(&r, &observed.values, &sims, alpha)?;
    let lo = data.counts.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.counts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(CoverageReport {
        count: n,
        count_quantile: below as f64 / data.len().max(1) as f64,
        count_range: [lo, hi],
        envelope,
    })
}

/// Global envelope test of a fitted model: simulations run in parallel, sim
/// `i` on stream `VALIDATION_STREAMS + i` of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn validate_fit_parallel<F: FactorSource + Sync + ?Sized>(
    pattern: &PointPattern,
    model: &Model,
    n_sim: usize,
    kind: SummaryKind,
    alpha: f64,
    settings: &ppp_core::simulate::SimulationSettings,
    factors: &F,
    seed: u64,
) -> Result<EnvelopeResult> {
    let r = default_grid_for(kind, pattern);
    let data = estimate(kind, pattern, &r)?;
    let sims = (0..n_sim)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, VALIDATION_STREAMS + i as u64);
            let x = simulate_with(model, pattern.window(), settings, factors, &mut rng)?;
            estimate(kind, &x, &r)
        })
        .collect::<ppp_core::Result<Vec<_>>>()?;
    Ok(global_envelope_curves(&data, &sims, alpha)?)
}
