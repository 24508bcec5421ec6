//! Samplers for the Poisson, log-Gaussian Cox (LGCP), Strauss and
//! LGCP-Strauss processes.
//!
//! Gibbs-type models run a birth–death Metropolis–Hastings chain from the
//! empty configuration. The Strauss chain runs on the window dilated by `2R`
//! and the result is clipped back. For LGCP-Strauss the field is drawn on the
//! observation window only; proposals in the margin take the value of the
//! nearest cell.
//!
//! All samplers are pure functions of their parameters and the RNG.

mod birth_death;
mod field;

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods whenever std is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Poisson};

pub use birth_death::ChainTrace;
pub use field::{
    sample_grf, sample_grf_with, CorrelationFactor, FieldGrid, GridGeometry, GrfParams,
};

use crate::geometry::{Point, PointPattern, Window};
use crate::{Error, Result};
use birth_death::{run_chain, Interaction};

pub const DEFAULT_FIELD_RESOLUTION: usize = 32;
pub const DEFAULT_STRAUSS_ITERATIONS: usize = 100_000;
pub const DEFAULT_LGCP_STRAUSS_ITERATIONS: usize = 200_000;

/// Strauss process parameters: activity `β`, interaction `γ`, radius `R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StraussParams {
    pub beta: f64,
    pub gamma: f64,
    pub radius: f64,
}

impl StraussParams {
    pub fn new(beta: f64, gamma: f64, radius: f64) -> Result<Self> {
        let p = Self {
            beta,
            gamma,
            radius,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidParameter(format!("beta = {}", self.beta)));
        }
        validate_interaction(self.gamma, self.radius)
    }
}

fn validate_interaction(gamma: f64, radius: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!("gamma = {gamma}")));
    }
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(Error::InvalidParameter(format!("R = {radius}")));
    }
    Ok(())
}

/// LGCP-Strauss parameters `(μ, σ², s, γ, R)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LgcpStraussParams {
    pub grf: GrfParams,
    pub gamma: f64,
    pub radius: f64,
}

impl LgcpStraussParams {
    pub fn new(grf: GrfParams, gamma: f64, radius: f64) -> Result<Self> {
        let p = Self { grf, gamma, radius };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.grf.validate()?;
        validate_interaction(self.gamma, self.radius)
    }
}

/// Papangelou conditional intensity `β γ^{t(u, x)}` of the Strauss process.
pub fn papangelou_strauss(u: &Point, x: &PointPattern, p: &StraussParams) -> f64 {
    let r2 = p.radius * p.radius;
    let t = x
        .points()
        .iter()
        .filter(|v| u.distance_squared(v) <= r2)
        .count();
    if t == 0 {
        p.beta
    } else {
        p.beta * p.gamma.powi(t as i32)
    }
}

/// Homogeneous Poisson process with the given intensity.
pub fn sample_poisson<R: Rng + ?Sized>(
    window: &Window,
    intensity: f64,
    rng: &mut R,
) -> Result<PointPattern> {
    if !(intensity >= 0.0) || !intensity.is_finite() {
        return Err(Error::InvalidParameter(format!("intensity = {intensity}")));
    }
    let n = poisson_count(intensity * window.area(), rng);
    let pts = (0..n)
        .map(|_| window.lerp(rng.random(), rng.random()))
        .collect();
    PointPattern::new(pts, *window)
}

fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    match Poisson::new(mean) {
        Ok(d) => {
            let v: f64 = d.sample(rng);
            v as usize
        }
        // Means beyond the sampler's range are far outside any usable regime.
        Err(_) => mean as usize,
    }
}

/// Inhomogeneous Poisson draw driven by `exp(field)`: per-cell Poisson counts
/// placed uniformly inside each cell.
pub fn sample_cox_from_field<R: Rng + ?Sized>(field: &FieldGrid, rng: &mut R) -> PointPattern {
    let g = field.geometry();
    let (cw, ch, area) = (g.cell_width(), g.cell_height(), g.cell_area());
    let w = g.window;
    let res = g.resolution;
    let mut pts = Vec::new();
    for row in 0..res {
        for col in 0..res {
            let mean = field.value(col, row).exp() * area;
            let k = poisson_count(mean, rng);
            let x0 = w.x_min() + col as f64 * cw;
            let y0 = w.y_min() + row as f64 * ch;
            for _ in 0..k {
                pts.push(Point::new(
                    x0 + rng.random::<f64>() * cw,
                    y0 + rng.random::<f64>() * ch,
                ));
            }
        }
    }
    PointPattern::clipped(pts, w)
}

/// Log-Gaussian Cox process on `window`.
pub fn sample_lgcp<R: Rng + ?Sized>(
    window: &Window,
    params: &GrfParams,
    resolution: usize,
    rng: &mut R,
) -> Result<PointPattern> {
    let field = sample_grf(window, resolution, params, rng)?;
    Ok(sample_cox_from_field(&field, rng))
}

/// Strauss process on `window`, simulated on the `2R`-dilated window.
pub fn sample_strauss<R: Rng + ?Sized>(
    window: &Window,
    params: &StraussParams,
    n_iter: usize,
    rng: &mut R,
) -> Result<PointPattern> {
    sample_strauss_traced(window, params, n_iter, 0, rng).map(|(p, _)| p)
}

/// As [`sample_strauss`], also recording `(n, S_R)` every `thin` iterations
/// (no trace when `thin == 0`). The trace refers to the extended window.
pub fn sample_strauss_traced<R: Rng + ?Sized>(
    window: &Window,
    params: &StraussParams,
    n_iter: usize,
    thin: usize,
    rng: &mut R,
) -> Result<(PointPattern, Option<ChainTrace>)> {
    params.validate()?;
    check_iterations(n_iter)?;
    let ext = window.dilate(2.0 * params.radius)?;
    let beta = params.beta;
    let (pts, trace) = run_chain(
        &ext,
        Interaction {
            radius: params.radius,
            gamma: params.gamma,
        },
        |_| beta,
        n_iter,
        thin,
        rng,
    );
    Ok((PointPattern::clipped(pts, *window), trace))
}

/// LGCP-Strauss process: one field draw, then a birth–death chain targeting
/// the density proportional to `exp(Σ Y(x_i)) γ^{S_R(x)}`.
pub fn sample_lgcp_strauss<R: Rng + ?Sized>(
    window: &Window,
    params: &LgcpStraussParams,
    resolution: usize,
    n_iter: usize,
    rng: &mut R,
) -> Result<PointPattern> {
    let field = sample_grf(window, resolution, &params.grf, rng)?;
    lgcp_strauss_given_field(window, &field, params, n_iter, 0, rng).map(|(p, _)| p)
}

/// Gibbs part of the LGCP-Strauss sampler for a given field on `window`.
pub fn lgcp_strauss_given_field<R: Rng + ?Sized>(
    window: &Window,
    field: &FieldGrid,
    params: &LgcpStraussParams,
    n_iter: usize,
    thin: usize,
    rng: &mut R,
) -> Result<(PointPattern, Option<ChainTrace>)> {
    params.validate()?;
    check_iterations(n_iter)?;
    let ext = window.dilate(2.0 * params.radius)?;
    let intensity: Vec<f64> = field.values().iter().map(|v| v.exp()).collect();
    let geometry = *field.geometry();
    let (pts, trace) = run_chain(
        &ext,
        Interaction {
            radius: params.radius,
            gamma: params.gamma,
        },
        |u| intensity[geometry.nearest_cell(u)],
        n_iter,
        thin,
        rng,
    );
    Ok((PointPattern::clipped(pts, *window), trace))
}

fn check_iterations(n_iter: usize) -> Result<()> {
    if n_iter == 0 {
        return Err(Error::InvalidParameter("chain needs at least one iteration".into()));
    }
    Ok(())
}

/// The model families supported by the samplers and the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Poisson,
    Lgcp,
    Strauss,
    LgcpStrauss,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Poisson,
        ModelKind::Lgcp,
        ModelKind::Strauss,
        ModelKind::LgcpStrauss,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Poisson => "poisson",
            ModelKind::Lgcp => "lgcp",
            ModelKind::Strauss => "strauss",
            ModelKind::LgcpStrauss => "lgcp-strauss",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Parameter names in the order used by θ vectors.
    pub fn parameter_names(&self) -> &'static [&'static str] {
        match self {
            ModelKind::Poisson => &["intensity"],
            ModelKind::Lgcp => &["mu", "sigma2", "s"],
            ModelKind::Strauss => &["beta", "gamma", "R"],
            ModelKind::LgcpStrauss => &["mu", "sigma2", "s", "gamma", "R"],
        }
    }

    pub fn dim(&self) -> usize {
        self.parameter_names().len()
    }

    /// Build a model from a θ vector in [`Self::parameter_names`] order.
    pub fn with_theta(&self, theta: &[f64]) -> Result<Model> {
        if theta.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                expected: self.dim(),
                got: theta.len(),
            });
        }
        Ok(match self {
            ModelKind::Poisson => {
                if !(theta[0] >= 0.0) {
                    return Err(Error::InvalidParameter(format!("intensity = {}", theta[0])));
                }
                Model::Poisson {
                    intensity: theta[0],
                }
            }
            ModelKind::Lgcp => Model::Lgcp(GrfParams::new(theta[0], theta[1], theta[2])?),
            ModelKind::Strauss => Model::Strauss(StraussParams::new(theta[0], theta[1], theta[2])?),
            ModelKind::LgcpStrauss => Model::LgcpStrauss(LgcpStraussParams::new(
                GrfParams::new(theta[0], theta[1], theta[2])?,
                theta[3],
                theta[4],
            )?),
        })
    }
}

impl core::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// A fully specified model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    Poisson { intensity: f64 },
    Lgcp(GrfParams),
    Strauss(StraussParams),
    LgcpStrauss(LgcpStraussParams),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Poisson { .. } => ModelKind::Poisson,
            Model::Lgcp(_) => ModelKind::Lgcp,
            Model::Strauss(_) => ModelKind::Strauss,
            Model::LgcpStrauss(_) => ModelKind::LgcpStrauss,
        }
    }

    pub fn theta(&self) -> Vec<f64> {
        match self {
            Model::Poisson { intensity } => vec![*intensity],
            Model::Lgcp(g) => vec![g.mu, g.sigma2, g.scale],
            Model::Strauss(s) => vec![s.beta, s.gamma, s.radius],
            Model::LgcpStrauss(p) => vec![p.grf.mu, p.grf.sigma2, p.grf.scale, p.gamma, p.radius],
        }
    }

    fn grf(&self) -> Option<&GrfParams> {
        match self {
            Model::Lgcp(g) => Some(g),
            Model::LgcpStrauss(p) => Some(&p.grf),
            _ => None,
        }
    }
}

/// Sampler knobs shared by all models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationSettings {
    pub resolution: usize,
    pub strauss_iterations: usize,
    pub lgcp_strauss_iterations: usize,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_FIELD_RESOLUTION,
            strauss_iterations: DEFAULT_STRAUSS_ITERATIONS,
            lgcp_strauss_iterations: DEFAULT_LGCP_STRAUSS_ITERATIONS,
        }
    }
}

/// Source of correlation factors, so callers can share them between draws.
pub trait FactorSource {
    fn factor(&self, window: &Window, resolution: usize, scale: f64)
        -> Result<Arc<CorrelationFactor>>;
}

/// Factor every request from scratch.
#[derive(Debug, Clone, Copy, Default)]
pub struct Uncached;

impl FactorSource for Uncached {
    fn factor(
        &self,
        window: &Window,
        resolution: usize,
        scale: f64,
    ) -> Result<Arc<CorrelationFactor>> {
        CorrelationFactor::new(window, resolution, scale).map(Arc::new)
    }
}

/// Draw one pattern from `model` on `window`.
pub fn simulate<R: Rng + ?Sized>(
    model: &Model,
    window: &Window,
    settings: &SimulationSettings,
    rng: &mut R,
) -> Result<PointPattern> {
    simulate_with(model, window, settings, &Uncached, rng)
}

/// Draw one pattern, taking correlation factors from `factors`.
pub fn simulate_with<R: Rng + ?Sized, F: FactorSource + ?Sized>(
    model: &Model,
    window: &Window,
    settings: &SimulationSettings,
    factors: &F,
    rng: &mut R,
) -> Result<PointPattern> {
    simulate_traced(model, window, settings, factors, 0, rng).map(|(p, _)| p)
}

/// Draw one pattern and, for the Gibbs models, a thinned chain trace.
pub fn simulate_traced<R: Rng + ?Sized, F: FactorSource + ?Sized>(
    model: &Model,
    window: &Window,
    settings: &SimulationSettings,
    factors: &F,
    thin: usize,
    rng: &mut R,
) -> Result<(PointPattern, Option<ChainTrace>)> {
    let field = match model.grf() {
        Some(g) if g.sigma2 > 0.0 => {
            g.validate()?;
            let factor = factors.factor(window, settings.resolution, g.scale)?;
            Some(sample_grf_with(window, &factor, g, rng)?)
        }
        Some(g) => {
            g.validate()?;
            let geometry = GridGeometry::new(*window, settings.resolution)?;
            Some(FieldGrid::constant(geometry, g.mu))
        }
        None => None,
    };
    match (model, field) {
        (Model::Poisson { intensity }, _) => Ok((sample_poisson(window, *intensity, rng)?, None)),
        (Model::Lgcp(_), Some(f)) => Ok((sample_cox_from_field(&f, rng), None)),
        (Model::Strauss(p), _) => {
            sample_strauss_traced(window, p, settings.strauss_iterations, thin, rng)
        }
        (Model::LgcpStrauss(p), Some(f)) => {
            lgcp_strauss_given_field(window, &f, p, settings.lgcp_strauss_iterations, thin, rng)
        }
        _ => unreachable!("field is drawn for every field-driven model"),
    }
}
