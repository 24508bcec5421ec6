//! Global envelopes and Monte Carlo tests ordered by extreme rank length.
//!
//! Each curve gets the pointwise two-sided rank `min(#{T_j ≤ T_i}, #{T_j ≥
//! T_i})` at every `r`; its ranks sorted increasingly form a vector, and a
//! curve is more extreme than another when its vector is lexicographically
//! smaller.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
#[allow(unused_imports)] // shadowed by inherent methods whenever std is linked
use num_traits::Float;
use rand::Rng;

use crate::geometry::PointPattern;
use crate::simulate::{simulate_with, FactorSource, Model, SimulationSettings};
use crate::sumstats::{default_grid_for, estimate, SummaryCurve, SummaryKind};
use crate::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_VALIDATION_SIMS: usize = 2499;

/// Pointwise two-sided ranks of each curve, sorted increasingly.
pub fn sorted_rank_vectors(curves: &[&[f64]]) -> Result<Vec<Vec<u32>>> {
    let n = curves.len();
    let m = curves.first().map_or(0, |c| c.len());
    if curves.iter().any(|c| c.len() != m) {
        return Err(Error::GridMismatch);
    }
    let mut ranks = vec![Vec::with_capacity(m); n];
    let mut order: Vec<usize> = (0..n).collect();
    for t in 0..m {
        order.sort_by(|&a, &b| curves[a][t].total_cmp(&curves[b][t]));
        // Walk groups of equal values; everything up to the end of a group is
        // ≤ it, everything from its start on is ≥ it.
        let mut start = 0;
        while start < n {
            let v = curves[order[start]][t];
            let mut end = start + 1;
            while end < n && curves[order[end]][t] == v {
                end += 1;
            }
            let below = end as u32;
            let above = (n - start) as u32;
            for &i in &order[start..end] {
                ranks[i].push(below.min(above));
            }
            start = end;
        }
    }
    for r in &mut ranks {
        r.sort_unstable();
    }
    Ok(ranks)
}

/// ERL measure of each curve: the fraction of all curves that are at least as
/// extreme as it (lexicographically not larger rank vector). Smaller values
/// are more extreme; tied curves share a value.
pub fn erl_measures(curves: &[&[f64]]) -> Result<Vec<f64>> {
    let ranks = sorted_rank_vectors(curves)?;
    let n = ranks.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ranks[a].cmp(&ranks[b]));
    let mut out = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && ranks[order[end]].cmp(&ranks[order[start]]) == Ordering::Equal {
            end += 1;
        }
        for &i in &order[start..end] {
            out[i] = end as f64 / n as f64;
        }
        start = end;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeResult {
    pub r: Vec<f64>,
    pub lower: Vec<f64>,
    pub central: Vec<f64>,
    pub upper: Vec<f64>,
    pub data: Vec<f64>,
    pub p_value: f64,
    pub alpha: f64,
    pub n_sim: usize,
    /// Number of curves whose pointwise extremes form the envelope.
    pub curves_used: usize,
}

impl EnvelopeResult {
    /// Whether the data curve lies inside the envelope at every `r`.
    pub fn contains_data(&self) -> bool {
        self.data
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(d, (lo, hi))| *d >= *lo && *d <= *hi)
    }

    pub fn rejects(&self) -> bool {
        self.p_value <= self.alpha
    }
}

/// ERL global envelope test of `data` against simulated curves on a shared
/// grid `r`.
///
/// The envelope is the pointwise range of the `⌈(1 − α)(N + 1)⌉` least
/// extreme of the `N + 1` curves (curves tied with the last one included),
/// the central curve is the pointwise mean of the simulations, and the
/// p-value is `(1 + #{simulations at least as extreme as the data}) / (N + 1)`.
pub fn global_envelope(r: &[f64], data: &[f64], sims: &[&[f64]], alpha: f64) -> Result<EnvelopeResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(alloc::format!("alpha = {alpha}")));
    }
    if sims.is_empty() {
        return Err(Error::InvalidParameter("no simulated curves".into()));
    }
    let m = r.len();
    if data.len() != m || sims.iter().any(|s| s.len() != m) {
        return Err(Error::GridMismatch);
    }
    let n_sim = sims.len();
    if ((n_sim + 1) as f64) * alpha < 5.0 {
        log::warn!(
            "{n_sim} simulations are few for alpha = {alpha}; the envelope is very coarse"
        );
    }
    let mut all: Vec<&[f64]> = Vec::with_capacity(n_sim + 1);
    all.push(data);
    all.extend_from_slice(sims);
    let e = erl_measures(&all)?;
    let p_value = e[0];
    let total = n_sim + 1;
    let keep = ((1.0 - alpha) * total as f64 - 1e-9).ceil() as usize;
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| e[b].total_cmp(&e[a]));
    let cut = e[order[keep.clamp(1, total) - 1]];
    let members: Vec<usize> = order.iter().copied().filter(|&i| e[i] >= cut).collect();
    let mut lower = vec![f64::INFINITY; m];
    let mut upper = vec![f64::NEG_INFINITY; m];
    for &i in &members {
        for t in 0..m {
            lower[t] = lower[t].min(all[i][t]);
            upper[t] = upper[t].max(all[i][t]);
        }
    }
    let mut central = vec![0.0; m];
    for s in sims {
        for t in 0..m {
            central[t] += s[t] / n_sim as f64;
        }
    }
    Ok(EnvelopeResult {
        r: r.to_vec(),
        lower,
        central,
        upper,
        data: data.to_vec(),
        p_value,
        alpha,
        n_sim,
        curves_used: members.len(),
    })
}

/// [`global_envelope`] on summary curves, restricted to the longest prefix of
/// the grid on which every curve is valid.
pub fn global_envelope_curves(
    data: &SummaryCurve,
    sims: &[SummaryCurve],
    alpha: f64,
) -> Result<EnvelopeResult> {
    if sims.iter().any(|s| s.r != data.r) {
        return Err(Error::GridMismatch);
    }
    let valid = sims
        .iter()
        .map(|s| s.valid_len)
        .fold(data.valid_len, usize::min);
    if valid == 0 {
        return Err(Error::InvalidParameter(
            "the curves share no valid distance range".into(),
        ));
    }
    if valid < data.len() {
        log::info!(
            "envelope restricted to r <= {} ({} of {} grid values)",
            data.r[valid - 1],
            valid,
            data.len()
        );
    }
    let sim_slices: Vec<&[f64]> = sims.iter().map(|s| &s.values[..valid]).collect();
    global_envelope(&data.r[..valid], &data.values[..valid], &sim_slices, alpha)
}

/// Simulate `n_sim` patterns from a fitted model on the data window, compute
/// `kind` for data and simulations on the data's default grid, and run the
/// global envelope test.
#[allow(clippy::too_many_arguments)]
pub fn validate_fit<R: Rng + ?Sized, F: FactorSource + ?Sized>(
    pattern: &PointPattern,
    model: &Model,
    n_sim: usize,
    kind: SummaryKind,
    alpha: f64,
    settings: &SimulationSettings,
    factors: &F,
    rng: &mut R,
) -> Result<EnvelopeResult> {
    let r = default_grid_for(kind, pattern);
    let data = estimate(kind, pattern, &r)?;
    let mut sims = Vec::with_capacity(n_sim);
    for _ in 0..n_sim {
        let x = simulate_with(model, pattern.window(), settings, factors, rng)?;
        sims.push(estimate(kind, &x, &r)?);
    }
    global_envelope_curves(&data, &sims, alpha)
}
