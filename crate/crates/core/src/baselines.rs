//! Classical estimators: minimum contrast for the LGCP and profile maximum
//! pseudo-likelihood for the Strauss process.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)] // shadowed by inherent methods whenever std is linked
use num_traits::Float;

use crate::geometry::{NeighbourGrid, Point, PointPattern};
use crate::sumstats::estimate_k;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Nelder–Mead
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop once every vertex is within this distance of the best one.
    pub x_tol: f64,
    /// Stop once the spread of values over the simplex is below this.
    pub f_tol: f64,
    /// Edge length of the initial simplex along each axis.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 2000,
            x_tol: 1e-8,
            f_tol: 1e-12,
            initial_step: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    /// False when the evaluation budget ran out first.
    pub converged: bool,
}

/// Downhill simplex minimization. Non-finite objective values are treated as
/// `+∞`.
pub fn nelder_mead<F>(mut f: F, start: &[f64], opts: &NelderMeadOptions) -> Result<NelderMeadResult>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = start.len();
    if n == 0 {
        return Err(Error::InvalidParameter("empty starting point".into()));
    }
    if opts.max_evals < n + 1 {
        return Err(Error::InvalidParameter(format!(
            "max_evals {} below simplex size {}",
            opts.max_evals,
            n + 1
        )));
    }
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let v0 = eval(start, &mut evals);
    if !v0.is_finite() {
        return Err(Error::InvalidParameter(
            "objective is not finite at the starting point".into(),
        ));
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(start.to_vec(), v0)];
    for i in 0..n {
        let mut x = start.to_vec();
        x[i] += opts.initial_step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let point = |c: &[f64], d: &[f64], t: f64| -> Vec<f64> {
        c.iter().zip(d).map(|(ci, di)| ci + t * (di - ci)).collect()
    };
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0];
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&best.0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        let spread = simplex[n].1 - best.1;
        if diameter < opts.x_tol || spread.abs() < opts.f_tol {
            let (x, value) = simplex.swap_remove(0);
            return Ok(NelderMeadResult {
                x,
                value,
                evals,
                converged: true,
            });
        }
        if evals + 2 > opts.max_evals {
            let (x, value) = simplex.swap_remove(0);
            log::warn!("Nelder-Mead stopped after {evals} evaluations");
            return Ok(NelderMeadResult {
                x,
                value,
                evals,
                converged: false,
            });
        }
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let xr = point(&centroid, &worst.0, -alpha);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = point(&centroid, &worst.0, -gamma);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst.1 {
            let xc = point(&centroid, &xr, rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = point(&centroid, &worst.0, rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < worst.1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        let x0 = simplex[0].0.clone();
        for v in simplex.iter_mut().skip(1) {
            if evals >= opts.max_evals {
                break;
            }
            v.0 = point(&x0, &v.0, sigma);
            v.1 = eval(&v.0, &mut evals);
        }
    }
}

// ---------------------------------------------------------------------------
// LGCP minimum contrast
// ---------------------------------------------------------------------------

fn simpson<F: Fn(f64) -> f64>(_f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(f, a, m, fa, flm, fm);
    let right = simpson(f, m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + adaptive(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance
/// `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(&f, a, b, fa, fm, fb);
    adaptive(&f, a, b, fa, fm, fb, whole, tol, 40)
}

pub const K_QUADRATURE_TOL: f64 = 1e-10;

/// `K(r) = 2π ∫₀^r t exp(σ² e^{-t/s}) dt` for the LGCP with exponential
/// covariance.
pub fn lgcp_theoretical_k(r: f64, sigma2: f64, s: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let g = |t: f64| t * (sigma2 * (-t / s).exp()).exp();
    2.0 * PI * integrate(g, 0.0, r, K_QUADRATURE_TOL)
}

/// [`lgcp_theoretical_k`] on an increasing grid, integrating cell by cell.
pub fn lgcp_theoretical_k_grid(r: &[f64], sigma2: f64, s: f64) -> Vec<f64> {
    let g = |t: f64| t * (sigma2 * (-t / s).exp()).exp();
    let tol = K_QUADRATURE_TOL / r.len().max(1) as f64;
    let mut out = Vec::with_capacity(r.len());
    let mut acc = 0.0;
    let mut prev = 0.0;
    for &ri in r {
        if ri > prev {
            acc += integrate(g, prev, ri, tol);
            prev = ri;
        }
        out.push(2.0 * PI * acc);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinContrastOptions {
    pub a1: f64,
    /// Upper integration limit; `None` uses the end of the default grid.
    pub a2: Option<f64>,
    pub exponent_p: f64,
    pub exponent_q: f64,
    pub grid_len: usize,
    pub optimizer: NelderMeadOptions,
}

impl Default for MinContrastOptions {
    fn default() -> Self {
        Self {
            a1: 0.0,
            a2: None,
            exponent_p: 2.0,
            exponent_q: 0.25,
            grid_len: crate::sumstats::DEFAULT_GRID_LEN,
            optimizer: NelderMeadOptions {
                max_evals: 1000,
                x_tol: 1e-6,
                f_tol: 1e-14,
                initial_step: 1.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinContrastResult {
    pub mu: f64,
    pub sigma2: f64,
    pub s: f64,
    pub contrast: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Discretized contrast `∫ |K_θ(r)^q − K̂(r)^q|^p dr` (trapezoid rule) for a
/// fixed empirical `K̂` on grid `r`.
pub struct KContrast {
    r: Vec<f64>,
    k_hat_q: Vec<f64>,
    p: f64,
    q: f64,
}

impl KContrast {
    pub fn new(r: &[f64], k_hat: &[f64], a1: f64, a2: f64, p: f64, q: f64) -> Result<Self> {
        if r.len() != k_hat.len() {
            return Err(Error::GridMismatch);
        }
        if !(a1 >= 0.0 && a2 > a1) {
            return Err(Error::InvalidParameter(format!(
                "integration limits [{a1}, {a2}]"
            )));
        }
        let (r, k): (Vec<f64>, Vec<f64>) = r
            .iter()
            .zip(k_hat)
            .filter(|(ri, _)| **ri >= a1 && **ri <= a2)
            .map(|(a, b)| (*a, *b))
            .unzip();
        if r.len() < 2 {
            return Err(Error::InvalidParameter(
                "fewer than two grid values between the integration limits".into(),
            ));
        }
        Ok(Self {
            k_hat_q: k.iter().map(|v| v.max(0.0).powf(q)).collect(),
            r,
            p,
            q,
        })
    }

    pub fn value(&self, sigma2: f64, s: f64) -> f64 {
        let k = lgcp_theoretical_k_grid(&self.r, sigma2, s);
        let d: Vec<f64> = k
            .iter()
            .zip(&self.k_hat_q)
            .map(|(kt, kh)| (kt.powf(self.q) - kh).abs().powf(self.p))
            .collect();
        let mut total = 0.0;
        for i in 1..self.r.len() {
            total += 0.5 * (d[i] + d[i - 1]) * (self.r[i] - self.r[i - 1]);
        }
        total
    }
}

/// Minimum contrast fit of `(σ², s)` by Nelder–Mead over `(log σ², log s)`,
/// then `μ̂ = log(n / |W|) − σ̂²/2`. Estimates are not clamped.
pub fn minimum_contrast_lgcp(p: &PointPattern, opts: &MinContrastOptions) -> Result<MinContrastResult> {
    let w = p.window();
    let r_max = w.shorter_side() / 4.0;
    let r = crate::sumstats::r_grid(r_max, opts.grid_len);
    let k_hat = estimate_k(p, &r)?;
    let a2 = opts.a2.unwrap_or(r_max);
    let contrast = KContrast::new(&r, &k_hat.values, opts.a1, a2, opts.exponent_p, opts.exponent_q)?;
    let start = [0.0, (r_max / 5.0).ln()];
    let res = nelder_mead(
        |x| contrast.value(x[0].exp(), x[1].exp()),
        &start,
        &opts.optimizer,
    )?;
    let sigma2 = res.x[0].exp();
    let s = res.x[1].exp();
    let mu = (p.n() as f64 / w.area()).ln() - 0.5 * sigma2;
    Ok(MinContrastResult {
        mu,
        sigma2,
        s,
        contrast: res.value,
        evals: res.evals,
        converged: res.converged,
    })
}

// ---------------------------------------------------------------------------
// Strauss pseudo-likelihood
// ---------------------------------------------------------------------------

pub const DEFAULT_PL_GRID: usize = 512;
pub const DEFAULT_PROFILE_LEN: usize = 50;
pub const DEFAULT_PROFILE_RANGE: (f64, f64) = (0.001, 0.05);

/// Sufficient statistics of the border-corrected log pseudo-likelihood on
/// `A = erode(W, border)` for one `R`, with `border ≥ R`.
#[derive(Debug, Clone, PartialEq)]
pub struct StraussPlStatistics {
    pub radius: f64,
    /// Points of the pattern lying in `A`.
    pub n_a: usize,
    /// `Σ_{u ∈ x ∩ A} t(u, x \ u)`.
    pub sum_t: u64,
    /// `area_by_k[k]` = area of `{u ∈ A : t(u, x) = k}`.
    pub area_by_k: Vec<f64>,
}

impl StraussPlStatistics {
    pub fn compute(p: &PointPattern, radius: f64, grid: usize) -> Result<Self> {
        Self::compute_with_border(p, radius, radius, grid)
    }

    /// Statistics on `erode(W, border)`. Profiles over `R` share one border
    /// so that their pseudo-likelihoods are comparable.
    pub fn compute_with_border(p: &PointPattern, radius: f64, border: f64, grid: usize) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::InvalidParameter(format!("R = {radius}")));
        }
        if !(border >= radius) || !border.is_finite() {
            return Err(Error::InvalidParameter(format!("border {border} < R = {radius}")));
        }
        if grid == 0 {
            return Err(Error::InvalidParameter("quadrature grid of size 0".into()));
        }
        let w = p.window();
        let a = w.erode(border)?;
        let nbrs = NeighbourGrid::new(p.points(), w, radius.max(w.shorter_side() / 64.0));
        let mut n_a = 0;
        let mut sum_t = 0u64;
        for (i, u) in p.points().iter().enumerate() {
            if a.contains(u) {
                n_a += 1;
                sum_t += nbrs.count_within(u, radius, Some(i)) as u64;
            }
        }
        let cell = a.area() / (grid * grid) as f64;
        let mut cells_by_k: Vec<u64> = vec![0];
        for iy in 0..grid {
            let y = a.y_min() + (iy as f64 + 0.5) * a.height() / grid as f64;
            for ix in 0..grid {
                let x = a.x_min() + (ix as f64 + 0.5) * a.width() / grid as f64;
                let t = nbrs.count_within(&Point::new(x, y), radius, None);
                if t >= cells_by_k.len() {
                    cells_by_k.resize(t + 1, 0);
                }
                cells_by_k[t] += 1;
            }
        }
        let area_by_k = cells_by_k.iter().map(|&c| c as f64 * cell).collect();
        Ok(Self {
            radius,
            n_a,
            sum_t,
            area_by_k,
        })
    }

    /// `Σ_k k^j γ^k area_k` with `γ = e^b`, for `j = 0, 1, 2`.
    fn moments(&self, b: f64) -> [f64; 3] {
        let mut m = [0.0; 3];
        for (k, &a) in self.area_by_k.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let kf = k as f64;
            let wgt = a * if k == 0 { 1.0 } else { (b * kf).exp() };
            m[0] += wgt;
            m[1] += kf * wgt;
            m[2] += kf * kf * wgt;
        }
        m
    }

    /// Log pseudo-likelihood at `(log β, log γ)`; `log γ = −∞` is allowed and
    /// gives `−∞` whenever some point of `A` has an `R`-close neighbour.
    pub fn log_pl(&self, log_beta: f64, log_gamma: f64) -> f64 {
        let beta = log_beta.exp();
        if log_gamma == f64::NEG_INFINITY {
            if self.sum_t > 0 {
                return f64::NEG_INFINITY;
            }
            return self.n_a as f64 * log_beta - beta * self.area_by_k[0];
        }
        let [m0, _, _] = self.moments(log_gamma);
        let data = if self.n_a > 0 {
            self.n_a as f64 * log_beta
        } else {
            0.0
        };
        let pairs = if self.sum_t > 0 {
            self.sum_t as f64 * log_gamma
        } else {
            0.0
        };
        data + pairs - beta * m0
    }

    /// Gradient of [`Self::log_pl`] in `(log β, log γ)`.
    pub fn gradient(&self, log_beta: f64, log_gamma: f64) -> [f64; 2] {
        let [m0, m1, _] = self.moments(log_gamma);
        let beta = log_beta.exp();
        [
            self.n_a as f64 - beta * m0,
            self.sum_t as f64 - beta * m1,
        ]
    }
}

/// Border-corrected Strauss log pseudo-likelihood on `erode(W, R)`, with the
/// integral term computed on a `DEFAULT_PL_GRID²` grid.
pub fn pseudo_loglik_strauss(p: &PointPattern, radius: f64, log_beta: f64, log_gamma: f64) -> Result<f64> {
    Ok(StraussPlStatistics::compute(p, radius, DEFAULT_PL_GRID)?.log_pl(log_beta, log_gamma))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpleFit {
    pub beta: f64,
    pub gamma: f64,
    pub log_pl: f64,
    /// True when the unconstrained maximizer had `γ > 1` and `γ` was fixed at 1.
    pub clamped: bool,
}

const MPLE_MAX_ITER: usize = 200;

/// Maximize the log pseudo-likelihood for fixed sufficient statistics.
///
/// For fixed `log γ = b` the optimal `β` is `n_A / M₀(b)`, and the profile in
/// `b` has derivative `S − n_A M₁(b)/M₀(b)`. The root is found by safeguarded
/// Newton iteration on `b ≤ 0`.
pub fn mple_from_statistics(st: &StraussPlStatistics) -> Result<MpleFit> {
    if st.n_a == 0 {
        return Err(Error::DegeneratePattern { n: 0, required: 1 });
    }
    let n = st.n_a as f64;
    let fit = |b: f64, clamped: bool| {
        let log_gamma = b;
        let m0 = if b == f64::NEG_INFINITY {
            st.area_by_k[0]
        } else {
            st.moments(b)[0]
        };
        let log_beta = (n / m0).ln();
        MpleFit {
            beta: n / m0,
            gamma: b.exp(),
            log_pl: st.log_pl(log_beta, log_gamma),
            clamped,
        }
    };
    if st.sum_t == 0 {
        if st.area_by_k[0] > 0.0 {
            return Ok(fit(f64::NEG_INFINITY, false));
        }
        return Err(Error::InvalidParameter(
            "no point of A is free of neighbours, γ is not identifiable".into(),
        ));
    }
    let target = st.sum_t as f64 / n;
    let mean_k = |b: f64| {
        let [m0, m1, m2] = st.moments(b);
        let mean = m1 / m0;
        (mean, m2 / m0 - mean * mean)
    };
    let (mean0, _) = mean_k(0.0);
    if target >= mean0 {
        return Ok(fit(0.0, target > mean0));
    }
    // Bracket the root of mean_k(b) = target on (lo, 0].
    let mut lo = -1.0;
    let mut tries = 0;
    while mean_k(lo).0 > target {
        lo *= 2.0;
        tries += 1;
        if tries > 10 {
            // γ underflows to zero at this point.
            return Ok(fit(lo, false));
        }
    }
    let mut hi = 0.0;
    let mut b = 0.5 * (lo + hi);
    for _ in 0..MPLE_MAX_ITER {
        let (m, v) = mean_k(b);
        let h = m - target;
        if h > 0.0 {
            hi = b;
        } else {
            lo = b;
        }
        let mut next = if v > 0.0 { b - h / v } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - b).abs() < 1e-13 || (hi - lo) < 1e-13 {
            return Ok(fit(next, false));
        }
        b = next;
    }
    Err(Error::NoConvergence {
        iterations: MPLE_MAX_ITER,
    })
}

/// Maximum pseudo-likelihood estimate of `(β, γ)` for fixed `R`.
pub fn mple_strauss_given_r(p: &PointPattern, radius: f64) -> Result<MpleFit> {
    mple_from_statistics(&StraussPlStatistics::compute(p, radius, DEFAULT_PL_GRID)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileMpleResult {
    pub beta: f64,
    pub gamma: f64,
    pub radius: f64,
    pub r_grid: Vec<f64>,
    pub pl_values: Vec<f64>,
}

/// `m` equally spaced values on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    match m {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..m)
            .map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64)
            .collect(),
    }
}

pub fn default_profile_grid() -> Vec<f64> {
    linspace(DEFAULT_PROFILE_RANGE.0, DEFAULT_PROFILE_RANGE.1, DEFAULT_PROFILE_LEN)
}

/// Fit `(β, γ)` for each candidate `R` and keep the candidate with the
/// largest log pseudo-likelihood (the smallest `R` among ties). Every
/// candidate uses the border of the largest `R`.
pub fn profile_mple_strauss(p: &PointPattern, r_grid: &[f64]) -> Result<ProfileMpleResult> {
    profile_mple_strauss_with(p, r_grid, DEFAULT_PL_GRID)
}

pub fn profile_mple_strauss_with(p: &PointPattern, r_grid: &[f64], grid: usize) -> Result<ProfileMpleResult> {
    if r_grid.is_empty() {
        return Err(Error::InvalidParameter("empty R grid".into()));
    }
    let border = r_grid.iter().copied().fold(0.0, f64::max);
    let mut best: Option<(usize, MpleFit)> = None;
    let mut pl_values = Vec::with_capacity(r_grid.len());
    for (i, &r) in r_grid.iter().enumerate() {
        let fit = mple_from_statistics(&StraussPlStatistics::compute_with_border(p, r, border, grid)?)?;
        pl_values.push(fit.log_pl);
        if best.is_none_or(|(_, b)| fit.log_pl > b.log_pl) {
            best = Some((i, fit));
        }
    }
    let (i, fit) = best.expect("nonempty grid");
    Ok(ProfileMpleResult {
        beta: fit.beta,
        gamma: fit.gamma,
        radius: r_grid[i],
        r_grid: r_grid.to_vec(),
        pl_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Window;
    use crate::simulate::{sample_poisson, sample_strauss, StraussParams};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nelder_mead_quadratic() {
        let res = nelder_mead(
            |x| (x[0] - 2.0).powi(2) + (x[1] + 1.0).powi(2),
            &[0.0, 0.0],
            &NelderMeadOptions::default(),
        )
        .unwrap();
        assert!(res.converged);
        assert!((res.x[0] - 2.0).abs() < 1e-5 && (res.x[1] + 1.0).abs() < 1e-5);
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let opts = NelderMeadOptions {
            max_evals: 5000,
            ..Default::default()
        };
        let res = nelder_mead(
            |x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2),
            &[-1.2, 1.0],
            &opts,
        )
        .unwrap();
        assert!(res.value < 1e-6, "value {}", res.value);
        assert!((res.x[0] - 1.0).abs() < 1e-3 && (res.x[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn nelder_mead_respects_budget() {
        let opts = NelderMeadOptions {
            max_evals: 30,
            ..Default::default()
        };
        let mut calls = 0;
        let res = nelder_mead(
            |x| {
                calls += 1;
                100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2)
            },
            &[-1.2, 1.0],
            &opts,
        )
        .unwrap();
        assert!(!res.converged);
        assert!(calls <= 30 && res.evals == calls);
    }

    #[test]
    fn poisson_k_is_pi_r_squared() {
        for r in [0.01, 0.1, 0.25] {
            assert!((lgcp_theoretical_k(r, 0.0, 0.05) - PI * r * r).abs() < 1e-10);
        }
    }

    #[test]
    fn lgcp_k_matches_midpoint_rule() {
        let (r, s2, s) = (0.1, 1.0, 0.05);
        let panels = 1_000_000;
        let h = r / panels as f64;
        let mut acc = 0.0;
        for i in 0..panels {
            let t = (i as f64 + 0.5) * h;
            acc += t * (s2 * (-t / s).exp()).exp();
        }
        let oracle = 2.0 * PI * acc * h;
        let k = lgcp_theoretical_k(r, s2, s);
        assert!(((k - oracle) / oracle).abs() < 1e-6, "{k} vs {oracle}");
        assert!(k >= PI * r * r);
    }

    #[test]
    fn k_grid_agrees_with_pointwise() {
        let r = crate::sumstats::r_grid(0.25, 65);
        let g = lgcp_theoretical_k_grid(&r, 2.0, 0.03);
        for (ri, gi) in r.iter().zip(&g) {
            assert!((gi - lgcp_theoretical_k(*ri, 2.0, 0.03)).abs() < 1e-9);
        }
        assert!(g.windows(2).all(|w| w[1] >= w[0]));
        let g3 = lgcp_theoretical_k_grid(&r, 3.0, 0.03);
        assert!(g3.iter().zip(&g).skip(1).all(|(a, b)| a > b));
    }

    #[test]
    fn contrast_optimum_beats_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w = Window::unit_square();
        let p = crate::simulate::sample_lgcp(
            &w,
            &crate::simulate::GrfParams::new(5.0, 1.5, 0.05).unwrap(),
            16,
            &mut rng,
        )
        .unwrap();
        let opts = MinContrastOptions {
            grid_len: 129,
            ..Default::default()
        };
        let fit = minimum_contrast_lgcp(&p, &opts).unwrap();
        let r = crate::sumstats::r_grid(0.25, 129);
        let k = estimate_k(&p, &r).unwrap();
        let c = KContrast::new(&r, &k.values, 0.0, 0.25, 2.0, 0.25).unwrap();
        for _ in 0..20 {
            let s2 = rng.random_range(0.01..5.0);
            let s = rng.random_range(0.001..0.2);
            assert!(fit.contrast <= c.value(s2, s) + 1e-15);
        }
        let expect_mu = (p.n() as f64).ln() - fit.sigma2 / 2.0;
        assert!((fit.mu - expect_mu).abs() < 1e-12);
    }

    fn pattern(pts: &[(f64, f64)]) -> PointPattern {
        PointPattern::new(
            pts.iter().map(|&(x, y)| Point::new(x, y)).collect(),
            Window::unit_square(),
        )
        .unwrap()
    }

    #[test]
    fn poisson_pl_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = sample_poisson(&Window::unit_square(), 50.0, &mut rng).unwrap();
        let st = StraussPlStatistics::compute(&p, 0.05, 128).unwrap();
        let area: f64 = st.area_by_k.iter().sum();
        assert!((area - 0.81).abs() < 1e-12);
        let lb = 3.7;
        let expect = st.n_a as f64 * lb - lb.exp() * area;
        assert!((st.log_pl(lb, 0.0) - expect).abs() < 1e-9);
        // Maximized at β = n_A / |A| when γ = 1.
        let best = (st.n_a as f64 / area).ln();
        assert!(st.log_pl(best, 0.0) >= st.log_pl(best + 0.01, 0.0));
        assert!(st.log_pl(best, 0.0) >= st.log_pl(best - 0.01, 0.0));
    }

    #[test]
    fn empty_pattern_pl() {
        let p = PointPattern::empty(Window::unit_square());
        let v = pseudo_loglik_strauss(&p, 0.1, 2.0f64.ln(), -0.3).unwrap();
        assert!((v + 2.0 * 0.64).abs() < 1e-12);
    }

    #[test]
    fn hard_core_violation_is_minus_infinity() {
        let p = pattern(&[(0.5, 0.5), (0.52, 0.5), (0.2, 0.8)]);
        let v = pseudo_loglik_strauss(&p, 0.05, 4.0, f64::NEG_INFINITY).unwrap();
        assert_eq!(v, f64::NEG_INFINITY);
    }

    #[test]
    fn pl_grid_refinement() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pts: Vec<(f64, f64)> = (0..10)
            .map(|_| (rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)))
            .collect();
        let p = pattern(&pts);
        let a = StraussPlStatistics::compute(&p, 0.1, 256).unwrap().log_pl(3.0, -0.5);
        let b = StraussPlStatistics::compute(&p, 0.1, 512).unwrap().log_pl(3.0, -0.5);
        assert!((a - b).abs() < 5e-4, "{a} vs {b}");
    }

    #[test]
    fn mple_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = sample_strauss(
            &Window::unit_square(),
            &StraussParams::new(400.0, 0.4, 0.04).unwrap(),
            50_000,
            &mut rng,
        )
        .unwrap();
        let st = StraussPlStatistics::compute(&p, 0.04, 256).unwrap();
        let fit = mple_from_statistics(&st).unwrap();
        assert!(!fit.clamped && fit.gamma > 0.0 && fit.gamma < 1.0);
        let g = st.gradient(fit.beta.ln(), fit.gamma.ln());
        assert!(g[0].hypot(g[1]) < 1e-6, "{g:?}");
    }

    #[test]
    fn no_close_pairs_gives_zero_gamma() {
        let p = pattern(&[(0.3, 0.3), (0.7, 0.7), (0.3, 0.7)]);
        let fit = mple_strauss_given_r(&p, 0.05).unwrap();
        assert_eq!(fit.gamma, 0.0);
        assert!(fit.log_pl.is_finite());
    }

    #[test]
    fn poisson_data_is_clamped_at_one_in_aggregate() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let w = Window::unit_square();
        let mut clamped = 0;
        let mut betas = Vec::new();
        for _ in 0..20 {
            let p = sample_poisson(&w, 500.0, &mut rng).unwrap();
            let st = StraussPlStatistics::compute(&p, 0.02, 128).unwrap();
            let fit = mple_from_statistics(&st).unwrap();
            if fit.gamma == 1.0 {
                clamped += 1;
            }
            betas.push(fit.beta);
        }
        assert!(clamped >= 5, "{clamped}");
        let mean = betas.iter().sum::<f64>() / betas.len() as f64;
        assert!((mean - 500.0).abs() < 50.0, "{mean}");
    }

    #[test]
    fn profile_returns_grid_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let p = sample_strauss(
            &Window::unit_square(),
            &StraussParams::new(300.0, 0.2, 0.05).unwrap(),
            50_000,
            &mut rng,
        )
        .unwrap();
        let grid = linspace(0.01, 0.08, 8);
        let res = profile_mple_strauss_with(&p, &grid, 96).unwrap();
        assert!(grid.contains(&res.radius));
        let max = res.pl_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let i = grid.iter().position(|&r| r == res.radius).unwrap();
        assert_eq!(res.pl_values[i], max);
        assert!(res.pl_values[..i].iter().all(|&v| v < max));
    }

    #[test]
    fn profile_shares_one_border() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let p = sample_strauss(
            &Window::unit_square(),
            &StraussParams::new(500.0, 0.3, 0.03).unwrap(),
            100_000,
            &mut rng,
        )
        .unwrap();
        let grid = default_profile_grid();
        let res = profile_mple_strauss_with(&p, &grid, 128).unwrap();
        let border = StraussPlStatistics::compute_with_border(&p, 0.01, 0.05, 128).unwrap();
        let own = StraussPlStatistics::compute(&p, 0.01, 128).unwrap();
        assert!(border.n_a < own.n_a);
        assert!((res.radius - 0.03).abs() <= 0.006, "R = {}", res.radius);
        assert!(StraussPlStatistics::compute_with_border(&p, 0.02, 0.01, 16).is_err());
    }

    #[test]
    fn default_profile_grid_has_fifty_values() {
        let g = default_profile_grid();
        assert_eq!(g.len(), 50);
        assert_eq!(g[0], 0.001);
        assert!((g[49] - 0.05).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn log_pl_is_concave_on_segments(
            a0 in 2.0f64..8.0, b0 in -4.0f64..0.5,
            a1 in 2.0f64..8.0, b1 in -4.0f64..0.5,
        ) {
            let p = pattern(&[(0.3, 0.3), (0.32, 0.31), (0.5, 0.5), (0.52, 0.5), (0.55, 0.52), (0.8, 0.2)]);
            let st = StraussPlStatistics::compute(&p, 0.05, 64).unwrap();
            let mid = st.log_pl(0.5 * (a0 + a1), 0.5 * (b0 + b1));
            let avg = 0.5 * (st.log_pl(a0, b0) + st.log_pl(a1, b1));
            prop_assert!(mid >= avg - 1e-9 * avg.abs().max(1.0));
        }
    }
}
