//! Nonparametric functional summary statistics.
//!
//! `K` uses Ripley's isotropic edge correction for rectangular windows; `F`
//! and `G` are Kaplan–Meier estimates with censoring at the distance to the
//! window boundary; `J = (1 - G) / (1 - F)` where `F < 1`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};
#[allow(unused_imports)] // shadowed by inherent methods whenever std is linked
use num_traits::Float;

use crate::geometry::{NeighbourGrid, Point, PointPattern, Window};
use crate::{Error, Result};

pub const DEFAULT_GRID_LEN: usize = 513;
pub const DEFAULT_EMPTY_SPACE_GRID: usize = 128;
/// `J` is reported only where `1 - F > J_EPSILON`.
pub const J_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SummaryKind {
    K,
    LCentered,
    F,
    G,
    J,
}

impl SummaryKind {
    pub fn name(&self) -> &'static str {
        match self {
            SummaryKind::K => "K",
            SummaryKind::LCentered => "L",
            SummaryKind::F => "F",
            SummaryKind::G => "G",
            SummaryKind::J => "J",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "K" | "k" => Some(SummaryKind::K),
            "L" | "l" => Some(SummaryKind::LCentered),
            "F" | "f" => Some(SummaryKind::F),
            "G" | "g" => Some(SummaryKind::G),
            "J" | "j" => Some(SummaryKind::J),
            _ => None,
        }
    }
}

/// A statistic evaluated on an increasing grid of distances. Entries at index
/// `valid_len` and beyond are unreliable (reported as NaN for `J`).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryCurve {
    pub kind: SummaryKind,
    pub r: Vec<f64>,
    pub values: Vec<f64>,
    pub valid_len: usize,
    /// Set when the pattern had too few points and the curve was zero-filled.
    pub degenerate: bool,
}

impl SummaryCurve {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn is_valid(&self, i: usize) -> bool {
        i < self.valid_len
    }

    pub fn valid_values(&self) -> &[f64] {
        &self.values[..self.valid_len]
    }

    /// `[r_first, r_last]` of the valid prefix, if any.
    pub fn valid_range(&self) -> Option<(f64, f64)> {
        (self.valid_len > 0).then(|| (self.r[0], self.r[self.valid_len - 1]))
    }
}

/// `m` equally spaced values from 0 to `r_max`.
pub fn r_grid(r_max: f64, m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![0.0];
    }
    let step = r_max / (m - 1) as f64;
    (0..m).map(|i| i as f64 * step).collect()
}

/// 513 values from 0 to a quarter of the shorter window side.
pub fn default_r_grid(w: &Window) -> Vec<f64> {
    r_grid(w.shorter_side() / 4.0, DEFAULT_GRID_LEN)
}

/// Range for `F`, `G` and `J`: up to the distance where a Poisson process of
/// the observed intensity has `F = 0.99`, capped at half the window diameter.
pub fn default_fgj_r_grid(p: &PointPattern) -> Vec<f64> {
    let half_diam = p.window().diameter() / 2.0;
    let lambda = p.intensity();
    let r_max = if lambda > 0.0 {
        (100f64.ln() / (PI * lambda)).sqrt().min(half_diam)
    } else {
        half_diam
    };
    r_grid(r_max, DEFAULT_GRID_LEN)
}

fn check_grid(r: &[f64]) -> Result<()> {
    let increasing = r.windows(2).all(|w| w[1] > w[0]);
    if r.is_empty() || !(r[0] >= 0.0) || !increasing {
        return Err(Error::InvalidParameter("r grid must be increasing from r >= 0".into()));
    }
    Ok(())
}

/// Inverse of the fraction of the circle of radius `radius` around `centre`
/// that lies inside `w`.
pub fn isotropic_weight_at(centre: &Point, radius: f64, w: &Window) -> f64 {
    if radius <= 0.0 {
        return 1.0;
    }
    let edges = [
        centre.x - w.x_min(),
        centre.y - w.y_min(),
        w.x_max() - centre.x,
        w.y_max() - centre.y,
    ];
    if edges.iter().all(|&e| e >= radius) {
        return 1.0;
    }
    let half_angle = |e: f64| if e < radius { (e / radius).acos() } else { 0.0 };
    let a = edges.map(half_angle);
    let mut outside = 2.0 * (a[0] + a[1] + a[2] + a[3]);
    // Arcs of adjacent edges overlap when the corner lies inside the circle.
    for k in 0..4 {
        let (e1, e2) = (edges[k], edges[(k + 1) % 4]);
        if e1 * e1 + e2 * e2 < radius * radius {
            outside -= a[k] + a[(k + 1) % 4] - FRAC_PI_2;
        }
    }
    let inside = (2.0 * PI - outside) / (2.0 * PI);
    1.0 / inside.max(1e-12)
}

/// Ripley's isotropic weight for the ordered pair `(x_i, x_j)`.
pub fn isotropic_weight(xi: &Point, xj: &Point, w: &Window) -> f64 {
    isotropic_weight_at(xi, xi.distance(xj), w)
}

/// `K̂(r) = |W| / (n (n - 1)) Σ_i Σ_{j≠i} 1[d_ij ≤ r] e_ij`.
pub fn estimate_k(p: &PointPattern, r: &[f64]) -> Result<SummaryCurve> {
    check_grid(r)?;
    let n = p.n();
    if n < 2 {
        return Err(Error::DegeneratePattern { n, required: 2 });
    }
    let w = p.window();
    let r_max = *r.last().unwrap();
    let pts = p.points();
    let grid = NeighbourGrid::new(pts, w, r_max);
    let r_max2 = r_max * r_max;
    let mut bins = vec![0.0; r.len()];
    for (i, u) in pts.iter().enumerate() {
        let boundary = w.boundary_distance_unchecked(u);
        grid.for_each_candidate(u, r_max, |j, v| {
            if j == i {
                return;
            }
            let d2 = u.distance_squared(v);
            if d2 > r_max2 {
                return;
            }
            let d = d2.sqrt();
            let weight = if d <= boundary {
                1.0
            } else {
                isotropic_weight_at(u, d, w)
            };
            bins[r.partition_point(|&rv| rv < d)] += weight;
        });
    }
    let scale = w.area() / (n as f64 * (n as f64 - 1.0));
    let mut acc = 0.0;
    let values = bins
        .into_iter()
        .map(|b| {
            acc += b;
            acc * scale
        })
        .collect();
    Ok(SummaryCurve {
        kind: SummaryKind::K,
        r: r.to_vec(),
        values,
        valid_len: r.len(),
        degenerate: false,
    })
}

/// `L̂(r) - r` with `L̂ = sqrt(K̂ / π)`.
pub fn estimate_l_centered(p: &PointPattern, r: &[f64]) -> Result<SummaryCurve> {
    let k = estimate_k(p, r)?;
    Ok(l_from_k(&k))
}

pub fn l_from_k(k: &SummaryCurve) -> SummaryCurve {
    let values = k
        .values
        .iter()
        .zip(&k.r)
        .map(|(&kv, &rv)| (kv / PI).sqrt() - rv)
        .collect();
    SummaryCurve {
        kind: SummaryKind::LCentered,
        r: k.r.clone(),
        values,
        valid_len: k.valid_len,
        degenerate: k.degenerate,
    }
}

/// Centred `L`, or a zero curve flagged `degenerate` when `n < 2`.
pub fn l_centered_or_zero(p: &PointPattern, r: &[f64]) -> Result<SummaryCurve> {
    match estimate_l_centered(p, r) {
        Err(Error::DegeneratePattern { .. }) => {
            check_grid(r)?;
            Ok(SummaryCurve {
                kind: SummaryKind::LCentered,
                r: r.to_vec(),
                values: vec![0.0; r.len()],
                valid_len: r.len(),
                degenerate: true,
            })
        }
        other => other,
    }
}

/// Kaplan–Meier distribution function on `r` from `(time, observed)` pairs,
/// where `observed == false` marks a censored time.
pub fn kaplan_meier(obs: &mut [(f64, bool)], r: &[f64]) -> Vec<f64> {
    obs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = obs.len();
    let mut out = Vec::with_capacity(r.len());
    let mut surv = 1.0;
    let mut i = 0;
    for &rv in r {
        while i < n && obs[i].0 <= rv {
            let t = obs[i].0;
            let at_risk = n - i;
            let mut events = 0usize;
            while i < n && obs[i].0 == t {
                events += usize::from(obs[i].1);
                i += 1;
            }
            if events > 0 {
                surv *= 1.0 - events as f64 / at_risk as f64;
            }
        }
        out.push(1.0 - surv);
    }
    out
}

/// Options for the empty-space function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmptySpaceOptions {
    /// Query points per axis.
    pub grid: usize,
}

impl Default for EmptySpaceOptions {
    fn default() -> Self {
        Self {
            grid: DEFAULT_EMPTY_SPACE_GRID,
        }
    }
}

pub fn estimate_f(p: &PointPattern, r: &[f64]) -> Result<SummaryCurve> {
    estimate_f_with(p, r, &EmptySpaceOptions::default())
}

/// Empty-space function from a regular grid of query locations.
///
/// Once every query location is within `r` of a data point the estimate is
/// set to 1, even where the Kaplan–Meier product would stop short of it.
pub fn estimate_f_with(
    p: &PointPattern,
    r: &[f64],
    opts: &EmptySpaceOptions,
) -> Result<SummaryCurve> {
    check_grid(r)?;
    if p.is_empty() {
        return Err(Error::DegeneratePattern { n: 0, required: 1 });
    }
    let w = p.window();
    let grid = NeighbourGrid::new(p.points(), w, 0.0);
    let m = opts.grid.max(1);
    let (dx, dy) = (w.width() / m as f64, w.height() / m as f64);
    let mut obs = Vec::with_capacity(m * m);
    let mut farthest: f64 = 0.0;
    for iy in 0..m {
        for ix in 0..m {
            let u = Point::new(
                w.x_min() + (ix as f64 + 0.5) * dx,
                w.y_min() + (iy as f64 + 0.5) * dy,
            );
            let d = grid.nearest_distance(&u, None).unwrap_or(f64::INFINITY);
            let c = w.boundary_distance_unchecked(&u);
            farthest = farthest.max(d);
            obs.push((d.min(c), d <= c));
        }
    }
    let mut values = kaplan_meier(&mut obs, r);
    for (v, &rv) in values.iter_mut().zip(r) {
        if rv >= farthest {
            *v = 1.0;
        }
    }
    Ok(SummaryCurve {
        kind: SummaryKind::F,
        r: r.to_vec(),
        values,
        valid_len: r.len(),
        degenerate: false,
    })
}

/// Nearest-neighbour distance distribution.
pub fn estimate_g(p: &PointPattern, r: &[f64]) -> Result<SummaryCurve> {
    check_grid(r)?;
    if p.is_empty() {
        return Err(Error::DegeneratePattern { n: 0, required: 1 });
    }
    let w = p.window();
    let grid = NeighbourGrid::new(p.points(), w, 0.0);
    let mut obs: Vec<(f64, bool)> = p
        .points()
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let d = grid.nearest_distance(u, Some(i)).unwrap_or(f64::INFINITY);
            let c = w.boundary_distance_unchecked(u);
            (d.min(c), d <= c)
        })
        .collect();
    let values = kaplan_meier(&mut obs, r);
    Ok(SummaryCurve {
        kind: SummaryKind::G,
        r: r.to_vec(),
        values,
        valid_len: r.len(),
        degenerate: false,
    })
}

pub fn estimate_j(p: &PointPattern, r: &[f64]) -> Result<SummaryCurve> {
    let f = estimate_f(p, r)?;
    let g = estimate_g(p, r)?;
    Ok(j_from_fg(&f, &g))
}

/// `J = (1 - G) / (1 - F)` on the prefix where `1 - F > J_EPSILON`.
pub fn j_from_fg(f: &SummaryCurve, g: &SummaryCurve) -> SummaryCurve {
    let valid_len = f
        .values
        .iter()
        .position(|&fv| !(1.0 - fv > J_EPSILON))
        .unwrap_or(f.values.len());
    let values = f
        .values
        .iter()
        .zip(&g.values)
        .enumerate()
        .map(|(i, (&fv, &gv))| {
            if i < valid_len {
                (1.0 - gv) / (1.0 - fv)
            } else {
                f64::NAN
            }
        })
        .collect();
    SummaryCurve {
        kind: SummaryKind::J,
        r: f.r.clone(),
        values,
        valid_len,
        degenerate: false,
    }
}

/// Dispatch on `kind`.
pub fn estimate(kind: SummaryKind, p: &PointPattern, r: &[f64]) -> Result<SummaryCurve> {
    match kind {
        SummaryKind::K => estimate_k(p, r),
        SummaryKind::LCentered => estimate_l_centered(p, r),
        SummaryKind::F => estimate_f(p, r),
        SummaryKind::G => estimate_g(p, r),
        SummaryKind::J => estimate_j(p, r),
    }
}

/// Default grid for `kind`: the `K`/`L` grid depends only on the window, the
/// `F`/`G`/`J` grid also on the observed intensity.
pub fn default_grid_for(kind: SummaryKind, p: &PointPattern) -> Vec<f64> {
    match kind {
        SummaryKind::K | SummaryKind::LCentered => default_r_grid(p.window()),
        _ => default_fgj_r_grid(p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::sample_poisson;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn arc_fraction_oracle(c: &Point, radius: f64, w: &Window, samples: usize) -> f64 {
        let mut inside = 0usize;
        for k in 0..samples {
            let t = 2.0 * PI * (k as f64 + 0.5) / samples as f64;
            let q = Point::new(c.x + radius * t.cos(), c.y + radius * t.sin());
            if w.contains(&q) {
                inside += 1;
            }
        }
        inside as f64 / samples as f64
    }

    #[test]
    fn default_grid_unit_square() {
        let r = default_r_grid(&Window::unit_square());
        assert_eq!(r.len(), 513);
        assert_eq!(r[0], 0.0);
        assert!((r[512] - 0.25).abs() < 1e-15);
        assert!((r[1] - 0.25 / 512.0).abs() < 1e-18);
        let w = Window::new(0.0, 125.0, 0.0, 188.0).unwrap();
        assert!((default_r_grid(&w)[512] - 31.25).abs() < 1e-12);
        let step = r[1] - r[0];
        assert!(r.windows(2).all(|p| p[1] > p[0] && ((p[1] - p[0]) - step).abs() < 1e-15));
    }

    #[test]
    fn interior_circle_has_unit_weight() {
        let w = Window::unit_square();
        assert_eq!(isotropic_weight_at(&Point::new(0.5, 0.5), 0.2, &w), 1.0);
    }

    #[test]
    fn weight_matches_arc_sampling() {
        let w = Window::unit_square();
        let cases = [
            (Point::new(0.5, 0.5), 0.6),
            (Point::new(0.1, 0.2), 0.15),
            (Point::new(0.05, 0.9), 0.3),
            (Point::new(0.3, 0.02), 0.05),
        ];
        for (c, radius) in cases {
            let frac = arc_fraction_oracle(&c, radius, &w, 1_000_000);
            let weight = isotropic_weight_at(&c, radius, &w);
            assert!((weight - 1.0 / frac).abs() < 1e-4, "{c:?} {radius}");
        }
    }

    #[test]
    fn corner_weight_exceeds_centre_weight() {
        let w = Window::unit_square();
        let near_corner = isotropic_weight_at(&Point::new(0.05, 0.05), 0.2, &w);
        let centre = isotropic_weight_at(&Point::new(0.5, 0.5), 0.2, &w);
        assert!(near_corner > centre);
    }

    #[test]
    fn far_apart_pair_gives_zero_k() {
        let p = PointPattern::new(
            vec![Point::new(0.1, 0.1), Point::new(0.9, 0.9)],
            Window::unit_square(),
        )
        .unwrap();
        let k = estimate_k(&p, &default_r_grid(p.window())).unwrap();
        assert!(k.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn k_matches_brute_force_double_sum() {
        let w = Window::unit_square();
        let pts = vec![
            Point::new(0.1, 0.1),
            Point::new(0.2, 0.15),
            Point::new(0.5, 0.5),
            Point::new(0.55, 0.6),
            Point::new(0.95, 0.4),
        ];
        let p = PointPattern::new(pts.clone(), w).unwrap();
        let r = default_r_grid(&w);
        let k = estimate_k(&p, &r).unwrap();
        for (idx, &rv) in r.iter().enumerate() {
            let mut s = 0.0;
            for i in 0..5 {
                for j in 0..5 {
                    let d = pts[i].distance(&pts[j]);
                    if i != j && d <= rv {
                        let frac = arc_fraction_oracle(&pts[i], d, &w, 200_000);
                        s += 1.0 / frac;
                    }
                }
            }
            let expect = s / 20.0;
            assert!((k.values[idx] - expect).abs() < 1e-4 * expect.max(1e-3), "r = {rv}");
        }
        assert_eq!(k.values[0], 0.0);
    }

    #[test]
    fn interior_pattern_has_unit_weights() {
        let w = Window::unit_square();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = default_r_grid(&w);
        let pts: Vec<Point> = (0..40)
            .map(|_| Point::new(0.3 + 0.4 * rng.random::<f64>(), 0.3 + 0.4 * rng.random::<f64>()))
            .collect();
        let p = PointPattern::new(pts.clone(), w).unwrap();
        // Only distances up to 0.05 keep every circle inside.
        let r_small: Vec<f64> = r.iter().copied().filter(|&v| v <= 0.05).collect();
        let k = estimate_k(&p, &r_small).unwrap();
        for (idx, &rv) in r_small.iter().enumerate() {
            let mut count = 0usize;
            for i in 0..40 {
                for j in 0..40 {
                    if i != j && pts[i].distance(&pts[j]) <= rv {
                        count += 1;
                    }
                }
            }
            let expect = count as f64 / (40.0 * 39.0);
            assert!((k.values[idx] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn k_needs_two_points() {
        let w = Window::unit_square();
        let p = PointPattern::new(vec![Point::new(0.5, 0.5)], w).unwrap();
        assert_eq!(
            estimate_k(&p, &default_r_grid(&w)),
            Err(Error::DegeneratePattern { n: 1, required: 2 })
        );
        let l = l_centered_or_zero(&p, &default_r_grid(&w)).unwrap();
        assert!(l.degenerate);
        assert!(l.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn l_centered_zero_when_k_is_poisson() {
        let r = r_grid(0.25, 11);
        let k = SummaryCurve {
            kind: SummaryKind::K,
            values: r.iter().map(|v| PI * v * v).collect(),
            r: r.clone(),
            valid_len: r.len(),
            degenerate: false,
        };
        let l = l_from_k(&k);
        assert!(l.values.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn kaplan_meier_uncensored_is_ecdf() {
        let mut obs = vec![(0.3, true), (0.1, true), (0.2, true), (0.2, true)];
        let f = kaplan_meier(&mut obs, &[0.0, 0.1, 0.15, 0.2, 0.3, 1.0]);
        assert_eq!(f, vec![0.0, 0.25, 0.25, 0.75, 1.0, 1.0]);
    }

    #[test]
    fn kaplan_meier_with_censoring() {
        // Times 1, 2+, 3, 4: S(1) = 3/4, S(3) = 3/4 * 1/2, S(4) = 0.
        let mut obs = vec![(1.0, true), (2.0, false), (3.0, true), (4.0, true)];
        let f = kaplan_meier(&mut obs, &[0.5, 1.0, 2.5, 3.0, 4.0]);
        let expect = [0.0, 0.25, 0.25, 1.0 - 0.375, 1.0];
        for (a, b) in f.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn single_point_f_reaches_one() {
        let w = Window::unit_square();
        for u in [Point::new(0.5, 0.5), Point::new(0.1, 0.8)] {
            let p = PointPattern::new(vec![u], w).unwrap();
            let r = [0.0, 0.1, w.diameter(), 2.0];
            let f = estimate_f(&p, &r).unwrap();
            assert_eq!(f.values[2], 1.0);
            assert_eq!(f.values[3], 1.0);
            assert!(f.values[0] == 0.0);
        }
    }

    #[test]
    fn g_steps_at_pair_distance() {
        let w = Window::unit_square();
        let p = PointPattern::new(vec![Point::new(0.45, 0.5), Point::new(0.55, 0.5)], w).unwrap();
        let r = r_grid(0.2, 201);
        let g = estimate_g(&p, &r).unwrap();
        let d = p.points()[0].distance(&p.points()[1]);
        for (i, &rv) in r.iter().enumerate() {
            let expect = if rv >= d { 1.0 } else { 0.0 };
            assert_eq!(g.values[i], expect, "r = {rv}");
        }
    }

    #[test]
    fn empty_pattern_errors() {
        let p = PointPattern::empty(Window::unit_square());
        assert!(estimate_f(&p, &[0.0, 0.1]).is_err());
        assert!(estimate_g(&p, &[0.0, 0.1]).is_err());
    }

    #[test]
    fn j_truncates_where_f_hits_one() {
        let r = vec![0.0, 0.1, 0.2, 0.3];
        let f = SummaryCurve {
            kind: SummaryKind::F,
            r: r.clone(),
            values: vec![0.0, 0.5, 1.0, 1.0],
            valid_len: 4,
            degenerate: false,
        };
        let g = SummaryCurve {
            kind: SummaryKind::G,
            r,
            values: vec![0.0, 0.25, 0.9, 1.0],
            valid_len: 4,
            degenerate: false,
        };
        let j = j_from_fg(&f, &g);
        assert_eq!(j.valid_len, 2);
        assert_eq!(j.values[1], 1.5);
        assert!(j.values[2].is_nan());
    }

    #[test]
    fn curves_are_monotone_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let w = Window::unit_square();
        let p = sample_poisson(&w, 150.0, &mut rng).unwrap();
        let r = default_r_grid(&w);
        let k = estimate_k(&p, &r).unwrap();
        assert!(k.values.windows(2).all(|v| v[1] >= v[0]));
        let rf = default_fgj_r_grid(&p);
        for c in [estimate_f(&p, &rf).unwrap(), estimate_g(&p, &rf).unwrap()] {
            assert!(c.values.windows(2).all(|v| v[1] >= v[0]));
            assert!(c.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn rejects_bad_grid() {
        let p = PointPattern::new(
            vec![Point::new(0.1, 0.1), Point::new(0.2, 0.2)],
            Window::unit_square(),
        )
        .unwrap();
        assert!(estimate_k(&p, &[0.1, 0.05]).is_err());
        assert!(estimate_k(&p, &[]).is_err());
    }
}
