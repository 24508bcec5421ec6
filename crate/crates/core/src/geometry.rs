//! Rectangular windows, point patterns and the distance computations shared by
//! the samplers and summary statistics.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods whenever std is linked
use num_traits::Float;

use crate::{Error, Result};

/// A location in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn distance_squared(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    #[inline]
    pub fn distance(&self, other: &Point) -> f64 {
        self.distance_squared(other).sqrt()
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Self { x, y }
    }
}

/// Closed axis-aligned rectangle `[x_min, x_max] × [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Window {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let finite = [x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite());
        if !finite || x_max <= x_min || y_max <= y_min {
            return Err(Error::InvalidWindow(format!(
                "[{x_min}, {x_max}] x [{y_min}, {y_max}]"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            y_min,
            y_max,
        })
    }

    /// The unit square `[0, 1]²`.
    pub const fn unit_square() -> Self {
        Self {
            x_min: 0.0,
            x_max: 1.0,
            y_min: 0.0,
            y_max: 1.0,
        }
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn shorter_side(&self) -> f64 {
        self.width().min(self.height())
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    /// Boundary points count as inside.
    #[inline]
    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    /// Shortest distance from `u` to the four edges.
    pub fn distance_to_boundary(&self, u: &Point) -> Result<f64> {
        if !self.contains(u) {
            return Err(Error::PointOutsideWindow { x: u.x, y: u.y });
        }
        Ok(self.boundary_distance_unchecked(u))
    }

    #[inline]
    pub(crate) fn boundary_distance_unchecked(&self, u: &Point) -> f64 {
        (u.x - self.x_min)
            .min(self.x_max - u.x)
            .min(u.y - self.y_min)
            .min(self.y_max - u.y)
    }

    /// Grow the window by `margin` on every side.
    pub fn dilate(&self, margin: f64) -> Result<Self> {
        if !(margin >= 0.0) {
            return Err(Error::InvalidParameter(format!("margin {margin} < 0")));
        }
        Self::new(
            self.x_min - margin,
            self.x_max + margin,
            self.y_min - margin,
            self.y_max + margin,
        )
    }

    /// Shrink the window by `margin` on every side; fails when nothing is left.
    pub fn erode(&self, margin: f64) -> Result<Self> {
        if !(margin >= 0.0) {
            return Err(Error::InvalidParameter(format!("margin {margin} < 0")));
        }
        if 2.0 * margin >= self.shorter_side() {
            return Err(Error::InvalidWindow(format!(
                "eroding by {margin} leaves an empty window"
            )));
        }
        Self::new(
            self.x_min + margin,
            self.x_max - margin,
            self.y_min + margin,
            self.y_max - margin,
        )
    }

    /// Uniform location in the window from two unit-interval variates.
    #[inline]
    pub(crate) fn lerp(&self, ux: f64, uy: f64) -> Point {
        Point::new(
            self.x_min + ux * self.width(),
            self.y_min + uy * self.height(),
        )
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            x_min: self.x_min + dx,
            x_max: self.x_max + dx,
            y_min: self.y_min + dy,
            y_max: self.y_max + dy,
        }
    }
}

/// A finite set of points observed in a window.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPattern {
    points: Vec<Point>,
    window: Window,
}

impl PointPattern {
    /// Every point must lie in the (closed) window.
    pub fn new(points: Vec<Point>, window: Window) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !window.contains(p)) {
            return Err(Error::PointOutsideWindow { x: p.x, y: p.y });
        }
        Ok(Self { points, window })
    }

    pub fn empty(window: Window) -> Self {
        Self {
            points: Vec::new(),
            window,
        }
    }

    /// Keep only the points that fall inside `window`.
    pub fn clipped(points: impl IntoIterator<Item = Point>, window: Window) -> Self {
        Self {
            points: points.into_iter().filter(|p| window.contains(p)).collect(),
            window,
        }
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    /// Observed intensity `n / |W|`.
    pub fn intensity(&self) -> f64 {
        self.n() as f64 / self.window.area()
    }

    /// Number of points whose coordinates repeat an earlier point.
    pub fn duplicate_count(&self) -> usize {
        let mut sorted: Vec<(u64, u64)> = self
            .points
            .iter()
            .map(|p| (p.x.to_bits(), p.y.to_bits()))
            .collect();
        sorted.sort_unstable();
        sorted.windows(2).filter(|w| w[0] == w[1]).count()
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|p| Point::new(p.x + dx, p.y + dy))
                .collect(),
            window: self.window.translate(dx, dy),
        }
    }
}

/// Symmetric `n × n` matrix of inter-point distances, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

pub fn pairwise_distances(p: &PointPattern) -> DistanceMatrix {
    let n = p.n();
    let pts = p.points();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = pts[i].distance(&pts[j]);
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    DistanceMatrix { n, values }
}

/// `S_R(x)`: number of unordered pairs at distance at most `r`.
pub fn count_r_close_pairs(p: &PointPattern, r: f64) -> u64 {
    if p.n() < 2 || !(r >= 0.0) {
        return 0;
    }
    let grid = NeighbourGrid::new(p.points(), p.window(), r);
    let r2 = r * r;
    let mut total = 0u64;
    for (i, u) in p.points().iter().enumerate() {
        grid.for_each_candidate(u, r, |j, v| {
            if j > i && u.distance_squared(v) <= r2 {
                total += 1;
            }
        });
    }
    total
}

/// Static bucket grid over a set of points for fixed-radius and nearest
/// neighbour queries.
#[derive(Debug, Clone)]
pub struct NeighbourGrid<'a> {
    points: &'a [Point],
    x0: f64,
    y0: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    starts: Vec<usize>,
    order: Vec<usize>,
}

const MAX_CELLS_PER_AXIS: usize = 512;

impl<'a> NeighbourGrid<'a> {
    /// Index `points` (which should lie in or near `window`) with cells of side
    /// roughly `cell_hint`. The hint is clamped to keep the grid small.
    pub fn new(points: &'a [Point], window: &Window, cell_hint: f64) -> Self {
        let extent = window.width().max(window.height());
        let density_cell = if points.is_empty() {
            extent
        } else {
            (window.area() / points.len() as f64).sqrt()
        };
        let mut cell = if cell_hint > 0.0 && cell_hint.is_finite() {
            cell_hint
        } else {
            density_cell
        };
        cell = cell.max(extent / MAX_CELLS_PER_AXIS as f64);
        let nx = ((window.width() / cell).ceil() as usize).max(1);
        let ny = ((window.height() / cell).ceil() as usize).max(1);
        let (x0, y0) = (window.x_min(), window.y_min());
        let cell_of = |p: &Point| -> usize {
            let cx = (((p.x - x0) / cell).floor().max(0.0) as usize).min(nx - 1);
            let cy = (((p.y - y0) / cell).floor().max(0.0) as usize).min(ny - 1);
            cy * nx + cx
        };
        let mut counts = vec![0usize; nx * ny + 1];
        let cells: Vec<usize> = points.iter().map(cell_of).collect();
        for &c in &cells {
            counts[c + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut fill = counts.clone();
        let mut order = vec![0usize; points.len()];
        for (i, &c) in cells.iter().enumerate() {
            order[fill[c]] = i;
            fill[c] += 1;
        }
        Self {
            points,
            x0,
            y0,
            cell,
            nx,
            ny,
            starts: counts,
            order,
        }
    }

    #[inline]
    fn cell_coords(&self, x: f64, y: f64) -> (isize, isize) {
        (
            ((x - self.x0) / self.cell).floor() as isize,
            ((y - self.y0) / self.cell).floor() as isize,
        )
    }

    #[inline]
    fn visit_cell(&self, cx: isize, cy: isize, f: &mut impl FnMut(usize, &Point)) {
        if cx < 0 || cy < 0 || cx >= self.nx as isize || cy >= self.ny as isize {
            return;
        }
        let c = cy as usize * self.nx + cx as usize;
        for &i in &self.order[self.starts[c]..self.starts[c + 1]] {
            f(i, &self.points[i]);
        }
    }

    /// Calls `f` for every point that may lie within `radius` of `u` (a
    /// superset; callers check the distance).
    pub fn for_each_candidate(&self, u: &Point, radius: f64, mut f: impl FnMut(usize, &Point)) {
        let (lx, ly) = self.cell_coords(u.x - radius, u.y - radius);
        let (hx, hy) = self.cell_coords(u.x + radius, u.y + radius);
        let lx = lx.max(0);
        let ly = ly.max(0);
        let hx = hx.min(self.nx as isize - 1);
        let hy = hy.min(self.ny as isize - 1);
        for cy in ly..=hy {
            for cx in lx..=hx {
                self.visit_cell(cx, cy, &mut f);
            }
        }
    }

    /// Number of indexed points within `radius` of `u`, skipping index `skip`.
    pub fn count_within(&self, u: &Point, radius: f64, skip: Option<usize>) -> usize {
        let r2 = radius * radius;
        let mut k = 0;
        self.for_each_candidate(u, radius, |i, v| {
            if Some(i) != skip && u.distance_squared(v) <= r2 {
                k += 1;
            }
        });
        k
    }

    /// Distance from `u` to the closest indexed point other than `skip`.
    pub fn nearest_distance(&self, u: &Point, skip: Option<usize>) -> Option<f64> {
        if self.points.len() <= usize::from(skip.is_some()) {
            return None;
        }
        let (cx, cy) = self.cell_coords(u.x, u.y);
        let cx = cx.clamp(0, self.nx as isize - 1);
        let cy = cy.clamp(0, self.ny as isize - 1);
        let mut best = f64::INFINITY;
        let max_ring = self.nx.max(self.ny) as isize;
        for ring in 0..=max_ring {
            // Every point in ring k is at least (k - 1) cells away.
            if ring >= 1 {
                let reach = (ring - 1) as f64 * self.cell;
                if reach * reach > best {
                    break;
                }
            }
            let mut visit = |i: usize, v: &Point| {
                if Some(i) != skip {
                    let d = u.distance_squared(v);
                    if d < best {
                        best = d;
                    }
                }
            };
            if ring == 0 {
                self.visit_cell(cx, cy, &mut visit);
                continue;
            }
            for dx in -ring..=ring {
                self.visit_cell(cx + dx, cy - ring, &mut visit);
                self.visit_cell(cx + dx, cy + ring, &mut visit);
            }
            for dy in (-ring + 1)..ring {
                self.visit_cell(cx - ring, cy + dy, &mut visit);
                self.visit_cell(cx + ring, cy + dy, &mut visit);
            }
        }
        best.is_finite().then(|| best.sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pattern(n: usize, seed: u64) -> PointPattern {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Window::unit_square();
        let pts = (0..n)
            .map(|_| Point::new(rng.random(), rng.random()))
            .collect();
        PointPattern::new(pts, w).unwrap()
    }

    #[test]
    fn window_rejects_inverted_bounds() {
        assert!(Window::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(Window::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(Window::new(0.0, f64::NAN, 0.0, 1.0).is_err());
    }

    #[test]
    fn pattern_rejects_outside_points_but_keeps_boundary() {
        let w = Window::unit_square();
        assert!(PointPattern::new(vec![Point::new(1.0, 0.0)], w).is_ok());
        assert!(PointPattern::new(vec![Point::new(1.0001, 0.5)], w).is_err());
    }

    #[test]
    fn duplicates_are_counted() {
        let w = Window::unit_square();
        let p = PointPattern::new(
            vec![Point::new(0.2, 0.2), Point::new(0.2, 0.2), Point::new(0.3, 0.2)],
            w,
        )
        .unwrap();
        assert_eq!(p.duplicate_count(), 1);
    }

    #[test]
    fn three_four_five() {
        let p = PointPattern::new(
            vec![Point::new(0.0, 0.0), Point::new(3.0, 4.0)],
            Window::new(0.0, 5.0, 0.0, 5.0).unwrap(),
        )
        .unwrap();
        let d = pairwise_distances(&p);
        assert_eq!(d.get(0, 1), 5.0);
        assert_eq!(d.get(1, 0), 5.0);
        assert_eq!(d.get(0, 0), 0.0);
    }

    #[test]
    fn single_point_distance_matrix() {
        let p = PointPattern::new(vec![Point::new(0.5, 0.5)], Window::unit_square()).unwrap();
        let d = pairwise_distances(&p);
        assert_eq!(d.n(), 1);
        assert_eq!(d.get(0, 0), 0.0);
    }

    #[test]
    fn distance_matrix_matches_per_pair_formula() {
        let p = random_pattern(4, 11);
        let d = pairwise_distances(&p);
        for i in 0..4 {
            for j in 0..4 {
                let (a, b) = (p.points()[i], p.points()[j]);
                let direct = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
                assert_eq!(d.get(i, j), direct);
            }
        }
    }

    #[test]
    fn close_pairs_small_cases() {
        let w = Window::unit_square();
        let p = PointPattern::new(vec![Point::new(0.0, 0.0), Point::new(0.1, 0.0)], w).unwrap();
        assert_eq!(count_r_close_pairs(&p, 0.2), 1);
        let q = random_pattern(30, 3);
        assert_eq!(count_r_close_pairs(&q, 0.0), 0);
    }

    #[test]
    fn close_pairs_match_brute_force() {
        let p = random_pattern(20, 5);
        let pts = p.points();
        let mut brute = 0;
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                if pts[i].distance(&pts[j]) <= 0.05 {
                    brute += 1;
                }
            }
        }
        assert_eq!(count_r_close_pairs(&p, 0.05), brute);
        let big = random_pattern(400, 6);
        let bp = big.points();
        let mut brute = 0;
        for i in 0..bp.len() {
            for j in (i + 1)..bp.len() {
                if bp[i].distance(&bp[j]) <= 0.07 {
                    brute += 1;
                }
            }
        }
        assert_eq!(count_r_close_pairs(&big, 0.07), brute);
    }

    #[test]
    fn boundary_distance() {
        let w = Window::unit_square();
        assert_eq!(w.distance_to_boundary(&Point::new(0.5, 0.5)).unwrap(), 0.5);
        assert_eq!(w.distance_to_boundary(&Point::new(0.1, 0.4)).unwrap(), 0.1);
        assert!(w.distance_to_boundary(&Point::new(1.5, 0.4)).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let u = Point::new(rng.random(), rng.random());
            let direct = [u.x, 1.0 - u.x, u.y, 1.0 - u.y]
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            assert_eq!(w.distance_to_boundary(&u).unwrap(), direct);
        }
    }

    #[test]
    fn dilate_and_erode() {
        let w = Window::unit_square();
        let d = w.dilate(0.1).unwrap();
        assert_eq!(
            (d.x_min(), d.x_max(), d.y_min(), d.y_max()),
            (-0.1, 1.1, -0.1, 1.1)
        );
        let e = w.erode(0.1).unwrap();
        assert_eq!(
            (e.x_min(), e.x_max(), e.y_min(), e.y_max()),
            (0.1, 0.9, 0.1, 0.9)
        );
        let back = w.dilate(0.25).unwrap().erode(0.25).unwrap();
        assert_eq!(back, w);
        assert!(d.area() > w.area() && w.area() > e.area());
        assert!(w.erode(0.5).is_err());
        assert!(w.dilate(-1.0).is_err());
    }

    #[test]
    fn nearest_distance_matches_brute_force() {
        let p = random_pattern(300, 9);
        let grid = NeighbourGrid::new(p.points(), p.window(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..200 {
            let u = Point::new(rng.random(), rng.random());
            let brute = p
                .points()
                .iter()
                .map(|v| u.distance(v))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(grid.nearest_distance(&u, None).unwrap(), brute);
        }
        for i in 0..p.n() {
            let u = p.points()[i];
            let brute = p
                .points()
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, v)| u.distance(v))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(grid.nearest_distance(&u, Some(i)).unwrap(), brute);
        }
    }

    #[test]
    fn nearest_distance_sparse() {
        let w = Window::unit_square();
        let pts = vec![Point::new(0.01, 0.01)];
        let grid = NeighbourGrid::new(&pts, &w, 0.001);
        let d = grid.nearest_distance(&Point::new(0.99, 0.99), None).unwrap();
        assert!((d - 0.98 * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(grid.nearest_distance(&pts[0], Some(0)), None);
    }
}
