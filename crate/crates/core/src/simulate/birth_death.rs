//! Birth–death Metropolis–Hastings for pairwise interaction processes with
//! conditional intensity `λ(u; x) = β(u) γ^{t(u, x)}`, where `t(u, x)` counts
//! the points of `x` within distance `R` of `u`.

use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods whenever std is linked
use num_traits::Float;
use rand::Rng;

use crate::geometry::{Point, Window};

/// Thinned record of `(n(x), S_R(x))` along a chain.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChainTrace {
    pub thin: usize,
    pub iteration: Vec<usize>,
    pub count: Vec<usize>,
    pub close_pairs: Vec<u64>,
}

impl ChainTrace {
    pub fn len(&self) -> usize {
        self.iteration.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iteration.is_empty()
    }

    /// Mean of `n(x)` and `S_R(x)` over the records after dropping the first
    /// `burn_fraction` of them.
    pub fn post_burn_means(&self, burn_fraction: f64) -> (f64, f64) {
        let skip = ((self.len() as f64) * burn_fraction.clamp(0.0, 1.0)) as usize;
        let kept = self.len() - skip;
        if kept == 0 {
            return (f64::NAN, f64::NAN);
        }
        let n = self.count[skip..].iter().map(|&c| c as f64).sum::<f64>() / kept as f64;
        let s = self.close_pairs[skip..].iter().map(|&c| c as f64).sum::<f64>() / kept as f64;
        (n, s)
    }
}

/// Bucket grid supporting insertion and removal.
struct DynamicGrid {
    x0: f64,
    y0: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
}

impl DynamicGrid {
    fn new(window: &Window, radius: f64) -> Self {
        let extent = window.width().max(window.height());
        let cell = radius.max(extent / 256.0);
        let nx = ((window.width() / cell).ceil() as usize).max(1);
        let ny = ((window.height() / cell).ceil() as usize).max(1);
        Self {
            x0: window.x_min(),
            y0: window.y_min(),
            cell,
            nx,
            ny,
            buckets: (0..nx * ny).map(|_| Vec::new()).collect(),
        }
    }

    #[inline]
    fn coords(&self, p: &Point) -> (usize, usize) {
        let cx = (((p.x - self.x0) / self.cell).floor().max(0.0) as usize).min(self.nx - 1);
        let cy = (((p.y - self.y0) / self.cell).floor().max(0.0) as usize).min(self.ny - 1);
        (cx, cy)
    }

    #[inline]
    fn cell_of(&self, p: &Point) -> usize {
        let (cx, cy) = self.coords(p);
        cy * self.nx + cx
    }

    fn insert(&mut self, p: &Point, index: u32) {
        let c = self.cell_of(p);
        self.buckets[c].push(index);
    }

    fn remove(&mut self, p: &Point, index: u32) {
        let c = self.cell_of(p);
        let b = &mut self.buckets[c];
        if let Some(pos) = b.iter().position(|&i| i == index) {
            b.swap_remove(pos);
        }
    }

    fn relabel(&mut self, p: &Point, from: u32, to: u32) {
        let c = self.cell_of(p);
        if let Some(slot) = self.buckets[c].iter_mut().find(|i| **i == from) {
            *slot = to;
        }
    }

    /// Points of `points` within `radius` of `u`, excluding index `skip`.
    fn count_within(&self, points: &[Point], u: &Point, radius: f64, skip: Option<u32>) -> usize {
        let r2 = radius * radius;
        let (cx, cy) = self.coords(u);
        let lx = cx.saturating_sub(1);
        let ly = cy.saturating_sub(1);
        let hx = (cx + 1).min(self.nx - 1);
        let hy = (cy + 1).min(self.ny - 1);
        let mut k = 0;
        for y in ly..=hy {
            for x in lx..=hx {
                for &i in &self.buckets[y * self.nx + x] {
                    if Some(i) != skip && u.distance_squared(&points[i as usize]) <= r2 {
                        k += 1;
                    }
                }
            }
        }
        k
    }
}

/// Interaction part of the target: radius `R` and `γ ∈ [0, 1]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Interaction {
    pub radius: f64,
    pub gamma: f64,
}

impl Interaction {
    fn active(&self) -> bool {
        self.radius > 0.0 && self.gamma != 1.0
    }

    #[inline]
    fn factor(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.gamma.powi(t as i32)
        }
    }
}

/// Acceptance probability numerator/denominator for a birth of `u` with
/// conditional intensity `lambda` into a state with `n` points on a window of
/// area `area`.
#[inline]
pub(crate) fn birth_ratio(lambda: f64, area: f64, n: usize) -> f64 {
    lambda * area / (n as f64 + 1.0)
}

/// Acceptance ratio for the death of a point whose conditional intensity given
/// the remaining `n - 1` points is `lambda`.
#[inline]
pub(crate) fn death_ratio(lambda: f64, area: f64, n: usize) -> f64 {
    n as f64 / (lambda * area)
}

/// Run `n_iter` birth–death proposals from the empty configuration on
/// `window`. `activity(u)` is the first-order term `β(u)`.
pub(crate) fn run_chain<R, A>(
    window: &Window,
    interaction: Interaction,
    activity: A,
    n_iter: usize,
    thin: usize,
    rng: &mut R,
) -> (Vec<Point>, Option<ChainTrace>)
where
    R: Rng + ?Sized,
    A: Fn(&Point) -> f64,
{
    let area = window.area();
    let track_pairs = interaction.radius > 0.0;
    let mut grid = DynamicGrid::new(window, interaction.radius);
    let mut points: Vec<Point> = Vec::new();
    let mut close_pairs: u64 = 0;
    let mut trace = (thin > 0).then(|| ChainTrace {
        thin,
        iteration: Vec::with_capacity(n_iter / thin),
        count: Vec::with_capacity(n_iter / thin),
        close_pairs: Vec::with_capacity(n_iter / thin),
    });

    for it in 1..=n_iter {
        let birth = rng.random::<f64>() < 0.5;
        if birth {
            let u = window.lerp(rng.random(), rng.random());
            let t = if track_pairs {
                grid.count_within(&points, &u, interaction.radius, None)
            } else {
                0
            };
            let lambda = if interaction.active() {
                activity(&u) * interaction.factor(t)
            } else {
                activity(&u)
            };
            let ratio = birth_ratio(lambda, area, points.len());
            if ratio >= 1.0 || rng.random::<f64>() < ratio {
                let idx = points.len() as u32;
                grid.insert(&u, idx);
                points.push(u);
                close_pairs += t as u64;
            }
        } else if !points.is_empty() {
            let i = rng.random_range(0..points.len());
            let u = points[i];
            let t = if track_pairs {
                grid.count_within(&points, &u, interaction.radius, Some(i as u32))
            } else {
                0
            };
            let lambda = if interaction.active() {
                activity(&u) * interaction.factor(t)
            } else {
                activity(&u)
            };
            let ratio = death_ratio(lambda, area, points.len());
            if ratio >= 1.0 || rng.random::<f64>() < ratio {
                let last = (points.len() - 1) as u32;
                grid.remove(&u, i as u32);
                if i as u32 != last {
                    let moved = points[last as usize];
                    grid.relabel(&moved, last, i as u32);
                }
                points.swap_remove(i);
                close_pairs -= t as u64;
            }
        }
        if let Some(tr) = trace.as_mut() {
            if it % thin == 0 {
                tr.iteration.push(it);
                tr.count.push(points.len());
                tr.close_pairs.push(close_pairs);
            }
        }
    }
    (points, trace)
}

/// Per-point neighbour counts by brute force over the grid.
#[cfg(test)]
fn neighbour_counts(points: &[Point], window: &Window, radius: f64) -> Vec<usize> {
    let mut grid = DynamicGrid::new(window, radius);
    for (i, p) in points.iter().enumerate() {
        grid.insert(p, i as u32);
    }
    let mut out = alloc::vec![0; points.len()];
    for (i, p) in points.iter().enumerate() {
        out[i] = grid.count_within(points, p, radius, Some(i as u32));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{count_r_close_pairs, PointPattern};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_activity_gives_flat_trace() {
        let w = Window::unit_square();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inter = Interaction {
            radius: 0.05,
            gamma: 0.5,
        };
        let (pts, trace) = run_chain(&w, inter, |_| 0.0, 1000, 10, &mut rng);
        let trace = trace.unwrap();
        assert!(pts.is_empty());
        assert_eq!(trace.len(), 100);
        assert!(trace.count.iter().all(|&c| c == 0));
        assert!(trace.close_pairs.iter().all(|&c| c == 0));
    }

    #[test]
    fn incremental_close_pairs_match_recount() {
        let w = Window::unit_square();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inter = Interaction {
            radius: 0.04,
            gamma: 0.6,
        };
        let (pts, trace) = run_chain(&w, inter, |_| 300.0, 20_000, 20_000, &mut rng);
        let trace = trace.unwrap();
        let p = PointPattern::new(pts, w).unwrap();
        assert_eq!(*trace.close_pairs.last().unwrap(), count_r_close_pairs(&p, 0.04));
        assert_eq!(*trace.count.last().unwrap(), p.n());
        let nc = neighbour_counts(p.points(), &w, 0.04);
        assert_eq!(nc.iter().sum::<usize>() as u64, 2 * count_r_close_pairs(&p, 0.04));
    }
}
