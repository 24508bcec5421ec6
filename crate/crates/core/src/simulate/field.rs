//! Gaussian random fields on a regular grid of cell centres with exponential
//! covariance `σ² exp(-d / s)`, drawn through a dense Cholesky factor.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods whenever std is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::geometry::{Point, Window};
use crate::linalg::Cholesky;
use crate::{Error, Result};

/// Diagonal jitter tried in order until the correlation matrix factors.
const NUGGETS: [f64; 4] = [1e-10, 1e-8, 1e-6, 1e-4];

/// Mean, variance and correlation scale of a stationary Gaussian field with
/// exponential covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrfParams {
    pub mu: f64,
    pub sigma2: f64,
    pub scale: f64,
}

impl GrfParams {
    pub fn new(mu: f64, sigma2: f64, scale: f64) -> Result<Self> {
        let p = Self { mu, sigma2, scale };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(Error::InvalidParameter(format!("mu = {}", self.mu)));
        }
        if !(self.sigma2 >= 0.0) || !self.sigma2.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma2 = {}", self.sigma2)));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::InvalidParameter(format!("s = {}", self.scale)));
        }
        Ok(())
    }

    /// Intensity of the corresponding LGCP, `exp(μ + σ²/2)`.
    pub fn lgcp_intensity(&self) -> f64 {
        (self.mu + 0.5 * self.sigma2).exp()
    }

    pub fn covariance(&self, distance: f64) -> f64 {
        self.sigma2 * (-distance / self.scale).exp()
    }
}

/// Layout of `resolution × resolution` cells covering a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    pub window: Window,
    pub resolution: usize,
}

impl GridGeometry {
    pub fn new(window: Window, resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::InvalidParameter(format!(
                "field resolution {resolution} < 2"
            )));
        }
        Ok(Self { window, resolution })
    }

    pub fn cell_width(&self) -> f64 {
        self.window.width() / self.resolution as f64
    }

    pub fn cell_height(&self) -> f64 {
        self.window.height() / self.resolution as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_width() * self.cell_height()
    }

    pub fn cells(&self) -> usize {
        self.resolution * self.resolution
    }

    /// Centre of cell `(col, row)`, flattened as `row * resolution + col`.
    pub fn centre(&self, index: usize) -> Point {
        let col = index % self.resolution;
        let row = index / self.resolution;
        Point::new(
            self.window.x_min() + (col as f64 + 0.5) * self.cell_width(),
            self.window.y_min() + (row as f64 + 0.5) * self.cell_height(),
        )
    }

    /// Index of the cell nearest to `u`; points outside the window map to the
    /// closest boundary cell.
    pub fn nearest_cell(&self, u: &Point) -> usize {
        let last = self.resolution as isize - 1;
        let col = ((u.x - self.window.x_min()) / self.cell_width()).floor() as isize;
        let row = ((u.y - self.window.y_min()) / self.cell_height()).floor() as isize;
        row.clamp(0, last) as usize * self.resolution + col.clamp(0, last) as usize
    }
}

/// Cholesky factor of the correlation matrix `exp(-d_ij / s)` between cell
/// centres. Depends only on the window shape, resolution and scale, so a
/// factor can be reused for any `μ` and `σ²`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationFactor {
    width: f64,
    height: f64,
    resolution: usize,
    scale: f64,
    nugget: f64,
    chol: Cholesky,
}

impl CorrelationFactor {
    pub fn new(window: &Window, resolution: usize, scale: f64) -> Result<Self> {
        let grid = GridGeometry::new(*window, resolution)?;
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidParameter(format!("s = {scale}")));
        }
        let n = grid.cells();
        let centres: Vec<Point> = (0..n).map(|i| grid.centre(i)).collect();
        let mut base = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..i {
                base[i * n + j] = (-centres[i].distance(&centres[j]) / scale).exp();
            }
        }
        let mut last_err = Error::NotPositiveDefinite { pivot: 0 };
        for nugget in NUGGETS {
            let mut a = base.clone();
            for i in 0..n {
                a[i * n + i] = 1.0 + nugget;
            }
            match Cholesky::factor(a, n) {
                Ok(chol) => {
                    if nugget > NUGGETS[0] {
                        log::warn!(
                            "correlation matrix (s = {scale}, resolution {resolution}) needed nugget {nugget}"
                        );
                    }
                    return Ok(Self {
                        width: window.width(),
                        height: window.height(),
                        resolution,
                        scale,
                        nugget,
                        chol,
                    });
                }
                Err(e) => last_err = e,
            }
        }
        Err(last_err)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Diagonal jitter that was needed for the factorization.
    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    /// Whether the factor was built for a window of this shape.
    pub fn fits(&self, window: &Window, resolution: usize, scale: f64) -> bool {
        self.resolution == resolution
            && self.scale == scale
            && self.width == window.width()
            && self.height == window.height()
    }
}

/// Field values `Y(u)` at cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    geometry: GridGeometry,
    values: Vec<f64>,
}

impl FieldGrid {
    pub fn constant(geometry: GridGeometry, value: f64) -> Self {
        Self {
            values: vec![value; geometry.cells()],
            geometry,
        }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn window(&self) -> &Window {
        &self.geometry.window
    }

    pub fn resolution(&self) -> usize {
        self.geometry.resolution
    }

    /// Row-major values, row index along `y`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.geometry.resolution + col]
    }

    /// Value of the nearest cell (clamped for points outside the window).
    pub fn value_at(&self, u: &Point) -> f64 {
        self.values[self.geometry.nearest_cell(u)]
    }
}

/// Draw a field using a precomputed correlation factor.
pub fn sample_grf_with<R: Rng + ?Sized>(
    window: &Window,
    factor: &CorrelationFactor,
    params: &GrfParams,
    rng: &mut R,
) -> Result<FieldGrid> {
    params.validate()?;
    let geometry = GridGeometry::new(*window, factor.resolution)?;
    if !factor.fits(window, factor.resolution, params.scale) {
        return Err(Error::InvalidParameter(format!(
            "correlation factor built for s = {} does not match s = {}",
            factor.scale, params.scale
        )));
    }
    if params.sigma2 == 0.0 {
        return Ok(FieldGrid::constant(geometry, params.mu));
    }
    let n = geometry.cells();
    let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let mut values = vec![0.0; n];
    factor.chol.mul_vec(&z, &mut values);
    let sd = params.sigma2.sqrt();
    for v in &mut values {
        *v = params.mu + sd * *v;
    }
    Ok(FieldGrid { geometry, values })
}

/// Draw a field, factoring the correlation matrix on the fly. With `σ² = 0`
/// no factorization is needed and the field is constant.
pub fn sample_grf<R: Rng + ?Sized>(
    window: &Window,
    resolution: usize,
    params: &GrfParams,
    rng: &mut R,
) -> Result<FieldGrid> {
    params.validate()?;
    let geometry = GridGeometry::new(*window, resolution)?;
    if params.sigma2 == 0.0 {
        return Ok(FieldGrid::constant(geometry, params.mu));
    }
    let factor = CorrelationFactor::new(window, resolution, params.scale)?;
    sample_grf_with(window, &factor, params, rng)
}
