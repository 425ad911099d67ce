//! Polar grid geometry and the object location similarity (OLS) kernel.

use serde::{Deserialize, Serialize};

use crate::data::{Detection, ObjectAnnotation};
use crate::error::{Error, Result};

/// Range-azimuth grid extents.
///
/// Range bins span `[range_min, range_max]` inclusive. Azimuth bins follow the
/// angle-FFT convention: bin `j` sits at `azimuth_min + j * span / grid_size`,
/// so bin `grid_size / 2` is boresight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarGrid {
    pub range_min: f64,
    pub range_max: f64,
    pub azimuth_min: f64,
    pub azimuth_max: f64,
    pub grid_size: usize,
}

impl Default for PolarGrid {
    fn default() -> Self {
        PolarGrid::new(1.0, 25.0, 60f64.to_radians(), 128).expect("default grid is valid")
    }
}

impl PolarGrid {
    /// Grid with azimuth bounds `[-half_fov, half_fov]`.
    pub fn new(range_min: f64, range_max: f64, half_fov: f64, grid_size: usize) -> Result<Self> {
        let g = PolarGrid {
            range_min,
            range_max,
            azimuth_min: -half_fov,
            azimuth_max: half_fov,
            grid_size,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.range_min >= 0.0 && self.range_max > self.range_min) {
            return Err(Error::Config(format!(
                "range extents [{}, {}] invalid",
                self.range_min, self.range_max
            )));
        }
        if !(self.azimuth_max > 0.0 && (self.azimuth_min + self.azimuth_max).abs() < 1e-12) {
            return Err(Error::Config(format!(
                "azimuth extents [{}, {}] must be symmetric about 0",
                self.azimuth_min, self.azimuth_max
            )));
        }
        if self.grid_size < 2 {
            return Err(Error::Config("grid_size must be >= 2".into()));
        }
        Ok(())
    }

    pub fn with_grid_size(mut self, grid_size: usize) -> Self {
        self.grid_size = grid_size;
        self
    }

    fn check(&self, range_idx: f64, azimuth_idx: f64) -> Result<()> {
        let g = self.grid_size as f64;
        if !(0.0..=g - 1.0).contains(&range_idx) || !(0.0..=g - 1.0).contains(&azimuth_idx) {
            return Err(Error::OutOfBounds(format!(
                "grid index (range {range_idx}, azimuth {azimuth_idx}) outside grid {}",
                self.grid_size
            )));
        }
        Ok(())
    }

    /// Range in meters of a (possibly fractional) range index.
    pub fn range_m(&self, range_idx: f64) -> f64 {
        self.range_min
            + range_idx * (self.range_max - self.range_min) / (self.grid_size as f64 - 1.0)
    }

    /// Azimuth in radians of a (possibly fractional) azimuth index.
    pub fn azimuth_rad(&self, azimuth_idx: f64) -> f64 {
        self.azimuth_min + azimuth_idx * (self.azimuth_max - self.azimuth_min) / self.grid_size as f64
    }

    /// Bird's-eye position `(x, y)` in meters; `y` points along boresight.
    pub fn to_cartesian(&self, range_idx: usize, azimuth_idx: usize) -> Result<(f64, f64)> {
        self.check(range_idx as f64, azimuth_idx as f64)?;
        Ok(self.to_cartesian_unchecked(range_idx as f64, azimuth_idx as f64))
    }

    fn to_cartesian_unchecked(&self, range_idx: f64, azimuth_idx: f64) -> (f64, f64) {
        let r = self.range_m(range_idx);
        let theta = self.azimuth_rad(azimuth_idx);
        (r * theta.sin(), r * theta.cos())
    }
}

pub fn grid_to_cartesian(grid: &PolarGrid, range_idx: usize, azimuth_idx: usize) -> Result<(f64, f64)> {
    grid.to_cartesian(range_idx, azimuth_idx)
}

/// Per-class localisation tolerance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OlsParams {
    pub kappa: Vec<f64>,
}

impl Default for OlsParams {
    fn default() -> Self {
        OlsParams {
            kappa: vec![0.5, 0.7, 1.0],
        }
    }
}

impl OlsParams {
    pub fn new(kappa: Vec<f64>) -> Result<Self> {
        let p = OlsParams { kappa };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kappa.is_empty() || self.kappa.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(Error::Config(format!(
                "kappa must be positive for every class, got {:?}",
                self.kappa
            )));
        }
        Ok(())
    }

    pub fn kappa_for(&self, class_id: usize) -> f64 {
        self.kappa[class_id.min(self.kappa.len() - 1)]
    }
}

/// A point object on the grid.
pub trait GridPoint {
    fn class_id(&self) -> usize;
    fn range_idx(&self) -> usize;
    fn azimuth_idx(&self) -> usize;
}

impl GridPoint for ObjectAnnotation {
    fn class_id(&self) -> usize {
        self.class_id
    }
    fn range_idx(&self) -> usize {
        self.range_idx
    }
    fn azimuth_idx(&self) -> usize {
        self.azimuth_idx
    }
}

impl GridPoint for Detection {
    fn class_id(&self) -> usize {
        self.class_id
    }
    fn range_idx(&self) -> usize {
        self.range_idx
    }
    fn azimuth_idx(&self) -> usize {
        self.azimuth_idx
    }
}

/// `exp(-d² / (2 (s κ)²))`.
pub fn ols_kernel(distance: f64, scale: f64, kappa: f64) -> f64 {
    let tol = scale * kappa;
    (-(distance * distance) / (2.0 * tol * tol)).exp()
}

/// OLS between two points. The first point supplies the scale (its range in
/// meters) and the class tolerance.
pub fn ols(a: &impl GridPoint, b: &impl GridPoint, grid: &PolarGrid, params: &OlsParams) -> f64 {
    ols_at(
        (a.range_idx() as f64, a.azimuth_idx() as f64),
        a.class_id(),
        (b.range_idx() as f64, b.azimuth_idx() as f64),
        grid,
        params,
    )
}

/// OLS on fractional grid coordinates `(range_idx, azimuth_idx)`.
pub fn ols_at(
    a: (f64, f64),
    a_class: usize,
    b: (f64, f64),
    grid: &PolarGrid,
    params: &OlsParams,
) -> f64 {
    let (xa, ya) = grid.to_cartesian_unchecked(a.0, a.1);
    let (xb, yb) = grid.to_cartesian_unchecked(b.0, b.1);
    let d = ((xa - xb).powi(2) + (ya - yb).powi(2)).sqrt();
    ols_kernel(d, grid.range_m(a.0), params.kappa_for(a_class))
}
