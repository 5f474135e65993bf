//! Voxelized density fields.
//!
//! A [`DensityGrid`] stores pre-activation log-density values `sigma` on an
//! axis-aligned grid whose nodes sit at cell centers. Between nodes the field
//! is trilinear; between the outermost nodes and the bounding-box faces it is
//! held constant, and outside the box it takes the configured empty value.

mod io;
mod render;

pub use io::{
    decode_grid, encode_grid, load_grid, read_grid, save_grid, write_grid, GRID_MAGIC, GRID_VERSION,
};
pub use render::{render_depth, Camera, DepthMap, RenderOptions};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Sigma reported outside the grid bounding box unless overridden.
pub const DEFAULT_EMPTY_SIGMA: f64 = -10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct DensityGrid {
    dims: [usize; 3],
    bbox_min: [f32; 3],
    bbox_max: [f32; 3],
    sigma: Vec<f32>,
    empty_sigma: f64,
    origin: Vec3,
    upper: Vec3,
    cell: Vec3,
    inv_cell: Vec3,
}

/// Per-axis interpolation stencil: lower node, offset to the upper node
/// (0 on single-node axes), fraction, and whether the field varies along this
/// axis at the query point.
#[derive(Clone, Copy, Debug)]
struct Stencil {
    i0: usize,
    step: usize,
    t: f64,
    varies: bool,
}

impl DensityGrid {
    /// Builds a grid; the bounding box is stored at `f32` precision so that it
    /// survives the binary format unchanged.
    pub fn new(dims: [usize; 3], bbox_min: Vec3, bbox_max: Vec3, sigma: Vec<f32>) -> Result<Self> {
        let min = bbox_min.map(|c| c as f32);
        let max = bbox_max.map(|c| c as f32);
        Self::from_parts(dims, [min.x, min.y, min.z], [max.x, max.y, max.z], sigma)
    }

    pub(crate) fn from_parts(
        dims: [usize; 3],
        bbox_min: [f32; 3],
        bbox_max: [f32; 3],
        sigma: Vec<f32>,
    ) -> Result<Self> {
        if dims.iter().any(|&n| n == 0) {
            return Err(Error::invalid(format!("grid dimensions must be positive, got {dims:?}")));
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .ok_or_else(|| Error::invalid(format!("grid dimensions {dims:?} overflow")))?;
        for a in 0..3 {
            if !(bbox_min[a].is_finite() && bbox_max[a].is_finite() && bbox_max[a] > bbox_min[a]) {
                return Err(Error::invalid(format!(
                    "bounding box must satisfy min < max on every axis, got {bbox_min:?} / {bbox_max:?}"
                )));
            }
        }
        if sigma.len() != count {
            return Err(Error::invalid(format!(
                "expected {count} sigma values for dims {dims:?}, got {}",
                sigma.len()
            )));
        }
        if let Some(i) = sigma.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("sigma[{i}] is not finite")));
        }
        let origin = Vec3::from_fn(|a, _| bbox_min[a] as f64);
        let upper = Vec3::from_fn(|a, _| bbox_max[a] as f64);
        let cell = Vec3::from_fn(|a, _| (upper[a] - origin[a]) / dims[a] as f64);
        Ok(DensityGrid {
            dims,
            bbox_min,
            bbox_max,
            sigma,
            empty_sigma: DEFAULT_EMPTY_SIGMA,
            origin,
            upper,
            cell,
            inv_cell: cell.map(|c| 1.0 / c),
        })
    }

    /// Grid filled with a single value.
    pub fn constant(dims: [usize; 3], bbox_min: Vec3, bbox_max: Vec3, value: f32) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(dims, bbox_min, bbox_max, vec![value; n])
    }

    /// Grid whose node values are produced by `f(node_center)`.
    pub fn from_fn(
        dims: [usize; 3],
        bbox_min: Vec3,
        bbox_max: Vec3,
        f: impl Fn(&Vec3) -> f64,
    ) -> Result<Self> {
        let mut grid = Self::constant(dims, bbox_min, bbox_max, 0.0)?;
        let mut sigma = std::mem::take(&mut grid.sigma);
        for (idx, s) in sigma.iter_mut().enumerate() {
            *s = f(&grid.node_center_of(idx)) as f32;
        }
        Self::from_parts(grid.dims, grid.bbox_min, grid.bbox_max, sigma)
    }

    pub fn with_empty_sigma(mut self, empty_sigma: f64) -> Self {
        self.empty_sigma = empty_sigma;
        self
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn bbox_min(&self) -> Vec3 {
        self.origin
    }

    pub fn bbox_max(&self) -> Vec3 {
        self.upper
    }

    pub(crate) fn raw_bbox(&self) -> ([f32; 3], [f32; 3]) {
        (self.bbox_min, self.bbox_max)
    }

    pub fn cell_size(&self) -> Vec3 {
        self.cell
    }

    pub fn min_cell_size(&self) -> f64 {
        self.cell.min()
    }

    pub fn empty_sigma(&self) -> f64 {
        self.empty_sigma
    }

    /// Node values, x fastest, then y, then z.
    pub fn sigma(&self) -> &[f32] {
        &self.sigma
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn node_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::new(
            self.origin.x + (i as f64 + 0.5) * self.cell.x,
            self.origin.y + (j as f64 + 0.5) * self.cell.y,
            self.origin.z + (k as f64 + 0.5) * self.cell.z,
        )
    }

    fn node_center_of(&self, idx: usize) -> Vec3 {
        let [nx, ny, _] = self.dims;
        self.node_center(idx % nx, (idx / nx) % ny, idx / (nx * ny))
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        (0..3).all(|a| x[a] >= self.origin[a] && x[a] <= self.upper[a])
    }

    #[inline(always)]
    fn axis_stencil(&self, a: usize, xa: f64) -> Option<Stencil> {
        // NaN fails both comparisons and lands outside.
        if !(xa >= self.origin[a] && xa <= self.upper[a]) {
            return None;
        }
        let n = self.dims[a];
        if n == 1 {
            return Some(Stencil { i0: 0, step: 0, t: 0.0, varies: false });
        }
        let u = (xa - self.origin[a]) * self.inv_cell[a] - 0.5;
        let last = (n - 1) as f64;
        Some(if u <= 0.0 {
            Stencil { i0: 0, step: 1, t: 0.0, varies: false }
        } else if u >= last {
            Stencil { i0: n - 2, step: 1, t: 1.0, varies: false }
        } else {
            let i0 = (u as usize).min(n - 2);
            Stencil { i0, step: 1, t: u - i0 as f64, varies: true }
        })
    }

    /// The eight corner values around `x` (x fastest) and the per-axis stencils.
    #[inline(always)]
    fn cell_corners(&self, x: &Vec3) -> Option<([f64; 8], [Stencil; 3])> {
        let s = [
            self.axis_stencil(0, x.x)?,
            self.axis_stencil(1, x.y)?,
            self.axis_stencil(2, x.z)?,
        ];
        let [nx, ny, _] = self.dims;
        let base = s[0].i0 + nx * (s[1].i0 + ny * s[2].i0);
        let (dx, dy, dz) = (s[0].step, s[1].step * nx, s[2].step * nx * ny);
        let block = &self.sigma[base..=base + dx + dy + dz];
        let g = |o: usize| block[o] as f64;
        Some((
            [
                g(0),
                g(dx),
                g(dy),
                g(dx + dy),
                g(dz),
                g(dx + dz),
                g(dy + dz),
                g(dx + dy + dz),
            ],
            s,
        ))
    }

    /// Trilinearly interpolated sigma; the empty value outside the bounding box.
    pub fn sample_sigma(&self, x: &Vec3) -> f64 {
        match self.cell_corners(x) {
            None => self.empty_sigma,
            Some((c, s)) => {
                let (tx, ty, tz) = (s[0].t, s[1].t, s[2].t);
                let c00 = c[0] + tx * (c[1] - c[0]);
                let c10 = c[2] + tx * (c[3] - c[2]);
                let c01 = c[4] + tx * (c[5] - c[4]);
                let c11 = c[6] + tx * (c[7] - c[6]);
                let c0 = c00 + ty * (c10 - c00);
                let c1 = c01 + ty * (c11 - c01);
                c0 + tz * (c1 - c0)
            }
        }
    }

    /// Sigma together with its spatial gradient (zero outside the box and
    /// along axes where the query is clamped).
    #[inline]
    pub fn sample_sigma_with_gradient(&self, x: &Vec3) -> (f64, Vec3) {
        let Some((c, s)) = self.cell_corners(x) else {
            return (self.empty_sigma, Vec3::zeros());
        };
        let (tx, ty, tz) = (s[0].t, s[1].t, s[2].t);
        let c00 = c[0] + tx * (c[1] - c[0]);
        let c10 = c[2] + tx * (c[3] - c[2]);
        let c01 = c[4] + tx * (c[5] - c[4]);
        let c11 = c[6] + tx * (c[7] - c[6]);
        let c0 = c00 + ty * (c10 - c00);
        let c1 = c01 + ty * (c11 - c01);
        let value = c0 + tz * (c1 - c0);

        let gx = if s[0].varies {
            let d00 = c[1] - c[0];
            let d10 = c[3] - c[2];
            let d01 = c[5] - c[4];
            let d11 = c[7] - c[6];
            let d0 = d00 + ty * (d10 - d00);
            let d1 = d01 + ty * (d11 - d01);
            (d0 + tz * (d1 - d0)) * self.inv_cell.x
        } else {
            0.0
        };
        let gy = if s[1].varies {
            ((c10 - c00) + tz * ((c11 - c01) - (c10 - c00))) * self.inv_cell.y
        } else {
            0.0
        };
        let gz = if s[2].varies { (c1 - c0) * self.inv_cell.z } else { 0.0 };
        (value, Vec3::new(gx, gy, gz))
    }
}

/// Occupancy `1 - exp(-exp(sigma) beta)` of a single sigma value.
#[inline]
pub fn occupancy_from_sigma(sigma: f64, beta: f64) -> f64 {
    -(-sigma.exp() * beta).exp_m1()
}

/// Derivative of [`occupancy_from_sigma`] with respect to sigma.
#[inline]
pub fn occupancy_derivative(sigma: f64, beta: f64) -> f64 {
    let e = sigma.exp() * beta;
    (-e).exp() * e
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("beta must be positive and finite, got {beta}")))
    }
}

/// Occupancy view of a grid with a validated `beta`.
#[derive(Clone, Copy, Debug)]
pub struct OccupancyField<'a> {
    grid: &'a DensityGrid,
    beta: f64,
}

impl<'a> OccupancyField<'a> {
    pub fn new(grid: &'a DensityGrid, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        Ok(OccupancyField { grid, beta })
    }

    pub fn grid(&self) -> &'a DensityGrid {
        self.grid
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    #[inline]
    pub fn value(&self, x: &Vec3) -> f64 {
        occupancy_from_sigma(self.grid.sample_sigma(x), self.beta)
    }

    #[inline]
    pub fn value_with_gradient(&self, x: &Vec3) -> (f64, Vec3) {
        let (sigma, grad) = self.grid.sample_sigma_with_gradient(x);
        let e = sigma.exp() * self.beta;
        let s = -(-e).exp_m1();
        (s, grad * ((-e).exp() * e))
    }
}

pub fn sample_sigma(grid: &DensityGrid, x: &Vec3) -> f64 {
    grid.sample_sigma(x)
}

pub fn occupancy(grid: &DensityGrid, x: &Vec3, beta: f64) -> Result<f64> {
    Ok(OccupancyField::new(grid, beta)?.value(x))
}

pub fn occupancy_gradient(grid: &DensityGrid, x: &Vec3, beta: f64) -> Result<Vec3> {
    Ok(OccupancyField::new(grid, beta)?.value_with_gradient(x).1)
}
