use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::DensityGrid;
use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};

/// Pinhole camera, OpenCV convention (x right, y down, z forward).
///
/// Pixel `(u, v)` looks along the ray through image coordinates `(u, v)`;
/// integer coordinates are pixel centers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    #[serde(
        serialize_with = "serialize_rows",
        deserialize_with = "deserialize_pose"
    )]
    pub camera_to_world: Pose,
}

fn serialize_rows<S: Serializer>(pose: &Pose, s: S) -> std::result::Result<S::Ok, S::Error> {
    let m = pose.to_matrix();
    let rows: Vec<[f64; 4]> = (0..4)
        .map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)], m[(r, 3)]])
        .collect();
    rows.serialize(s)
}

fn deserialize_pose<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Pose, D::Error> {
    Pose::deserialize(d)
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::invalid(format!(
                "camera focal lengths must be positive and finite (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera image must be at least 1x1"));
        }
        Ok(())
    }

    pub fn center(&self) -> Vec3 {
        self.camera_to_world.translation
    }

    /// Optical axis in world coordinates.
    pub fn optical_axis(&self) -> Vec3 {
        self.camera_to_world.rotation.rotate(&Vec3::z())
    }

    /// World-frame ray direction through pixel `(u, v)`, scaled so that its
    /// camera-frame z component is 1 (ray parameter = z-depth).
    pub fn ray_direction(&self, u: f64, v: f64) -> Vec3 {
        let d = Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        self.camera_to_world.rotation.rotate(&d)
    }

    /// World point seen at pixel `(u, v)` with z-depth `depth`.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        let p = Vec3::new((u - self.cx) / self.fx * depth, (v - self.cy) / self.fy * depth, depth);
        self.camera_to_world.apply(&p)
    }

    /// Image coordinates and z-depth of a world point; `None` behind the camera.
    pub fn project(&self, x: &Vec3) -> Option<(f64, f64, f64)> {
        let p = self.camera_to_world.inverse().apply(x);
        (p.z > 0.0).then(|| (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy, p.z))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Camera> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cam: Camera = serde_json::from_str(&text)?;
        cam.validate()?;
        Ok(cam)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

/// Z-depth image in metres; NaN marks pixels without a surface.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, depth: Vec<f32>) -> Result<Self> {
        if depth.len() != width * height {
            return Err(Error::invalid(format!(
                "depth map {width}x{height} needs {} values, got {}",
                width * height,
                depth.len()
            )));
        }
        if let Some(i) = depth.iter().position(|d| !d.is_nan() && !(d.is_finite() && *d > 0.0)) {
            return Err(Error::invalid(format!("depth[{i}] = {} is not a positive depth", depth[i])));
        }
        Ok(DepthMap { width, height, depth })
    }

    pub fn get(&self, u: usize, v: usize) -> f32 {
        self.depth[v * self.width + u]
    }

    pub fn valid_count(&self) -> usize {
        self.depth.iter().filter(|d| !d.is_nan()).count()
    }

    /// Raw export: u32 width, u32 height (little-endian), then f32 depths row by row.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.depth.len());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for d in &self.depth {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let short = |offset: usize| Error::BinaryFormat {
            offset: offset as u64,
            message: "truncated depth map".into(),
        };
        if bytes.len() < 8 {
            return Err(short(bytes.len()));
        }
        let width = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(8))
            .ok_or_else(|| Error::BinaryFormat {
                offset: 0,
                message: "depth map dimensions overflow".into(),
            })?;
        if bytes.len() != expected {
            return Err(Error::BinaryFormat {
                offset: bytes.len().min(expected) as u64,
                message: format!("expected {expected} bytes, found {}", bytes.len()),
            });
        }
        let depth = bytes[8..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        DepthMap::new(width, height, depth)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    /// 16-bit binary PGM in millimetres, clipped to `[0, 65535]`; NaN is 0.
    pub fn save_pgm16(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = format!("P5\n{} {}\n65535\n", self.width, self.height).into_bytes();
        for d in &self.depth {
            let mm = if d.is_nan() { 0.0 } else { (*d as f64 * 1000.0).round().clamp(0.0, 65535.0) };
            out.extend_from_slice(&(mm as u16).to_be_bytes());
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderOptions {
    /// Marching step in metres; `None` means half the smallest cell size.
    pub step: Option<f64>,
    /// Minimum accumulated opacity for a pixel to receive a depth.
    pub opacity_cutoff: f64,
    /// Marching stops once transmittance falls below this value.
    pub min_transmittance: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            step: None,
            opacity_cutoff: 0.5,
            min_transmittance: 1e-4,
        }
    }
}

/// Slab intersection of a ray with an axis-aligned box, clipped to `t >= 0`.
fn ray_box(origin: &Vec3, dir: &Vec3, lo: &Vec3, hi: &Vec3) -> Option<(f64, f64)> {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        if dir[a] == 0.0 {
            if origin[a] < lo[a] || origin[a] > hi[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[a];
        let (mut ta, mut tb) = ((lo[a] - origin[a]) * inv, (hi[a] - origin[a]) * inv);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
    }
    (t0 < t1).then_some((t0, t1))
}

fn march(grid: &DensityGrid, origin: &Vec3, dir: &Vec3, step: f64, opts: &RenderOptions) -> f32 {
    let Some((t0, t1)) = ray_box(origin, dir, &grid.bbox_min(), &grid.bbox_max()) else {
        return f32::NAN;
    };
    let dt = step / dir.norm();
    let mut transmittance = 1.0f64;
    let mut weighted = 0.0f64;
    let mut k = 0u64;
    loop {
        let t = t0 + (k as f64 + 0.5) * dt;
        if t > t1 {
            break;
        }
        let sigma = grid.sample_sigma(&(origin + dir * t));
        let alpha = -(-sigma.exp() * step).exp_m1();
        weighted += transmittance * alpha * t;
        transmittance *= 1.0 - alpha;
        if transmittance < opts.min_transmittance {
            break;
        }
        k += 1;
    }
    let opacity = 1.0 - transmittance;
    if opacity < opts.opacity_cutoff {
        f32::NAN
    } else {
        (weighted / opacity) as f32
    }
}

/// Volumetric z-depth rendering of the grid by fixed-step ray marching.
pub fn render_depth(grid: &DensityGrid, camera: &Camera, opts: &RenderOptions) -> Result<DepthMap> {
    camera.validate()?;
    let step = opts.step.unwrap_or(0.5 * grid.min_cell_size());
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid(format!("render step must be positive, got {step}")));
    }
    let origin = camera.center();
    let depth: Vec<f32> = (0..camera.height)
        .into_par_iter()
        .flat_map_iter(|v| {
            (0..camera.width).map(move |u| {
                let dir = camera.ray_direction(u as f64, v as f64);
                march(grid, &origin, &dir, step, opts)
            })
        })
        .collect();
    DepthMap::new(camera.width, camera.height, depth)
}
