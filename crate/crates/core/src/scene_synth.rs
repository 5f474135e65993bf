//! Synthetic density fields with known ground truth.
//!
//! Meshes placed at known poses are converted into a sigma field through a
//! logistic profile of their signed distance, with optional spatially
//! correlated noise:
//!
//! ```text
//! sigma(x) = sigma_out + (sigma_in - sigma_out) * logistic(-(d(x) - surface_offset) / w) + noise
//! ```
//!
//! clamped to `[-15, 15]`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density_field::{Camera, DensityGrid};
use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};
use crate::init::InstanceMask;
use crate::object_model::{load_mesh, TriangleMesh};

pub const SIGMA_CLAMP: f64 = 15.0;

/// Profile saturation: beyond `surface_offset + PROFILE_MARGIN_WIDTHS * w`
/// from every surface the field equals `sigma_out` to f32 precision.
const PROFILE_MARGIN_WIDTHS: f64 = 20.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObjectSpec {
    pub id: String,
    pub mesh: PathBuf,
    pub pose: Pose,
    #[serde(default)]
    pub symmetry: Option<String>,
}

/// Grid geometry, sigma profile and noise model of a synthetic field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub dims: [usize; 3],
    pub bbox_min: [f64; 3],
    pub bbox_max: [f64; 3],
    /// Logistic width `w` in metres.
    pub sharpness: f64,
    #[serde(default = "default_sigma_in")]
    pub sigma_in: f64,
    #[serde(default = "default_sigma_out")]
    pub sigma_out: f64,
    /// Outward shift of the profile midpoint from the mesh surface, metres.
    #[serde(default)]
    pub surface_offset: f64,
    #[serde(default)]
    pub noise_std: f64,
    /// Box-filter width of the noise, in cells.
    #[serde(default = "default_noise_correlation")]
    pub noise_correlation: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_sigma_in() -> f64 {
    8.0
}
fn default_sigma_out() -> f64 {
    -8.0
}
fn default_noise_correlation() -> usize {
    3
}

impl FieldSpec {
    pub fn bbox(&self) -> (Vec3, Vec3) {
        (Vec3::from(self.bbox_min), Vec3::from(self.bbox_max))
    }

    pub fn cell_size(&self) -> Vec3 {
        let (lo, hi) = self.bbox();
        Vec3::from_fn(|a, _| (hi[a] - lo[a]) / self.dims[a] as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bbox();
        if self.dims.iter().any(|&d| d == 0) || (0..3).any(|a| !(hi[a] > lo[a])) {
            return Err(Error::invalid("scene grid needs positive dimensions and min < max"));
        }
        if !(self.sharpness > 0.0 && self.sharpness.is_finite()) {
            return Err(Error::invalid(format!("sharpness must be positive, got {}", self.sharpness)));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::invalid(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        if !self.surface_offset.is_finite() || !self.sigma_in.is_finite() || !self.sigma_out.is_finite() {
            return Err(Error::invalid("sigma profile parameters must be finite"));
        }
        let min_dim = *self.dims.iter().min().unwrap();
        if self.noise_correlation == 0 || self.noise_correlation > min_dim {
            return Err(Error::invalid(format!(
                "noise_correlation must be in [1, {min_dim}], got {}",
                self.noise_correlation
            )));
        }
        Ok(())
    }

    /// Noise-free sigma for signed distance `d`.
    pub fn profile(&self, d: f64) -> f64 {
        let z = -(d - self.surface_offset) / self.sharpness;
        let logistic = 1.0 / (1.0 + (-z).exp());
        self.sigma_out + (self.sigma_in - self.sigma_out) * logistic
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub objects: Vec<SceneObjectSpec>,
    #[serde(flatten)]
    pub field: FieldSpec,
}

impl SceneSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Loads every referenced mesh; relative paths resolve against `base`.
    pub fn load_objects(&self, base: Option<&Path>) -> Result<Vec<PlacedMesh>> {
        self.objects
            .iter()
            .map(|o| {
                let path = match base {
                    Some(b) if o.mesh.is_relative() => b.join(&o.mesh),
                    _ => o.mesh.clone(),
                };
                Ok(PlacedMesh {
                    id: o.id.clone(),
                    mesh: load_mesh(&path)?,
                    pose: o.pose,
                })
            })
            .collect()
    }

    pub fn ground_truth(&self) -> BTreeMap<String, Pose> {
        self.objects.iter().map(|o| (o.id.clone(), o.pose)).collect()
    }
}

/// A mesh placed in the scene.
#[derive(Clone, Debug)]
pub struct PlacedMesh {
    pub id: String,
    pub mesh: TriangleMesh,
    pub pose: Pose,
}

impl PlacedMesh {
    pub fn world_bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.mesh.vertices {
            let w = self.pose.apply(v);
            lo = lo.inf(&w);
            hi = hi.sup(&w);
        }
        (lo, hi)
    }
}

/// Signed distance with a flag telling whether the sign is meaningful.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignedDistance {
    pub distance: f64,
    /// False for meshes that are not closed; the distance is then unsigned.
    pub sign_reliable: bool,
}

/// Ray directions for the parity test, chosen off every axis and diagonal.
const PARITY_RAYS: [[f64; 3]; 3] = [
    [0.573_462_344, 0.581_018_421, 0.577_350_269],
    [-0.612_372_436, 0.353_553_391, 0.707_106_781],
    [0.267_261_242, -0.801_783_726, -0.534_522_484],
];

/// Mesh prepared for repeated distance queries.
pub struct DistanceField<'a> {
    mesh: &'a TriangleMesh,
    closed: bool,
}

impl<'a> DistanceField<'a> {
    pub fn new(mesh: &'a TriangleMesh) -> Self {
        let closed = mesh.is_closed();
        if !closed {
            log::warn!("mesh is not closed; signed distances fall back to unsigned");
        }
        DistanceField { mesh, closed }
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn unsigned(&self, x: &Vec3) -> f64 {
        (0..self.mesh.triangles.len())
            .map(|t| {
                let [a, b, c] = self.mesh.corners(t);
                (closest_point_on_triangle(x, &a, &b, &c) - x).norm_squared()
            })
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }

    /// Ray-parity inside test, majority vote over three directions.
    pub fn is_inside(&self, x: &Vec3) -> bool {
        let votes = PARITY_RAYS
            .iter()
            .filter(|d| {
                let dir = Vec3::from(**d);
                let hits = (0..self.mesh.triangles.len())
                    .filter(|&t| {
                        let [a, b, c] = self.mesh.corners(t);
                        ray_triangle(x, &dir, &a, &b, &c).is_some()
                    })
                    .count();
                hits % 2 == 1
            })
            .count();
        votes >= 2
    }

    /// Signed distance in the object frame (negative inside).
    pub fn signed(&self, x: &Vec3) -> SignedDistance {
        let d = self.unsigned(x);
        let inside = self.closed && self.is_inside(x);
        SignedDistance {
            distance: if inside { -d } else { d },
            sign_reliable: self.closed,
        }
    }
}

/// Signed distance from world point `x` to `mesh` placed at `pose`.
pub fn signed_distance(mesh: &TriangleMesh, pose: &Pose, x: &Vec3) -> SignedDistance {
    DistanceField::new(mesh).signed(&pose.inverse().apply(x))
}

/// Closest point on triangle `abc` to `p` (Voronoi-region walk).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Moller-Trumbore; returns the hit parameter `t > 0`.
pub fn ray_triangle(origin: &Vec3, dir: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let h = dir.cross(&e2);
    let det = e1.dot(&h);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let u = s.dot(&h) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 0.0).then_some(t)
}

fn check_bounds(objects: &[PlacedMesh], field: &FieldSpec) -> Result<()> {
    let (lo, hi) = field.bbox();
    let offending: Vec<&str> = objects
        .iter()
        .filter(|o| {
            let (a, b) = o.world_bounds();
            (0..3).any(|k| a[k] < lo[k] || b[k] > hi[k])
        })
        .map(|o| o.id.as_str())
        .collect();
    if offending.is_empty() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "objects outside the grid bounding box: {}",
            offending.join(", ")
        )))
    }
}

/// Noise-free field for the placed objects.
pub fn voxelize_clean(objects: &[PlacedMesh], field: &FieldSpec) -> Result<DensityGrid> {
    field.validate()?;
    check_bounds(objects, field)?;
    let (lo, hi) = field.bbox();
    let template = DensityGrid::constant(field.dims, lo, hi, 0.0)?;
    let [nx, ny, nz] = field.dims;
    let slice = nx * ny;
    let mut dmin = vec![f64::INFINITY; slice * nz];
    let margin = field.surface_offset.max(0.0) + PROFILE_MARGIN_WIDTHS * field.sharpness;

    for obj in objects {
        let sdf = DistanceField::new(&obj.mesh);
        let to_object = obj.pose.inverse();
        let (a, b) = obj.world_bounds();
        let range = |axis: usize| -> (usize, usize) {
            let h = template.cell_size()[axis];
            let o = template.bbox_min()[axis];
            let first = (((a[axis] - margin - o) / h - 0.5).ceil().max(0.0)) as usize;
            let last = (((b[axis] + margin - o) / h - 0.5).floor()) as isize;
            let last = last.clamp(-1, field.dims[axis] as isize - 1);
            (first, (last + 1) as usize)
        };
        let (x0, x1) = range(0);
        let (y0, y1) = range(1);
        let (z0, z1) = range(2);
        if x0 >= x1 || y0 >= y1 || z0 >= z1 {
            continue;
        }
        dmin[z0 * slice..z1 * slice]
            .par_chunks_mut(slice)
            .enumerate()
            .for_each(|(dz, plane)| {
                let k = z0 + dz;
                for j in y0..y1 {
                    for i in x0..x1 {
                        let local = to_object.apply(&template.node_center(i, j, k));
                        let d = sdf.signed(&local).distance;
                        let slot = &mut plane[i + nx * j];
                        if d < *slot {
                            *slot = d;
                        }
                    }
                }
            });
    }

    let sigma_out = field.sigma_out.clamp(-SIGMA_CLAMP, SIGMA_CLAMP) as f32;
    let sigma: Vec<f32> = dmin
        .par_iter()
        .map(|&d| {
            if d.is_finite() {
                field.profile(d).clamp(-SIGMA_CLAMP, SIGMA_CLAMP) as f32
            } else {
                sigma_out
            }
        })
        .collect();
    DensityGrid::new(field.dims, lo, hi, sigma)
}

/// Unit-variance, spatially correlated Gaussian noise: white noise smoothed
/// by a periodic box filter of `width` cells and rescaled.
pub fn correlated_noise(dims: [usize; 3], width: usize, seed: u64) -> Vec<f32> {
    let [nx, ny, nz] = dims;
    let slice = nx * ny;
    let mut noise = vec![0f32; slice * nz];
    noise.par_chunks_mut(slice).enumerate().for_each(|(k, plane)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        for v in plane.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
    });
    if width > 1 {
        let strides = [1, nx, slice];
        for axis in 0..3 {
            box_filter_axis(&mut noise, dims, strides[axis], axis, width);
        }
        let scale = (width as f64).powf(1.5) as f32;
        noise.par_iter_mut().for_each(|v| *v *= scale);
    }
    noise
}

/// Periodic moving average along one axis.
fn box_filter_axis(data: &mut [f32], dims: [usize; 3], stride: usize, axis: usize, width: usize) {
    let n = dims[axis];
    let lead = width / 2;
    let inv = 1.0 / width as f64;
    let src = data.to_vec();
    data.par_iter_mut().enumerate().for_each(|(idx, out)| {
        let c = (idx / stride) % n;
        let base = idx - c * stride;
        let sum: f64 = (0..width)
            .map(|o| src[base + ((c + n + o - lead) % n) * stride] as f64)
            .sum();
        *out = (sum * inv) as f32;
    });
}

/// Adds `noise_std` times the unit noise field of `seed` to a clean grid.
pub fn add_noise(clean: &DensityGrid, noise_std: f64, width: usize, seed: u64) -> Result<DensityGrid> {
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::invalid(format!("noise_std must be >= 0, got {noise_std}")));
    }
    let sigma: Vec<f32> = if noise_std == 0.0 {
        clean.sigma().to_vec()
    } else {
        let noise = correlated_noise(clean.dims(), width, seed);
        clean
            .sigma()
            .par_iter()
            .zip(noise.par_iter())
            .map(|(&s, &n)| (s as f64 + noise_std * n as f64).clamp(-SIGMA_CLAMP, SIGMA_CLAMP) as f32)
            .collect()
    };
    DensityGrid::new(clean.dims(), clean.bbox_min(), clean.bbox_max(), sigma)
}

pub fn voxelize(objects: &[PlacedMesh], field: &FieldSpec) -> Result<DensityGrid> {
    let clean = voxelize_clean(objects, field)?;
    add_noise(&clean, field.noise_std, field.noise_correlation, field.seed)
}

/// Loads the meshes of `spec` (relative to `base`) and voxelizes the scene.
pub fn voxelize_scene(spec: &SceneSpec, base: Option<&Path>) -> Result<DensityGrid> {
    voxelize(&spec.load_objects(base)?, &spec.field)
}

/// Per-pixel index of the first object hit, by ray casting the meshes.
pub fn render_labels(objects: &[PlacedMesh], camera: &Camera) -> Result<Vec<Option<usize>>> {
    camera.validate()?;
    let world: Vec<(Vec<[Vec3; 3]>, Vec3, f64)> = objects
        .iter()
        .map(|o| {
            let tris: Vec<[Vec3; 3]> = (0..o.mesh.triangles.len())
                .map(|t| o.mesh.corners(t).map(|v| o.pose.apply(&v)))
                .collect();
            let (lo, hi) = o.world_bounds();
            let centre = (lo + hi) * 0.5;
            (tris, centre, (hi - lo).norm() * 0.5)
        })
        .collect();
    let origin = camera.center();
    Ok((0..camera.height)
        .into_par_iter()
        .flat_map_iter(|v| {
            let world = &world;
            (0..camera.width).map(move |u| {
                let dir = camera.ray_direction(u as f64, v as f64);
                let unit = dir.normalize();
                let mut best: Option<(f64, usize)> = None;
                for (idx, (tris, centre, radius)) in world.iter().enumerate() {
                    let oc = centre - origin;
                    let along = oc.dot(&unit);
                    if (oc - unit * along).norm() > *radius {
                        continue;
                    }
                    for [a, b, c] in tris {
                        if let Some(t) = ray_triangle(&origin, &dir, a, b, c) {
                            if best.is_none_or(|(bt, _)| t < bt) {
                                best = Some((t, idx));
                            }
                        }
                    }
                }
                best.map(|(_, idx)| idx)
            })
        })
        .collect())
}

/// One visibility mask per object, labelled by object id.
pub fn render_instance_masks(objects: &[PlacedMesh], camera: &Camera) -> Result<Vec<InstanceMask>> {
    let labels = render_labels(objects, camera)?;
    objects
        .iter()
        .enumerate()
        .map(|(idx, o)| {
            let data = labels.iter().map(|l| *l == Some(idx)).collect();
            InstanceMask::new(&o.id, camera.width, camera.height, data)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rotation;
    use crate::object_model::primitives;
    use rand::Rng;

    fn field(dims: usize, half: f64) -> FieldSpec {
        FieldSpec {
            dims: [dims; 3],
            bbox_min: [-half; 3],
            bbox_max: [half; 3],
            sharpness: 2.0 * half / dims as f64,
            sigma_in: 8.0,
            sigma_out: -8.0,
            surface_offset: 0.0,
            noise_std: 0.0,
            noise_correlation: 3,
            seed: 0,
        }
    }

    #[test]
    fn unit_cube_distances() {
        let cube = primitives::cube(1.0);
        let id = Pose::identity();
        let c = signed_distance(&cube, &id, &Vec3::zeros());
        assert!((c.distance + 0.5).abs() < 1e-12 && c.sign_reliable);
        let o = signed_distance(&cube, &id, &Vec3::new(2.0, 0.0, 0.0));
        assert!((o.distance - 1.5).abs() < 1e-12);
        let shifted = Pose::from_translation(Vec3::new(2.0, 0.0, 0.0));
        assert!((signed_distance(&cube, &shifted, &Vec3::new(2.0, 0.0, 0.0)).distance + 0.5).abs() < 1e-12);
    }

    /// Independent closest-point routine: plane projection when it lands in
    /// the triangle, otherwise the nearest of the three edge segments.
    fn brute_force_distance(mesh: &TriangleMesh, p: &Vec3) -> f64 {
        let seg = |p: &Vec3, a: &Vec3, b: &Vec3| {
            let ab = b - a;
            let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            (a + ab * t - p).norm()
        };
        (0..mesh.triangles.len())
            .map(|t| {
                let [a, b, c] = mesh.corners(t);
                let n = (b - a).cross(&(c - a)).normalize();
                let q = p - n * (p - a).dot(&n);
                let inside = [(a, b), (b, c), (c, a)]
                    .iter()
                    .all(|(u, v)| (v - u).cross(&(q - u)).dot(&n) >= 0.0);
                if inside {
                    (p - q).norm()
                } else {
                    seg(p, &a, &b).min(seg(p, &b, &c)).min(seg(p, &c, &a))
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn distances_match_independent_routine() {
        let mesh = primitives::l_bracket(0.03, 0.02, 0.006, 0.02);
        let df = DistanceField::new(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let p = Vec3::from_fn(|_, _| rng.random_range(-0.03..0.03));
            assert!((df.unsigned(&p) - brute_force_distance(&mesh, &p)).abs() < 1e-9);
        }
    }

    #[test]
    fn open_mesh_falls_back_to_unsigned() {
        let mut cube = primitives::cube(1.0);
        cube.triangles.pop();
        let d = signed_distance(&cube, &Pose::identity(), &Vec3::zeros());
        assert!(!d.sign_reliable);
        assert!(d.distance > 0.0);
    }

    #[test]
    fn profile_midpoint_and_saturation() {
        let f = field(16, 0.05);
        assert_eq!(f.profile(0.0), 0.0);
        assert!((f.profile(-30.0 * f.sharpness) - 8.0).abs() < 1e-6);
        assert!((f.profile(30.0 * f.sharpness) + 8.0).abs() < 1e-6);
        let shifted = FieldSpec { surface_offset: 0.004, ..f };
        assert_eq!(shifted.profile(0.004), 0.0);
    }

    #[test]
    fn clean_voxelization_values() {
        // 40 cells over 0.1 m: nodes at +-0.00125 + k * 0.0025, so the face of
        // a 0.0275 m cube at 0.01375 passes exactly through a node layer.
        let f = field(40, 0.05);
        let obj = PlacedMesh {
            id: "cube".into(),
            mesh: primitives::cube(0.0275),
            pose: Pose::identity(),
        };
        let g = voxelize(&[obj], &f).unwrap();
        let centre = g.node_center(20, 20, 20);
        // Node (20,20,20) sits at 0.00125 on each axis: 0.0125 m = 5 widths
        // inside the nearest face.
        assert!((centre - Vec3::repeat(0.00125)).norm() < 1e-9);
        let expected = -8.0 + 16.0 / (1.0 + (-5.0f64).exp());
        assert!((g.sample_sigma(&centre) - expected).abs() < 1e-5, "{}", g.sample_sigma(&centre));
        let i = (0..40).find(|&i| (g.node_center(i, 20, 20).x - 0.01375).abs() < 1e-8).unwrap();
        assert!(g.sample_sigma(&g.node_center(i, 20, 20)).abs() < 1e-4);
        assert_eq!(g.sample_sigma(&g.node_center(0, 0, 0)), -8.0);
    }

    #[test]
    fn midpoint_level_set_is_near_surface() {
        let f = field(48, 0.03);
        let mesh = primitives::hex_prism(0.013, 0.008);
        let pose = Pose::new(Rotation::exp(&Vec3::new(0.3, -0.2, 0.5)).unwrap(), Vec3::new(0.002, -0.001, 0.0));
        let obj = PlacedMesh { id: "hex".into(), mesh: mesh.clone(), pose };
        let g = voxelize(&[obj], &f).unwrap();
        let h = g.min_cell_size();
        let mid = 0.5 * (f.sigma_in + f.sigma_out);
        let mut crossings = 0;
        let [n, _, _] = g.dims();
        for k in 0..n {
            for j in 0..n {
                for i in 0..n - 1 {
                    let a = g.sigma()[g.index(i, j, k)] as f64 - mid;
                    let b = g.sigma()[g.index(i + 1, j, k)] as f64 - mid;
                    if a * b < 0.0 {
                        let t = a / (a - b);
                        let p = g.node_center(i, j, k) * (1.0 - t) + g.node_center(i + 1, j, k) * t;
                        let d = signed_distance(&mesh, &pose, &p).distance;
                        assert!(d.abs() <= h, "crossing {d} at {p:?}");
                        crossings += 1;
                    }
                }
            }
        }
        assert!(crossings > 50);
    }

    #[test]
    fn noise_is_deterministic_and_unit_variance() {
        let a = correlated_noise([32, 32, 32], 3, 5);
        let b = correlated_noise([32, 32, 32], 3, 5);
        assert_eq!(a, b);
        assert_ne!(a, correlated_noise([32, 32, 32], 3, 6));
        let n = a.len() as f64;
        let mean = a.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = a.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.05, "{mean}");
        assert!((var - 1.0).abs() < 0.1, "{var}");
        // Neighbours are correlated (box overlap 2/3 along x).
        let corr = (0..a.len() - 1)
            .filter(|i| (i + 1) % 32 != 0)
            .map(|i| a[i] as f64 * a[i + 1] as f64)
            .sum::<f64>()
            / n;
        assert!(corr > 0.5, "{corr}");
    }

    #[test]
    fn bounding_box_violation_names_object() {
        let f = field(8, 0.05);
        let obj = PlacedMesh {
            id: "far".into(),
            mesh: primitives::cube(0.01),
            pose: Pose::from_translation(Vec3::new(0.2, 0.0, 0.0)),
        };
        let err = voxelize(&[obj], &f).unwrap_err().to_string();
        assert!(err.contains("far"), "{err}");
    }

    #[test]
    fn instance_masks_see_objects() {
        let objects = vec![
            PlacedMesh { id: "a".into(), mesh: primitives::cube(0.02), pose: Pose::from_translation(Vec3::new(-0.02, 0.0, 0.0)) },
            PlacedMesh { id: "b".into(), mesh: primitives::cube(0.02), pose: Pose::from_translation(Vec3::new(0.02, 0.0, 0.0)) },
        ];
        let flip = Rotation::exp(&Vec3::new(std::f64::consts::PI, 0.0, 0.0)).unwrap();
        let cam = Camera {
            fx: 100.0, fy: 100.0, cx: 31.5, cy: 31.5, width: 64, height: 64,
            camera_to_world: Pose::new(flip, Vec3::new(0.0, 0.0, 0.3)),
        };
        let masks = render_instance_masks(&objects, &cam).unwrap();
        assert_eq!(masks.len(), 2);
        assert!(masks[0].count() > 20 && masks[1].count() > 20);
        assert!(masks[0].data.iter().zip(&masks[1].data).all(|(a, b)| !(*a && *b)));
    }
}
