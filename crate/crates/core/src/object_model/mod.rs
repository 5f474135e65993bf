//! Object models as oriented surface samples, and the band point sets the
//! fitness is evaluated on.

mod mesh;
pub mod primitives;

pub use mesh::{load_mesh, parse_obj, parse_stl, to_stl, TriangleMesh};

use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Surface points with unit outward normals in the object frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledModel {
    pub source: String,
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
}

impl SampledModel {
    pub fn new(source: impl Into<String>, points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self> {
        let model = SampledModel {
            source: source.into(),
            points,
            normals,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() || self.points.len() != self.normals.len() {
            return Err(Error::invalid(format!(
                "model needs matching non-empty point/normal lists ({} vs {})",
                self.points.len(),
                self.normals.len()
            )));
        }
        if let Some(i) = self.normals.iter().position(|n| (n.norm() - 1.0).abs() > 1e-6) {
            return Err(Error::invalid(format!("normal {i} is not unit length")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let model: SampledModel =
            serde_json::from_str(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?;
        model.validate()?;
        Ok(model)
    }
}

/// Area-weighted random surface samples.
///
/// Normals come from the face winding, or from the interpolated file normals
/// when the mesh carries them (flipped to agree with the winding).
pub fn sample_surface(mesh: &TriangleMesh, n_s: usize, seed: u64) -> Result<SampledModel> {
    if n_s == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    mesh.validate()?;
    let areas: Vec<f64> = (0..mesh.triangles.len()).map(|t| mesh.triangle_area(t)).collect();
    let picker = WeightedIndex::new(&areas)
        .map_err(|_| Error::invalid("mesh has no triangle with positive area"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n_s);
    let mut normals = Vec::with_capacity(n_s);
    for _ in 0..n_s {
        let t = picker.sample(&mut rng);
        let (mut r1, mut r2): (f64, f64) = (rng.random(), rng.random());
        if r1 + r2 > 1.0 {
            r1 = 1.0 - r1;
            r2 = 1.0 - r2;
        }
        let r0 = 1.0 - r1 - r2;
        let [a, b, c] = mesh.corners(t);
        points.push(a * r0 + b * r1 + c * r2);

        let face = mesh.face_normal(t).expect("picked triangles have positive area");
        let n = mesh
            .corner_normals
            .as_ref()
            .and_then(|cn| {
                let [na, nb, nc] = cn[t];
                (na * r0 + nb * r1 + nc * r2).try_normalize(1e-12)
            })
            .map(|n| if n.dot(&face) < 0.0 { -n } else { n })
            .unwrap_or(face);
        normals.push(n);
    }
    SampledModel::new("mesh", points, normals)
}

/// Points expected to be occupied (`surface_band`) and free (`normal_band`)
/// when the model is aligned.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandPoints {
    pub surface_band: Vec<Vec3>,
    pub normal_band: Vec<Vec3>,
    pub delta_s: f64,
    pub delta_n: f64,
}

impl BandPoints {
    /// Same points without the free-space term.
    pub fn without_normal_band(&self) -> BandPoints {
        BandPoints {
            normal_band: Vec::new(),
            ..self.clone()
        }
    }
}

/// Offsets along the normal for each model point.
///
/// Surface offsets are evenly spaced over `[-delta_s, delta_s]` (a single
/// offset is 0); normal offsets are evenly spaced over
/// `(delta_s, delta_s + delta_n]`, ending at the upper bound.
pub fn band_offsets(delta_s: f64, delta_n: f64, k_s: usize, k_n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(delta_s >= 0.0 && delta_s.is_finite()) {
        return Err(Error::invalid(format!("delta_s must be >= 0, got {delta_s}")));
    }
    if !(delta_n > 0.0 && delta_n.is_finite()) {
        return Err(Error::invalid(format!("delta_n must be > 0, got {delta_n}")));
    }
    if k_s == 0 || k_n == 0 {
        return Err(Error::invalid("band sample counts must be at least 1"));
    }
    let surface = if k_s == 1 {
        vec![0.0]
    } else {
        (0..k_s)
            .map(|j| -delta_s + 2.0 * delta_s * j as f64 / (k_s - 1) as f64)
            .collect()
    };
    let normal = (1..=k_n)
        .map(|j| {
            if j == k_n {
                delta_s + delta_n
            } else {
                delta_s + delta_n * j as f64 / k_n as f64
            }
        })
        .collect();
    Ok((surface, normal))
}

pub fn band_points(
    model: &SampledModel,
    delta_s: f64,
    delta_n: f64,
    k_s: usize,
    k_n: usize,
) -> Result<BandPoints> {
    model.validate()?;
    let (surface_offsets, normal_offsets) = band_offsets(delta_s, delta_n, k_s, k_n)?;
    let offset_points = |offsets: &[f64]| -> Vec<Vec3> {
        model
            .points
            .iter()
            .zip(&model.normals)
            .flat_map(|(x, n)| offsets.iter().map(move |&o| if o == 0.0 { *x } else { x + n * o }))
            .collect()
    };
    Ok(BandPoints {
        surface_band: offset_points(&surface_offsets),
        normal_band: offset_points(&normal_offsets),
        delta_s,
        delta_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_point() -> SampledModel {
        SampledModel::new("p", vec![Vec3::zeros()], vec![Vec3::z()]).unwrap()
    }

    #[test]
    fn zero_delta_s_reproduces_points() {
        let cube = primitives::cube(0.03);
        let m = sample_surface(&cube, 200, 1).unwrap();
        let b = band_points(&m, 0.0, 5e-3, 1, 1).unwrap();
        assert_eq!(b.surface_band, m.points);
        assert_eq!(b.normal_band.len(), 200);
    }

    #[test]
    fn normal_band_point_at_fixed_distance() {
        let b = band_points(&single_point(), 0.0, 5e-3, 1, 1).unwrap();
        assert_eq!(b.normal_band, vec![Vec3::new(0.0, 0.0, 0.005)]);
    }

    #[test]
    fn surface_offsets_stay_in_interval() {
        let m = sample_surface(&primitives::hex_prism(0.013, 0.008), 50, 3).unwrap();
        let b = band_points(&m, 1e-3, 5e-3, 3, 4).unwrap();
        assert_eq!(b.surface_band.len(), 150);
        assert_eq!(b.normal_band.len(), 200);
        for (i, p) in b.surface_band.iter().enumerate() {
            let src = i / 3;
            let off = (p - m.points[src]).dot(&m.normals[src]);
            assert!(off.abs() <= 1e-3 + 1e-15, "{off}");
        }
        for (i, p) in b.normal_band.iter().enumerate() {
            let src = i / 4;
            let off = (p - m.points[src]).dot(&m.normals[src]);
            assert!(off > 1e-3 && off <= 6e-3 + 1e-15, "{off}");
        }
    }

    #[test]
    fn band_argument_errors() {
        let m = single_point();
        assert!(band_points(&m, 0.0, 0.0, 1, 1).is_err());
        assert!(band_points(&m, -1e-3, 1e-3, 1, 1).is_err());
        assert!(band_points(&m, 0.0, 1e-3, 0, 1).is_err());
    }

    #[test]
    fn single_triangle_samples_inside() {
        let tri = TriangleMesh::new(
            vec![Vec3::zeros(), Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let m = sample_surface(&tri, 500, 9).unwrap();
        for (p, n) in m.points.iter().zip(&m.normals) {
            let (b1, b2) = (p.x / 2.0, p.y);
            assert!(b1 >= 0.0 && b2 >= 0.0 && b1 + b2 <= 1.0 + 1e-12);
            assert_eq!(p.z, 0.0);
            assert_eq!(*n, Vec3::z());
        }
    }

    #[test]
    fn cube_face_counts_follow_area() {
        let m = sample_surface(&primitives::cube(1.0), 6000, 42).unwrap();
        let mut counts = [0usize; 6];
        for n in &m.normals {
            let axis = n.iamax();
            counts[2 * axis + usize::from(n[axis] > 0.0)] += 1;
        }
        // Binomial(6000, 1/6): sd = sqrt(6000 * 5/36) ~ 28.9.
        let sd = (6000.0f64 * 5.0 / 36.0).sqrt();
        for c in counts {
            assert!((c as f64 - 1000.0).abs() <= 4.0 * sd, "{counts:?}");
        }
        eprintln!("face counts {counts:?}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let cube = primitives::cube(1.0);
        assert_eq!(sample_surface(&cube, 64, 5).unwrap(), sample_surface(&cube, 64, 5).unwrap());
        assert_ne!(sample_surface(&cube, 64, 5).unwrap(), sample_surface(&cube, 64, 6).unwrap());
    }

    #[test]
    fn degenerate_mesh_is_rejected() {
        let flat = TriangleMesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0], vec![[0, 1, 2]]).unwrap();
        assert!(sample_surface(&flat, 10, 0).is_err());
        assert!(sample_surface(&primitives::cube(1.0), 0, 0).is_err());
    }

    #[test]
    fn interpolated_normals_follow_winding() {
        let mut tri = TriangleMesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::y()], vec![[0, 1, 2]]).unwrap();
        tri.corner_normals = Some(vec![[-Vec3::z(); 3]]);
        let m = sample_surface(&tri, 5, 0).unwrap();
        assert!(m.normals.iter().all(|n| *n == Vec3::z()));
    }

    #[test]
    fn json_cache_round_trip() {
        let m = sample_surface(&primitives::cube(0.03), 32, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.save_json(&path).unwrap();
        assert_eq!(SampledModel::load_json(&path).unwrap(), m);
    }
}
