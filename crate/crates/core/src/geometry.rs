//! Rotation and rigid-pose algebra on SO(3) x R^3.
//!
//! Rotations are unit quaternions stored scalar-first and canonicalized to a
//! non-negative scalar part, so `q` and `-q` compare equal after construction.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix3, Matrix4, Quaternion, Rotation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Below this angle exp/log switch to their Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-8;

#[derive(Clone, Copy, PartialEq)]
pub struct Rotation(UnitQuaternion<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(UnitQuaternion::identity())
    }

    /// Builds a rotation from scalar-first quaternion components, normalizing.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !n.is_finite() || n < 1e-12 {
            return Err(Error::invalid(format!(
                "quaternion ({w}, {x}, {y}, {z}) cannot be normalized"
            )));
        }
        Ok(Self::canonical(q / n))
    }

    fn canonical(q: Quaternion<f64>) -> Self {
        // Sign of the first non-zero component, scalar first.
        let lead = [q.w, q.i, q.j, q.k].into_iter().find(|c| *c != 0.0).unwrap_or(1.0);
        let q = if lead < 0.0 { -q } else { q };
        Rotation(UnitQuaternion::new_normalize(q))
    }

    pub fn from_unit_quaternion(q: UnitQuaternion<f64>) -> Self {
        Self::canonical(q.into_inner())
    }

    /// Rodrigues exponential of an axis-angle vector.
    pub fn exp(omega: &Vec3) -> Result<Self> {
        if !omega.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid(format!("non-finite rotation vector {omega:?}")));
        }
        let theta = omega.norm();
        let q = if theta < SMALL_ANGLE {
            let t2 = theta * theta;
            let k = 0.5 * (1.0 - t2 / 24.0);
            Quaternion::new(1.0 - t2 / 8.0, k * omega.x, k * omega.y, k * omega.z)
        } else {
            let half = 0.5 * theta;
            let k = half.sin() / theta;
            Quaternion::new(half.cos(), k * omega.x, k * omega.y, k * omega.z)
        };
        Ok(Self::canonical(q))
    }

    /// Axis-angle vector with angle in `[0, pi]`.
    pub fn log(&self) -> Vec3 {
        let q = self.0.quaternion();
        let v = q.imag();
        let s = v.norm();
        let w = q.w;
        if s < SMALL_ANGLE {
            // angle / s = 2 atan(s / w) / s ~ (2 / w) (1 - s^2 / (3 w^2))
            v * (2.0 / w) * (1.0 - s * s / (3.0 * w * w))
        } else {
            v * (2.0 * s.atan2(w) / s)
        }
    }

    pub fn angle(&self) -> f64 {
        let q = self.0.quaternion();
        2.0 * q.imag().norm().atan2(q.w.abs())
    }

    pub fn inverse(&self) -> Self {
        Self::canonical(self.0.inverse().into_inner())
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &Rotation) -> Self {
        Self::canonical(self.0.quaternion() * other.0.quaternion())
    }

    pub fn rotate(&self, x: &Vec3) -> Vec3 {
        self.0 * x
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.0.to_rotation_matrix().into_inner()
    }

    /// Rotation from a 3x3 matrix; rejects matrices that are not orthonormal
    /// with determinant +1 (tolerance 1e-6).
    pub fn from_matrix(m: &Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("non-finite rotation matrix"));
        }
        let err = (m.transpose() * m - Matrix3::identity()).abs().max();
        if err > 1e-6 || (m.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "matrix is not a proper rotation (orthonormality error {err:.3e})"
            )));
        }
        let r = Rotation3::from_matrix_unchecked(*m);
        Ok(Self::from_unit_quaternion(UnitQuaternion::from_rotation_matrix(&r)))
    }

    /// Scalar-first components `[w, x, y, z]`.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn unit_quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    /// Uniformly distributed random rotation.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let c: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
            if let Ok(r) = Self::from_wxyz(c[0], c[1], c[2], c[3]) {
                return r;
            }
        }
    }
}

impl fmt::Debug for Rotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [w, x, y, z] = self.wxyz();
        write!(f, "Rotation(w={w}, x={x}, y={y}, z={z})")
    }
}

/// Geodesic angle between two rotations, in `[0, pi]`.
pub fn geodesic_distance(a: &Rotation, b: &Rotation) -> f64 {
    a.inverse().compose(b).angle()
}

/// Rigid transform `x -> R x + p`, mapping object coordinates into the scene.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Pose::new(Rotation::identity(), Vec3::zeros())
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Pose::new(Rotation::identity(), translation)
    }

    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.rotation.rotate(x) + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.rotation.compose(&other.rotation),
            self.rotation.rotate(&other.translation) + self.translation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let r = self.rotation.inverse();
        Pose::new(r, -r.rotate(&self.translation))
    }

    /// `[qw, qx, qy, qz, px, py, pz]`.
    pub fn to_array(&self) -> [f64; 7] {
        let [w, x, y, z] = self.rotation.wxyz();
        let p = self.translation;
        [w, x, y, z, p.x, p.y, p.z]
    }

    pub fn from_array(a: &[f64; 7]) -> Result<Pose> {
        if !a.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("non-finite pose component"));
        }
        Ok(Pose::new(
            Rotation::from_wxyz(a[0], a[1], a[2], a[3])?,
            Vec3::new(a[4], a[5], a[6]),
        ))
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Parses a homogeneous transform given as 16 row-major values.
    pub fn from_row_major(values: &[f64]) -> Result<Pose> {
        if values.len() != 16 {
            return Err(Error::invalid(format!(
                "expected 16 matrix entries, got {}",
                values.len()
            )));
        }
        let m = Matrix4::from_row_slice(values);
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::invalid(format!(
                "last matrix row must be [0, 0, 0, 1], got {bottom:?}"
            )));
        }
        let rot = Rotation::from_matrix(&m.fixed_view::<3, 3>(0, 0).into_owned())?;
        let t = m.fixed_view::<3, 1>(0, 3).into_owned();
        if !t.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("non-finite translation"));
        }
        Ok(Pose::new(rot, t))
    }
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_array().serialize(serializer)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PoseRepr {
    Flat(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let values = match PoseRepr::deserialize(deserializer)? {
            PoseRepr::Flat(v) => v,
            PoseRepr::Rows(rows) => {
                if rows.len() != 4 || rows.iter().any(|r| r.len() != 4) {
                    return Err(D::Error::custom("pose matrix must be 4x4"));
                }
                rows.concat()
            }
        };
        let pose = match values.len() {
            7 => Pose::from_array(&values.clone().try_into().unwrap()),
            16 => Pose::from_row_major(&values),
            n => {
                return Err(D::Error::custom(format!(
                    "pose needs 7 values [qw,qx,qy,qz,px,py,pz] or a 4x4 matrix, got {n} values"
                )))
            }
        };
        pose.map_err(D::Error::custom)
    }
}

impl Serialize for Rotation {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.wxyz().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Rotation {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let [w, x, y, z] = <[f64; 4]>::deserialize(deserializer)?;
        Rotation::from_wxyz(w, x, y, z).map_err(D::Error::custom)
    }
}

/// Update coordinates for a left-multiplicative pose perturbation:
/// `R <- Exp(omega) R`, `p <- p + v`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct TangentDelta {
    pub omega: Vec3,
    pub v: Vec3,
}

impl TangentDelta {
    pub fn new(omega: Vec3, v: Vec3) -> Self {
        TangentDelta { omega, v }
    }

    pub fn is_finite(&self) -> bool {
        self.omega.iter().chain(self.v.iter()).all(|c| c.is_finite())
    }

    pub fn retract(&self, pose: &Pose) -> Result<Pose> {
        if !self.is_finite() {
            return Err(Error::invalid("non-finite tangent update"));
        }
        Ok(Pose::new(
            Rotation::exp(&self.omega)?.compose(&pose.rotation),
            pose.translation + self.v,
        ))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationSampling {
    #[default]
    SuperFibonacci,
    UniformRandom,
}

/// Deterministic set of `n` well-spread rotations using the default method.
pub fn rotation_grid(n: usize, seed: u64) -> Result<Vec<Rotation>> {
    rotation_grid_with(n, seed, RotationSampling::SuperFibonacci)
}

// Root of psi^4 = psi + 4.
const SUPER_FIBONACCI_PSI: f64 = 1.533_751_168_755_204_3;

fn super_fibonacci(n: usize) -> Vec<Rotation> {
    let phi = 2f64.sqrt();
    let nf = n as f64;
    (0..n)
        .map(|i| {
            let s = i as f64 + 0.5;
            let r = (s / nf).sqrt();
            let big_r = (1.0 - s / nf).sqrt();
            let alpha = 2.0 * PI * s / phi;
            let beta = 2.0 * PI * s / SUPER_FIBONACCI_PSI;
            Rotation::from_wxyz(
                r * alpha.sin(),
                r * alpha.cos(),
                big_r * beta.sin(),
                big_r * beta.cos(),
            )
            .expect("spiral sample has unit norm")
        })
        .collect()
}

/// Rotation grid with an explicit construction.
///
/// The seed selects a random conjugation of the base set, and the set is then
/// re-anchored so its first element is the identity. Both steps are isometries
/// of SO(3), so the covering radius of the base construction is preserved.
pub fn rotation_grid_with(n: usize, seed: u64, method: RotationSampling) -> Result<Vec<Rotation>> {
    if n == 0 {
        return Err(Error::invalid("rotation grid size must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = match method {
        RotationSampling::SuperFibonacci => super_fibonacci(n),
        RotationSampling::UniformRandom => (0..n).map(|_| Rotation::random(&mut rng)).collect(),
    };
    let twist = Rotation::random(&mut rng);
    let anchor = base[0].compose(&twist).inverse();
    Ok(base
        .iter()
        .enumerate()
        .map(|(i, q)| {
            if i == 0 {
                Rotation::identity()
            } else {
                anchor.compose(&q.compose(&twist))
            }
        })
        .collect())
}
