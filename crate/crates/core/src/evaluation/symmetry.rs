//! Proper rotational symmetry groups of object models.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{geodesic_distance, Rotation, Vec3};

/// Steps used to discretize a continuous rotational symmetry.
pub const CONTINUOUS_STEPS: usize = 360;

const CLOSURE_TOL: f64 = 1e-6;

/// A finite set of rotations in the model frame that leave the shape
/// unchanged. The identity is always the first element.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetryGroup {
    pub descriptor: String,
    pub rotations: Vec<Rotation>,
    /// Set for discretized continuous groups, whose closure is only
    /// approximate to the step size.
    pub continuous: bool,
}

fn axis_vector(name: &str) -> Result<Vec3> {
    match name {
        "x" => Ok(Vec3::x()),
        "y" => Ok(Vec3::y()),
        "z" => Ok(Vec3::z()),
        other => Err(Error::invalid(format!("unknown symmetry axis '{other}'"))),
    }
}

/// Some unit vector orthogonal to `axis`.
fn perpendicular(axis: &Vec3) -> Vec3 {
    let helper = if axis.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    axis.cross(&helper).normalize()
}

fn about(axis: &Vec3, angle: f64) -> Rotation {
    Rotation::exp(&(axis.normalize() * angle)).expect("finite rotation vector")
}

impl SymmetryGroup {
    pub fn identity() -> Self {
        SymmetryGroup {
            descriptor: "none".into(),
            rotations: vec![Rotation::identity()],
            continuous: false,
        }
    }

    /// Order-`n` rotations about `axis`.
    pub fn cyclic(n: usize, axis: Vec3) -> Result<Self> {
        if n == 0 || axis.norm() == 0.0 {
            return Err(Error::invalid("cyclic symmetry needs n >= 1 and a non-zero axis"));
        }
        let rotations = (0..n).map(|k| about(&axis, 2.0 * PI * k as f64 / n as f64)).collect();
        Ok(SymmetryGroup {
            descriptor: format!("C{n}"),
            rotations,
            continuous: false,
        })
    }

    /// Cyclic group plus half turns about `n` axes perpendicular to `axis`.
    pub fn dihedral(n: usize, axis: Vec3) -> Result<Self> {
        let mut g = Self::cyclic(n, axis)?;
        let a = axis.normalize();
        let first = perpendicular(&a);
        for k in 0..n {
            let flip_axis = about(&a, PI * k as f64 / n as f64).rotate(&first);
            g.rotations.push(about(&flip_axis, PI));
        }
        g.descriptor = format!("D{n}");
        Ok(g)
    }

    /// Continuous rotation about `axis`, discretized in `steps`, optionally
    /// with the end-over-end flip of a body of revolution.
    pub fn continuous(axis: Vec3, steps: usize, flip: bool) -> Result<Self> {
        let mut g = if flip { Self::dihedral(steps, axis)? } else { Self::cyclic(steps, axis)? };
        g.descriptor = format!("{}inf/{steps}", if flip { "D" } else { "C" });
        g.continuous = true;
        Ok(g)
    }

    /// The 24 rotations of a cube aligned with the axes.
    pub fn cube() -> Self {
        let mut rotations = vec![Rotation::identity()];
        for axis in [Vec3::x(), Vec3::y(), Vec3::z()] {
            for k in 1..4 {
                rotations.push(about(&axis, PI / 2.0 * k as f64));
            }
        }
        for (a, b) in [(1.0, 1.0), (1.0, -1.0)] {
            rotations.push(about(&Vec3::new(a, b, 0.0), PI));
            rotations.push(about(&Vec3::new(a, 0.0, b), PI));
            rotations.push(about(&Vec3::new(0.0, a, b), PI));
        }
        for (a, b) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
            let axis = Vec3::new(1.0, a, b);
            rotations.push(about(&axis, 2.0 * PI / 3.0));
            rotations.push(about(&axis, 4.0 * PI / 3.0));
        }
        SymmetryGroup {
            descriptor: "cube".into(),
            rotations,
            continuous: false,
        }
    }

    /// An explicit element list; the identity is added when missing and the
    /// list must be closed under composition.
    pub fn from_rotations(descriptor: &str, list: Vec<Rotation>) -> Result<Self> {
        let mut rotations = vec![Rotation::identity()];
        rotations.extend(list.into_iter().filter(|r| r.angle() > CLOSURE_TOL));
        let g = SymmetryGroup {
            descriptor: descriptor.to_string(),
            rotations,
            continuous: false,
        };
        g.check_closure()?;
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.rotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rotations.is_empty()
    }

    fn find(&self, r: &Rotation) -> Option<usize> {
        self.rotations.iter().position(|s| geodesic_distance(s, r) < CLOSURE_TOL)
    }

    pub fn check_closure(&self) -> Result<()> {
        for a in &self.rotations {
            for b in &self.rotations {
                if self.find(&a.compose(b)).is_none() {
                    return Err(Error::invalid(format!(
                        "symmetry '{}' is not closed under composition",
                        self.descriptor
                    )));
                }
            }
        }
        Ok(())
    }

    /// Parses `none`, `cube`, `C<n> about <axis>`, `D<n> about <axis>`,
    /// `C∞ about <axis>` and `D∞ about <axis>` (`inf` also accepted for the
    /// infinity sign). Continuous groups may append `discretized <K>`.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("unrecognized symmetry descriptor '{text}'"));
        let words: Vec<&str> = text.split_whitespace().collect();
        match words.as_slice() {
            ["none"] | ["identity"] | ["C1"] => return Ok(Self::identity()),
            ["cube"] | ["O"] => return Ok(Self::cube()),
            _ => {}
        }
        let (head, rest) = words.split_first().ok_or_else(bad)?;
        let (axis, steps) = match rest {
            ["about", axis] => (axis_vector(axis)?, None),
            ["about", axis, "discretized", k] => (axis_vector(axis)?, Some(k.parse::<usize>().map_err(|_| bad())?)),
            _ => return Err(bad()),
        };
        let mut chars = head.chars();
        let kind = chars.next().ok_or_else(bad)?;
        let order = chars.as_str();
        let mut group = match (kind, order) {
            ('C' | 'D', "∞" | "inf") => Self::continuous(axis, steps.unwrap_or(CONTINUOUS_STEPS), kind == 'D')?,
            ('C', n) if steps.is_none() => Self::cyclic(n.parse().map_err(|_| bad())?, axis)?,
            ('D', n) if steps.is_none() => Self::dihedral(n.parse().map_err(|_| bad())?, axis)?,
            _ => return Err(bad()),
        };
        group.descriptor = text.to_string();
        Ok(group)
    }
}

/// Registry entry: a descriptor string or an explicit `[w, x, y, z]` list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SymmetrySpec {
    Descriptor(String),
    Quaternions { quaternions: Vec<[f64; 4]> },
}

impl SymmetrySpec {
    pub fn build(&self) -> Result<SymmetryGroup> {
        match self {
            SymmetrySpec::Descriptor(text) => SymmetryGroup::parse(text),
            SymmetrySpec::Quaternions { quaternions } => {
                let list = quaternions
                    .iter()
                    .map(|&[w, x, y, z]| Rotation::from_wxyz(w, x, y, z))
                    .collect::<Result<Vec<_>>>()?;
                SymmetryGroup::from_rotations("explicit", list)
            }
        }
    }
}

/// Symmetry groups by object label; labels without an entry are asymmetric.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SymmetryRegistry {
    groups: BTreeMap<String, SymmetryGroup>,
}

impl SymmetryRegistry {
    pub fn from_specs(specs: &BTreeMap<String, SymmetrySpec>) -> Result<Self> {
        let mut groups = BTreeMap::new();
        for (label, spec) in specs {
            let g = spec
                .build()
                .map_err(|e| Error::invalid(format!("symmetry for '{label}': {e}")))?;
            groups.insert(label.clone(), g);
        }
        Ok(SymmetryRegistry { groups })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_specs(&serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn insert(&mut self, label: &str, group: SymmetryGroup) {
        self.groups.insert(label.to_string(), group);
    }

    pub fn get(&self, label: &str) -> Option<&SymmetryGroup> {
        self.groups.get(label)
    }
}
