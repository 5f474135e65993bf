//! Hypothesis initialization from a segmented reference view.
//!
//! Mask pixels are lifted to 3D through a rendered depth map; the centroid of
//! the resulting partial cloud becomes the translation of every hypothesis,
//! paired with a uniform grid of rotations.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::density_field::{Camera, DepthMap};
use crate::error::{Error, Result};
use crate::geometry::{rotation_grid_with, Pose, RotationSampling, Vec3};

/// Fewer valid pixels than this only yields a warning.
pub const WEAK_MASK_PIXELS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceMask {
    pub label: String,
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl InstanceMask {
    pub fn new(label: &str, width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "mask {width}x{height} needs {} pixels, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(InstanceMask {
            label: label.to_string(),
            width,
            height,
            data,
        })
    }

    pub fn get(&self, u: usize, v: usize) -> bool {
        self.data[v * self.width + u]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&m| m).count()
    }

    /// Binary PGM (P5, maxval 255); members are stored as 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|&m| if m { 255u8 } else { 0 }));
        out
    }

    /// Parses an 8-bit binary PGM; pixels >= 128 are members.
    pub fn from_pgm(label: &str, bytes: &[u8]) -> Result<Self> {
        let (header, offset) = parse_pgm_header(bytes)?;
        if header.maxval > 255 {
            return Err(Error::BinaryFormat {
                offset: 0,
                message: format!("mask PGM must be 8-bit, maxval is {}", header.maxval),
            });
        }
        let n = header.width * header.height;
        let payload = bytes.get(offset..offset + n).ok_or_else(|| Error::BinaryFormat {
            offset: bytes.len() as u64,
            message: format!("truncated PGM: {n} pixels expected"),
        })?;
        let data = payload.iter().map(|&p| p >= 128).collect();
        InstanceMask::new(label, header.width, header.height, data)
    }

    pub fn load(label: &str, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_pgm(label, &fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_pgm()).map_err(|e| Error::io(path, e))
    }
}

struct PgmHeader {
    width: usize,
    height: usize,
    maxval: usize,
}

/// Reads the `P5 width height maxval` header (comments allowed) and returns
/// it with the payload offset.
fn parse_pgm_header(bytes: &[u8]) -> Result<(PgmHeader, usize)> {
    let err = |offset: usize, message: &str| Error::BinaryFormat {
        offset: offset as u64,
        message: message.to_string(),
    };
    if !bytes.starts_with(b"P5") {
        return Err(err(0, "not a binary PGM (missing P5 magic)"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(err(pos, "truncated PGM header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .filter(|&v| v > 0)
            .ok_or_else(|| err(start, "bad PGM header field"))?;
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(err(pos, "PGM header must end with whitespace"));
    }
    let [width, height, maxval] = fields;
    Ok((PgmHeader { width, height, maxval }, pos + 1))
}

/// One entry of the mask manifest: which mask belongs to which model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskEntry {
    pub label: String,
    pub mask: PathBuf,
    pub model: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskManifest {
    pub masks: Vec<MaskEntry>,
}

impl MaskManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

/// Partial world-frame cloud under a mask, and its centroid.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialCloud {
    pub points: Vec<Vec3>,
    pub centroid: Vec3,
}

pub fn backproject_mask(depth: &DepthMap, mask: &InstanceMask, camera: &Camera) -> Result<PartialCloud> {
    camera.validate()?;
    let dims = (camera.width, camera.height);
    if (depth.width, depth.height) != dims || (mask.width, mask.height) != dims {
        return Err(Error::invalid(format!(
            "depth {}x{} and mask {}x{} must match camera {}x{}",
            depth.width, depth.height, mask.width, mask.height, camera.width, camera.height
        )));
    }
    let points: Vec<Vec3> = (0..camera.height)
        .flat_map(|v| (0..camera.width).map(move |u| (u, v)))
        .filter(|&(u, v)| mask.get(u, v))
        .filter_map(|(u, v)| {
            let d = depth.get(u, v);
            (!d.is_nan()).then(|| camera.unproject(u as f64, v as f64, d as f64))
        })
        .collect();
    if points.is_empty() {
        return Err(Error::EmptyMask {
            label: mask.label.clone(),
        });
    }
    if points.len() < WEAK_MASK_PIXELS {
        log::warn!(
            "mask '{}' has only {} pixels with depth; initialization may be poor",
            mask.label,
            points.len()
        );
    }
    let centroid = points.iter().sum::<Vec3>() / points.len() as f64;
    Ok(PartialCloud { points, centroid })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSet {
    pub label: String,
    pub centroid: Vec3,
    pub poses: Vec<Pose>,
}

pub fn make_hypotheses(label: &str, centroid: Vec3, n_h: usize, seed: u64) -> Result<HypothesisSet> {
    make_hypotheses_with(label, centroid, n_h, seed, RotationSampling::default())
}

pub fn make_hypotheses_with(
    label: &str,
    centroid: Vec3,
    n_h: usize,
    seed: u64,
    sampling: RotationSampling,
) -> Result<HypothesisSet> {
    if !centroid.iter().all(|c| c.is_finite()) {
        return Err(Error::invalid("centroid must be finite"));
    }
    let poses = rotation_grid_with(n_h, seed, sampling)?
        .into_iter()
        .map(|r| Pose::new(r, centroid))
        .collect();
    Ok(HypothesisSet {
        label: label.to_string(),
        centroid,
        poses,
    })
}

/// Index of the view whose optical axis points most nearly along world -z.
pub fn select_reference_view(cameras: &[Camera]) -> Option<usize> {
    cameras
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.optical_axis().z.total_cmp(&b.optical_axis().z))
        .map(|(i, _)| i)
}
