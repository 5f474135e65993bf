//! Symmetry-aware relative pose errors between object pairs, scene
//! aggregation, and the synthetic benchmark harness.

pub mod benchmark;
mod symmetry;

pub use symmetry::{SymmetryGroup, SymmetryRegistry, SymmetrySpec, CONTINUOUS_STEPS};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{geodesic_distance, Pose, Rotation, Vec3};

/// Reported errors are rounded to this resolution (mm and degrees), so that
/// round-off in symmetry products cannot change a result.
pub const ERROR_RESOLUTION: f64 = 1e-9;

fn quantize(x: f64) -> f64 {
    (x / ERROR_RESOLUTION).round() * ERROR_RESOLUTION
}

/// Translation (mm) and rotation (degrees) error of one object pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairError {
    pub trans_mm: f64,
    pub rot_deg: f64,
}

/// Pair distances below this are treated as this long when weighing
/// translation against rotation.
const MIN_LEVER: f64 = 1e-3;

/// Compares the estimated pose of `j` relative to `i` against ground truth.
///
/// The translation error is the mean of the relative-translation errors
/// expressed in the frame of `i` and in the frame of `j`, so that both errors
/// are symmetric in pair order. Every symmetry assignment on the estimate
/// side is tried. The chosen one minimizes `rot_rad + trans / max(|t_gt|, 1 mm)`,
/// which weighs the translation error as the angle it subtends over the
/// pair distance; ties go to the smaller rotation error. Both errors are
/// reported from the chosen assignment.
///
/// Ranking by rotation error alone is ambiguous whenever one rotation is a
/// symmetry of both objects (two upright parts sharing a half turn about the
/// vertical): both assignments give nearly the same relative rotation but
/// relative translations that differ by twice the pair distance.
pub fn relative_pose_error(
    est_i: &Pose,
    est_j: &Pose,
    gt_i: &Pose,
    gt_j: &Pose,
    sym_i: &SymmetryGroup,
    sym_j: &SymmetryGroup,
) -> PairError {
    let est = est_i.inverse().compose(est_j);
    let gt = gt_i.inverse().compose(gt_j);
    let (est_back, gt_back) = (est.inverse(), gt.inverse());
    let lever = gt.translation.norm().max(MIN_LEVER);
    // Symmetries fix the model origin, so S_i only moves the translation seen
    // from i and S_j only the one seen from j.
    let offset = |s: &Rotation, t_est: &Vec3, t_gt: &Vec3| (s.inverse().rotate(t_est) - t_gt).norm();
    let back: Vec<f64> = sym_j
        .rotations
        .iter()
        .map(|s_j| offset(s_j, &est_back.translation, &gt_back.translation))
        .collect();
    let mut best: Option<(f64, PairError)> = None;
    for s_i in &sym_i.rotations {
        let forward = offset(s_i, &est.translation, &gt.translation);
        let left = s_i.inverse().compose(&est.rotation);
        for (s_j, back) in sym_j.rotations.iter().zip(&back) {
            let trans_m = 0.5 * (forward + back);
            let rot = geodesic_distance(&left.compose(s_j), &gt.rotation);
            let cost = quantize(rot + trans_m / lever);
            let candidate = PairError {
                trans_mm: quantize(trans_m * 1e3),
                rot_deg: quantize(rot.to_degrees()),
            };
            let better = match best {
                None => true,
                Some((c, b)) => (cost, candidate.rot_deg, candidate.trans_mm) < (c, b.rot_deg, b.trans_mm),
            };
            if better {
                best = Some((cost, candidate));
            }
        }
    }
    best.expect("symmetry groups contain the identity").1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub first: String,
    pub second: String,
    pub trans_mm: f64,
    pub rot_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneEvalReport {
    pub pairs: Vec<PairRecord>,
    pub median_trans_mm: f64,
    pub median_rot_deg: f64,
    pub object_count: usize,
    pub pair_count: usize,
}

/// Lower of the two middle values for even counts.
pub fn lower_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(v[(v.len() - 1) / 2])
}

/// Evaluates every unordered pair of objects that have an estimate.
///
/// Estimates for labels without ground truth are an error; ground-truth
/// objects without an estimate are left out. Labels missing from
/// `symmetries` are treated as asymmetric.
pub fn aggregate_scene(
    estimates: &BTreeMap<String, Pose>,
    ground_truth: &BTreeMap<String, Pose>,
    symmetries: &SymmetryRegistry,
) -> Result<SceneEvalReport> {
    if let Some(label) = estimates.keys().find(|l| !ground_truth.contains_key(*l)) {
        return Err(Error::invalid(format!("no ground truth for object '{label}'")));
    }
    let labels: Vec<&String> = estimates.keys().collect();
    if labels.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 objects with estimate and ground truth, got {}",
            labels.len()
        )));
    }
    let none = SymmetryGroup::identity();
    let sym = |l: &str| symmetries.get(l).unwrap_or(&none);
    let mut pairs = Vec::new();
    for (a, la) in labels.iter().enumerate() {
        for lb in &labels[a + 1..] {
            let e = relative_pose_error(
                &estimates[*la],
                &estimates[*lb],
                &ground_truth[*la],
                &ground_truth[*lb],
                sym(la),
                sym(lb),
            );
            pairs.push(PairRecord {
                first: la.to_string(),
                second: lb.to_string(),
                trans_mm: e.trans_mm,
                rot_deg: e.rot_deg,
            });
        }
    }
    let trans: Vec<f64> = pairs.iter().map(|p| p.trans_mm).collect();
    let rot: Vec<f64> = pairs.iter().map(|p| p.rot_deg).collect();
    Ok(SceneEvalReport {
        median_trans_mm: lower_median(&trans).expect("at least one pair"),
        median_rot_deg: lower_median(&rot).expect("at least one pair"),
        object_count: labels.len(),
        pair_count: pairs.len(),
        pairs,
    })
}

impl SceneEvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("first,second,trans_mm,rot_deg\n");
        for p in &self.pairs {
            writeln!(out, "{},{},{},{}", p.first, p.second, p.trans_mm, p.rot_deg).unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Vec<PairRecord>> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "first,second,trans_mm,rot_deg")) => {}
            _ => {
                return Err(Error::TextFormat {
                    line: 1,
                    message: "expected header first,second,trans_mm,rot_deg".into(),
                })
            }
        }
        lines
            .filter(|(_, l)| !l.is_empty())
            .map(|(i, l)| {
                let bad = || Error::TextFormat {
                    line: i + 1,
                    message: format!("malformed row '{l}'"),
                };
                let f: Vec<&str> = l.split(',').collect();
                let [first, second, t, r] = f.as_slice() else {
                    return Err(bad());
                };
                Ok(PairRecord {
                    first: first.to_string(),
                    second: second.to_string(),
                    trans_mm: t.parse().map_err(|_| bad())?,
                    rot_deg: r.parse().map_err(|_| bad())?,
                })
            })
            .collect()
    }

    pub fn save(&self, csv_path: impl AsRef<Path>, json_path: Option<&Path>) -> Result<()> {
        let csv_path = csv_path.as_ref();
        fs::write(csv_path, self.to_csv()).map_err(|e| Error::io(csv_path, e))?;
        if let Some(p) = json_path {
            fs::write(p, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(p, e))?;
        }
        Ok(())
    }
}
