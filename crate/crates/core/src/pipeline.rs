//! Per-object fitting from a reference view: mask, depth, centroid,
//! hypotheses, refinement.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::density_field::{Camera, DensityGrid, DepthMap};
use crate::error::Result;
use crate::fitting::{fit_object, select_without_refinement, FitConfig, FitResult};
use crate::geometry::{Pose, RotationSampling, Vec3};
use crate::init::{backproject_mask, make_hypotheses_with, InstanceMask};
use crate::object_model::{band_points, sample_surface, BandPoints, SampledModel, TriangleMesh};

/// Surface sampling and band construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub n_s: usize,
    pub delta_s: f64,
    pub delta_n: f64,
    pub k_s: usize,
    pub k_n: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_s: 1280,
            delta_s: 0.0,
            delta_n: 5e-3,
            k_s: 1,
            k_n: 1,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn sample(&self, mesh: &TriangleMesh) -> Result<SampledModel> {
        sample_surface(mesh, self.n_s, self.seed)
    }

    pub fn bands(&self, model: &SampledModel) -> Result<BandPoints> {
        band_points(model, self.delta_s, self.delta_n, self.k_s, self.k_n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub seed: u64,
    pub sampling: RotationSampling,
    /// Index into the camera list; `None` picks the most top-down view.
    pub reference_view: Option<usize>,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            seed: 0,
            sampling: RotationSampling::SuperFibonacci,
            reference_view: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoNormalBand,
    NoRefine,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::NoNormalBand, Variant::NoRefine];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoNormalBand => "no_normal_band",
            Variant::NoRefine => "no_refine",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectStatus {
    Ok,
    InitFailed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectResult {
    pub label: String,
    pub status: ObjectStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centroid: Option<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitResult>,
}

impl ObjectResult {
    pub fn pose(&self) -> Option<&Pose> {
        self.fit.as_ref().map(|f| &f.pose)
    }
}

/// One object to fit: its label, model mesh and mask in the reference view.
#[derive(Clone, Copy, Debug)]
pub struct ObjectInput<'a> {
    pub label: &'a str,
    pub mesh: &'a TriangleMesh,
    pub mask: &'a InstanceMask,
}

/// Shared settings of a fitting run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub model: ModelConfig,
    pub init: InitConfig,
    pub fit: FitConfig,
}

/// Initializes and fits one object. Initialization failures become an
/// `init_failed` result; other errors propagate.
pub fn fit_one(
    grid: &DensityGrid,
    camera: &Camera,
    depth: &DepthMap,
    input: ObjectInput,
    settings: &RunSettings,
    variant: Variant,
) -> Result<ObjectResult> {
    let cloud = match backproject_mask(depth, input.mask, camera) {
        Ok(c) => c,
        Err(e @ crate::Error::EmptyMask { .. }) => {
            log::warn!("{}: {e}", input.label);
            return Ok(ObjectResult {
                label: input.label.to_string(),
                status: ObjectStatus::InitFailed,
                message: Some(e.to_string()),
                centroid: None,
                fit: None,
            });
        }
        Err(e) => return Err(e),
    };
    let model = settings.model.sample(input.mesh)?;
    let band = settings.model.bands(&model)?;
    let hyps = make_hypotheses_with(
        input.label,
        cloud.centroid,
        settings.fit.n_hypotheses,
        settings.init.seed,
        settings.init.sampling,
    )?;
    let mut cfg = settings.fit.clone();
    if variant == Variant::NoNormalBand {
        cfg.use_normal_band = false;
    }
    let fit = match variant {
        Variant::NoRefine => select_without_refinement(&hyps.poses, &band, grid, &cfg)?,
        _ => fit_object(input.label, &hyps.poses, &band, grid, &cfg)?,
    };
    log::info!("{}: fitness {:.6} from hypothesis {}", input.label, fit.fitness, fit.hypothesis_index);
    Ok(ObjectResult {
        label: input.label.to_string(),
        status: ObjectStatus::Ok,
        message: None,
        centroid: Some(cloud.centroid),
        fit: Some(fit),
    })
}

pub fn fit_scene(
    grid: &DensityGrid,
    camera: &Camera,
    depth: &DepthMap,
    inputs: &[ObjectInput],
    settings: &RunSettings,
    variant: Variant,
) -> Result<Vec<ObjectResult>> {
    inputs
        .iter()
        .map(|input| fit_one(grid, camera, depth, *input, settings, variant))
        .collect()
}

/// Estimated poses of the successfully fitted objects.
pub fn estimates(results: &[ObjectResult]) -> BTreeMap<String, Pose> {
    results
        .iter()
        .filter_map(|r| r.pose().map(|p| (r.label.clone(), *p)))
        .collect()
}

/// Model points under `pose` projected into `camera`, as unique in-image
/// pixels in row-major order.
pub fn overlay_pixels(model: &SampledModel, pose: &Pose, camera: &Camera) -> Vec<[usize; 2]> {
    let mut hit = vec![false; camera.width * camera.height];
    for x in &model.points {
        if let Some((u, v, _)) = camera.project(&pose.apply(x)) {
            let (u, v) = (u.round(), v.round());
            if u >= 0.0 && v >= 0.0 && (u as usize) < camera.width && (v as usize) < camera.height {
                hit[v as usize * camera.width + u as usize] = true;
            }
        }
    }
    hit.iter()
        .enumerate()
        .filter(|(_, &h)| h)
        .map(|(i, _)| [i % camera.width, i / camera.width])
        .collect()
}

/// Rasterized overlay as a mask image.
pub fn overlay_mask(label: &str, pixels: &[[usize; 2]], camera: &Camera) -> Result<InstanceMask> {
    let mut data = vec![false; camera.width * camera.height];
    for &[u, v] in pixels {
        data[v * camera.width + u] = true;
    }
    InstanceMask::new(label, camera.width, camera.height, data)
}
