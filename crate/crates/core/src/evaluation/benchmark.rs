//! Synthetic tabletop benchmark: four parts on a table slab, rendered into a
//! sigma grid, fitted from a top-down reference view, and scored pairwise.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{aggregate_scene, lower_median, PairRecord, SymmetryGroup, SymmetryRegistry};
use crate::density_field::{render_depth, Camera, DensityGrid, DepthMap, RenderOptions};
use crate::error::{Error, Result};
use crate::geometry::{Pose, Rotation, Vec3};
use crate::init::InstanceMask;
use crate::object_model::{primitives, TriangleMesh};
use crate::pipeline::{estimates, fit_scene, ObjectInput, ObjectResult, RunSettings, Variant};
use crate::scene_synth::{add_noise, render_instance_masks, voxelize_clean, FieldSpec, PlacedMesh};

const TABLE_ID: &str = "table";
const TABLE_TOP: f64 = -0.03;
const LAYOUT_HALF_WIDTH: f64 = 0.07;
const LAYOUT_GAP: f64 = 0.005;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    /// Grid resolution per axis over a cube of side `extent` (metres).
    pub dims: usize,
    pub extent: f64,
    pub sigma_in: f64,
    pub sigma_out: f64,
    pub sharpness_voxels: f64,
    pub surface_offset_voxels: f64,
    pub noise_std: f64,
    pub noise_correlation: usize,
    pub image_size: usize,
    pub focal: f64,
    /// Camera height above the grid centre.
    pub camera_height: f64,
    pub table: bool,
    pub run: RunSettings,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            dims: 256,
            extent: 0.4,
            sigma_in: 8.0,
            sigma_out: -8.0,
            sharpness_voxels: 1.0,
            surface_offset_voxels: 2.0,
            noise_std: 1.0,
            noise_correlation: 3,
            image_size: 240,
            focal: 350.0,
            camera_height: 0.35,
            table: true,
            run: RunSettings::default(),
        }
    }
}

impl BenchmarkConfig {
    pub fn voxel(&self) -> f64 {
        self.extent / self.dims as f64
    }

    pub fn field(&self, seed: u64) -> FieldSpec {
        let h = 0.5 * self.extent;
        FieldSpec {
            dims: [self.dims; 3],
            bbox_min: [-h; 3],
            bbox_max: [h; 3],
            sharpness: self.sharpness_voxels * self.voxel(),
            sigma_in: self.sigma_in,
            sigma_out: self.sigma_out,
            surface_offset: self.surface_offset_voxels * self.voxel(),
            noise_std: self.noise_std,
            noise_correlation: self.noise_correlation,
            seed,
        }
    }

    pub fn camera(&self) -> Camera {
        let c = 0.5 * self.image_size as f64 - 0.5;
        Camera {
            fx: self.focal,
            fy: self.focal,
            cx: c,
            cy: c,
            width: self.image_size,
            height: self.image_size,
            camera_to_world: Pose::new(
                Rotation::exp(&Vec3::new(PI, 0.0, 0.0)).expect("finite"),
                Vec3::new(0.0, 0.0, self.camera_height),
            ),
        }
    }
}

/// A benchmark part: label, mesh, symmetry descriptor, resting orientation.
pub struct Part {
    pub label: &'static str,
    pub mesh: TriangleMesh,
    pub symmetry: &'static str,
    pub rest: Rotation,
}

pub fn parts() -> Vec<Part> {
    let lying = Rotation::exp(&Vec3::new(PI / 2.0, 0.0, 0.0)).expect("finite");
    vec![
        Part {
            label: "cube",
            mesh: primitives::cube(0.030),
            symmetry: "cube",
            rest: Rotation::identity(),
        },
        Part {
            label: "hex_nut",
            mesh: primitives::hex_prism(0.013, 0.0065),
            symmetry: "D6 about z",
            rest: Rotation::identity(),
        },
        Part {
            label: "pin",
            mesh: primitives::cylinder(0.008, 0.025, 32),
            symmetry: "D∞ about z",
            rest: lying,
        },
        Part {
            label: "bracket",
            mesh: primitives::l_bracket(0.030, 0.020, 0.004, 0.015),
            symmetry: "none",
            rest: Rotation::identity(),
        },
    ]
}

/// One seeded benchmark layout.
#[derive(Clone, Debug)]
pub struct BenchmarkScene {
    pub seed: u64,
    pub objects: Vec<PlacedMesh>,
    pub table: Option<PlacedMesh>,
    pub symmetries: SymmetryRegistry,
    pub field: FieldSpec,
    pub camera: Camera,
}

impl BenchmarkScene {
    /// Places every part resting on the table with a random yaw and a random
    /// non-overlapping position.
    pub fn new(cfg: &BenchmarkConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut symmetries = SymmetryRegistry::default();
        let mut objects = Vec::new();
        let mut placed: Vec<(Vec3, f64)> = Vec::new();
        for part in parts() {
            let yaw = Rotation::exp(&(Vec3::z() * rng.random_range(0.0..2.0 * PI)))?;
            let rotation = yaw.compose(&part.rest);
            let turned: Vec<Vec3> = part.mesh.vertices.iter().map(|v| rotation.rotate(v)).collect();
            let bottom = turned.iter().map(|v| v.z).fold(f64::INFINITY, f64::min);
            let radius = turned.iter().map(|v| v.xy().norm()).fold(0.0, f64::max);
            let mut spot = None;
            for _ in 0..10_000 {
                let c = Vec3::new(
                    rng.random_range(-LAYOUT_HALF_WIDTH..LAYOUT_HALF_WIDTH),
                    rng.random_range(-LAYOUT_HALF_WIDTH..LAYOUT_HALF_WIDTH),
                    TABLE_TOP - bottom,
                );
                if placed.iter().all(|(p, r)| (p.xy() - c.xy()).norm() > r + radius + LAYOUT_GAP) {
                    spot = Some(c);
                    break;
                }
            }
            let c = spot.ok_or_else(|| Error::invalid("could not place benchmark parts without overlap"))?;
            placed.push((c, radius));
            symmetries.insert(part.label, SymmetryGroup::parse(part.symmetry)?);
            objects.push(PlacedMesh {
                id: part.label.to_string(),
                mesh: part.mesh,
                pose: Pose::new(rotation, c),
            });
        }
        let table = cfg.table.then(|| PlacedMesh {
            id: TABLE_ID.to_string(),
            mesh: primitives::cuboid(Vec3::new(0.3, 0.3, 0.03)),
            pose: Pose::from_translation(Vec3::new(0.0, 0.0, TABLE_TOP - 0.015)),
        });
        Ok(BenchmarkScene {
            seed,
            objects,
            table,
            symmetries,
            field: cfg.field(seed),
            camera: cfg.camera(),
        })
    }

    /// Objects plus the table, when present.
    pub fn all_meshes(&self) -> Vec<PlacedMesh> {
        self.objects.iter().cloned().chain(self.table.clone()).collect()
    }

    pub fn ground_truth(&self) -> BTreeMap<String, Pose> {
        self.objects.iter().map(|o| (o.id.clone(), o.pose)).collect()
    }

    pub fn clean_grid(&self) -> Result<DensityGrid> {
        voxelize_clean(&self.all_meshes(), &self.field)
    }

    pub fn noisy_grid(&self, clean: &DensityGrid, noise_std: f64) -> Result<DensityGrid> {
        add_noise(clean, noise_std, self.field.noise_correlation, self.seed)
    }

    /// Visible-pixel masks of the objects (the table occludes nothing but
    /// takes part in visibility).
    pub fn masks(&self) -> Result<Vec<InstanceMask>> {
        let mut masks = render_instance_masks(&self.all_meshes(), &self.camera)?;
        masks.truncate(self.objects.len());
        Ok(masks)
    }
}

/// Reference-view data used for initialization.
#[derive(Clone, Debug)]
pub struct ReferenceView {
    pub masks: Vec<InstanceMask>,
    pub depth: DepthMap,
}

impl ReferenceView {
    pub fn render(scene: &BenchmarkScene, init_grid: &DensityGrid) -> Result<Self> {
        Ok(ReferenceView {
            masks: scene.masks()?,
            depth: render_depth(init_grid, &scene.camera, &RenderOptions::default())?,
        })
    }
}

/// Outcome of one (seed, noise level, variant) run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub noise_std: f64,
    pub variant: Variant,
    pub median_trans_mm: Option<f64>,
    pub median_rot_deg: Option<f64>,
    #[serde(default)]
    pub pairs: Vec<PairRecord>,
    #[serde(default)]
    pub objects: Vec<ObjectResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl RunRecord {
    fn failed(seed: u64, noise_std: f64, variant: Variant, e: &Error) -> Self {
        RunRecord {
            seed,
            noise_std,
            variant,
            median_trans_mm: None,
            median_rot_deg: None,
            pairs: Vec::new(),
            objects: Vec::new(),
            failure: Some(e.to_string()),
        }
    }
}

/// Fits every object of `scene` on `grid` and scores the result.
pub fn evaluate_variant(
    scene: &BenchmarkScene,
    view: &ReferenceView,
    grid: &DensityGrid,
    settings: &RunSettings,
    variant: Variant,
    noise_std: f64,
) -> Result<RunRecord> {
    let inputs: Vec<ObjectInput> = scene
        .objects
        .iter()
        .zip(&view.masks)
        .map(|(o, m)| ObjectInput {
            label: &o.id,
            mesh: &o.mesh,
            mask: m,
        })
        .collect();
    let objects = fit_scene(grid, &scene.camera, &view.depth, &inputs, settings, variant)?;
    let report = aggregate_scene(&estimates(&objects), &scene.ground_truth(), &scene.symmetries)?;
    log::info!(
        "seed {} noise {} {}: median {:.3} mm / {:.3} deg",
        scene.seed,
        noise_std,
        variant.name(),
        report.median_trans_mm,
        report.median_rot_deg
    );
    Ok(RunRecord {
        seed: scene.seed,
        noise_std,
        variant,
        median_trans_mm: Some(report.median_trans_mm),
        median_rot_deg: Some(report.median_rot_deg),
        pairs: report.pairs,
        objects,
        failure: None,
    })
}

/// Runs the benchmark at the configured noise level for each seed and
/// variant. Initialization uses the same (noisy) grid as fitting.
pub fn run_benchmark(cfg: &BenchmarkConfig, seeds: &[u64], variants: &[Variant]) -> Result<Vec<RunRecord>> {
    let mut rows = Vec::new();
    for &seed in seeds {
        let scene = BenchmarkScene::new(cfg, seed)?;
        let grid = scene.noisy_grid(&scene.clean_grid()?, cfg.noise_std)?;
        let view = ReferenceView::render(&scene, &grid)?;
        for &variant in variants {
            rows.push(
                evaluate_variant(&scene, &view, &grid, &cfg.run, variant, cfg.noise_std)
                    .unwrap_or_else(|e| RunRecord::failed(seed, cfg.noise_std, variant, &e)),
            );
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub noise_std: f64,
    pub median_trans_mm: Option<f64>,
    pub median_rot_deg: Option<f64>,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<RunRecord>,
    pub levels: Vec<LevelSummary>,
}

/// Fits every seed at every noise level. Initialization always comes from the
/// noise-free grid; only the fitted field degrades. The unit noise pattern of
/// a seed is shared across levels, so levels differ only in amplitude.
pub fn degradation_sweep(cfg: &BenchmarkConfig, noise_levels: &[f64], seeds: &[u64]) -> Result<SweepTable> {
    if noise_levels.len() < 2 || seeds.len() < 2 {
        return Err(Error::invalid("a sweep needs at least 2 noise levels and 2 seeds"));
    }
    if let Some(bad) = noise_levels.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(Error::invalid(format!("noise level must be >= 0, got {bad}")));
    }
    let mut rows = Vec::new();
    for &seed in seeds {
        let prepared = BenchmarkScene::new(cfg, seed).and_then(|scene| {
            let clean = scene.clean_grid()?;
            let view = ReferenceView::render(&scene, &clean)?;
            Ok((scene, clean, view))
        });
        for &level in noise_levels {
            let row = match &prepared {
                Ok((scene, clean, view)) => scene
                    .noisy_grid(clean, level)
                    .and_then(|grid| evaluate_variant(scene, view, &grid, &cfg.run, Variant::Full, level)),
                Err(e) => Err(Error::invalid(e.to_string())),
            };
            rows.push(row.unwrap_or_else(|e| RunRecord::failed(seed, level, Variant::Full, &e)));
        }
    }
    let levels = noise_levels.iter().map(|&l| summarize(&rows, l)).collect();
    Ok(SweepTable { rows, levels })
}

fn summarize(rows: &[RunRecord], level: f64) -> LevelSummary {
    let at: Vec<&RunRecord> = rows.iter().filter(|r| r.noise_std == level).collect();
    let trans: Vec<f64> = at.iter().filter_map(|r| r.median_trans_mm).collect();
    let rot: Vec<f64> = at.iter().filter_map(|r| r.median_rot_deg).collect();
    LevelSummary {
        noise_std: level,
        median_trans_mm: lower_median(&trans),
        median_rot_deg: lower_median(&rot),
        failed: at.iter().filter(|r| r.failure.is_some()).count(),
    }
}

/// Median over runs of the per-run medians, per variant.
pub fn variant_medians(rows: &[RunRecord], variant: Variant) -> (Option<f64>, Option<f64>) {
    let of = |f: fn(&RunRecord) -> Option<f64>| {
        let v: Vec<f64> = rows.iter().filter(|r| r.variant == variant).filter_map(f).collect();
        lower_median(&v)
    };
    (of(|r| r.median_trans_mm), of(|r| r.median_rot_deg))
}

/// One CSV line per run.
pub fn runs_to_csv(rows: &[RunRecord]) -> String {
    let mut out = String::from("variant,seed,noise_std,median_trans_mm,median_rot_deg,status\n");
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.variant.name(),
            r.seed,
            r.noise_std,
            fmt(r.median_trans_mm),
            fmt(r.median_rot_deg),
            if r.failure.is_some() { "failed" } else { "ok" }
        )
        .unwrap();
    }
    out
}
