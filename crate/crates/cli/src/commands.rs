use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fitngp::density_field::{self, load_grid, save_grid, Camera, DensityGrid, RenderOptions};
use fitngp::evaluation::benchmark::{degradation_sweep, run_benchmark, runs_to_csv, RunRecord};
use fitngp::evaluation::{aggregate_scene, SceneEvalReport, SymmetryRegistry, SymmetrySpec};
use fitngp::geometry::Pose;
use fitngp::init::{select_reference_view, InstanceMask, MaskEntry, MaskManifest};
use fitngp::object_model::load_mesh;
use fitngp::pipeline::{
    estimates, fit_one, overlay_mask, overlay_pixels, ObjectInput, ObjectResult, ObjectStatus, RunSettings, Variant,
};
use fitngp::scene_synth::{render_instance_masks, voxelize, SceneSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{join, load_with_overrides, AblateConfig, PipelineConfig};
use crate::CliError;

/// Per-object fit output of the `fit` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub reference_view: usize,
    pub objects: Vec<ObjectResult>,
}

fn parent(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Failed(e.to_string()))?;
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn from_value<T: for<'de> Deserialize<'de>>(path: &Path, value: Value) -> Result<T, CliError> {
    serde_json::from_value(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// A single camera object or a list of them.
pub fn load_cameras(path: &Path) -> Result<Vec<Camera>, CliError> {
    let value = read_json(path)?;
    let cameras: Vec<Camera> = if value.is_array() {
        from_value(path, value)?
    } else {
        vec![from_value(path, value)?]
    };
    for c in &cameras {
        c.validate()?;
    }
    Ok(cameras)
}

/// Ground truth as a map from label to pose.
pub fn load_poses(path: &Path) -> Result<BTreeMap<String, Pose>, CliError> {
    from_value(path, read_json(path)?)
}

/// Estimates from a `fit` results file or a plain label-to-pose map.
pub fn load_estimates(path: &Path) -> Result<BTreeMap<String, Pose>, CliError> {
    let value = read_json(path)?;
    if value.get("objects").is_some_and(Value::is_array) {
        let results: ResultsFile = from_value(path, value)?;
        Ok(estimates(&results.objects))
    } else {
        from_value(path, value)
    }
}

pub fn gen_scene(
    spec_path: &Path,
    out_grid: &Path,
    out_gt: &Path,
    camera: Option<&Path>,
    masks_dir: Option<&Path>,
    symmetries: Option<&Path>,
) -> Result<(), CliError> {
    let spec: SceneSpec = from_value(spec_path, read_json(spec_path)?)?;
    let base = parent(spec_path);
    for o in &spec.objects {
        let mesh = join(&base, &o.mesh);
        if !mesh.exists() {
            return Err(CliError::Config(format!("object '{}': mesh not found: {}", o.id, mesh.display())));
        }
    }
    spec.field.validate()?;
    let objects = spec.load_objects(Some(&base))?;
    let grid = voxelize(&objects, &spec.field)?;
    save_grid(&grid, out_grid)?;
    write_json(out_gt, &spec.ground_truth())?;
    log::info!("wrote {} ({:?} cells) and {}", out_grid.display(), grid.dims(), out_gt.display());

    if let (Some(camera), Some(dir)) = (camera, masks_dir) {
        let cam = Camera::load(camera)?;
        create_dir(dir)?;
        let mut manifest = MaskManifest { masks: Vec::new() };
        for (mask, obj) in render_instance_masks(&objects, &cam)?.iter().zip(&spec.objects) {
            let file = PathBuf::from(format!("{}.pgm", mask.label));
            mask.save(dir.join(&file))?;
            let model = join(&base, &obj.mesh);
            let model = fs::canonicalize(&model).unwrap_or(model);
            manifest.masks.push(MaskEntry {
                label: mask.label.clone(),
                mask: file,
                model,
            });
        }
        manifest.save(dir.join("manifest.json"))?;
    }
    if let Some(path) = symmetries {
        let registry: BTreeMap<String, SymmetrySpec> = spec
            .objects
            .iter()
            .filter_map(|o| o.symmetry.clone().map(|s| (o.id.clone(), SymmetrySpec::Descriptor(s))))
            .collect();
        SymmetryRegistry::from_specs(&registry)?;
        write_json(path, &registry)?;
    }
    Ok(())
}

fn print_medians(report: &SceneEvalReport) {
    println!(
        "median_trans_mm={:.3} median_rot_deg={:.3}",
        report.median_trans_mm, report.median_rot_deg
    );
}

pub fn fit(config_path: &Path, overrides: &[String]) -> Result<(), CliError> {
    let mut cfg: PipelineConfig = load_with_overrides(config_path, overrides)?;
    cfg.resolve(&parent(config_path))?;
    let out = cfg.paths.output_dir.clone();
    create_dir(&out)?;

    let grid: DensityGrid = load_grid(&cfg.paths.grid)?;
    let cameras = load_cameras(&cfg.paths.camera)?;
    let view = match cfg.init.reference_view {
        Some(i) if i < cameras.len() => i,
        Some(i) => return Err(CliError::Config(format!("reference view {i} out of range ({} cameras)", cameras.len()))),
        None => select_reference_view(&cameras).expect("at least one camera"),
    };
    let camera = &cameras[view];
    let manifest = MaskManifest::load(&cfg.paths.masks)?;
    let mask_base = parent(&cfg.paths.masks);

    let depth = density_field::render_depth(&grid, camera, &cfg.render)?;
    depth.save(out.join("depth.bin"))?;

    let settings = RunSettings {
        model: cfg.model.clone(),
        init: cfg.init.clone(),
        fit: cfg.fit.clone(),
    };
    let mut results = Vec::new();
    let mut overlays = BTreeMap::new();
    for entry in &manifest.masks {
        let mask = InstanceMask::load(&entry.label, join(&mask_base, &entry.mask))?;
        let mesh = load_mesh(join(&mask_base, &entry.model))?;
        let input = ObjectInput {
            label: &entry.label,
            mesh: &mesh,
            mask: &mask,
        };
        let result = fit_one(&grid, camera, &depth, input, &settings, Variant::Full)?;
        if let Some(pose) = result.pose() {
            let model = settings.model.sample(&mesh)?;
            let pixels = overlay_pixels(&model, pose, camera);
            overlay_mask(&entry.label, &pixels, camera)?.save(out.join(format!("overlay_{}.pgm", entry.label)))?;
            overlays.insert(entry.label.clone(), pixels);
        }
        results.push(result);
    }
    write_json(&out.join("overlay.json"), &overlays)?;
    let file = ResultsFile {
        reference_view: view,
        objects: results,
    };
    write_json(&out.join("results.json"), &file)?;

    let fitted = file.objects.iter().filter(|r| r.status == ObjectStatus::Ok).count();
    log::info!("fitted {fitted} of {} objects; results in {}", file.objects.len(), out.display());
    if cfg.eval.enabled {
        if let Some(gt_path) = &cfg.paths.ground_truth {
            let registry = match &cfg.paths.symmetries {
                Some(p) => SymmetryRegistry::load(p)?,
                None => SymmetryRegistry::default(),
            };
            let report = aggregate_scene(&estimates(&file.objects), &load_poses(gt_path)?, &registry)?;
            report.save(out.join("report.csv"), Some(&out.join("report.json")))?;
            print_medians(&report);
        }
    }
    if fitted == 0 {
        return Err(CliError::Failed("no object could be initialized".into()));
    }
    Ok(())
}

pub fn eval(
    results: &Path,
    ground_truth: &Path,
    symmetries: &Path,
    report_path: Option<&Path>,
    json_path: Option<&Path>,
) -> Result<(), CliError> {
    let est = load_estimates(results)?;
    let gt = load_poses(ground_truth)?;
    let registry = SymmetryRegistry::load(symmetries)?;
    let report = aggregate_scene(&est, &gt, &registry)?;
    let csv = report_path.map(Path::to_path_buf).unwrap_or_else(|| parent(results).join("report.csv"));
    report.save(&csv, json_path)?;
    print_medians(&report);
    Ok(())
}

pub fn ablate(
    config_path: &Path,
    variant: &str,
    overrides: &[String],
    out: Option<&Path>,
    json: Option<&Path>,
) -> Result<(), CliError> {
    let variant = Variant::parse(variant).ok_or_else(|| CliError::Config(format!("unknown variant '{variant}'")))?;
    let cfg: AblateConfig = load_with_overrides(config_path, overrides)?;
    cfg.benchmark.run.fit.validate()?;
    if cfg.seeds.is_empty() {
        return Err(CliError::Config("at least one seed is required".into()));
    }
    let rows: Vec<RunRecord> = match &cfg.noise_levels {
        Some(levels) => {
            if variant != Variant::Full {
                return Err(CliError::Config("noise sweeps run the full variant only".into()));
            }
            let table = degradation_sweep(&cfg.benchmark, levels, &cfg.seeds)?;
            for l in &table.levels {
                log::info!(
                    "noise {}: median {:?} mm / {:?} deg ({} failed)",
                    l.noise_std,
                    l.median_trans_mm,
                    l.median_rot_deg,
                    l.failed
                );
            }
            table.rows
        }
        None => run_benchmark(&cfg.benchmark, &cfg.seeds, &[variant])?,
    };
    let csv = runs_to_csv(&rows);
    match out {
        Some(p) => fs::write(p, &csv).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
        None => print!("{csv}"),
    }
    if let Some(p) = json {
        write_json(p, &rows)?;
    }
    Ok(())
}

pub fn render_depth(grid: &Path, camera: &Path, out: &Path, pgm: Option<&Path>) -> Result<(), CliError> {
    let grid = load_grid(grid)?;
    let camera = Camera::load(camera)?;
    let depth = density_field::render_depth(&grid, &camera, &RenderOptions::default())?;
    depth.save(out)?;
    if let Some(p) = pgm {
        depth.save_pgm16(p)?;
    }
    log::info!("{} of {} pixels have depth", depth.valid_count(), depth.width * depth.height);
    Ok(())
}

#[derive(Serialize)]
struct GridInfo {
    dims: [usize; 3],
    bbox_min: [f64; 3],
    bbox_max: [f64; 3],
    cell_size: [f64; 3],
    sigma_min: f64,
    sigma_max: f64,
    sigma_mean: f64,
    /// Cells whose occupancy at beta = 0.01 exceeds one half.
    occupied_cells: usize,
}

pub fn grid_info(path: &Path, json: bool) -> Result<(), CliError> {
    let grid = load_grid(path)?;
    let sigma = grid.sigma();
    let threshold = (0.5f64.ln().abs() / 0.01).ln();
    let info = GridInfo {
        dims: grid.dims(),
        bbox_min: grid.bbox_min().into(),
        bbox_max: grid.bbox_max().into(),
        cell_size: grid.cell_size().into(),
        sigma_min: sigma.iter().fold(f64::INFINITY, |m, &s| m.min(s as f64)),
        sigma_max: sigma.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s as f64)),
        sigma_mean: sigma.iter().map(|&s| s as f64).sum::<f64>() / sigma.len() as f64,
        occupied_cells: sigma.iter().filter(|&&s| s as f64 > threshold).count(),
    };
    if json {
        println!("{}", serde_json::to_string_pretty(&info).map_err(|e| CliError::Failed(e.to_string()))?);
    } else {
        println!("dims={}x{}x{}", info.dims[0], info.dims[1], info.dims[2]);
        println!("bbox_min={:?}", info.bbox_min);
        println!("bbox_max={:?}", info.bbox_max);
        println!("cell_size={:?}", info.cell_size);
        println!("sigma_min={} sigma_max={} sigma_mean={:.6}", info.sigma_min, info.sigma_max, info.sigma_mean);
        println!("occupied_cells={}", info.occupied_cells);
    }
    Ok(())
}
