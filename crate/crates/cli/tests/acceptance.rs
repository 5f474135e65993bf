//! Acceptance suite. Runs every criterion at full size and prints one
//! PASS/FAIL line each; exits non-zero if any fails.
//!
//! Pass criterion numbers to run a subset: `cargo test --test acceptance -- 3 5`.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use common::*;
use fitngp::density_field::{
    decode_grid, encode_grid, load_grid, save_grid, DensityGrid, DepthMap, OccupancyField,
};
use fitngp::evaluation::benchmark::{
    degradation_sweep, run_benchmark, variant_medians, BenchmarkConfig, RunRecord,
};
use fitngp::evaluation::{relative_pose_error, SceneEvalReport, SymmetryGroup, SymmetryRegistry};
use fitngp::fitting::{fit_object, refine_hypothesis, FitConfig, Objective};
use fitngp::geometry::{geodesic_distance, rotation_grid, Pose, Rotation, TangentDelta, Vec3};
use fitngp::init::{InstanceMask, MaskManifest};
use fitngp::object_model::primitives::cube;
use fitngp::object_model::{band_points, sample_surface, BandPoints};
use fitngp::pipeline::{ObjectResult, ObjectStatus, Variant};
use fitngp::scene_synth::{voxelize, FieldSpec, PlacedMesh};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

const SEEDS: [u64; 8] = [0, 1, 2, 3, 4, 5, 6, 7];

/// Covering radius of `rotation_grid(216, 0)` over 10^5 seeded random
/// rotations, recorded to catch regressions in the sampler.
const COVERING_RADIUS_216: f64 = 0.6593509098049433;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm() > 0.1 && v.norm() <= 1.0 {
            return v.normalize();
        }
    }
}

fn random_pose(rng: &mut ChaCha8Rng, spread: f64) -> Pose {
    let t = Vec3::new(
        rng.random_range(-spread..spread),
        rng.random_range(-spread..spread),
        rng.random_range(-spread..spread),
    );
    Pose::new(Rotation::random(rng), t)
}

fn near_cell_face(grid: &DensityGrid, x: &Vec3, margin: f64) -> bool {
    let cell = grid.cell_size();
    (0..3).any(|a| {
        let u = (x[a] - grid.bbox_min()[a]) / cell[a] - 0.5;
        (u - u.round()).abs() * cell[a] < margin
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "n/a".into())
}

// Criteria 1 and 2 share one benchmark run.
fn benchmark_rows() -> &'static Vec<RunRecord> {
    static ROWS: OnceLock<(Vec<RunRecord>, f64)> = OnceLock::new();
    &ROWS
        .get_or_init(|| {
            let start = Instant::now();
            let rows = run_benchmark(&BenchmarkConfig::default(), &SEEDS, &[Variant::Full, Variant::NoNormalBand])
                .expect("benchmark runs");
            (rows, start.elapsed().as_secs_f64())
        })
        .0
}

fn failures(rows: &[RunRecord], variant: Variant) -> usize {
    rows.iter().filter(|r| r.variant == variant && r.failure.is_some()).count()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let rows = benchmark_rows();
    let full_secs: f64 = start.elapsed().as_secs_f64();
    let (t, r) = variant_medians(rows, Variant::Full);
    let failed = failures(rows, Variant::Full);
    let per_seed: Vec<String> = rows
        .iter()
        .filter(|r| r.variant == Variant::Full)
        .map(|r| format!("{}:{}/{}", r.seed, fmt_opt(r.median_trans_mm), fmt_opt(r.median_rot_deg)))
        .collect();
    let pass = failed == 0 && t.is_some_and(|t| t <= 2.0) && r.is_some_and(|r| r <= 4.0);
    outcome(
        pass,
        format!(
            "median {} mm / {} deg over {} seeds (limit 2 mm / 4 deg), {failed} failed runs; per seed [{}]; benchmark with ablation took {full_secs:.0} s",
            fmt_opt(t),
            fmt_opt(r),
            SEEDS.len(),
            per_seed.join(" ")
        ),
    )
}

fn criterion_2() -> Outcome {
    let rows = benchmark_rows();
    let (full, _) = variant_medians(rows, Variant::Full);
    let (ablated, ablated_rot) = variant_medians(rows, Variant::NoNormalBand);
    let failed = failures(rows, Variant::NoNormalBand);
    let ratio = match (full, ablated) {
        (Some(f), Some(a)) if f > 0.0 => Some(a / f),
        _ => None,
    };
    outcome(
        failed == 0 && ratio.is_some_and(|q| q >= 5.0),
        format!(
            "no_normal_band median {} mm / {} deg vs full {} mm, ratio {} (need >= 5)",
            fmt_opt(ablated),
            fmt_opt(ablated_rot),
            fmt_opt(full),
            fmt_opt(ratio)
        ),
    )
}

fn smooth_grid() -> DensityGrid {
    DensityGrid::from_fn([32, 32, 32], Vec3::repeat(-0.06), Vec3::repeat(0.06), |p| {
        6.0 * (40.0 * p.x).sin() * (30.0 * p.y).cos() + 4.0 * (50.0 * p.z + 0.3).sin() - 2.0
    })
    .unwrap()
}

fn criterion_3() -> Outcome {
    let grid = smooth_grid();
    let model = sample_surface(&cube(0.03), 200, 3).unwrap();
    let band = band_points(&model, 0.0, 5e-3, 1, 1).unwrap();
    let beta = FitConfig::default().beta;
    let objective = Objective::new(&band, &grid, beta).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-6;
    let mut worst_fitness: f64 = 0.0;
    let mut poses = 0;
    while poses < 100 {
        let pose = random_pose(&mut rng, 0.01);
        let points: Vec<Vec3> = band.surface_band.iter().chain(&band.normal_band).map(|x| pose.apply(x)).collect();
        if points.iter().any(|x| near_cell_face(&grid, x, 1e-5)) {
            continue;
        }
        poses += 1;
        let (_, g) = objective.value_and_gradient(&pose);
        let analytic = [g.omega.x, g.omega.y, g.omega.z, g.v.x, g.v.y, g.v.z];
        let mut numeric = [0.0; 6];
        for (k, out) in numeric.iter_mut().enumerate() {
            let mut e = [0.0; 6];
            e[k] = h;
            let at = |s: f64| {
                TangentDelta::new(Vec3::new(e[0], e[1], e[2]) * s, Vec3::new(e[3], e[4], e[5]) * s)
                    .retract(&pose)
                    .unwrap()
            };
            *out = (objective.value(&at(1.0)) - objective.value(&at(-1.0))) / (2.0 * h);
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
        worst_fitness = worst_fitness.max(diff / norm);
    }

    let mut worst_occupancy: f64 = 0.0;
    let mut points = 0;
    let hx = 1e-7;
    for beta in [0.01, 1.0] {
        let field = OccupancyField::new(&grid, beta).unwrap();
        let mut tested = 0;
        while tested < 100 {
            let x = Vec3::new(rng.random_range(-0.055..0.055), rng.random_range(-0.055..0.055), rng.random_range(-0.055..0.055));
            if near_cell_face(&grid, &x, 1e-5) {
                continue;
            }
            tested += 1;
            let (_, g) = field.value_with_gradient(&x);
            // Differentiate 1 - s = exp(-beta e^sigma), which keeps full
            // relative precision where s rounds to 1.
            let empty = |y: Vec3| (-beta * grid.sample_sigma(&y).exp()).exp();
            let numeric = Vec3::from_fn(|a, _| {
                let mut d = Vec3::zeros();
                d[a] = hx;
                -(empty(x + d) - empty(x - d)) / (2.0 * hx)
            });
            if numeric.norm() > 1e-250 {
                worst_occupancy = worst_occupancy.max((g - numeric).norm() / numeric.norm());
            }
        }
        points += tested;
    }
    outcome(
        worst_fitness < 1e-3 && worst_occupancy < 1e-4,
        format!(
            "fitness gradient worst relative error {worst_fitness:.2e} over {poses} poses (limit 1e-3); occupancy gradient {worst_occupancy:.2e} over {points} interior points (limit 1e-4)"
        ),
    )
}

const VOXEL: f64 = 0.4 / 256.0;

fn cube_scene(pose: Pose) -> DensityGrid {
    let h = 24.0 * VOXEL;
    let field = FieldSpec {
        dims: [48; 3],
        bbox_min: [-h; 3],
        bbox_max: [h; 3],
        sharpness: VOXEL,
        sigma_in: 8.0,
        sigma_out: -8.0,
        surface_offset: 2.0 * VOXEL,
        noise_std: 0.0,
        noise_correlation: 3,
        seed: 0,
    };
    let placed = PlacedMesh {
        id: "cube".into(),
        mesh: cube(0.03),
        pose,
    };
    voxelize(&[placed], &field).unwrap()
}

fn cube_error(est: &Pose, truth: &Pose) -> (f64, f64) {
    let rot = SymmetryGroup::cube()
        .rotations
        .iter()
        .map(|s| geodesic_distance(&est.rotation.compose(s), &truth.rotation))
        .fold(f64::INFINITY, f64::min);
    ((est.translation - truth.translation).norm() * 1e3, rot.to_degrees())
}

fn criterion_4() -> Outcome {
    let gt = Pose::new(
        Rotation::exp(&Vec3::new(0.1, -0.2, 0.4)).unwrap(),
        Vec3::new(0.0012, -0.0007, 0.0003),
    );
    let grid = cube_scene(gt);
    let model = sample_surface(&cube(0.03), 1280, 0).unwrap();
    let band: BandPoints = band_points(&model, 0.0, 5e-3, 1, 1).unwrap();
    let cfg = FitConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut recovered = 0;
    let mut worst = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let rotation = Rotation::exp(&(unit(&mut rng) * 10f64.to_radians())).unwrap().compose(&gt.rotation);
        let start = Pose::new(rotation, gt.translation + unit(&mut rng) * 5e-3);
        let r = refine_hypothesis(&start, &band, &grid, &cfg).unwrap();
        let (t, a) = cube_error(&r.pose, &gt);
        worst = (worst.0.max(t), worst.1.max(a));
        if t <= 1.0 && a <= 1.0 {
            recovered += 1;
        }
    }
    outcome(
        recovered >= 95,
        format!(
            "{recovered}/100 perturbations of 5 mm / 10 deg recovered within 1 mm / 1 deg (need 95); worst {:.3} mm / {:.3} deg",
            worst.0, worst.1
        ),
    )
}

fn covering_radius() -> f64 {
    let grid = rotation_grid(216, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    (0..100_000)
        .map(|_| {
            let r = Rotation::random(&mut rng);
            grid.iter().map(|g| geodesic_distance(g, &r)).fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

fn criterion_5() -> Outcome {
    let radius = covering_radius();
    let matches = (radius - COVERING_RADIUS_216).abs() < 1e-12;
    outcome(
        radius <= 0.75 && matches,
        format!(
            "covering radius {radius:?} rad ({:.2} deg), limit 0.75; recorded {COVERING_RADIUS_216:.6}{}",
            radius.to_degrees(),
            if matches { "" } else { " (MISMATCH)" }
        ),
    )
}

fn criterion_6() -> Outcome {
    let finite = [
        SymmetryGroup::identity(),
        SymmetryGroup::cube(),
        SymmetryGroup::parse("D6 about z").unwrap(),
        SymmetryGroup::parse("C6 about z").unwrap(),
        SymmetryGroup::parse("C4 about x").unwrap(),
        SymmetryGroup::parse("D2 about y").unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut compared = 0;
    let mut mismatches = 0;
    for _ in 0..40 {
        let (est_a, est_b, gt_a, gt_b) = (
            random_pose(&mut rng, 0.1),
            random_pose(&mut rng, 0.1),
            random_pose(&mut rng, 0.1),
            random_pose(&mut rng, 0.1),
        );
        let ga = &finite[rng.random_range(0..finite.len())];
        let gb = &finite[rng.random_range(0..finite.len())];
        let base = relative_pose_error(&est_a, &est_b, &gt_a, &gt_b, ga, gb);
        for sa in &ga.rotations {
            for sb in &gb.rotations {
                let ea = est_a.compose(&Pose::new(*sa, Vec3::zeros()));
                let eb = est_b.compose(&Pose::new(*sb, Vec3::zeros()));
                let e = relative_pose_error(&ea, &eb, &gt_a, &gt_b, ga, gb);
                compared += 1;
                if e.trans_mm.to_bits() != base.trans_mm.to_bits() || e.rot_deg.to_bits() != base.rot_deg.to_bits() {
                    mismatches += 1;
                }
            }
        }
    }

    let none = SymmetryGroup::identity();
    let mut worst_rot: f64 = 0.0;
    let mut worst_trans_excess: f64 = f64::NEG_INFINITY;
    for descriptor in ["C∞ about z", "D∞ about z"] {
        let bolt = SymmetryGroup::parse(descriptor).unwrap();
        for _ in 0..100 {
            let (est_a, est_b, gt_a, gt_b) = (
                random_pose(&mut rng, 0.1),
                random_pose(&mut rng, 0.1),
                random_pose(&mut rng, 0.1),
                random_pose(&mut rng, 0.1),
            );
            let base = relative_pose_error(&est_a, &est_b, &gt_a, &gt_b, &none, &bolt);
            let spin = Rotation::exp(&(Vec3::z() * rng.random_range(0.0..std::f64::consts::TAU))).unwrap();
            let eb = est_b.compose(&Pose::new(spin, Vec3::zeros()));
            let e = relative_pose_error(&est_a, &eb, &gt_a, &gt_b, &none, &bolt);
            worst_rot = worst_rot.max((e.rot_deg - base.rot_deg).abs());
            // Half a step turns the offset seen from b by 0.5 deg; half of
            // that enters the mean over both frames.
            let lever_mm = (gt_b.translation - gt_a.translation).norm() * 1e3;
            let bound = lever_mm * 0.5f64.to_radians();
            worst_trans_excess = worst_trans_excess.max((e.trans_mm - base.trans_mm).abs() - bound);
        }
    }
    outcome(
        mismatches == 0 && worst_rot <= 0.5 + 1e-9 && worst_trans_excess <= 1e-9,
        format!(
            "finite groups: {mismatches} of {compared} compositions changed an error bit; K=360 groups: worst rotation change {worst_rot:.4} deg (limit 0.5), translation within the half-step bound: {}",
            worst_trans_excess <= 1e-9
        ),
    )
}

#[derive(Deserialize)]
struct ResultsFile {
    reference_view: usize,
    objects: Vec<ObjectResult>,
}

fn criterion_7() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let fx = Fixture::new(tmp.path(), 1.0, 7);
    let mut notes = Vec::new();
    let mut pass = true;

    let first = fx.gen_scene();
    let grid_a = fs::read(fx.path("grid.bin")).unwrap();
    let masks_a = fs::read(fx.path("masks/bracket.pgm")).unwrap();
    let second = fx.gen_scene();
    let same_scene = code(&first) == 0
        && code(&second) == 0
        && grid_a == fs::read(fx.path("grid.bin")).unwrap()
        && masks_a == fs::read(fx.path("masks/bracket.pgm")).unwrap();
    pass &= same_scene;
    notes.push(format!("gen-scene byte-identical: {same_scene}"));

    let cfg = fx.write_config("serial_a");
    let runs = [
        ("serial_a", "1"),
        ("serial_b", "1"),
        ("parallel", "3"),
    ];
    let mut results = Vec::new();
    for (dir, threads) in runs {
        let out = run([
            "--threads",
            threads,
            "fit",
            p(&cfg),
            &format!("paths.output_dir={dir}"),
            "eval.enabled=false",
        ]);
        pass &= code(&out) == 0;
        let bytes = fs::read(fx.path(dir).join("results.json")).unwrap_or_default();
        results.push(bytes);
    }
    let serial_same = !results[0].is_empty() && results[0] == results[1];
    pass &= serial_same;
    notes.push(format!("serial fit results (poses and traces) byte-identical: {serial_same}"));
    let parse = |b: &[u8]| serde_json::from_slice::<ResultsFile>(b).ok();
    let poses = |f: &ResultsFile| f.objects.iter().map(|o| o.pose().map(|p| p.to_array())).collect::<Vec<_>>();
    let parallel_same = match (parse(&results[0]), parse(&results[2])) {
        (Some(a), Some(b)) => poses(&a) == poses(&b) && a.reference_view == b.reference_view,
        _ => false,
    };
    pass &= parallel_same;
    notes.push(format!("parallel fit selects identical poses: {parallel_same}"));

    // Library level: a 1-thread pool twice and a 4-thread pool.
    let gt = Pose::new(Rotation::exp(&Vec3::new(0.0, 0.0, 0.7)).unwrap(), Vec3::zeros());
    let grid = cube_scene(gt);
    let model = sample_surface(&cube(0.03), 400, 0).unwrap();
    let band = band_points(&model, 0.0, 5e-3, 1, 1).unwrap();
    let hyps: Vec<Pose> = rotation_grid(32, 0)
        .unwrap()
        .into_iter()
        .map(|r| Pose::new(r, Vec3::new(0.002, -0.001, 0.0)))
        .collect();
    let cfg = FitConfig {
        iterations: 100,
        ..FitConfig::default()
    };
    let in_pool = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| fit_object("cube", &hyps, &band, &grid, &cfg).unwrap())
    };
    let (a, b, c) = (in_pool(1), in_pool(1), in_pool(4));
    let traces_same = a == b && a.trace.iter().zip(&b.trace).all(|(x, y)| x.to_bits() == y.to_bits());
    let pool_same = a.pose.to_array() == c.pose.to_array() && a.hypothesis_index == c.hypothesis_index;
    pass &= traces_same && pool_same;
    notes.push(format!("serial traces bit-identical: {traces_same}; 4-thread pool same pose: {pool_same}"));
    outcome(pass, notes.join("; "))
}

fn criterion_8() -> Outcome {
    let mut checks: Vec<(&str, bool)> = Vec::new();

    // Grid files: random content, save, load, save again.
    let tmp = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let dims = [7, 5, 3];
    let sigma: Vec<f32> = (0..105).map(|_| rng.random_range(-15.0f32..15.0)).collect();
    let grid = DensityGrid::new(dims, Vec3::new(-0.1, -0.2, 0.05), Vec3::new(0.3, 0.1, 0.123), sigma).unwrap();
    let path = tmp.path().join("g.bin");
    save_grid(&grid, &path).unwrap();
    let back = load_grid(&path).unwrap();
    let bit_exact = back == grid
        && back.sigma().iter().zip(grid.sigma()).all(|(a, b)| a.to_bits() == b.to_bits())
        && encode_grid(&back) == fs::read(&path).unwrap();
    checks.push(("grid save/load bit-exact", bit_exact));

    // Every CLI output through the tool's readers.
    let fx = Fixture::new(&tmp.path().join("scene"), 0.5, 8);
    let ok = code(&fx.gen_scene()) == 0;
    checks.push(("gen-scene ran", ok));
    let grid_bytes = fs::read(fx.path("grid.bin")).unwrap_or_default();
    checks.push((
        "gen-scene grid re-encodes identically",
        decode_grid(&grid_bytes).map(|g| encode_grid(&g) == grid_bytes).unwrap_or(false),
    ));
    let gt: Option<BTreeMap<String, Pose>> = serde_json::from_str(&fs::read_to_string(fx.path("gt.json")).unwrap_or_default()).ok();
    checks.push((
        "ground truth re-serializes identically",
        gt.as_ref().is_some_and(|gt| {
            let again: BTreeMap<String, Pose> = serde_json::from_str(&serde_json::to_string(gt).unwrap()).unwrap();
            &again == gt
        }),
    ));
    let manifest = MaskManifest::load(fx.path("masks/manifest.json"));
    checks.push((
        "mask manifest and PGMs",
        manifest.as_ref().is_ok_and(|m| {
            m.masks.iter().all(|e| {
                let bytes = fs::read(fx.path("masks").join(&e.mask)).unwrap_or_default();
                InstanceMask::from_pgm(&e.label, &bytes).is_ok_and(|mask| mask.to_pgm() == bytes)
            })
        }),
    ));
    checks.push(("symmetry registry", SymmetryRegistry::load(fx.path("symmetries.json")).is_ok()));

    let cfg = fx.write_config("out");
    let fit_ok = code(&run(["fit", p(&cfg), "fit.iterations=60"])) == 0;
    checks.push(("fit ran", fit_ok));
    let out = fx.path("out");
    let results: Option<ResultsFile> = fs::read(out.join("results.json")).ok().and_then(|b| serde_json::from_slice(&b).ok());
    checks.push((
        "results.json",
        results.as_ref().is_some_and(|r| r.objects.iter().all(|o| o.status == ObjectStatus::Ok)),
    ));
    let depth_bytes = fs::read(out.join("depth.bin")).unwrap_or_default();
    checks.push((
        "depth map",
        DepthMap::from_bytes(&depth_bytes).is_ok_and(|d| d.to_bytes() == depth_bytes),
    ));
    let overlay: Option<BTreeMap<String, Vec<[usize; 2]>>> =
        fs::read(out.join("overlay.json")).ok().and_then(|b| serde_json::from_slice(&b).ok());
    checks.push((
        "overlay points and PGM",
        overlay.is_some_and(|o| {
            o.iter().all(|(label, px)| {
                InstanceMask::load(label, out.join(format!("overlay_{label}.pgm"))).is_ok_and(|m| m.count() == px.len())
            })
        }),
    ));
    let csv = fs::read_to_string(out.join("report.csv")).unwrap_or_default();
    let json: Option<SceneEvalReport> = fs::read(out.join("report.json")).ok().and_then(|b| serde_json::from_slice(&b).ok());
    checks.push((
        "eval report CSV and JSON agree",
        json.as_ref().is_some_and(|j| SceneEvalReport::from_csv(&csv).is_ok_and(|rows| rows == j.pairs)),
    ));

    let depth_out = fx.path("rendered.bin");
    let rendered = code(&run(["render-depth", p(&fx.path("grid.bin")), p(&fx.camera), p(&depth_out)])) == 0;
    checks.push(("render-depth output", rendered && DepthMap::load(&depth_out).is_ok()));
    let info = run(["grid-info", p(&fx.path("grid.bin")), "--json"]);
    checks.push((
        "grid-info JSON",
        serde_json::from_str::<serde_json::Value>(&stdout(&info)).is_ok_and(|v| v["dims"] == serde_json::json!([48, 48, 48])),
    ));

    let ablate_cfg = fx.path("ablate.json");
    fs::write(
        &ablate_cfg,
        r#"{"seeds": [1], "benchmark": {"dims": 96, "extent": 0.3, "image_size": 64, "focal": 90.0, "noise_std": 0.5,
            "run": {"model": {"n_s": 64}, "fit": {"n_hypotheses": 4, "iterations": 5}}}}"#,
    )
    .unwrap();
    let ablate_ok = code(&run([
        "ablate",
        p(&ablate_cfg),
        "--variant",
        "full",
        "--out",
        p(&fx.path("runs.csv")),
        "--json",
        p(&fx.path("runs.json")),
    ])) == 0;
    let rows: Option<Vec<RunRecord>> = fs::read(fx.path("runs.json")).ok().and_then(|b| serde_json::from_slice(&b).ok());
    let csv_rows = fs::read_to_string(fx.path("runs.csv")).unwrap_or_default();
    checks.push((
        "ablate CSV and JSON",
        ablate_ok
            && rows.is_some_and(|r| r.len() == 1)
            && csv_rows.lines().count() == 2
            && csv_rows.starts_with("variant,seed,noise_std,median_trans_mm,median_rot_deg,status"),
    ));

    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    outcome(
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} round trips ok (grid bit-exact; all CLI outputs re-parsed)", checks.len())
        } else {
            format!("failed: {}", failed.join(", "))
        },
    )
}

fn criterion_9() -> Outcome {
    let levels = [0.0, 0.5, 1.0, 2.0, 4.0];
    let table = degradation_sweep(&BenchmarkConfig::default(), &levels, &SEEDS).expect("sweep runs");
    let trans: Vec<Option<f64>> = table.levels.iter().map(|l| l.median_trans_mm).collect();
    let rot: Vec<Option<f64>> = table.levels.iter().map(|l| l.median_rot_deg).collect();
    let monotone = |v: &[Option<f64>]| v.iter().all(Option::is_some) && v.windows(2).all(|w| w[0] <= w[1]);
    let failed: usize = table.levels.iter().map(|l| l.failed).sum();
    let cells: Vec<String> = table
        .levels
        .iter()
        .map(|l| format!("{}: {}/{}", l.noise_std, fmt_opt(l.median_trans_mm), fmt_opt(l.median_rot_deg)))
        .collect();
    outcome(
        monotone(&trans) && monotone(&rot),
        format!(
            "median mm/deg by noise_std [{}]; translation non-decreasing: {}, rotation non-decreasing: {}; {failed} failed cells",
            cells.join(", "),
            monotone(&trans),
            monotone(&rot)
        ),
    )
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let selected: Vec<u32> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (3, "gradient correctness", criterion_3),
        (5, "rotation grid coverage", criterion_5),
        (6, "symmetry invariance", criterion_6),
        (8, "format round trips", criterion_8),
        (7, "determinism", criterion_7),
        (4, "convergence basin", criterion_4),
        (1, "oracle end-to-end accuracy", criterion_1),
        (2, "normal-band ablation", criterion_2),
        (9, "degradation trend", criterion_9),
    ];
    let mut summary = BTreeMap::new();
    for (n, name, run_criterion) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run_criterion)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let line = format!(
            "criterion {n} ({name}): {} - {} [{:.1} s]",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed().as_secs_f64()
        );
        println!("{line}");
        summary.insert(n, (result.pass, name));
    }
    println!("\nacceptance summary:");
    for (n, (pass, name)) in &summary {
        println!("  {} criterion {n}: {name}", if *pass { "PASS" } else { "FAIL" });
    }
    if summary.values().all(|(pass, _)| *pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
