#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fitngp::density_field::Camera;
use fitngp::geometry::{Pose, Rotation, Vec3};
use fitngp::object_model::primitives::{cube, l_bracket};
use serde_json::{json, Value};

pub fn run<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_fitngp"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn yaw(angle: f64, t: [f64; 3]) -> Pose {
    Pose::new(Rotation::exp(&Vec3::new(0.0, 0.0, angle)).unwrap(), Vec3::from(t))
}

/// Top-down camera 0.3 m above the origin.
pub fn camera() -> Camera {
    Camera {
        fx: 150.0,
        fy: 150.0,
        cx: 31.5,
        cy: 31.5,
        width: 64,
        height: 64,
        camera_to_world: Pose::new(
            Rotation::exp(&Vec3::new(std::f64::consts::PI, 0.0, 0.0)).unwrap(),
            Vec3::new(0.0, 0.0, 0.3),
        ),
    }
}

/// Small two-part scene: a cube and an L bracket side by side.
pub struct Fixture {
    pub dir: PathBuf,
    pub spec: PathBuf,
    pub camera: PathBuf,
    pub cube_pose: Pose,
    pub bracket_pose: Pose,
}

impl Fixture {
    pub fn new(dir: &Path, noise_std: f64, seed: u64) -> Fixture {
        fs::create_dir_all(dir).unwrap();
        cube(0.03).save_obj(dir.join("cube.obj")).unwrap();
        l_bracket(0.03, 0.02, 0.004, 0.015).save_obj(dir.join("bracket.obj")).unwrap();
        let cube_pose = yaw(0.3, [-0.02, 0.004, 0.0]);
        let bracket_pose = yaw(-0.7, [0.025, -0.01, -0.005]);
        let spec = json!({
            "objects": [
                {"id": "cube", "mesh": "cube.obj", "pose": cube_pose, "symmetry": "cube"},
                {"id": "bracket", "mesh": "bracket.obj", "pose": bracket_pose, "symmetry": "none"}
            ],
            "dims": [48, 48, 48],
            "bbox_min": [-0.06, -0.06, -0.06],
            "bbox_max": [0.06, 0.06, 0.06],
            "sharpness": 0.0025,
            "surface_offset": 0.005,
            "noise_std": noise_std,
            "seed": seed
        });
        let spec_path = dir.join("scene.json");
        fs::write(&spec_path, serde_json::to_string_pretty(&spec).unwrap()).unwrap();
        let camera_path = dir.join("camera.json");
        camera().save(&camera_path).unwrap();
        Fixture {
            dir: dir.to_path_buf(),
            spec: spec_path,
            camera: camera_path,
            cube_pose,
            bracket_pose,
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Runs gen-scene with masks and symmetries into the fixture directory.
    pub fn gen_scene(&self) -> Output {
        run([
            "gen-scene",
            p(&self.spec),
            p(&self.path("grid.bin")),
            p(&self.path("gt.json")),
            "--camera",
            p(&self.camera),
            "--masks-dir",
            p(&self.path("masks")),
            "--symmetries",
            p(&self.path("symmetries.json")),
        ])
    }

    /// A fast pipeline config over the generated scene.
    pub fn write_config(&self, output_dir: &str) -> PathBuf {
        let cfg = json!({
            "paths": {
                "grid": "grid.bin",
                "camera": "camera.json",
                "masks": "masks/manifest.json",
                "symmetries": "symmetries.json",
                "ground_truth": "gt.json",
                "output_dir": output_dir
            },
            "model": {"n_s": 300},
            "fit": {"n_hypotheses": 24, "iterations": 120},
            "eval": {"enabled": true}
        });
        let path = self.path("config.json");
        fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
        path
    }
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}
