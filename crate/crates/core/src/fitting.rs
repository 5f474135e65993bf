//! Model-to-field fitness, its analytic pose gradient, and multi-hypothesis
//! refinement with Adam on rotation and translation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density_field::{DensityGrid, OccupancyField};
use crate::error::{Error, Result};
use crate::geometry::{Pose, TangentDelta, Vec3};
use crate::object_model::BandPoints;

/// Iterations between progress log lines in [`fit_object`].
pub const LOG_INTERVAL: usize = 50;

/// Window over which the trace must be flat for a result to count as converged.
const CONVERGENCE_WINDOW: usize = 10;
const CONVERGENCE_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub beta: f64,
    pub iterations: usize,
    pub lr_rot: f64,
    pub lr_trans: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub n_hypotheses: usize,
    /// Drop the free-space term of the fitness (ablation).
    pub use_normal_band: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            beta: 0.01,
            iterations: 200,
            lr_rot: 2.5e-2,
            lr_trans: 1.0e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            n_hypotheses: 216,
            use_normal_band: true,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("beta", self.beta),
            ("lr_rot", self.lr_rot),
            ("lr_trans", self.lr_trans),
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
            ("adam_eps", self.adam_eps),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::invalid(format!("fit.{name} must be positive, got {value}")));
            }
        }
        if self.adam_beta1 >= 1.0 || self.adam_beta2 >= 1.0 {
            return Err(Error::invalid("Adam decay rates must be below 1"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("fit.iterations must be at least 1"));
        }
        if self.n_hypotheses == 0 {
            return Err(Error::invalid("fit.n_hypotheses must be at least 1"));
        }
        Ok(())
    }
}

/// The fitness as a function of pose: band points, field, and which terms count.
#[derive(Clone, Copy, Debug)]
pub struct Objective<'a> {
    field: OccupancyField<'a>,
    surface: &'a [Vec3],
    normal: &'a [Vec3],
}

impl<'a> Objective<'a> {
    /// Both bands must be non-empty.
    pub fn new(band: &'a BandPoints, grid: &'a DensityGrid, beta: f64) -> Result<Self> {
        if band.normal_band.is_empty() {
            return Err(Error::invalid("normal band is empty"));
        }
        Self::with_terms(band, grid, beta, true)
    }

    /// With `use_normal_band = false` only the surface term is kept.
    pub fn with_terms(band: &'a BandPoints, grid: &'a DensityGrid, beta: f64, use_normal_band: bool) -> Result<Self> {
        if band.surface_band.is_empty() {
            return Err(Error::invalid("surface band is empty"));
        }
        let normal: &[Vec3] = if use_normal_band { &band.normal_band } else { &[] };
        if use_normal_band && normal.is_empty() {
            return Err(Error::invalid("normal band is empty"));
        }
        Ok(Objective {
            field: OccupancyField::new(grid, beta)?,
            surface: &band.surface_band,
            normal,
        })
    }

    fn mean_occupancy(&self, points: &[Vec3], pose: &Pose) -> f64 {
        if points.is_empty() {
            return 0.0;
        }
        let r = pose.rotation.matrix();
        let sum: f64 = points.iter().map(|x| self.field.value(&(r * x + pose.translation))).sum();
        sum / points.len() as f64
    }

    pub fn value(&self, pose: &Pose) -> f64 {
        self.mean_occupancy(self.surface, pose) - self.mean_occupancy(self.normal, pose)
    }

    /// Mean occupancy and the mean of its tangent gradient over one band.
    fn mean_with_gradient(&self, points: &[Vec3], pose: &Pose) -> (f64, Vec3, Vec3) {
        if points.is_empty() {
            return (0.0, Vec3::zeros(), Vec3::zeros());
        }
        let r = pose.rotation.matrix();
        let mut s_sum = 0.0;
        let mut omega = Vec3::zeros();
        let mut v = Vec3::zeros();
        for x in points {
            let rx = r * x;
            let (s, g) = self.field.value_with_gradient(&(rx + pose.translation));
            s_sum += s;
            omega += rx.cross(&g);
            v += g;
        }
        let inv = 1.0 / points.len() as f64;
        (s_sum * inv, omega * inv, v * inv)
    }

    pub fn value_and_gradient(&self, pose: &Pose) -> (f64, TangentDelta) {
        let (fs, ws, vs) = self.mean_with_gradient(self.surface, pose);
        let (fn_, wn, vn) = self.mean_with_gradient(self.normal, pose);
        (fs - fn_, TangentDelta::new(ws - wn, vs - vn))
    }
}

pub fn fitness(pose: &Pose, band: &BandPoints, grid: &DensityGrid, beta: f64) -> Result<f64> {
    Ok(Objective::new(band, grid, beta)?.value(pose))
}

/// Gradient with respect to `omega` in `Exp(omega) R` and `v` in `p + v`.
pub fn fitness_gradient(pose: &Pose, band: &BandPoints, grid: &DensityGrid, beta: f64) -> Result<TangentDelta> {
    Ok(Objective::new(band, grid, beta)?.value_and_gradient(pose).1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub pose: Pose,
    pub fitness: f64,
    /// Fitness before the first step and after every step.
    pub trace: Vec<f64>,
    pub hypothesis_index: usize,
    pub converged: bool,
    pub diverged: bool,
}

/// Adam state for one hypothesis, kept in the moving local tangent frame.
#[derive(Clone, Debug)]
pub struct Refiner {
    pose: Pose,
    last_finite: Pose,
    m: [f64; 6],
    v: [f64; 6],
    trace: Vec<f64>,
    diverged: bool,
    index: usize,
}

impl Refiner {
    pub fn new(pose: Pose, index: usize) -> Self {
        Refiner {
            pose,
            last_finite: pose,
            m: [0.0; 6],
            v: [0.0; 6],
            trace: Vec::new(),
            diverged: false,
            index,
        }
    }

    pub fn pose(&self) -> &Pose {
        &self.pose
    }

    /// Most recently evaluated fitness (NaN before the first step).
    pub fn current_fitness(&self) -> f64 {
        self.trace.last().copied().unwrap_or(f64::NAN)
    }

    fn mark_diverged(&mut self) {
        self.diverged = true;
        self.pose = self.last_finite;
    }

    /// Runs up to `n` Adam steps, stopping early on divergence.
    pub fn advance(&mut self, objective: &Objective, cfg: &FitConfig, n: usize) {
        for _ in 0..n {
            if self.diverged {
                return;
            }
            let (f, grad) = objective.value_and_gradient(&self.pose);
            if !f.is_finite() || !grad.is_finite() {
                self.mark_diverged();
                return;
            }
            self.trace.push(f);
            self.last_finite = self.pose;

            // Ascent on f is descent on -f.
            let g = [
                -grad.omega.x,
                -grad.omega.y,
                -grad.omega.z,
                -grad.v.x,
                -grad.v.y,
                -grad.v.z,
            ];
            let t = self.trace.len() as i32;
            let c1 = 1.0 - cfg.adam_beta1.powi(t);
            let c2 = 1.0 - cfg.adam_beta2.powi(t);
            let mut delta = [0.0; 6];
            for k in 0..6 {
                self.m[k] = cfg.adam_beta1 * self.m[k] + (1.0 - cfg.adam_beta1) * g[k];
                self.v[k] = cfg.adam_beta2 * self.v[k] + (1.0 - cfg.adam_beta2) * g[k] * g[k];
                let lr = if k < 3 { cfg.lr_rot } else { cfg.lr_trans };
                delta[k] = -lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + cfg.adam_eps);
            }
            let update = TangentDelta::new(
                Vec3::new(delta[0], delta[1], delta[2]),
                Vec3::new(delta[3], delta[4], delta[5]),
            );
            match update.retract(&self.pose) {
                Ok(next) => self.pose = next,
                Err(_) => {
                    self.mark_diverged();
                    return;
                }
            }
        }
    }

    /// Result with a trace of `iterations + 1` entries. A diverged run keeps
    /// its last finite pose and is padded with that pose's fitness.
    pub fn finish(mut self, objective: &Objective, iterations: usize) -> FitResult {
        if !self.diverged {
            let f = objective.value(&self.pose);
            if f.is_finite() {
                self.trace.push(f);
            } else {
                self.mark_diverged();
            }
        }
        let last = self.current_fitness();
        self.trace.resize(iterations + 1, last);
        let n = self.trace.len();
        let converged = !self.diverged
            && n > CONVERGENCE_WINDOW
            && (self.trace[n - 1] - self.trace[n - 1 - CONVERGENCE_WINDOW]).abs() < CONVERGENCE_TOL;
        FitResult {
            pose: self.pose,
            fitness: last,
            trace: self.trace,
            hypothesis_index: self.index,
            converged,
            diverged: self.diverged,
        }
    }
}

fn objective_for<'a>(band: &'a BandPoints, grid: &'a DensityGrid, cfg: &FitConfig) -> Result<Objective<'a>> {
    cfg.validate()?;
    Objective::with_terms(band, grid, cfg.beta, cfg.use_normal_band)
}

pub fn refine_hypothesis(pose0: &Pose, band: &BandPoints, grid: &DensityGrid, cfg: &FitConfig) -> Result<FitResult> {
    let objective = objective_for(band, grid, cfg)?;
    let mut refiner = Refiner::new(*pose0, 0);
    refiner.advance(&objective, cfg, cfg.iterations);
    Ok(refiner.finish(&objective, cfg.iterations))
}

/// Highest fitness wins; equal fitness goes to the lowest hypothesis index.
fn select_best(results: Vec<FitResult>) -> FitResult {
    results
        .into_iter()
        .reduce(|best, r| {
            let better = r.fitness > best.fitness || best.fitness.is_nan() && !r.fitness.is_nan();
            let tie = r.fitness == best.fitness && r.hypothesis_index < best.hypothesis_index;
            if better || tie {
                r
            } else {
                best
            }
        })
        .expect("at least one result")
}

/// Refines every hypothesis and returns the best one.
///
/// Hypotheses are advanced in parallel in rounds of [`LOG_INTERVAL`] steps,
/// with the best fitness logged after each round under `label`.
pub fn fit_object(
    label: &str,
    hypotheses: &[Pose],
    band: &BandPoints,
    grid: &DensityGrid,
    cfg: &FitConfig,
) -> Result<FitResult> {
    if hypotheses.is_empty() {
        return Err(Error::invalid("no hypotheses to refine"));
    }
    let objective = objective_for(band, grid, cfg)?;
    let mut refiners: Vec<Refiner> = hypotheses.iter().enumerate().map(|(i, p)| Refiner::new(*p, i)).collect();
    let mut done = 0;
    while done < cfg.iterations {
        let n = LOG_INTERVAL.min(cfg.iterations - done);
        refiners.par_iter_mut().for_each(|r| r.advance(&objective, cfg, n));
        done += n;
        let best = refiners
            .iter()
            .map(Refiner::current_fitness)
            .filter(|f| f.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        log::info!("{label}: iteration {done}/{} best fitness {best:.6}", cfg.iterations);
    }
    let results: Vec<FitResult> = refiners
        .into_par_iter()
        .map(|r| r.finish(&objective, cfg.iterations))
        .collect();
    Ok(select_best(results))
}

/// Picks the best hypothesis by its starting fitness without refinement.
pub fn select_without_refinement(hypotheses: &[Pose], band: &BandPoints, grid: &DensityGrid, cfg: &FitConfig) -> Result<FitResult> {
    if hypotheses.is_empty() {
        return Err(Error::invalid("no hypotheses to score"));
    }
    let objective = objective_for(band, grid, cfg)?;
    let results: Vec<FitResult> = hypotheses
        .par_iter()
        .enumerate()
        .map(|(i, p)| Refiner::new(*p, i).finish(&objective, 0))
        .collect();
    Ok(select_best(results))
}
