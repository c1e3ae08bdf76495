//! Lighting optimization: initialization over an image-space grid, the
//! regularized reconstruction loss, analytic gradients, Adam, and the
//! stagnation-driven learning-rate / pruning schedule.

mod grad;

pub use grad::FitProblem;

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::render::{render, RenderOptions};
use crate::scene::{GeometryMaps, Scene};
use crate::sg::{
    fibonacci_sphere, rig_from_params, rig_params, EnvironmentLight, LightingRig, PointLight,
    RigLayout, SphericalGaussian,
};
use serde::{Deserialize, Serialize};

/// Fit hyperparameters. Defaults: initial learning rate 5e-2,
/// lambda_pos 1e-6, lambda_val 1e-4, a 6x8 light grid with 12 emission lobes
/// each, 5% pruning threshold and 0.5 learning-rate decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub lr_init: f64,
    pub lambda_pos: f64,
    pub lambda_val: f64,
    /// Light grid shape in image space: rows x cols lights.
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Emission lobes per point light.
    pub n_sg: usize,
    /// Environment lobe count.
    pub n_env: usize,
    /// Lights weaker than this fraction of the strongest are disabled.
    pub prune_fraction: f64,
    pub lr_decay: f64,
    /// Initial offset from the surface along the normal, in units of the
    /// scene's maximum depth.
    pub normal_offset: f64,
    /// Iterations per stagnation check.
    pub stagnation_window: usize,
    /// Relative best-loss improvement below which a window counts as
    /// stagnant.
    pub stagnation_tol: f64,
    pub max_iters: usize,
    /// Recorded with the run; the fit itself is fully deterministic and
    /// draws no random numbers.
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            lr_init: 5e-2,
            lambda_pos: 1e-6,
            lambda_val: 1e-4,
            grid_rows: 6,
            grid_cols: 8,
            n_sg: 12,
            n_env: 12,
            prune_fraction: 0.05,
            lr_decay: 0.5,
            normal_offset: 1e-2,
            stagnation_window: 50,
            stagnation_tol: 1e-3,
            max_iters: 2000,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn n_lights(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr_init", self.lr_init),
            ("lambda_pos", self.lambda_pos),
            ("lambda_val", self.lambda_val),
            ("lr_decay", self.lr_decay),
            ("normal_offset", self.normal_offset),
            ("stagnation_tol", self.stagnation_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::input(format!("{name} must be positive")));
            }
        }
        if !(self.prune_fraction > 0.0 && self.prune_fraction < 1.0) {
            return Err(Error::input("prune_fraction must lie in (0, 1)"));
        }
        if self.grid_rows == 0
            || self.grid_cols == 0
            || self.n_sg == 0
            || self.n_env == 0
            || self.stagnation_window == 0
            || self.max_iters == 0
        {
            return Err(Error::input("counts must be positive"));
        }
        Ok(())
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        AdamState {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::input("adam dimension mismatch"));
    }
    state.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

/// Loss components of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitLoss {
    pub total: f64,
    pub l_rec: f64,
    pub l_pos: f64,
    pub l_val: f64,
    /// Enabled lights whose nearest-surface distance hit the 1e-4 floor.
    pub pos_floor_hits: usize,
}

/// One per-iteration trace record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub iter: usize,
    pub total: f64,
    pub l_rec: f64,
    pub l_pos: f64,
    pub l_val: f64,
    pub lr: f64,
    pub active_lights: usize,
    pub pos_floor_hits: usize,
}

/// Per-iteration history of a fit.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitTrace {
    pub records: Vec<FitRecord>,
}

/// Nearest-surface distances are floored at this value inside the loss so a
/// light touching the surface cannot blow up `L_pos`.
pub const POS_DISTANCE_FLOOR: f64 = 1e-4;

/// Stride of the backprojected surface point cloud used for
/// nearest-surface-distance queries.
const SURFACE_CLOUD_STRIDE: usize = 4;

pub(crate) fn surface_cloud(geometry: &GeometryMaps) -> Vec<Vec3> {
    let mut cloud = Vec::new();
    let (w, h) = (geometry.width(), geometry.height());
    let mut y = 0;
    while y < h {
        let mut x = 0;
        while x < w {
            cloud.push(geometry.surface_point(x, y));
            x += SURFACE_CLOUD_STRIDE;
        }
        y += SURFACE_CLOUD_STRIDE;
    }
    cloud
}

pub(crate) fn nearest_in_cloud(point: Vec3, cloud: &[Vec3]) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (i, s) in cloud.iter().enumerate() {
        let d = (point - *s).length();
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Minimum distance from `point` to the stride-subsampled backprojected
/// surface point cloud.
pub fn nearest_surface_distance(point: Vec3, geometry: &GeometryMaps) -> f64 {
    nearest_in_cloud(point, &surface_cloud(geometry)).1
}

/// Initial emission amplitude per channel: near-black but with live
/// gradients.
const INIT_EMISSION: f64 = 1e-3;
/// Initial lobe sharpness for light profiles.
const INIT_LIGHT_SHARPNESS: f64 = 5.0;
/// Initial lobe sharpness for the environment.
const INIT_ENV_SHARPNESS: f64 = 3.0;

/// Place lights on a grid of image cell centers, backproject them to the
/// local surface, and lift them off it by `normal_offset * max_depth` along
/// the local normal toward the camera side. Emission profiles start with
/// uniformly spread lobe axes and minimal uniform emission.
pub fn init_lights(geometry: &GeometryMaps, config: &FitConfig) -> Result<LightingRig> {
    config.validate()?;
    let (w, h) = (geometry.width(), geometry.height());
    let d_max = geometry.max_depth();
    let offset = config.normal_offset * d_max;

    let light_axes = fibonacci_sphere(config.n_sg);
    let mut points = Vec::with_capacity(config.n_lights());
    for row in 0..config.grid_rows {
        for col in 0..config.grid_cols {
            let px = (((col as f64 + 0.5) * w as f64 / config.grid_cols as f64) as usize)
                .min(w - 1);
            let py = (((row as f64 + 0.5) * h as f64 / config.grid_rows as f64) as usize)
                .min(h - 1);
            let surface = geometry.surface_point(px, py);
            let normal = geometry.normals.pixel_vec3(px, py);
            // Normals face the camera side by convention; flip if this one
            // does not.
            let toward_camera = if normal.dot(-surface) >= 0.0 {
                normal
            } else {
                -normal
            };
            let position = surface + toward_camera * offset;
            let profile = light_axes
                .iter()
                .map(|&axis| {
                    SphericalGaussian::new(
                        axis,
                        INIT_LIGHT_SHARPNESS,
                        Vec3::splat(INIT_EMISSION),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            points.push(PointLight::new(position, profile)?);
        }
    }

    let lobes = fibonacci_sphere(config.n_env)
        .into_iter()
        .map(|axis| {
            SphericalGaussian::new(axis, INIT_ENV_SHARPNESS, Vec3::splat(INIT_EMISSION))
        })
        .collect::<Result<Vec<_>>>()?;

    LightingRig::new(EnvironmentLight { lobes }, points)
}

/// The regularized objective:
/// `L_rec + lambda_pos * sum(1 / d_near) + lambda_val * sum(amplitudes)`,
/// where `L_rec` is the mean squared error against the target in linear HDR
/// space and both sums run over enabled lights.
pub fn fit_loss(rig: &LightingRig, scene: &Scene, config: &FitConfig) -> Result<FitLoss> {
    let target = scene
        .target
        .as_ref()
        .ok_or_else(|| Error::input("fit_loss needs a scene with a target image"))?;
    let rendered = render(scene, rig, &RenderOptions::default())?;
    let n = target.data().len() as f64;
    // Fixed-order reduction: rows in order, pixels left to right.
    let mut l_rec = 0.0;
    for (a, b) in rendered.data().iter().zip(target.data()) {
        let d = a - b;
        l_rec += d * d;
    }
    l_rec /= n;

    let cloud = surface_cloud(&scene.geometry);
    let (l_pos, l_val, pos_floor_hits) = regularizers(rig, &cloud);
    Ok(FitLoss {
        total: l_rec + config.lambda_pos * l_pos + config.lambda_val * l_val,
        l_rec,
        l_pos,
        l_val,
        pos_floor_hits,
    })
}

pub(crate) fn regularizers(rig: &LightingRig, cloud: &[Vec3]) -> (f64, f64, usize) {
    let mut l_pos = 0.0;
    let mut l_val = 0.0;
    let mut floor_hits = 0;
    for light in &rig.points {
        if !light.enabled {
            continue;
        }
        let (_, d) = nearest_in_cloud(light.position, cloud);
        if d < POS_DISTANCE_FLOOR {
            floor_hits += 1;
        }
        l_pos += 1.0 / d.max(POS_DISTANCE_FLOOR);
        for lobe in &light.profile {
            l_val += lobe.amplitude.sum();
        }
    }
    (l_pos, l_val, floor_hits)
}

/// Gradient of [`fit_loss`] with respect to the flattened rig
/// parameterization (positions, raw axes, log sharpness, pre-softplus
/// amplitudes). Disabled lights receive exactly zero gradient.
pub fn fit_gradients(rig: &LightingRig, scene: &Scene, config: &FitConfig) -> Result<Vec<f64>> {
    let problem = FitProblem::new(scene, config)?;
    let params = rig_params(rig);
    let enabled: Vec<bool> = rig.points.iter().map(|l| l.enabled).collect();
    let layout = RigLayout::of(rig);
    let (_, grads) = problem.loss_and_grad_with_layout(&params, &enabled, &layout)?;
    Ok(grads)
}

/// Disable every light whose total intensity is strictly below
/// `prune_fraction` times the strongest enabled light's. The strongest light
/// survives; already-disabled lights stay disabled.
pub fn prune(rig: &LightingRig, config: &FitConfig) -> Result<LightingRig> {
    let enabled: Vec<(usize, f64)> = rig
        .points
        .iter()
        .enumerate()
        .filter(|(_, l)| l.enabled)
        .map(|(i, l)| (i, l.total_intensity()))
        .collect();
    if enabled.is_empty() {
        return Err(Error::input("prune needs at least one enabled light"));
    }
    let (strongest, max_intensity) = enabled
        .iter()
        .fold((enabled[0].0, f64::NEG_INFINITY), |acc, &(i, v)| {
            if v > acc.1 {
                (i, v)
            } else {
                acc
            }
        });
    let threshold = config.prune_fraction * max_intensity;
    let mut out = rig.clone();
    for (i, intensity) in enabled {
        if i != strongest && intensity < threshold {
            out.points[i].enabled = false;
        }
    }
    Ok(out)
}

/// Incremental fit driver; owns everything it needs so callers can step it
/// interactively.
pub struct FitSession {
    problem: FitProblem,
    config: FitConfig,
    layout: RigLayout,
    params: Vec<f64>,
    enabled: Vec<bool>,
    adam: AdamState,
    lr: f64,
    iter: usize,
    done: bool,
    best_total: f64,
    best_params: Vec<f64>,
    best_enabled: Vec<bool>,
    window_start_best: f64,
    window_count: usize,
    trace: FitTrace,
}

impl FitSession {
    pub fn new(scene: &Scene, config: &FitConfig) -> Result<Self> {
        config.validate()?;
        let rig = init_lights(&scene.geometry, config)?;
        let problem = FitProblem::new(scene, config)?;
        let layout = RigLayout::of(&rig);
        let params = rig_params(&rig);
        let enabled = vec![true; layout.n_lights];
        let dim = params.len();
        Ok(FitSession {
            problem,
            config: *config,
            layout,
            best_params: params.clone(),
            best_enabled: enabled.clone(),
            params,
            enabled,
            adam: AdamState::new(dim),
            lr: config.lr_init,
            iter: 0,
            done: false,
            best_total: f64::INFINITY,
            window_start_best: f64::INFINITY,
            window_count: 0,
            trace: FitTrace::default(),
        })
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn trace(&self) -> &FitTrace {
        &self.trace
    }

    pub fn current_rig(&self) -> Result<LightingRig> {
        rig_from_params(&self.params, &self.layout, &self.enabled)
    }

    pub fn best_rig(&self) -> Result<LightingRig> {
        rig_from_params(&self.best_params, &self.layout, &self.best_enabled)
    }

    /// Run one iteration: evaluate, record, handle stagnation (decay + prune
    /// or stop), and take an Adam step. Returns the new trace record, or
    /// `None` once the fit has stopped.
    pub fn step(&mut self) -> Result<Option<FitRecord>> {
        if self.done || self.iter >= self.config.max_iters {
            self.done = true;
            return Ok(None);
        }
        let (loss, grads) =
            self.problem
                .loss_and_grad_with_layout(&self.params, &self.enabled, &self.layout)?;
        let record = FitRecord {
            iter: self.iter,
            total: loss.total,
            l_rec: loss.l_rec,
            l_pos: loss.l_pos,
            l_val: loss.l_val,
            lr: self.lr,
            active_lights: self.enabled.iter().filter(|&&e| e).count(),
            pos_floor_hits: loss.pos_floor_hits,
        };
        self.trace.records.push(record);

        if loss.total < self.best_total {
            self.best_total = loss.total;
            self.best_params.copy_from_slice(&self.params);
            self.best_enabled.copy_from_slice(&self.enabled);
        }

        self.window_count += 1;
        if self.window_count >= self.config.stagnation_window {
            let stagnated = self.window_start_best.is_finite()
                && (self.window_start_best - self.best_total)
                    < self.config.stagnation_tol * self.window_start_best.max(1e-12);
            if stagnated {
                if self.lr < 1e-4 * self.config.lr_init {
                    self.done = true;
                    return Ok(Some(record));
                }
                self.lr *= self.config.lr_decay;
                let rig = self.current_rig()?;
                let pruned = prune(&rig, &self.config)?;
                for (flag, light) in self.enabled.iter_mut().zip(&pruned.points) {
                    *flag = light.enabled;
                }
            }
            self.window_start_best = self.best_total;
            self.window_count = 0;
        }

        adam_step(&mut self.params, &grads, &mut self.adam, self.lr)?;
        self.iter += 1;
        Ok(Some(record))
    }
}

/// Fit the rig to the scene's target image. Returns the best-loss rig seen
/// and the full per-iteration trace.
pub fn fit(scene: &Scene, config: &FitConfig) -> Result<(LightingRig, FitTrace)> {
    let mut session = FitSession::new(scene, config)?;
    while session.step()?.is_some() {}
    Ok((session.best_rig()?, session.trace.clone()))
}
