//! Deterministic diffusion-process math: the noise schedule, forward noising,
//! the noise-prediction loss, DDIM stepping over a pluggable denoiser, and
//! the 8+3 channel latent layout.

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::rng::DetRng;

/// Arbitrary-channel float raster for latent features.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::input("raster dimensions must be positive"));
        }
        if data.len() != width * height * channels {
            return Err(Error::input("raster data length mismatch"));
        }
        Ok(Raster {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Raster {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn same_shape(&self, o: &Raster) -> bool {
        self.width == o.width && self.height == o.height && self.channels == o.channels
    }

    fn at(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }
}

/// Number of channels in the material feature stack (albedo 4 + BRDF 4).
pub const MATERIAL_CHANNELS: usize = 8;
/// Channels of the conditioning features.
pub const CONDITION_CHANNELS: usize = 3;

/// Material features (8 channels: albedo block [0,4), BRDF block [4,8))
/// paired with 3-channel conditioning features; 11 input channels total.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentStack {
    pub material: Raster,
    pub condition: Raster,
}

impl LatentStack {
    pub fn new(material: Raster, condition: Raster) -> Result<Self> {
        if material.channels != MATERIAL_CHANNELS {
            return Err(Error::input("material features must have 8 channels"));
        }
        if condition.channels != CONDITION_CHANNELS {
            return Err(Error::input("condition features must have 3 channels"));
        }
        if material.width != condition.width || material.height != condition.height {
            return Err(Error::input("latent stack spatial dimensions must match"));
        }
        Ok(LatentStack {
            material,
            condition,
        })
    }

    /// Total model input channels (8 material + 3 condition).
    pub fn input_channels(&self) -> usize {
        self.material.channels + self.condition.channels
    }
}

/// beta/alpha tables of the forward process. `alpha_bar(0) == 1` by
/// convention; betas are indexed by timestep `t` in `1..=len`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear beta schedule over `steps` timesteps.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::input("schedule needs at least 2 steps"));
        }
        if !(0.0 < beta_start && beta_start < beta_end && beta_end < 1.0) {
            return Err(Error::input("betas must satisfy 0 < start < end < 1"));
        }
        let mut betas = Vec::with_capacity(steps);
        let mut alphas = Vec::with_capacity(steps);
        let mut alpha_bars = Vec::with_capacity(steps + 1);
        alpha_bars.push(1.0);
        for i in 0..steps {
            let beta = beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64;
            betas.push(beta);
            alphas.push(1.0 - beta);
            alpha_bars.push(alpha_bars[i] * (1.0 - beta));
        }
        Ok(NoiseSchedule {
            betas,
            alphas,
            alpha_bars,
        })
    }

    /// The 1000-step schedule with betas from 1e-4 to 2e-2.
    pub fn default_linear() -> Self {
        NoiseSchedule::linear(1000, 1e-4, 2e-2).expect("valid default schedule")
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// Cumulative product of alphas up to `t`, with `alpha_bar(0) == 1`.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bars
            .get(t)
            .copied()
            .ok_or_else(|| Error::input(format!("timestep {t} out of range 0..={}", self.len())))
    }
}

/// Stand-in for the frozen latent encoder: spatial average-pool by `factor`
/// plus a zero pad channel (3 -> 4).
pub fn toy_encode(map: &ImageBuffer, factor: usize) -> Result<Raster> {
    if map.channels() != 3 {
        return Err(Error::input("toy_encode expects a 3-channel map"));
    }
    if factor == 0 {
        return Err(Error::input("pooling factor must be positive"));
    }
    if map.width() % factor != 0 || map.height() % factor != 0 {
        return Err(Error::input("dimensions must be divisible by the factor"));
    }
    let (w, h) = (map.width() / factor, map.height() / factor);
    let mut data = Vec::with_capacity(w * h * 4);
    let norm = 1.0 / (factor * factor) as f64;
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for dy in 0..factor {
                for dx in 0..factor {
                    let px = map.pixel(x * factor + dx, y * factor + dy);
                    acc[0] += px[0];
                    acc[1] += px[1];
                    acc[2] += px[2];
                }
            }
            data.extend_from_slice(&[acc[0] * norm, acc[1] * norm, acc[2] * norm, 0.0]);
        }
    }
    Raster::new(w, h, 4, data)
}

/// Inverse of [`toy_encode`] up to pooling: drop the pad channel and
/// nearest-upsample by `factor`.
pub fn toy_decode(features: &Raster, factor: usize) -> Result<ImageBuffer> {
    if features.channels != 4 {
        return Err(Error::input("toy_decode expects 4 channels"));
    }
    if factor == 0 {
        return Err(Error::input("pooling factor must be positive"));
    }
    let (w, h) = (features.width * factor, features.height * factor);
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = (x / factor, y / factor);
            data.extend_from_slice(&[
                features.at(sx, sy, 0),
                features.at(sx, sy, 1),
                features.at(sx, sy, 2),
            ]);
        }
    }
    ImageBuffer::new(w, h, 3, data)
}

/// Forward noising: `x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps`.
/// `t = 0` is the identity boundary.
pub fn add_noise(x0: &Raster, eps: &Raster, t: usize, schedule: &NoiseSchedule) -> Result<Raster> {
    if !x0.same_shape(eps) {
        return Err(Error::input("x0 and eps shapes must match"));
    }
    let ab = schedule.alpha_bar(t)?;
    let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
    let data = x0
        .data
        .iter()
        .zip(&eps.data)
        .map(|(&x, &e)| sa * x + sb * e)
        .collect();
    Raster::new(x0.width, x0.height, x0.channels, data)
}

/// Mean squared error between true and predicted noise.
pub fn training_loss(eps_true: &Raster, eps_pred: &Raster) -> Result<f64> {
    if !eps_true.same_shape(eps_pred) {
        return Err(Error::input("noise raster shapes must match"));
    }
    let n = eps_true.data.len() as f64;
    Ok(eps_true
        .data
        .iter()
        .zip(&eps_pred.data)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// One deterministic (eta = 0) DDIM update from `t` to `t_prev < t`.
pub fn ddim_step(
    x_t: &Raster,
    eps_pred: &Raster,
    t: usize,
    t_prev: usize,
    schedule: &NoiseSchedule,
) -> Result<Raster> {
    if t_prev >= t {
        return Err(Error::input(format!(
            "timesteps must decrease: t_prev {t_prev} >= t {t}"
        )));
    }
    if !x_t.same_shape(eps_pred) {
        return Err(Error::input("x_t and eps shapes must match"));
    }
    let ab_t = schedule.alpha_bar(t)?;
    let ab_prev = schedule.alpha_bar(t_prev)?;
    let (sa_t, sb_t) = (ab_t.sqrt(), (1.0 - ab_t).sqrt());
    let (sa_p, sb_p) = (ab_prev.sqrt(), (1.0 - ab_prev).sqrt());
    let data = x_t
        .data
        .iter()
        .zip(&eps_pred.data)
        .map(|(&x, &e)| {
            let x0_hat = (x - sb_t * e) / sa_t;
            sa_p * x0_hat + sb_p * e
        })
        .collect();
    Raster::new(x_t.width, x_t.height, x_t.channels, data)
}

/// Noise-prediction model contract: maps (noisy material features, timestep,
/// condition features) to predicted noise of the same shape.
pub trait Denoiser {
    fn denoise(&self, x_t: &Raster, t: usize, condition: &Raster) -> Raster;
}

impl<F> Denoiser for F
where
    F: Fn(&Raster, usize, &Raster) -> Raster,
{
    fn denoise(&self, x_t: &Raster, t: usize, condition: &Raster) -> Raster {
        self(x_t, t, condition)
    }
}

/// Denoiser for round-trip experiments: knowing the clean features, it
/// returns the exact noise implied by the current `x_t`.
pub struct OracleDenoiser<'a> {
    pub x0: &'a Raster,
    pub schedule: &'a NoiseSchedule,
}

impl Denoiser for OracleDenoiser<'_> {
    fn denoise(&self, x_t: &Raster, t: usize, _condition: &Raster) -> Raster {
        let ab = self.schedule.alpha_bar(t).expect("timestep in range");
        let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
        let data = x_t
            .data
            .iter()
            .zip(&self.x0.data)
            .map(|(&x, &x0)| (x - sa * x0) / sb)
            .collect();
        Raster {
            width: x_t.width,
            height: x_t.height,
            channels: x_t.channels,
            data,
        }
    }
}

/// Uniform timestep ladder from `schedule.len()` down to 0, inclusive,
/// with `steps` transitions.
pub fn ddim_timesteps(steps: usize, schedule: &NoiseSchedule) -> Result<Vec<usize>> {
    let t_max = schedule.len();
    if steps == 0 {
        return Err(Error::input("need at least one sampling step"));
    }
    if steps > t_max {
        return Err(Error::input(format!(
            "cannot take {steps} distinct steps over {t_max} timesteps"
        )));
    }
    let ladder: Vec<usize> = (0..=steps)
        .map(|k| ((t_max as f64) * (steps - k) as f64 / steps as f64).round() as usize)
        .collect();
    Ok(ladder)
}

/// Draw `x_T` from the seeded unit Gaussian and run the DDIM chain down to 0,
/// conditioned on 3-channel features. The material feature shape is the
/// condition's spatial size with 8 channels.
pub fn ddim_sample(
    denoiser: &dyn Denoiser,
    condition: &Raster,
    steps: usize,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<Raster> {
    if condition.channels != CONDITION_CHANNELS {
        return Err(Error::input("condition must have 3 channels"));
    }
    let ladder = ddim_timesteps(steps, schedule)?;
    let mut rng = DetRng::new(seed);
    let n = condition.width * condition.height * MATERIAL_CHANNELS;
    let mut x = Raster::new(
        condition.width,
        condition.height,
        MATERIAL_CHANNELS,
        (0..n).map(|_| rng.normal()).collect(),
    )?;
    for pair in ladder.windows(2) {
        let (t, t_prev) = (pair[0], pair[1]);
        let eps = denoiser.denoise(&x, t, condition);
        if !eps.same_shape(&x) {
            return Err(Error::contract(
                "denoiser returned noise of mismatched shape",
            ));
        }
        x = ddim_step(&x, &eps, t, t_prev, schedule)?;
    }
    Ok(x)
}

/// Split the 8-channel material features into (albedo features, BRDF
/// features), channel ranges [0,4) and [4,8).
pub fn split_material_features(stack: &Raster) -> Result<(Raster, Raster)> {
    if stack.channels != MATERIAL_CHANNELS {
        return Err(Error::input("expected 8 material feature channels"));
    }
    let n = stack.width * stack.height;
    let mut albedo = Vec::with_capacity(n * 4);
    let mut brdf = Vec::with_capacity(n * 4);
    for px in stack.data.chunks_exact(MATERIAL_CHANNELS) {
        albedo.extend_from_slice(&px[0..4]);
        brdf.extend_from_slice(&px[4..8]);
    }
    Ok((
        Raster::new(stack.width, stack.height, 4, albedo)?,
        Raster::new(stack.width, stack.height, 4, brdf)?,
    ))
}

/// Inverse of [`split_material_features`].
pub fn concat_material_features(albedo: &Raster, brdf: &Raster) -> Result<Raster> {
    if albedo.channels != 4 || brdf.channels != 4 {
        return Err(Error::input("both feature blocks must have 4 channels"));
    }
    if albedo.width != brdf.width || albedo.height != brdf.height {
        return Err(Error::input("feature blocks must share spatial size"));
    }
    let mut data = Vec::with_capacity(albedo.data.len() * 2);
    for (a, b) in albedo.data.chunks_exact(4).zip(brdf.data.chunks_exact(4)) {
        data.extend_from_slice(a);
        data.extend_from_slice(b);
    }
    Raster::new(albedo.width, albedo.height, MATERIAL_CHANNELS, data)
}
