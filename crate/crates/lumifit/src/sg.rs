//! Spherical-Gaussian lighting primitives: environment lobes, point lights
//! with SG emission profiles, and the flattened parameter vector the
//! optimizer works on.

use crate::error::{Error, Result};
use crate::math::{softplus, softplus_inv, Vec3};
use serde::{Deserialize, Serialize};

/// A lobe on the sphere: `G(v) = amplitude * exp(sharpness * (dot(v, axis) - 1))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalGaussian {
    /// Unit direction of the lobe peak.
    pub axis: Vec3,
    /// Positive concentration; larger is narrower.
    pub sharpness: f64,
    /// Nonnegative per-channel radiance weight.
    pub amplitude: Vec3,
}

impl SphericalGaussian {
    pub fn new(axis: Vec3, sharpness: f64, amplitude: Vec3) -> Result<Self> {
        let sg = SphericalGaussian {
            axis,
            sharpness,
            amplitude,
        };
        sg.validate()?;
        Ok(sg)
    }

    pub fn validate(&self) -> Result<()> {
        if (self.axis.length() - 1.0).abs() > 1e-6 {
            return Err(Error::input("SG axis must be unit length"));
        }
        if !(self.sharpness > 0.0) {
            return Err(Error::input("SG sharpness must be positive"));
        }
        let a = self.amplitude;
        if !(a.x >= 0.0 && a.y >= 0.0 && a.z >= 0.0) {
            return Err(Error::input("SG amplitude must be nonnegative"));
        }
        if !a.is_finite() || !self.sharpness.is_finite() || !self.axis.is_finite() {
            return Err(Error::input("SG parameters must be finite"));
        }
        Ok(())
    }

    /// Evaluate in a unit `direction`.
    pub fn eval(&self, direction: Vec3) -> Result<Vec3> {
        if (direction.length() - 1.0).abs() > 1e-6 {
            return Err(Error::input("SG evaluation direction must be unit length"));
        }
        Ok(self.eval_unit(direction))
    }

    /// Evaluate assuming `direction` is already unit length.
    #[inline]
    pub(crate) fn eval_unit(&self, direction: Vec3) -> Vec3 {
        self.amplitude * (self.sharpness * (direction.dot(self.axis) - 1.0)).exp()
    }

    /// Closed-form integral over the whole sphere:
    /// `amplitude * 2*pi/sharpness * (1 - exp(-2*sharpness))`.
    pub fn integral(&self) -> Vec3 {
        let l = self.sharpness;
        self.amplitude * (2.0 * std::f64::consts::PI / l * (1.0 - (-2.0 * l).exp()))
    }
}

/// Free-standing form of [`SphericalGaussian::eval`].
pub fn sg_eval(sg: &SphericalGaussian, direction: Vec3) -> Result<Vec3> {
    sg.eval(direction)
}

/// Free-standing form of [`SphericalGaussian::integral`].
pub fn sg_integral(sg: &SphericalGaussian) -> Vec3 {
    sg.integral()
}

/// Cosine-lobe SG approximation constants: the clamped cosine about a normal
/// is modeled as an SG with this sharpness and amplitude.
pub const COSINE_LOBE_SHARPNESS: f64 = 2.133;
pub const COSINE_LOBE_AMPLITUDE: f64 = 1.17;

/// Global incident lighting as a sum of SG lobes. Serializes as a bare lobe
/// array.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnvironmentLight {
    pub lobes: Vec<SphericalGaussian>,
}

impl EnvironmentLight {
    pub fn new(lobes: Vec<SphericalGaussian>) -> Result<Self> {
        for lobe in &lobes {
            lobe.validate()?;
        }
        Ok(EnvironmentLight { lobes })
    }

    pub fn validate(&self) -> Result<()> {
        for lobe in &self.lobes {
            lobe.validate()?;
        }
        Ok(())
    }
}

/// Diffuse irradiance of the environment at a surface with the given unit
/// normal, via the SG product-integral against the cosine-lobe approximation.
pub fn sg_diffuse_irradiance(env: &EnvironmentLight, normal: Vec3) -> Vec3 {
    let mut total = Vec3::ZERO;
    for lobe in &env.lobes {
        total += sg_cosine_product_integral(lobe, normal);
    }
    total
}

/// Integral over the sphere of `lobe(w) * cosine_sg(w)` where `cosine_sg`
/// approximates `max(dot(n, w), 0)`.
#[inline]
pub(crate) fn sg_cosine_product_integral(lobe: &SphericalGaussian, normal: Vec3) -> Vec3 {
    let lam = lobe.sharpness;
    let merged = lobe.axis * lam + normal * COSINE_LOBE_SHARPNESS;
    let lam_m = merged.length();
    // Product of two SGs is an SG with sharpness |lam1*axis1 + lam2*axis2|;
    // both exponents below are <= 0, so nothing can overflow.
    let a = lam_m - lam - COSINE_LOBE_SHARPNESS;
    let b = -lam_m - lam - COSINE_LOBE_SHARPNESS;
    let scale = COSINE_LOBE_AMPLITUDE * 2.0 * std::f64::consts::PI * (a.exp() - b.exp()) / lam_m;
    lobe.amplitude * scale
}

/// A point emitter with a spherical-Gaussian emission profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointLight {
    /// Camera-space position in meters.
    pub position: Vec3,
    /// Emission profile lobes; all lights in a rig share the lobe count.
    pub profile: Vec<SphericalGaussian>,
    /// Disabled lights contribute exactly zero radiance and receive no
    /// gradients.
    pub enabled: bool,
}

impl PointLight {
    pub fn new(position: Vec3, profile: Vec<SphericalGaussian>) -> Result<Self> {
        let light = PointLight {
            position,
            profile,
            enabled: true,
        };
        light.validate()?;
        Ok(light)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.position.is_finite() {
            return Err(Error::input("light position must be finite"));
        }
        for lobe in &self.profile {
            lobe.validate()?;
        }
        Ok(())
    }

    /// Total emitted energy, summed over lobes and channels. This is the
    /// pruning statistic.
    pub fn total_intensity(&self) -> f64 {
        self.profile.iter().map(|sg| sg.integral().sum()).sum()
    }
}

/// What a point light sends toward a surface point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Incident {
    /// Unit direction from the surface toward the light.
    pub direction: Vec3,
    /// Radiance arriving at the surface (inverse-square falloff applied).
    pub radiance: Vec3,
    /// Distance from surface to light in meters.
    pub distance: f64,
}

/// Evaluate the light's emission toward `surface_point`. The profile is
/// evaluated in the direction the light emits, i.e. from the light toward the
/// surface.
pub fn point_light_incident(light: &PointLight, surface_point: Vec3) -> Result<Incident> {
    let to_light = light.position - surface_point;
    let dist_sq = to_light.length_squared();
    if dist_sq < 1e-24 {
        return Err(Error::degenerate(
            "surface point coincides with light position",
        ));
    }
    let distance = dist_sq.sqrt();
    let direction = to_light / distance;
    if !light.enabled {
        return Ok(Incident {
            direction,
            radiance: Vec3::ZERO,
            distance,
        });
    }
    let emit_dir = -direction;
    let mut profile_radiance = Vec3::ZERO;
    for lobe in &light.profile {
        profile_radiance += lobe.eval_unit(emit_dir);
    }
    Ok(Incident {
        direction,
        radiance: profile_radiance / dist_sq,
        distance,
    })
}

/// The full optimizable lighting: one SG environment plus N point lights.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LightingRig {
    pub environment: EnvironmentLight,
    #[serde(rename = "lights")]
    pub points: Vec<PointLight>,
}

impl LightingRig {
    pub fn new(environment: EnvironmentLight, points: Vec<PointLight>) -> Result<Self> {
        let rig = LightingRig {
            environment,
            points,
        };
        rig.validate()?;
        Ok(rig)
    }

    pub fn validate(&self) -> Result<()> {
        self.environment.validate()?;
        let n_sg = self.points.first().map(|l| l.profile.len());
        for light in &self.points {
            light.validate()?;
            if Some(light.profile.len()) != n_sg {
                return Err(Error::input("all point lights must share the lobe count"));
            }
        }
        Ok(())
    }

    pub fn enabled_count(&self) -> usize {
        self.points.iter().filter(|l| l.enabled).count()
    }

    /// Uniformly scale every emission amplitude (environment and lights).
    pub fn scaled_amplitudes(&self, factor: f64) -> LightingRig {
        let mut rig = self.clone();
        for lobe in &mut rig.environment.lobes {
            lobe.amplitude = lobe.amplitude * factor;
        }
        for light in &mut rig.points {
            for lobe in &mut light.profile {
                lobe.amplitude = lobe.amplitude * factor;
            }
        }
        rig
    }
}

/// Shape of a rig's parameter vector.
///
/// Flattening order: environment lobes first, then point lights in index
/// order. Each lobe contributes `[axis (3, unnormalized), ln(sharpness),
/// amplitude raw (3, softplus-mapped)]`; each light contributes its position
/// (3) followed by its lobes. Sharpness is stored as a logarithm and
/// amplitudes pre-softplus so the optimizer is unconstrained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RigLayout {
    pub n_env: usize,
    pub n_lights: usize,
    pub n_sg: usize,
}

/// Parameters per lobe: raw axis (3) + log sharpness + raw amplitude (3).
pub const LOBE_PARAMS: usize = 7;

impl RigLayout {
    pub fn of(rig: &LightingRig) -> Self {
        RigLayout {
            n_env: rig.environment.lobes.len(),
            n_lights: rig.points.len(),
            n_sg: rig.points.first().map(|l| l.profile.len()).unwrap_or(0),
        }
    }

    pub fn param_len(&self) -> usize {
        self.n_env * LOBE_PARAMS + self.n_lights * self.light_params()
    }

    /// Parameters per light: position (3) + lobes.
    pub fn light_params(&self) -> usize {
        3 + self.n_sg * LOBE_PARAMS
    }

    /// Offset of light `i`'s position block.
    pub fn light_offset(&self, i: usize) -> usize {
        self.n_env * LOBE_PARAMS + i * self.light_params()
    }

    /// Offset of lobe `j` of light `i`.
    pub fn light_lobe_offset(&self, i: usize, j: usize) -> usize {
        self.light_offset(i) + 3 + j * LOBE_PARAMS
    }

    /// Offset of environment lobe `j`.
    pub fn env_lobe_offset(&self, j: usize) -> usize {
        j * LOBE_PARAMS
    }
}

fn push_lobe(params: &mut Vec<f64>, lobe: &SphericalGaussian) {
    params.extend_from_slice(&[lobe.axis.x, lobe.axis.y, lobe.axis.z]);
    params.push(lobe.sharpness.ln());
    params.push(softplus_inv(lobe.amplitude.x.max(AMP_FLOOR)));
    params.push(softplus_inv(lobe.amplitude.y.max(AMP_FLOOR)));
    params.push(softplus_inv(lobe.amplitude.z.max(AMP_FLOOR)));
}

// softplus_inv(0) is -inf; floor amplitudes entering the parameter vector at
// a value whose softplus round trip is exact enough for any practical rig.
const AMP_FLOOR: f64 = 1e-12;

/// Flatten a rig into its optimizable parameter vector.
pub fn rig_params(rig: &LightingRig) -> Vec<f64> {
    let layout = RigLayout::of(rig);
    let mut params = Vec::with_capacity(layout.param_len());
    for lobe in &rig.environment.lobes {
        push_lobe(&mut params, lobe);
    }
    for light in &rig.points {
        params.extend_from_slice(&[light.position.x, light.position.y, light.position.z]);
        for lobe in &light.profile {
            push_lobe(&mut params, lobe);
        }
    }
    params
}

fn lobe_from_params(p: &[f64]) -> Result<SphericalGaussian> {
    let raw_axis = Vec3::new(p[0], p[1], p[2]);
    let len = raw_axis.length();
    if len < 1e-9 {
        return Err(Error::degenerate("lobe axis collapsed to zero"));
    }
    Ok(SphericalGaussian {
        axis: raw_axis / len,
        sharpness: p[3].exp(),
        amplitude: Vec3::new(softplus(p[4]), softplus(p[5]), softplus(p[6])),
    })
}

/// Rebuild a rig from a parameter vector. `enabled` carries the per-light
/// flags, which are not part of the continuous parameterization.
pub fn rig_from_params(
    params: &[f64],
    layout: &RigLayout,
    enabled: &[bool],
) -> Result<LightingRig> {
    if params.len() != layout.param_len() {
        return Err(Error::input(format!(
            "parameter vector length {} does not match layout ({})",
            params.len(),
            layout.param_len()
        )));
    }
    if enabled.len() != layout.n_lights {
        return Err(Error::input("enabled mask length must match light count"));
    }
    let mut lobes = Vec::with_capacity(layout.n_env);
    for j in 0..layout.n_env {
        let o = layout.env_lobe_offset(j);
        lobes.push(lobe_from_params(&params[o..o + LOBE_PARAMS])?);
    }
    let mut points = Vec::with_capacity(layout.n_lights);
    for i in 0..layout.n_lights {
        let o = layout.light_offset(i);
        let position = Vec3::new(params[o], params[o + 1], params[o + 2]);
        let mut profile = Vec::with_capacity(layout.n_sg);
        for j in 0..layout.n_sg {
            let lo = layout.light_lobe_offset(i, j);
            profile.push(lobe_from_params(&params[lo..lo + LOBE_PARAMS])?);
        }
        points.push(PointLight {
            position,
            profile,
            enabled: enabled[i],
        });
    }
    Ok(LightingRig {
        environment: EnvironmentLight { lobes },
        points,
    })
}

/// Deterministic spread of `n` directions over the sphere (Fibonacci spiral).
pub fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    (0..n)
        .map(|k| {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * k as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}
