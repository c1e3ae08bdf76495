//! Synthetic-scene generator: a fronto-parallel textured plane plus a few
//! axis-aligned boxes with piecewise-constant materials, lit by randomly
//! placed point lights and a low-frequency SG environment. Used as the
//! ground-truth oracle for the light fit.

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::math::Vec3;
use crate::render::{render, RenderOptions};
use crate::rng::DetRng;
use crate::scene::{CameraIntrinsics, GeometryMaps, MaterialMaps, Scene};
use crate::sg::{EnvironmentLight, LightingRig, PointLight, SphericalGaussian};
use serde::{Deserialize, Serialize};

/// Descriptor for a generated scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Ground-truth point light count (0..=8).
    pub lights: usize,
    /// Number of boxes in front of the backdrop plane.
    pub boxes: usize,
    /// Scales the environment lobe amplitudes; 0 turns the environment off.
    pub env_scale: f64,
    /// Scales the point-light emission amplitudes.
    pub light_scale: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            width: 32,
            height: 32,
            lights: 2,
            boxes: 3,
            env_scale: 1.0,
            light_scale: 1.0,
        }
    }
}

/// Ground-truth lights carry this many emission lobes.
const GT_LOBES: usize = 4;
/// Backdrop plane depth in meters.
const PLANE_DEPTH: f64 = 4.0;

/// Generate a scene and the rig that produced its target image.
/// Deterministic in (spec, seed).
pub fn generate_synthetic_scene(spec: &SceneSpec, seed: u64) -> Result<(Scene, LightingRig)> {
    if spec.width < 8 || spec.height < 8 {
        return Err(Error::input("scene resolution must be at least 8x8"));
    }
    if spec.lights > 8 {
        return Err(Error::input("at most 8 ground-truth lights"));
    }
    if spec.boxes > 8 {
        return Err(Error::input("at most 8 boxes"));
    }
    if !(spec.env_scale >= 0.0) || !(spec.light_scale >= 0.0) {
        return Err(Error::input("scales must be nonnegative"));
    }

    let (w, h) = (spec.width, spec.height);
    let mut rng = DetRng::new(seed);
    let intrinsics = CameraIntrinsics::default_for(w, h);

    // Backdrop plane: smoothly textured albedo, constant roughness/metallic.
    let base = Vec3::new(rng.range(0.25, 0.65), rng.range(0.25, 0.65), rng.range(0.25, 0.65));
    let amp = Vec3::new(rng.range(0.05, 0.2), rng.range(0.05, 0.2), rng.range(0.05, 0.2));
    let freq_x = rng.range(1.0, 3.0);
    let freq_y = rng.range(1.0, 3.0);
    let phase = rng.range(0.0, std::f64::consts::TAU);
    let plane_rough = rng.range(0.4, 0.9);
    let plane_metal = rng.range(0.0, 0.2);

    let mut albedo = vec![0.0; w * h * 3];
    let mut rough = vec![plane_rough; w * h];
    let mut metal = vec![plane_metal; w * h];
    let mut normals = vec![0.0; w * h * 3];
    let mut depth = vec![PLANE_DEPTH; w * h];

    let facing = Vec3::new(0.0, 0.0, -1.0);
    for y in 0..h {
        for x in 0..w {
            let s = std::f64::consts::TAU
                * (freq_x * x as f64 / w as f64 + freq_y * y as f64 / h as f64)
                + phase;
            let a = base + amp * s.sin();
            let i = (y * w + x) * 3;
            albedo[i] = a.x.clamp(0.0, 1.0);
            albedo[i + 1] = a.y.clamp(0.0, 1.0);
            albedo[i + 2] = a.z.clamp(0.0, 1.0);
            normals[i] = facing.x;
            normals[i + 1] = facing.y;
            normals[i + 2] = facing.z;
        }
    }

    // Boxes: front face plus beveled border strips with tilted normals.
    let inv_sqrt2 = 1.0 / 2.0_f64.sqrt();
    for _ in 0..spec.boxes {
        let cx = rng.range(0.2, 0.8) * w as f64;
        let cy = rng.range(0.2, 0.8) * h as f64;
        let half = rng.range(0.08, 0.18) * w.min(h) as f64;
        let z = rng.range(1.8, 3.2);
        let box_albedo = Vec3::new(rng.range(0.1, 0.9), rng.range(0.1, 0.9), rng.range(0.1, 0.9));
        let box_rough = rng.range(0.15, 0.9);
        let box_metal = rng.range(0.0, 0.7);
        let bevel = (half * 0.25).max(1.0);

        let x0 = (cx - half).floor().max(0.0) as usize;
        let x1 = ((cx + half).ceil() as usize).min(w);
        let y0 = (cy - half).floor().max(0.0) as usize;
        let y1 = ((cy + half).ceil() as usize).min(h);
        for y in y0..y1 {
            for x in x0..x1 {
                let i3 = (y * w + x) * 3;
                let i1 = y * w + x;
                albedo[i3] = box_albedo.x;
                albedo[i3 + 1] = box_albedo.y;
                albedo[i3 + 2] = box_albedo.z;
                rough[i1] = box_rough;
                metal[i1] = box_metal;
                depth[i1] = z;

                let dx0 = x as f64 - x0 as f64;
                let dx1 = x1 as f64 - 1.0 - x as f64;
                let dy0 = y as f64 - y0 as f64;
                let dy1 = y1 as f64 - 1.0 - y as f64;
                let n = if dx0 < bevel && dx0 <= dx1.min(dy0).min(dy1) {
                    Vec3::new(-inv_sqrt2, 0.0, -inv_sqrt2)
                } else if dx1 < bevel && dx1 <= dy0.min(dy1) {
                    Vec3::new(inv_sqrt2, 0.0, -inv_sqrt2)
                } else if dy0 < bevel && dy0 <= dy1 {
                    Vec3::new(0.0, -inv_sqrt2, -inv_sqrt2)
                } else if dy1 < bevel {
                    Vec3::new(0.0, inv_sqrt2, -inv_sqrt2)
                } else {
                    facing
                };
                normals[i3] = n.x;
                normals[i3 + 1] = n.y;
                normals[i3 + 2] = n.z;
            }
        }
    }

    let materials = MaterialMaps::new(
        ImageBuffer::new(w, h, 3, albedo)?,
        ImageBuffer::new(w, h, 1, rough)?,
        ImageBuffer::new(w, h, 1, metal)?,
    )?;
    let geometry = GeometryMaps::new(
        ImageBuffer::new(w, h, 3, normals)?,
        ImageBuffer::new(w, h, 1, depth)?,
        intrinsics,
    )?;

    // Ground-truth lights hover in front of whatever surface their pixel sees.
    let mut points = Vec::with_capacity(spec.lights);
    for _ in 0..spec.lights {
        let px = (rng.range(0.2, 0.8) * w as f64) as usize;
        let py = (rng.range(0.2, 0.8) * h as f64) as usize;
        let surface = geometry.surface_point(px, py);
        let position = surface * rng.range(0.35, 0.7);
        let mut profile = Vec::with_capacity(GT_LOBES);
        // One lobe aimed at the surface so every light visibly contributes,
        // the rest spread randomly.
        let at_surface = (surface - position).normalized();
        for j in 0..GT_LOBES {
            let axis = if j == 0 { at_surface } else { rng.unit_vector() };
            let amplitude = Vec3::new(
                rng.range(0.3, 1.2),
                rng.range(0.3, 1.2),
                rng.range(0.3, 1.2),
            ) * (3.5 * spec.light_scale);
            profile.push(SphericalGaussian::new(axis, rng.range(1.5, 6.0), amplitude)?);
        }
        points.push(PointLight::new(position, profile)?);
    }

    // Low-frequency environment.
    let mut lobes = Vec::with_capacity(3);
    for _ in 0..3 {
        let amplitude = Vec3::new(
            rng.range(0.03, 0.1),
            rng.range(0.03, 0.1),
            rng.range(0.03, 0.1),
        ) * spec.env_scale;
        lobes.push(SphericalGaussian::new(
            rng.unit_vector(),
            rng.range(0.8, 1.8),
            amplitude,
        )?);
    }

    let rig = LightingRig::new(EnvironmentLight { lobes }, points)?;
    let scene_no_target = Scene::new(materials, geometry, None)?;
    let target = render(&scene_no_target, &rig, &RenderOptions::default())?;
    let scene = Scene::new(
        scene_no_target.materials,
        scene_no_target.geometry,
        Some(target),
    )?;
    Ok((scene, rig))
}
