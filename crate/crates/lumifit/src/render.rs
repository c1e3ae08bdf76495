//! Deferred per-pixel shading of a scene under a lighting rig: direct point
//! lights plus the SG environment, no occlusion. Also tonemapping and the
//! material / lighting editing operations.

use crate::brdf::{fresnel_schlick, ggx_ndf, smith_g, DIELECTRIC_F0, ROUGHNESS_FLOOR};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::math::{CompensatedVec3, Vec3};
use crate::parallel::map_rows;
use crate::scene::{MaterialMaps, Scene};
use crate::sg::{EnvironmentLight, LightingRig, PointLight};
use std::f64::consts::PI;

/// Cosine clamp used inside the specular chain to keep divisions bounded.
pub(crate) const MIN_COS: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderOptions {
    /// Shade with |n.l| instead of max(n.l, 0). Keeps gradients alive for
    /// lights that wander behind surfaces, which stabilizes the fit.
    pub use_abs_geometry_term: bool,
    /// Evaluate environment lobes in the mirror direction for specular.
    pub env_specular_enabled: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            use_abs_geometry_term: true,
            env_specular_enabled: true,
        }
    }
}

/// Everything shading needs at one pixel, precomputed once.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PixelCtx {
    /// Backprojected camera-space surface point.
    pub pos: Vec3,
    /// Unit direction from the surface toward the camera.
    pub view: Vec3,
    /// Unit surface normal.
    pub normal: Vec3,
    /// Lambertian lobe: albedo * (1 - metallic) / pi.
    pub kd: Vec3,
    /// Fresnel reflectance at normal incidence.
    pub f0: Vec3,
    /// GGX alpha = roughness^2 (roughness floored at 0.01).
    pub alpha: f64,
    /// Raw n.v.
    pub n_dot_v: f64,
    /// Clamped |n.v| for the specular denominators.
    pub mu_v: f64,
}

impl PixelCtx {
    pub(crate) fn new(
        albedo: Vec3,
        roughness: f64,
        metallic: f64,
        pos: Vec3,
        normal: Vec3,
    ) -> Result<Self> {
        if normal.length() < 1e-9 {
            return Err(Error::degenerate("zero-length normal"));
        }
        let pos_len = pos.length();
        if pos_len < 1e-9 {
            return Err(Error::degenerate("surface point at the camera origin"));
        }
        let normal = normal.normalized();
        let view = -(pos / pos_len);
        let rough = roughness.max(ROUGHNESS_FLOOR);
        let n_dot_v = normal.dot(view);
        Ok(PixelCtx {
            pos,
            view,
            normal,
            kd: albedo * ((1.0 - metallic) / PI),
            f0: Vec3::lerp(Vec3::splat(DIELECTRIC_F0), albedo, metallic),
            alpha: rough * rough,
            n_dot_v,
            mu_v: n_dot_v.abs().max(MIN_COS),
        })
    }
}

/// Contribution of one point light at one pixel.
///
/// The BRDF-times-geometry product is evaluated in a form where the geometry
/// term cancels against the specular denominator, so |n.l| -> 0 stays finite:
/// `kd * g(n.l) + D*F*G/(4 * mu_v) * (g(n.l) / mu_l)` all times the incident
/// radiance.
pub(crate) fn point_light_term(ctx: &PixelCtx, light: &PointLight, opts: &RenderOptions) -> Vec3 {
    if !light.enabled {
        return Vec3::ZERO;
    }
    let to_light = light.position - ctx.pos;
    let dist_sq = to_light.length_squared();
    if dist_sq < 1e-24 {
        return Vec3::ZERO;
    }
    let dist = dist_sq.sqrt();
    let l = to_light / dist;

    // Emission profile evaluated from the light toward the surface.
    let emit_dir = -l;
    let mut profile = Vec3::ZERO;
    for lobe in &light.profile {
        profile += lobe.eval_unit(emit_dir);
    }
    let incident = profile / dist_sq;

    let n_dot_l = ctx.normal.dot(l);
    let g_val = if opts.use_abs_geometry_term {
        n_dot_l.abs()
    } else {
        n_dot_l.max(0.0)
    };
    let mu_l = n_dot_l.abs().max(MIN_COS);
    let ratio = g_val / mu_l;

    let half = ctx.view + l;
    let half_len = half.length();
    let spec = if half_len < 1e-9 {
        Vec3::ZERO
    } else {
        let h = half / half_len;
        let d = ggx_ndf(ctx.normal.dot(h), ctx.alpha);
        let f = fresnel_schlick(ctx.view.dot(h).clamp(0.0, 1.0), ctx.f0);
        let g = smith_g(mu_l, ctx.mu_v, ctx.alpha);
        f * (d * g * ratio / (4.0 * ctx.mu_v))
    };

    (ctx.kd * g_val + spec) * incident
}

/// Diffuse environment term: kd * irradiance(normal).
pub(crate) fn env_diffuse_term(ctx: &PixelCtx, env: &EnvironmentLight) -> Vec3 {
    ctx.kd * crate::sg::sg_diffuse_irradiance(env, ctx.normal)
}

/// Specular environment term: each lobe evaluated at the mirror direction
/// with roughness-broadened sharpness, times a Schlick factor at n.v.
pub(crate) fn env_specular_term(ctx: &PixelCtx, env: &EnvironmentLight) -> Vec3 {
    if ctx.n_dot_v <= 0.0 {
        // Back-facing pixel: no view-dependent reflection.
        return Vec3::ZERO;
    }
    let mirror = ctx.normal * (2.0 * ctx.n_dot_v) - ctx.view;
    let fresnel = fresnel_schlick(ctx.n_dot_v.clamp(0.0, 1.0), ctx.f0);
    let mut total = Vec3::ZERO;
    for lobe in &env.lobes {
        let lam = lobe.sharpness / (1.0 + 2.0 * lobe.sharpness * ctx.alpha * ctx.alpha);
        let e = (lam * (mirror.dot(lobe.axis) - 1.0)).exp();
        total += lobe.amplitude * e;
    }
    total * fresnel
}

/// Shade one pixel context under the full rig. Summation order is fixed:
/// point lights in index order, then environment diffuse, then environment
/// specular, accumulated with compensation.
pub(crate) fn shade_ctx(ctx: &PixelCtx, rig: &LightingRig, opts: &RenderOptions) -> Vec3 {
    let mut acc = CompensatedVec3::default();
    for light in &rig.points {
        acc.add(point_light_term(ctx, light, opts));
    }
    acc.add(env_diffuse_term(ctx, &rig.environment));
    if opts.env_specular_enabled {
        acc.add(env_specular_term(ctx, &rig.environment));
    }
    acc.total()
}

/// Shade a single surface sample. `position` is the backprojected
/// camera-space point of the pixel; the view direction is toward the origin.
pub fn shade_pixel(
    albedo: Vec3,
    roughness: f64,
    metallic: f64,
    position: Vec3,
    normal: Vec3,
    rig: &LightingRig,
    opts: &RenderOptions,
) -> Result<Vec3> {
    let ctx = PixelCtx::new(albedo, roughness, metallic, position, normal)?;
    Ok(shade_ctx(&ctx, rig, opts))
}

/// Build the per-pixel shading contexts for a scene, row-major.
pub(crate) fn build_contexts(scene: &Scene) -> Result<Vec<PixelCtx>> {
    let (w, h) = (scene.width(), scene.height());
    let mut ctxs = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let albedo = scene.materials.albedo.pixel_vec3(x, y);
            let rough = scene.materials.roughness.at(x, y, 0);
            let metal = scene.materials.metallic.at(x, y, 0);
            let pos = scene.geometry.surface_point(x, y);
            let normal = scene.geometry.normals.pixel_vec3(x, y);
            ctxs.push(PixelCtx::new(albedo, rough, metal, pos, normal)?);
        }
    }
    Ok(ctxs)
}

/// Render the scene under the rig: per-pixel deferred shading, deterministic
/// for any thread count.
pub fn render(scene: &Scene, rig: &LightingRig, opts: &RenderOptions) -> Result<ImageBuffer> {
    let (w, h) = (scene.width(), scene.height());
    let ctxs = build_contexts(scene)?;
    let rows = map_rows(h, |y| {
        let mut row = Vec::with_capacity(w * 3);
        for x in 0..w {
            let c = shade_ctx(&ctxs[y * w + x], rig, opts);
            row.extend_from_slice(&[c.x, c.y, c.z]);
        }
        row
    });
    let mut data = Vec::with_capacity(w * h * 3);
    for row in rows {
        data.extend_from_slice(&row);
    }
    ImageBuffer::new(w, h, 3, data)
}

/// Clip to [0, 1] and gamma-encode with exponent 1/2.2.
pub fn tonemap(hdr: &ImageBuffer) -> ImageBuffer {
    hdr.map(|v| v.clamp(0.0, 1.0).powf(1.0 / 2.2))
        .expect("tonemap preserves shape and finiteness")
}

/// Replace albedo with `new_albedo` where `mask` is 1; roughness and
/// metallic are untouched. Mask values must be exactly 0 or 1.
pub fn edit_material(
    materials: &MaterialMaps,
    mask: &ImageBuffer,
    new_albedo: Vec3,
) -> Result<MaterialMaps> {
    if mask.channels() != 1 {
        return Err(Error::input("mask must be 1-channel"));
    }
    if mask.width() != materials.width() || mask.height() != materials.height() {
        return Err(Error::input("mask resolution must match the materials"));
    }
    if !mask.data().iter().all(|&v| v == 0.0 || v == 1.0) {
        return Err(Error::input("mask values must be exactly 0 or 1"));
    }
    let (w, h) = (materials.width(), materials.height());
    let mut albedo = materials.albedo.clone();
    for y in 0..h {
        for x in 0..w {
            if mask.at(x, y, 0) == 1.0 {
                albedo.set_pixel(x, y, &new_albedo.to_array());
            }
        }
    }
    MaterialMaps::new(albedo, materials.roughness.clone(), materials.metallic.clone())
}

/// Scale each light's emission amplitudes componentwise; the environment is
/// untouched.
pub fn edit_lighting(rig: &LightingRig, scales: &[Vec3]) -> Result<LightingRig> {
    if scales.len() != rig.points.len() {
        return Err(Error::input(format!(
            "expected {} scale factors, got {}",
            rig.points.len(),
            scales.len()
        )));
    }
    for s in scales {
        if !(s.min_component() >= 0.0) {
            return Err(Error::input("scale factors must be nonnegative"));
        }
    }
    let mut out = rig.clone();
    for (light, scale) in out.points.iter_mut().zip(scales) {
        for lobe in &mut light.profile {
            lobe.amplitude = lobe.amplitude * *scale;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brdf::{brdf_eval, ShadingSample};
    use crate::sg::SphericalGaussian;

    fn unit_z_ctx(albedo: f64, roughness: f64, metallic: f64) -> PixelCtx {
        // Surface 1 m in front of the camera, facing it.
        PixelCtx::new(
            Vec3::splat(albedo),
            roughness,
            metallic,
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(0.0, 0.0, -1.0),
        )
        .unwrap()
    }

    fn head_on_light(surface: Vec3, distance: f64, amplitude: f64) -> PointLight {
        // Light on the camera side of the surface, lobe aimed at the surface.
        let pos = surface + Vec3::new(0.0, 0.0, -distance);
        let axis = (surface - pos).normalized();
        PointLight::new(
            pos,
            vec![SphericalGaussian::new(axis, 4.0, Vec3::splat(amplitude)).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn empty_rig_is_black() {
        let ctx = unit_z_ctx(0.5, 0.5, 0.0);
        let rig = LightingRig::default();
        let c = shade_ctx(&ctx, &rig, &RenderOptions::default());
        assert_eq!(c.to_array(), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn lambertian_under_head_on_unit_light() {
        // Light straight above the pixel at distance 1 with unit radiance
        // toward the surface: the diffuse part is albedo / pi; the 0.04
        // dielectric specular adds a small extra on top.
        let surface = Vec3::new(0.0, 0.0, 1.0);
        let ctx = unit_z_ctx(0.6, 1.0, 0.0);
        let rig = LightingRig::new(
            EnvironmentLight::default(),
            vec![head_on_light(surface, 1.0, 1.0)],
        )
        .unwrap();
        let opts = RenderOptions::default();
        let c = shade_ctx(&ctx, &rig, &opts);

        // Exact identity with the BRDF: f(n, v, l) * |n.l| * L.
        let sample = ShadingSample::new(
            ctx.normal,
            ctx.view,
            Vec3::new(0.0, 0.0, -1.0),
            Vec3::splat(0.6),
            1.0,
            0.0,
        )
        .unwrap();
        let f = brdf_eval(&sample).unwrap();
        assert!((c - f).length() < 1e-12, "shade {c:?} vs brdf identity {f:?}");

        // Close to albedo / pi; the gap is exactly the dielectric specular.
        assert!((c.x - 0.6 / PI).abs() < 0.011, "got {}", c.x);
    }

    #[test]
    fn doubling_amplitudes_doubles_radiance_bitwise() {
        let ctx = unit_z_ctx(0.4, 0.3, 0.2);
        let mut lobes = Vec::new();
        for (i, axis) in crate::sg::fibonacci_sphere(5).into_iter().enumerate() {
            lobes.push(
                SphericalGaussian::new(axis, 1.0 + i as f64, Vec3::new(0.3, 0.2, 0.1)).unwrap(),
            );
        }
        let rig = LightingRig::new(
            EnvironmentLight { lobes },
            vec![
                head_on_light(Vec3::new(0.0, 0.0, 1.0), 0.7, 0.8),
                head_on_light(Vec3::new(0.1, 0.0, 1.0), 1.3, 0.5),
            ],
        )
        .unwrap();
        let opts = RenderOptions::default();
        let once = shade_ctx(&ctx, &rig, &opts);
        let twice = shade_ctx(&ctx, &rig.scaled_amplitudes(2.0), &opts);
        assert_eq!(twice.to_array(), (once * 2.0).to_array());
    }

    #[test]
    fn disabled_lights_and_zero_env_render_black() {
        let ctx = unit_z_ctx(0.9, 0.2, 0.0);
        let mut light = head_on_light(Vec3::new(0.0, 0.0, 1.0), 1.0, 2.0);
        light.enabled = false;
        let rig = LightingRig::new(EnvironmentLight::default(), vec![light]).unwrap();
        let c = shade_ctx(&ctx, &rig, &RenderOptions::default());
        assert_eq!(c.to_array(), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn abs_geometry_term_keeps_backfacing_lit() {
        // Light behind the surface: max(n.l, 0) kills it, |n.l| keeps it.
        let surface = Vec3::new(0.0, 0.0, 1.0);
        let behind = surface + Vec3::new(0.0, 0.0, 0.5);
        let axis = (surface - behind).normalized();
        let light = PointLight::new(
            behind,
            vec![SphericalGaussian::new(axis, 2.0, Vec3::splat(1.0)).unwrap()],
        )
        .unwrap();
        let ctx = unit_z_ctx(0.5, 0.6, 0.0);
        let rig = LightingRig::new(EnvironmentLight::default(), vec![light]).unwrap();

        let abs_opts = RenderOptions::default();
        let clamp_opts = RenderOptions {
            use_abs_geometry_term: false,
            ..RenderOptions::default()
        };
        let lit = shade_ctx(&ctx, &rig, &abs_opts);
        let dark = shade_ctx(&ctx, &rig, &clamp_opts);
        assert!(lit.x > 0.0);
        assert_eq!(dark.to_array(), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn tonemap_endpoints_and_midpoint() {
        let img = ImageBuffer::new(4, 1, 1, vec![0.0, 0.5, 1.0, 3.7]).unwrap();
        let out = tonemap(&img);
        assert_eq!(out.at(0, 0, 0), 0.0);
        assert!((out.at(1, 0, 0) - 0.5f64.powf(1.0 / 2.2)).abs() < 1e-12);
        assert!((out.at(1, 0, 0) - 0.7297).abs() < 1e-4);
        assert_eq!(out.at(2, 0, 0), 1.0);
        assert_eq!(out.at(3, 0, 0), 1.0);

        // Monotone non-decreasing on a sweep.
        let sweep: Vec<f64> = (0..64).map(|i| i as f64 / 40.0).collect();
        let img = ImageBuffer::new(64, 1, 1, sweep).unwrap();
        let out = tonemap(&img);
        for i in 1..64 {
            assert!(out.at(i, 0, 0) >= out.at(i - 1, 0, 0));
        }
    }

    #[test]
    fn edit_material_mask_contract() {
        let albedo = ImageBuffer::filled(2, 2, 3, 0.5).unwrap();
        let rough = ImageBuffer::filled(2, 2, 1, 0.4).unwrap();
        let metal = ImageBuffer::filled(2, 2, 1, 0.1).unwrap();
        let mats = MaterialMaps::new(albedo, rough, metal).unwrap();

        let zero_mask = ImageBuffer::zeros(2, 2, 1).unwrap();
        let same = edit_material(&mats, &zero_mask, Vec3::new(0.0, 1.0, 1.0)).unwrap();
        assert_eq!(same, mats);

        let full_mask = ImageBuffer::filled(2, 2, 1, 1.0).unwrap();
        let cyan = edit_material(&mats, &full_mask, Vec3::new(0.0, 1.0, 1.0)).unwrap();
        assert_eq!(cyan.albedo.pixel(1, 1), &[0.0, 1.0, 1.0]);
        assert_eq!(cyan.roughness, mats.roughness);

        let bad_mask = ImageBuffer::filled(2, 2, 1, 0.5).unwrap();
        assert!(edit_material(&mats, &bad_mask, Vec3::ZERO).is_err());
    }

    #[test]
    fn edit_lighting_scales_only_named_lights() {
        let l0 = head_on_light(Vec3::new(0.0, 0.0, 1.0), 1.0, 1.0);
        let l1 = head_on_light(Vec3::new(0.2, 0.0, 1.0), 1.0, 2.0);
        let env = EnvironmentLight {
            lobes: vec![SphericalGaussian::new(
                Vec3::new(0.0, 0.0, 1.0),
                1.0,
                Vec3::splat(0.1),
            )
            .unwrap()],
        };
        let rig = LightingRig::new(env, vec![l0, l1]).unwrap();

        let unchanged = edit_lighting(&rig, &[Vec3::splat(1.0), Vec3::splat(1.0)]).unwrap();
        assert_eq!(unchanged, rig);

        let out = edit_lighting(&rig, &[Vec3::new(2.0, 0.0, 1.0), Vec3::splat(0.0)]).unwrap();
        assert_eq!(out.points[0].profile[0].amplitude.to_array(), [2.0, 0.0, 1.0]);
        assert_eq!(out.points[1].profile[0].amplitude.to_array(), [0.0, 0.0, 0.0]);
        assert_eq!(out.environment, rig.environment);

        assert!(edit_lighting(&rig, &[Vec3::splat(1.0)]).is_err());
        assert!(edit_lighting(&rig, &[Vec3::splat(-1.0), Vec3::splat(1.0)]).is_err());
    }
}
