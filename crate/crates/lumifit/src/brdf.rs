//! GGX microfacet BRDF with the metallic workflow: Trowbridge-Reitz D,
//! height-correlated Smith G, Schlick F, Lambertian diffuse scaled by
//! (1 - metallic), `alpha = roughness^2`, dielectric f0 = 0.04.

use crate::error::{Error, Result};
use crate::math::Vec3;
use std::f64::consts::PI;

/// Lower clamp for roughness; keeps the NDF and its gradients bounded.
pub const ROUGHNESS_FLOOR: f64 = 0.01;

/// Reflectance at normal incidence for dielectrics.
pub const DIELECTRIC_F0: f64 = 0.04;

/// GGX / Trowbridge-Reitz normal distribution.
/// `alpha` is roughness squared. Depends on `n_dot_h` only through its
/// square, so it is well defined for grazing half-vectors too.
pub fn ggx_ndf(n_dot_h: f64, alpha: f64) -> f64 {
    let a2 = alpha * alpha;
    let denom = n_dot_h * n_dot_h * (a2 - 1.0) + 1.0;
    a2 / (PI * denom * denom)
}

#[inline]
fn smith_lambda(cos_theta: f64, alpha: f64) -> f64 {
    let c2 = cos_theta * cos_theta;
    let tan2 = (1.0 - c2) / c2;
    ((1.0 + alpha * alpha * tan2).sqrt() - 1.0) / 2.0
}

/// Height-correlated Smith masking-shadowing term.
pub fn smith_g(n_dot_l: f64, n_dot_v: f64, alpha: f64) -> f64 {
    // Sum the two shadowing terms first so swapping the arguments is
    // bit-exact (reciprocity).
    let lambda_sum = smith_lambda(n_dot_l, alpha) + smith_lambda(n_dot_v, alpha);
    1.0 / (1.0 + lambda_sum)
}

/// Schlick Fresnel approximation.
pub fn fresnel_schlick(v_dot_h: f64, f0: Vec3) -> Vec3 {
    let m = (1.0 - v_dot_h).clamp(0.0, 1.0);
    let m5 = m * m * m * m * m;
    f0 + (Vec3::splat(1.0) - f0) * m5
}

/// One shading configuration: unit directions plus the local material.
#[derive(Debug, Clone, Copy)]
pub struct ShadingSample {
    pub n: Vec3,
    pub v: Vec3,
    pub l: Vec3,
    pub albedo: Vec3,
    pub roughness: f64,
    pub metallic: f64,
}

impl ShadingSample {
    /// Validates directions and ranges. Roughness is clamped up to
    /// [`ROUGHNESS_FLOOR`].
    pub fn new(n: Vec3, v: Vec3, l: Vec3, albedo: Vec3, roughness: f64, metallic: f64) -> Result<Self> {
        for (name, d) in [("n", n), ("v", v), ("l", l)] {
            if (d.length() - 1.0).abs() > 1e-6 {
                return Err(Error::input(format!("{name} must be unit length")));
            }
        }
        if !(0.0..=1.0).contains(&roughness) || !(0.0..=1.0).contains(&metallic) {
            return Err(Error::input("roughness and metallic must lie in [0, 1]"));
        }
        if !(albedo.min_component() >= 0.0 && albedo.max_component() <= 1.0) {
            return Err(Error::input("albedo must lie in [0, 1]"));
        }
        Ok(ShadingSample {
            n,
            v,
            l,
            albedo,
            roughness: roughness.max(ROUGHNESS_FLOOR),
            metallic,
        })
    }
}

/// Evaluate the BRDF (units 1/sr). Requires `dot(n, l) > 0` and
/// `dot(n, v) > 0`; the renderer clamps before calling.
pub fn brdf_eval(sample: &ShadingSample) -> Result<Vec3> {
    let half = sample.v + sample.l;
    let half_len = half.length();
    if half_len < 1e-9 {
        return Err(Error::degenerate("view and light directions are antipodal"));
    }
    let n_dot_l = sample.n.dot(sample.l);
    let n_dot_v = sample.n.dot(sample.v);
    if n_dot_l <= 0.0 || n_dot_v <= 0.0 {
        return Err(Error::input("brdf_eval requires n.l > 0 and n.v > 0"));
    }
    let h = half / half_len;
    let alpha = sample.roughness * sample.roughness;
    let d = ggx_ndf(sample.n.dot(h), alpha);
    let f0 = Vec3::lerp(Vec3::splat(DIELECTRIC_F0), sample.albedo, sample.metallic);
    let f = fresnel_schlick(sample.v.dot(h).clamp(0.0, 1.0), f0);
    let g = smith_g(n_dot_l, n_dot_v, alpha);
    let diffuse = sample.albedo * ((1.0 - sample.metallic) / PI);
    let specular = f * (d * g / (4.0 * n_dot_l * n_dot_v));
    Ok(diffuse + specular)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DetRng;

    #[test]
    fn ndf_normal_incidence() {
        assert!((ggx_ndf(1.0, 1.0) - 1.0 / PI).abs() < 1e-15);
        let alpha = 0.25;
        assert!((ggx_ndf(1.0, alpha) - 1.0 / (PI * alpha * alpha)).abs() < 1e-12);
    }

    /// Hemisphere quadrature of D(h) * (n.h); must integrate to 1.
    fn ndf_projected_integral(alpha: f64) -> f64 {
        // D depends only on cos(theta); integrate 2*pi * D(c) * c over the
        // hemisphere with the sin(theta) Jacobian.
        let n = 20_000;
        let mut total = 0.0;
        for i in 0..n {
            let theta = (PI / 2.0) * (i as f64 + 0.5) / n as f64;
            let c = theta.cos();
            total += ggx_ndf(c, alpha) * c * theta.sin() * (PI / 2.0 / n as f64) * 2.0 * PI;
        }
        total
    }

    #[test]
    fn ndf_integrates_to_one() {
        for &rough in &[0.2, 0.5, 1.0] {
            let alpha = rough * rough;
            let q = ndf_projected_integral(alpha);
            assert!((q - 1.0).abs() < 0.01, "roughness {rough}: integral {q}");
        }
    }

    #[test]
    fn smith_g_limits() {
        assert!((smith_g(1.0, 1.0, 0.5) - 1.0).abs() < 1e-15);
        // Smooth-surface limit.
        let g = smith_g(0.3, 0.8, 1e-6);
        assert!((g - 1.0).abs() < 1e-9);
        // Grazing light darkens.
        assert!(smith_g(0.05, 0.9, 0.8) < 0.5);
    }

    #[test]
    fn smith_g_symmetric() {
        let mut rng = DetRng::new(4);
        for _ in 0..100 {
            let a = rng.range(0.05, 1.0);
            let b = rng.range(0.05, 1.0);
            let alpha = rng.range(0.01, 1.0);
            assert_eq!(smith_g(a, b, alpha), smith_g(b, a, alpha));
        }
    }

    #[test]
    fn fresnel_endpoints() {
        let f0 = Vec3::splat(0.04);
        assert_eq!(fresnel_schlick(1.0, f0).to_array(), [0.04, 0.04, 0.04]);
        assert_eq!(fresnel_schlick(0.0, f0).to_array(), [1.0, 1.0, 1.0]);
        let mid = fresnel_schlick(0.5, f0).x;
        assert!((mid - (0.04 + 0.96 * 0.5_f64.powi(5))).abs() < 1e-15);
        assert!((mid - 0.07).abs() < 1e-12);
    }

    #[test]
    fn eval_rough_dielectric_head_on() {
        // n = v = l: diffuse 0.5/pi plus specular D*F*G/4 with D = 1/pi at
        // alpha = 1, F = 0.04, G = smith_g(1,1,1) = 1.
        let n = Vec3::new(0.0, 0.0, 1.0);
        let s = ShadingSample::new(n, n, n, Vec3::splat(0.5), 1.0, 0.0).unwrap();
        let f = brdf_eval(&s).unwrap();
        let expected = 0.5 / PI + (1.0 / PI) * 0.04 * 1.0 / 4.0;
        assert!((f.x - expected).abs() < 1e-12, "got {} want {expected}", f.x);
        assert!((f.x - 0.1592 - 0.01 / PI).abs() < 1e-4);
    }

    #[test]
    fn eval_pure_metal_has_no_diffuse() {
        let n = Vec3::new(0.0, 0.0, 1.0);
        let v = Vec3::new(0.3, 0.0, 1.0).normalized();
        let l = Vec3::new(-0.3, 0.2, 1.0).normalized();
        // At metallic = 1 the BRDF is exactly its specular part.
        let s = ShadingSample::new(n, v, l, Vec3::splat(0.8), 0.5, 1.0).unwrap();
        let f = brdf_eval(&s).unwrap();
        assert_eq!(f.x, specular_only(&s));
        // Zero-albedo metal reflects nothing head-on (f0 = 0), leaving only
        // the Schlick grazing tail.
        let dark = ShadingSample::new(n, n, n, Vec3::ZERO, 0.5, 1.0).unwrap();
        assert_eq!(brdf_eval(&dark).unwrap().to_array(), [0.0, 0.0, 0.0]);
    }

    fn specular_only(s: &ShadingSample) -> f64 {
        let h = (s.v + s.l).normalized();
        let alpha = s.roughness * s.roughness;
        let d = ggx_ndf(s.n.dot(h), alpha);
        let f0 = Vec3::lerp(Vec3::splat(DIELECTRIC_F0), s.albedo, s.metallic);
        let f = fresnel_schlick(s.v.dot(h).clamp(0.0, 1.0), f0);
        let g = smith_g(s.n.dot(s.l), s.n.dot(s.v), alpha);
        (f * (d * g / (4.0 * s.n.dot(s.l) * s.n.dot(s.v)))).x
    }

    fn random_sample(rng: &mut DetRng) -> ShadingSample {
        let n = Vec3::new(0.0, 0.0, 1.0);
        // Directions in the upper hemisphere.
        let dir = |rng: &mut DetRng| loop {
            let d = rng.unit_vector();
            if d.z > 0.05 {
                return d;
            }
        };
        let v = dir(rng);
        let l = dir(rng);
        ShadingSample::new(
            n,
            v,
            l,
            Vec3::new(rng.uniform(), rng.uniform(), rng.uniform()),
            rng.range(0.01, 1.0),
            rng.uniform(),
        )
        .unwrap()
    }

    #[test]
    fn eval_reciprocity_exact() {
        let mut rng = DetRng::new(1234);
        for _ in 0..10_000 {
            let s = random_sample(&mut rng);
            let swapped = ShadingSample {
                v: s.l,
                l: s.v,
                ..s
            };
            let a = brdf_eval(&s).unwrap();
            let b = brdf_eval(&swapped).unwrap();
            assert!(
                (a - b).length() <= 1e-12 * a.length().max(1.0),
                "reciprocity violated: {a:?} vs {b:?}"
            );
        }
    }

    #[test]
    fn eval_nonnegative_and_continuous_in_metallic() {
        let mut rng = DetRng::new(77);
        for _ in 0..1000 {
            let s = random_sample(&mut rng);
            let f = brdf_eval(&s).unwrap();
            assert!(f.min_component() >= 0.0);
        }
        // Metallic sweep stays continuous.
        let n = Vec3::new(0.0, 0.0, 1.0);
        let v = Vec3::new(0.2, -0.1, 0.9).normalized();
        let l = Vec3::new(-0.4, 0.3, 0.8).normalized();
        let mut last = None;
        for k in 0..=100 {
            let m = k as f64 / 100.0;
            let s = ShadingSample::new(n, v, l, Vec3::splat(0.6), 0.4, m).unwrap();
            let f = brdf_eval(&s).unwrap().x;
            if let Some(prev) = last {
                assert!((f - prev as f64).abs() < 0.05);
            }
            last = Some(f);
        }
    }

    #[test]
    fn eval_degenerate_half_vector() {
        let n = Vec3::new(0.0, 0.0, 1.0);
        let v = Vec3::new(1.0, 0.0, 1e-4).normalized();
        let s = ShadingSample {
            n,
            v,
            l: -v,
            albedo: Vec3::splat(0.5),
            roughness: 0.5,
            metallic: 0.0,
        };
        assert!(matches!(brdf_eval(&s), Err(Error::Degenerate(_))));
    }
}
