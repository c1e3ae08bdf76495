//! The fit objective and its analytic gradient.
//!
//! The forward pass shades pixels through exactly the same code path as the
//! renderer, so the reconstruction loss agrees bit-for-bit with comparing
//! `render` output against the target. The backward pass hand-propagates
//! adjoints through the closed-form shading expressions into the flattened
//! parameter vector (positions, raw lobe axes, log sharpness, pre-softplus
//! amplitudes). Finite differences are the test oracle for every term.

use crate::brdf::{ggx_ndf, smith_g};
use crate::error::{Error, Result};
use crate::fit::{regularizers, surface_cloud, FitConfig, FitLoss, POS_DISTANCE_FLOOR};
use crate::math::{sigmoid, Vec3};
use crate::parallel::map_rows;
use crate::render::{build_contexts, shade_ctx, PixelCtx, RenderOptions, MIN_COS};
use crate::scene::Scene;
use crate::sg::{
    rig_from_params, LightingRig, PointLight, RigLayout, COSINE_LOBE_AMPLITUDE,
    COSINE_LOBE_SHARPNESS, LOBE_PARAMS,
};
use std::f64::consts::PI;

/// Everything the optimizer needs, owned, so sessions can outlive the scene
/// borrow and workers can share it immutably.
pub struct FitProblem {
    ctxs: Vec<PixelCtx>,
    target: Vec<f64>,
    cloud: Vec<Vec3>,
    width: usize,
    height: usize,
    opts: RenderOptions,
    lambda_pos: f64,
    lambda_val: f64,
}

/// Reparameterization chain values for one lobe.
struct LobeChain {
    /// sigmoid of the raw amplitudes: d softplus / d raw.
    sig_amp: Vec3,
    raw_len: f64,
}

impl FitProblem {
    pub fn new(scene: &Scene, config: &FitConfig) -> Result<Self> {
        config.validate()?;
        let target = scene
            .target
            .as_ref()
            .ok_or_else(|| Error::input("fitting needs a scene with a target image"))?;
        Ok(FitProblem {
            ctxs: build_contexts(scene)?,
            target: target.data().to_vec(),
            cloud: surface_cloud(&scene.geometry),
            width: scene.width(),
            height: scene.height(),
            opts: RenderOptions::default(),
            lambda_pos: config.lambda_pos,
            lambda_val: config.lambda_val,
        })
    }

    /// Objective value for a parameter vector.
    pub fn loss(
        &self,
        params: &[f64],
        enabled: &[bool],
        layout: &RigLayout,
    ) -> Result<FitLoss> {
        let rig = rig_from_params(params, layout, enabled)?;
        Ok(self.loss_of_rig(&rig))
    }

    pub(crate) fn loss_of_rig(&self, rig: &LightingRig) -> FitLoss {
        let w = self.width;
        let n = self.target.len() as f64;
        let rows = map_rows(self.height, |y| {
            let mut sq = 0.0;
            for x in 0..w {
                let color = shade_ctx(&self.ctxs[y * w + x], rig, &self.opts);
                let o = (y * w + x) * 3;
                let dr = color.x - self.target[o];
                let dg = color.y - self.target[o + 1];
                let db = color.z - self.target[o + 2];
                sq += dr * dr + dg * dg + db * db;
            }
            sq
        });
        let mut l_rec = 0.0;
        for sq in rows {
            l_rec += sq;
        }
        l_rec /= n;
        let (l_pos, l_val, pos_floor_hits) = regularizers(rig, &self.cloud);
        FitLoss {
            total: l_rec + self.lambda_pos * l_pos + self.lambda_val * l_val,
            l_rec,
            l_pos,
            l_val,
            pos_floor_hits,
        }
    }

    /// Objective and its gradient with respect to `params`.
    pub fn loss_and_grad_with_layout(
        &self,
        params: &[f64],
        enabled: &[bool],
        layout: &RigLayout,
    ) -> Result<(FitLoss, Vec<f64>)> {
        let rig = rig_from_params(params, layout, enabled)?;
        let chains = build_chains(params, layout);
        let w = self.width;
        let n_el = self.target.len() as f64;
        let n_params = layout.param_len();

        let rows = map_rows(self.height, |y| {
            let mut grad = vec![0.0; n_params];
            let mut lobe_exp = vec![0.0; layout.n_sg];
            let mut lobe_cos = vec![0.0; layout.n_sg];
            let mut sq = 0.0;
            for x in 0..w {
                let ctx = &self.ctxs[y * w + x];
                let color = shade_ctx(ctx, &rig, &self.opts);
                let o = (y * w + x) * 3;
                let res = Vec3::new(
                    color.x - self.target[o],
                    color.y - self.target[o + 1],
                    color.z - self.target[o + 2],
                );
                sq += res.length_squared();
                let rho = res * (2.0 / n_el);

                for (i, light) in rig.points.iter().enumerate() {
                    if !light.enabled {
                        continue;
                    }
                    let base = layout.light_offset(i);
                    let chain_base = layout.n_env + i * layout.n_sg;
                    backward_light(
                        ctx,
                        light,
                        &chains[chain_base..chain_base + layout.n_sg],
                        rho,
                        &self.opts,
                        &mut lobe_exp,
                        &mut lobe_cos,
                        &mut grad[base..base + layout.light_params()],
                    );
                }
                backward_env(
                    ctx,
                    &rig,
                    &chains[..layout.n_env],
                    rho,
                    &self.opts,
                    &mut grad[..layout.n_env * LOBE_PARAMS],
                );
            }
            (sq, grad)
        });

        // Fixed-order reduction: rows in index order.
        let mut grad = vec![0.0; n_params];
        let mut l_rec = 0.0;
        for (sq, row_grad) in rows {
            l_rec += sq;
            for (g, r) in grad.iter_mut().zip(&row_grad) {
                *g += r;
            }
        }
        l_rec /= n_el;

        let (l_pos, l_val, pos_floor_hits) = regularizers(&rig, &self.cloud);
        self.add_regularizer_grads(&rig, layout, &chains, &mut grad);

        Ok((
            FitLoss {
                total: l_rec + self.lambda_pos * l_pos + self.lambda_val * l_val,
                l_rec,
                l_pos,
                l_val,
                pos_floor_hits,
            },
            grad,
        ))
    }

    fn add_regularizer_grads(
        &self,
        rig: &LightingRig,
        layout: &RigLayout,
        chains: &[LobeChain],
        grad: &mut [f64],
    ) {
        for (i, light) in rig.points.iter().enumerate() {
            if !light.enabled {
                continue;
            }
            // L_pos = sum 1/d_near, floored; zero gradient inside the floor.
            let (k, d) = super::nearest_in_cloud(light.position, &self.cloud);
            if d > POS_DISTANCE_FLOOR {
                let dir = (light.position - self.cloud[k]) / d;
                let dpos = dir * (-self.lambda_pos / (d * d));
                let base = layout.light_offset(i);
                grad[base] += dpos.x;
                grad[base + 1] += dpos.y;
                grad[base + 2] += dpos.z;
            }
            // L_val = sum of mapped amplitudes: d/d raw = sigmoid(raw).
            for j in 0..layout.n_sg {
                let chain = &chains[layout.n_env + i * layout.n_sg + j];
                let o = layout.light_lobe_offset(i, j);
                grad[o + 4] += self.lambda_val * chain.sig_amp.x;
                grad[o + 5] += self.lambda_val * chain.sig_amp.y;
                grad[o + 6] += self.lambda_val * chain.sig_amp.z;
            }
        }
    }
}

fn build_chains(params: &[f64], layout: &RigLayout) -> Vec<LobeChain> {
    let mut chains = Vec::with_capacity(layout.n_env + layout.n_lights * layout.n_sg);
    let push = |o: usize, chains: &mut Vec<LobeChain>| {
        let raw_axis = Vec3::new(params[o], params[o + 1], params[o + 2]);
        chains.push(LobeChain {
            sig_amp: Vec3::new(
                sigmoid(params[o + 4]),
                sigmoid(params[o + 5]),
                sigmoid(params[o + 6]),
            ),
            raw_len: raw_axis.length(),
        });
    };
    for j in 0..layout.n_env {
        push(layout.env_lobe_offset(j), &mut chains);
    }
    for i in 0..layout.n_lights {
        for j in 0..layout.n_sg {
            push(layout.light_lobe_offset(i, j), &mut chains);
        }
    }
    chains
}

/// Pull a gradient on the unit axis back to the raw (unnormalized) axis:
/// J^T g = (g - unit * dot(unit, g)) / |raw|.
fn axis_pullback(chain: &LobeChain, unit: Vec3, g: Vec3) -> Vec3 {
    (g - unit * unit.dot(g)) / chain.raw_len
}

fn smith_lambda_derivative(mu: f64, alpha: f64) -> f64 {
    let a2 = alpha * alpha;
    let t = a2 * (1.0 / (mu * mu) - 1.0);
    -a2 / (2.0 * mu * mu * mu * (1.0 + t).sqrt())
}

/// Adjoint of one point light's contribution at one pixel, written into
/// `out = [position (3), lobes (n_sg * 7)]`. Must mirror
/// `render::point_light_term` exactly.
#[allow(clippy::too_many_arguments)]
fn backward_light(
    ctx: &PixelCtx,
    light: &PointLight,
    chains: &[LobeChain],
    rho: Vec3,
    opts: &RenderOptions,
    lobe_exp: &mut [f64],
    lobe_cos: &mut [f64],
    out: &mut [f64],
) {
    let to_light = light.position - ctx.pos;
    let dist_sq = to_light.length_squared();
    if dist_sq < 1e-24 {
        return; // forward contributes zero
    }
    let dist = dist_sq.sqrt();
    let l = to_light / dist;
    let emit_dir = -l;

    // Forward intermediates.
    let mut profile = Vec3::ZERO;
    for (j, lobe) in light.profile.iter().enumerate() {
        let c = emit_dir.dot(lobe.axis);
        let e = (lobe.sharpness * (c - 1.0)).exp();
        lobe_cos[j] = c;
        lobe_exp[j] = e;
        profile += lobe.amplitude * e;
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
    let degenerate_half = half_len < 1e-9;
    let (h, n_h, v_h_raw, d_ndf, fres, g_smith) = if degenerate_half {
        (Vec3::ZERO, 0.0, 0.0, 0.0, Vec3::ZERO, 0.0)
    } else {
        let h = half / half_len;
        let n_h = ctx.normal.dot(h);
        let v_h_raw = ctx.view.dot(h);
        let d = ggx_ndf(n_h, ctx.alpha);
        let f = crate::brdf::fresnel_schlick(v_h_raw.clamp(0.0, 1.0), ctx.f0);
        let g = smith_g(mu_l, ctx.mu_v, ctx.alpha);
        (h, n_h, v_h_raw, d, f, g)
    };
    let s0 = d_ndf * g_smith / (4.0 * ctx.mu_v);
    let spec = fres * (s0 * ratio);
    let transfer = ctx.kd * g_val + spec;

    // Adjoints.
    let d_transfer = rho * incident;
    let d_incident = rho * transfer;

    // Lobe parameters through S and the emission direction.
    let d_profile = d_incident / dist_sq;
    let mut d_emit = Vec3::ZERO;
    for (j, lobe) in light.profile.iter().enumerate() {
        let e = lobe_exp[j];
        let chain = &chains[j];
        let o = 3 + j * LOBE_PARAMS;
        // Amplitude (pre-softplus).
        out[o + 4] += d_profile.x * e * chain.sig_amp.x;
        out[o + 5] += d_profile.y * e * chain.sig_amp.y;
        out[o + 6] += d_profile.z * e * chain.sig_amp.z;
        // Shared scalar for sharpness and axis.
        let m = d_profile.dot(lobe.amplitude) * e;
        // Log sharpness.
        out[o + 3] += m * (lobe_cos[j] - 1.0) * lobe.sharpness;
        // Axis (through normalization).
        let d_axis = axis_pullback(chain, lobe.axis, emit_dir * (m * lobe.sharpness));
        out[o] += d_axis.x;
        out[o + 1] += d_axis.y;
        out[o + 2] += d_axis.z;
        d_emit += lobe.axis * (m * lobe.sharpness);
    }

    // Inverse-square distance.
    let d_dist_sq = -d_incident.dot(profile) / (dist_sq * dist_sq);

    // Geometry and BRDF factors.
    let d_g_val_diffuse = d_transfer.dot(ctx.kd);
    let p = d_transfer.dot(fres);
    let d_s0 = p * ratio;
    let d_ratio = p * s0;
    let d_fres = d_transfer * (s0 * ratio);

    let mut d_l = Vec3::ZERO;
    if !degenerate_half {
        let d_d = d_s0 * g_smith / (4.0 * ctx.mu_v);
        let d_g = d_s0 * d_ndf / (4.0 * ctx.mu_v);

        // D(n_h): d/dn_h = -4 a^2 n_h (a^2 - 1) / (pi den^3).
        let a2 = ctx.alpha * ctx.alpha;
        let den = n_h * n_h * (a2 - 1.0) + 1.0;
        let d_n_h = d_d * (-4.0 * a2 * n_h * (a2 - 1.0) / (PI * den * den * den));

        // F(v_h): zero slope where the clamp is active.
        let d_v_h = if v_h_raw > 0.0 && v_h_raw < 1.0 {
            let m4 = (1.0 - v_h_raw).powi(4);
            let df_scalar = -5.0 * m4;
            d_fres.dot((Vec3::splat(1.0) - ctx.f0) * df_scalar)
        } else {
            0.0
        };

        // G through the light-side cosine only (view side is constant).
        let d_lambda_l = -d_g * g_smith * g_smith;
        let d_mu_l_from_g = d_lambda_l * smith_lambda_derivative(mu_l, ctx.alpha);

        // ratio = g_val / mu_l.
        let d_g_val = d_g_val_diffuse + d_ratio / mu_l;
        let d_mu_l = d_mu_l_from_g - d_ratio * g_val / (mu_l * mu_l);

        // n.l chains.
        let dg_dnl = if opts.use_abs_geometry_term {
            if n_dot_l > 0.0 {
                1.0
            } else if n_dot_l < 0.0 {
                -1.0
            } else {
                0.0
            }
        } else if n_dot_l > 0.0 {
            1.0
        } else {
            0.0
        };
        let dmu_dnl = if n_dot_l.abs() > MIN_COS {
            n_dot_l.signum()
        } else {
            0.0
        };
        let d_n_l = d_g_val * dg_dnl + d_mu_l * dmu_dnl;
        d_l += ctx.normal * d_n_l;

        // Half-vector chain.
        let d_h = ctx.normal * d_n_h + ctx.view * d_v_h;
        d_l += (d_h - h * h.dot(d_h)) / half_len;
    } else {
        // No specular: only the diffuse geometry factor depends on l.
        let dg_dnl = if opts.use_abs_geometry_term {
            if n_dot_l > 0.0 {
                1.0
            } else if n_dot_l < 0.0 {
                -1.0
            } else {
                0.0
            }
        } else if n_dot_l > 0.0 {
            1.0
        } else {
            0.0
        };
        d_l += ctx.normal * (d_g_val_diffuse * dg_dnl);
    }

    // Emission direction: e = -l, so dL/dl -= dL/de.
    d_l += -d_emit;

    // Direction to position: l = w / dist, dist_sq = w.w.
    let mut d_w = (d_l - l * l.dot(d_l)) / dist;
    d_w += to_light * (2.0 * d_dist_sq);

    out[0] += d_w.x;
    out[1] += d_w.y;
    out[2] += d_w.z;
}

/// Adjoint of the environment terms (diffuse product integral and mirror
/// specular) into the env lobe block `out`.
fn backward_env(
    ctx: &PixelCtx,
    rig: &LightingRig,
    chains: &[LobeChain],
    rho: Vec3,
    opts: &RenderOptions,
    out: &mut [f64],
) {
    let c_amp = COSINE_LOBE_AMPLITUDE * 2.0 * PI;
    let d_cont = rho * ctx.kd;

    let specular_active = opts.env_specular_enabled && ctx.n_dot_v > 0.0;
    let (mirror, fres_env) = if specular_active {
        (
            ctx.normal * (2.0 * ctx.n_dot_v) - ctx.view,
            crate::brdf::fresnel_schlick(ctx.n_dot_v.clamp(0.0, 1.0), ctx.f0),
        )
    } else {
        (Vec3::ZERO, Vec3::ZERO)
    };
    let k_alpha = ctx.alpha * ctx.alpha;

    for (j, lobe) in rig.environment.lobes.iter().enumerate() {
        let chain = &chains[j];
        let o = j * LOBE_PARAMS;
        let lam = lobe.sharpness;

        // Diffuse: scale = C * (e^a - e^b) / lam_m with
        // lam_m = |lam*axis + lam_c*n|, a = lam_m - lam - lam_c,
        // b = -lam_m - lam - lam_c.
        let u = lobe.axis * lam + ctx.normal * COSINE_LOBE_SHARPNESS;
        let lam_m = u.length();
        let a = lam_m - lam - COSINE_LOBE_SHARPNESS;
        let b = -lam_m - lam - COSINE_LOBE_SHARPNESS;
        let (ea, eb) = (a.exp(), b.exp());
        let scale = c_amp * (ea - eb) / lam_m;

        // Amplitude.
        out[o + 4] += d_cont.x * scale * chain.sig_amp.x;
        out[o + 5] += d_cont.y * scale * chain.sig_amp.y;
        out[o + 6] += d_cont.z * scale * chain.sig_amp.z;

        let d_scale = d_cont.dot(lobe.amplitude);
        let d_ea = d_scale * c_amp / lam_m;
        let d_eb = -d_scale * c_amp / lam_m;
        let d_lam_m_direct = -d_scale * c_amp * (ea - eb) / (lam_m * lam_m);
        let d_a = d_ea * ea;
        let d_b = d_eb * eb;
        let d_lam_m = d_a - d_b + d_lam_m_direct;
        let d_lam_diffuse = -d_a - d_b + d_lam_m * u.dot(lobe.axis) / lam_m;
        let d_axis_diffuse = u * (d_lam_m * lam / lam_m);

        // Specular: amplitude * exp(lam' (r.axis - 1)) * F(n.v), with
        // lam' = lam / (1 + 2 lam alpha^2).
        let (d_lam_spec, d_axis_spec, amp_spec) = if specular_active {
            let denom = 1.0 + 2.0 * lam * k_alpha;
            let lam_p = lam / denom;
            let c = mirror.dot(lobe.axis);
            let e = (lam_p * (c - 1.0)).exp();
            // Amplitude chain for the specular path.
            let amp = Vec3::new(
                rho.x * fres_env.x * e,
                rho.y * fres_env.y * e,
                rho.z * fres_env.z * e,
            );
            let d_scalar = rho.dot(fres_env * lobe.amplitude) * e;
            let d_lam_p = d_scalar * (c - 1.0);
            let d_c = d_scalar * lam_p;
            (d_lam_p / (denom * denom), mirror * d_c, amp)
        } else {
            (0.0, Vec3::ZERO, Vec3::ZERO)
        };

        out[o + 4] += amp_spec.x * chain.sig_amp.x;
        out[o + 5] += amp_spec.y * chain.sig_amp.y;
        out[o + 6] += amp_spec.z * chain.sig_amp.z;

        // Log sharpness.
        out[o + 3] += (d_lam_diffuse + d_lam_spec) * lam;

        // Axis through normalization.
        let d_axis = axis_pullback(chain, lobe.axis, d_axis_diffuse + d_axis_spec);
        out[o] += d_axis.x;
        out[o + 1] += d_axis.y;
        out[o + 2] += d_axis.z;
    }
}
