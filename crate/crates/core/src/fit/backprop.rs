//! Reverse-mode gradients of a traced ray color with respect to the
//! parameters of the Gaussians it composited.
//!
//! The peak parameter `t*` is treated as constant: at an interior optimum the
//! Mahalanobis distance is stationary in `t`, and at a clamped end `t` does
//! not move with the parameters.

use crate::math::{rotation_matrix_vjp, Vec3};
use crate::scene::{sh, Gaussian, SceneSnapshot};
use crate::trace::{trace_ray_recorded, whitening, Bvh, CompositedHit, Ray, TraceOptions, TraceResult};

/// Gradient of a scalar loss with respect to one composited Gaussian, in the
/// Gaussian's own parameters: mean, linear scale, unit quaternion components
/// `[w, x, y, z]`, linear opacity and SH coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HitGradient {
    pub gaussian_index: usize,
    pub mean: Vec3,
    pub scale: Vec3,
    pub rotation: [f64; 4],
    pub opacity: f64,
    /// Only the first `coeff_count(sh_degree)` entries are meaningful.
    pub sh: [Vec3; 16],
}

impl HitGradient {
    fn zero(gaussian_index: usize) -> Self {
        HitGradient {
            gaussian_index,
            mean: Vec3::zeros(),
            scale: Vec3::zeros(),
            rotation: [0.0; 4],
            opacity: 0.0,
            sh: [Vec3::zeros(); 16],
        }
    }
}

/// Traces `ray` and returns one gradient per composited hit, given the
/// upstream gradient `d_color` of the loss with respect to the ray color.
pub fn backprop_ray(
    ray: &Ray,
    snapshot: &SceneSnapshot,
    bvh: &Bvh,
    opts: &TraceOptions,
    d_color: &Vec3,
) -> Vec<HitGradient> {
    let (result, hits) = trace_ray_recorded(ray, snapshot, bvh, opts);
    let mut out = Vec::with_capacity(hits.len());
    backprop_recorded(ray, snapshot, &result, &hits, opts, d_color, |g| out.push(g));
    out
}

/// Backward pass over a recorded forward march.
pub(crate) fn backprop_recorded(
    ray: &Ray,
    snapshot: &SceneSnapshot,
    result: &TraceResult,
    hits: &[CompositedHit],
    opts: &TraceOptions,
    d_color: &Vec3,
    mut emit: impl FnMut(HitGradient),
) {
    let gaussians = snapshot.gaussians();
    let n_coeffs = sh::coeff_count(snapshot.sh_degree());
    let basis = sh::sh_basis(&ray.direction);
    // Radiance composited behind the current hit, background included.
    let mut behind = opts.background * result.transmittance;
    for h in hits.iter().rev() {
        let g = &gaussians[h.hit.gaussian_index];
        let c = h.color();
        let weight = h.transmittance * h.alpha;
        let mut grad = HitGradient::zero(h.hit.gaussian_index);

        for (k, b) in basis.iter().enumerate().take(n_coeffs) {
            grad.sh[k] = Vec3::from_fn(|ch, _| {
                let u = h.color_unclamped[ch];
                if (0.0..=1.0).contains(&u) {
                    d_color[ch] * weight * b
                } else {
                    0.0
                }
            });
        }

        if !h.alpha_clamped() {
            let d_alpha = d_color.dot(&(c * h.transmittance - behind / (1.0 - h.alpha)));
            shape_gradient(ray, g, h.hit.t_peak, h.hit.response, d_alpha, &mut grad);
        }

        behind += c * weight;
        emit(grad);
    }
}

/// Chains `dL/dalpha` through `alpha = opacity * exp(-m / 2)` into opacity,
/// mean, scale and rotation.
fn shape_gradient(ray: &Ray, g: &Gaussian, t: f64, response: f64, d_alpha: f64, grad: &mut HitGradient) {
    grad.opacity = d_alpha * response;
    let d_m = d_alpha * g.opacity * response * -0.5;

    let w = whitening(g);
    let y = ray.at(t) - g.mean;
    let z = w * y;
    grad.mean = w.transpose() * z * (-2.0 * d_m);
    // dm/dW = 2 z y^T, with W = S^-1 R^T.
    let d_w = z * y.transpose() * (2.0 * d_m);
    grad.scale = Vec3::from_fn(|a, _| -d_w.row(a).dot(&w.row(a)) / g.scale[a]);
    let d_r = Vec3::from_fn(|a, _| 1.0 / g.scale[a]);
    let d_r = (crate::math::Mat3::from_diagonal(&d_r) * d_w).transpose();
    let q = g.rotation;
    grad.rotation = rotation_matrix_vjp([q.w, q.i, q.j, q.k], &d_r);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{build_bvh, trace_ray};

    fn axis_ray() -> Ray {
        Ray::new(Vec3::zeros(), -Vec3::z())
    }

    #[test]
    fn dc_gradient_single_hit() {
        let opacity = 0.8;
        let g = Gaussian::isotropic(Vec3::new(0.0, 0.0, -3.0), 0.5, opacity, Vec3::repeat(1.0));
        let s = SceneSnapshot::new(vec![g], 0.0, 0).unwrap();
        let bvh = build_bvh(&s);
        for ch in 0..3 {
            let mut d = Vec3::zeros();
            d[ch] = 1.0;
            let grads = backprop_ray(&axis_ray(), &s, &bvh, &TraceOptions::default(), &d);
            assert_eq!(grads.len(), 1);
            assert!((grads[0].sh[0][ch] - 0.8 * sh::SH_C0).abs() < 1e-12);
            assert!((grads[0].sh[0][ch] - 0.8 * 0.282_094_79).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_opacity_has_zero_gradient() {
        let g0 = Gaussian::isotropic(Vec3::new(0.0, 0.0, -3.0), 0.5, 0.0, Vec3::new(0.3, -0.2, 0.5));
        let g1 = Gaussian::isotropic(Vec3::new(0.1, 0.0, -5.0), 0.8, 0.6, Vec3::new(0.1, 0.2, 0.3));
        let s = SceneSnapshot::new(vec![g0, g1], 0.0, 0).unwrap();
        let bvh = build_bvh(&s);
        let opts = TraceOptions { background: Vec3::new(0.2, 0.3, 0.4), ..Default::default() };
        let grads = backprop_ray(&axis_ray(), &s, &bvh, &opts, &Vec3::new(1.0, -0.5, 0.25));
        let g = grads.iter().find(|g| g.gaussian_index == 0).unwrap();
        assert_eq!(g.mean, Vec3::zeros());
        assert_eq!(g.scale, Vec3::zeros());
        assert_eq!(g.rotation, [0.0; 4]);
        assert_eq!(g.sh[0], Vec3::zeros());
        // Opacity itself still has a gradient: raising it from zero changes the color.
        assert!(g.opacity != 0.0);
    }

    #[test]
    fn opacity_gradient_matches_difference() {
        let mk = |o: f64| {
            let g0 = Gaussian::isotropic(Vec3::new(0.05, 0.0, -3.0), 0.5, o, Vec3::new(0.3, -0.2, 0.5));
            let g1 = Gaussian::isotropic(Vec3::new(0.1, 0.0, -5.0), 0.8, 0.6, Vec3::new(0.1, 0.2, 0.3));
            SceneSnapshot::new(vec![g0, g1], 0.0, 0).unwrap()
        };
        let opts = TraceOptions { background: Vec3::new(0.2, 0.3, 0.4), ..Default::default() };
        let dc = Vec3::new(1.0, -0.5, 0.25);
        let loss = |o: f64| {
            let s = mk(o);
            dc.dot(&trace_ray(&axis_ray(), &s, &build_bvh(&s), &opts).color)
        };
        let s = mk(0.5);
        let grads = backprop_ray(&axis_ray(), &s, &build_bvh(&s), &opts, &dc);
        let fd = (loss(0.5 + 1e-6) - loss(0.5 - 1e-6)) / 2e-6;
        let g = grads.iter().find(|g| g.gaussian_index == 0).unwrap();
        assert!((g.opacity - fd).abs() < 1e-8, "{} vs {fd}", g.opacity);
    }
}
