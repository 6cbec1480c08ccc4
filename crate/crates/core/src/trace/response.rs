use super::{GaussianHit, Ray, RESPONSE_EPSILON};
use crate::math::{Mat3, Vec3};
use crate::scene::Gaussian;

/// `S^-1 R^T`: maps world offsets into the Gaussian's unit-sphere frame, so
/// that `|W x|^2 = x^T Sigma^-1 x`.
pub fn whitening(g: &Gaussian) -> Mat3 {
    let r = g.rotation_matrix();
    let inv_s = Mat3::from_diagonal(&g.scale.map(|s| 1.0 / s));
    inv_s * r.transpose()
}

/// Ray parameter of maximum response (clamped to the ray range) and the
/// squared Mahalanobis distance there, in the whitened frame.
pub(crate) fn peak_whitened(o: &Vec3, d: &Vec3, t_min: f64, t_max: f64) -> (f64, f64) {
    let dd = d.dot(d);
    let t = (-o.dot(d) / dd).clamp(t_min, t_max);
    let x = o + d * t;
    (t, x.dot(&x))
}

pub(crate) fn peak_with(ray: &Ray, mean: &Vec3, whiten: &Mat3) -> Option<(f64, f64)> {
    let o = whiten * (ray.origin - mean);
    let d = whiten * ray.direction;
    let (t, m) = peak_whitened(&o, &d, ray.t_min, ray.t_max);
    let response = (-0.5 * m).exp();
    (response >= RESPONSE_EPSILON).then_some((t, response))
}

/// Peak response of `g` along `ray`, or `None` below [`RESPONSE_EPSILON`].
/// The returned hit carries index 0; callers set the index.
pub fn gaussian_peak_response(ray: &Ray, g: &Gaussian) -> Option<GaussianHit> {
    peak_with(ray, &g.mean, &whitening(g)).map(|(t_peak, response)| GaussianHit {
        gaussian_index: 0,
        t_peak,
        response,
    })
}
