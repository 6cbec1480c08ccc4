//! Ray casting through Gaussian snapshots.
//!
//! A hit is the point of maximum Gaussian response along the ray. Hits are
//! gathered from the [`Bvh`] into a small sorted k-buffer, composited front to
//! back, and the buffer is refilled by re-traversing past the last consumed
//! hit until the ray is saturated or no hits remain.

mod bvh;
mod composite;
mod response;

pub use bvh::{build_bvh, Aabb, Bvh, BvhNode};
pub use composite::{trace_ray, trace_ray_recorded, CompositedHit, TraceOptions, TraceResult};
pub use response::{gaussian_peak_response, whitening};

use crate::math::Vec3;
use crate::{Error, Result};

/// Hits whose response falls below this are dropped (a hundredth of an 8-bit quantum).
pub const RESPONSE_EPSILON: f64 = 0.01 / 255.0;
/// Upper clamp on per-hit alpha.
pub const ALPHA_MAX: f64 = 0.999;
/// Marching stops once transmittance falls below this.
pub const TRANSMITTANCE_MIN: f64 = 1e-4;
pub const DEFAULT_K: usize = 16;

/// Half-extent of a Gaussian's bounding box in standard deviations: the
/// Mahalanobis radius at which the response reaches [`RESPONSE_EPSILON`].
pub fn aabb_sigma() -> f64 {
    (2.0 * (1.0 / RESPONSE_EPSILON).ln()).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub t_min: f64,
    pub t_max: f64,
}

impl Ray {
    /// A ray over `[0, inf)`; the direction is normalized.
    pub fn new(origin: Vec3, direction: Vec3) -> Self {
        Ray {
            origin,
            direction: direction.normalize(),
            t_min: 0.0,
            t_max: f64::INFINITY,
        }
    }

    /// Validating constructor for externally supplied rays.
    pub fn try_new(origin: Vec3, direction: Vec3, t_min: f64, t_max: f64) -> Result<Self> {
        let n = direction.norm();
        if !crate::math::is_finite3(&origin) || !n.is_finite() || (n - 1.0).abs() > 1e-6 {
            return Err(Error::param("ray direction must be a finite unit vector"));
        }
        if !(t_min >= 0.0 && t_max > t_min) {
            return Err(Error::param(format!("invalid ray range [{t_min}, {t_max}]")));
        }
        Ok(Ray {
            origin,
            direction,
            t_min,
            t_max,
        })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Peak response of one Gaussian along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianHit {
    pub gaussian_index: usize,
    pub t_peak: f64,
    pub response: f64,
}

impl GaussianHit {
    /// Marching order: by `t_peak`, ties broken by the lower index.
    pub(crate) fn key(&self) -> (f64, usize) {
        (self.t_peak, self.gaussian_index)
    }
}

pub(crate) fn key_less(a: (f64, usize), b: (f64, usize)) -> bool {
    match a.0.total_cmp(&b.0) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Equal => a.1 < b.1,
        std::cmp::Ordering::Greater => false,
    }
}

/// Every hit of the snapshot along the ray, by exhaustive testing. Ordered
/// like the marching order.
pub fn brute_force_hits(ray: &Ray, snapshot: &crate::SceneSnapshot) -> Vec<GaussianHit> {
    let mut hits: Vec<GaussianHit> = snapshot
        .gaussians()
        .iter()
        .enumerate()
        .filter_map(|(i, g)| gaussian_peak_response(ray, g).map(|h| GaussianHit { gaussian_index: i, ..h }))
        .collect();
    hits.sort_by(|a, b| a.t_peak.total_cmp(&b.t_peak).then(a.gaussian_index.cmp(&b.gaussian_index)));
    hits
}
