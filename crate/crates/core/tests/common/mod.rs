#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatrace::deform::{KeyframeTrack, Residuals};
use splatrace::scene::sh;
use splatrace::trace::{gaussian_peak_response, ALPHA_MAX, TRANSMITTANCE_MIN};
use splatrace::{Gaussian, Quaternion, Ray, SceneSnapshot, Vector3};

pub type Vec3 = Vector3<f64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_unit_quat(rng: &mut ChaCha8Rng) -> Quaternion<f64> {
    loop {
        let q = Quaternion::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = q.norm();
        if n > 0.1 && n <= 1.0 {
            return q / n;
        }
    }
}

/// Gaussians scattered in `[-2, 2] x [-2, 2] x [-7, -2]`, in view of rays from
/// the origin down `-z`.
pub fn random_scene(seed: u64, n: usize, sh_degree: u8) -> SceneSnapshot {
    let mut r = rng(seed);
    let coeffs = sh::coeff_count(sh_degree);
    let gaussians = (0..n)
        .map(|_| Gaussian {
            mean: Vec3::new(r.random_range(-2.0..2.0), r.random_range(-2.0..2.0), r.random_range(-7.0..-2.0)),
            rotation: random_unit_quat(&mut r),
            scale: Vec3::new(r.random_range(0.05..0.5), r.random_range(0.05..0.5), r.random_range(0.05..0.5)),
            opacity: r.random_range(0.05..0.95),
            sh: (0..coeffs)
                .map(|k| {
                    let amp = if k == 0 { 1.5 } else { 0.3 };
                    Vec3::new(r.random_range(-amp..amp), r.random_range(-amp..amp), r.random_range(-amp..amp))
                })
                .collect(),
        })
        .collect();
    SceneSnapshot::new(gaussians, 0.0, sh_degree).unwrap()
}

/// Rays from near the origin toward the `random_scene` volume.
pub fn random_rays(seed: u64, n: usize) -> Vec<Ray> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let origin = Vec3::new(r.random_range(-0.2..0.2), r.random_range(-0.2..0.2), r.random_range(-0.2..0.2));
            let target = Vec3::new(r.random_range(-2.0..2.0), r.random_range(-2.0..2.0), -4.5);
            Ray::new(origin, target - origin)
        })
        .collect()
}

/// Global-sort compositing: every Gaussian's peak response, sorted by
/// `(t, index)`, composited front to back with the tracer's clamps.
pub fn global_sort_color(ray: &Ray, snapshot: &SceneSnapshot, background: Vec3) -> Vec3 {
    let mut hits: Vec<(f64, usize, f64)> = snapshot
        .gaussians()
        .iter()
        .enumerate()
        .filter_map(|(i, g)| gaussian_peak_response(ray, g).map(|h| (h.t_peak, i, h.response)))
        .collect();
    hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut color = Vec3::zeros();
    let mut transmittance = 1.0;
    for (_, i, response) in hits {
        let g = &snapshot.gaussians()[i];
        let alpha = (g.opacity * response).min(ALPHA_MAX);
        let c = sh::sh_eval_color(&g.sh, &ray.direction).unwrap();
        color += c * (transmittance * alpha);
        transmittance *= 1.0 - alpha;
        if transmittance < TRANSMITTANCE_MIN {
            break;
        }
    }
    color + background * transmittance
}

/// Linear mean motion from `t = 0` to `t = 1`.
pub fn linear_track(velocities: &[Vec3]) -> KeyframeTrack {
    let at = |s: f64| {
        velocities
            .iter()
            .map(|v| Residuals { mean: (v * s).into(), ..Residuals::default() })
            .collect::<Vec<_>>()
    };
    KeyframeTrack::new(vec![0.0, 1.0], vec![at(0.0), at(1.0)]).unwrap()
}
