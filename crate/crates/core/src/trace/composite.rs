use super::{Bvh, GaussianHit, Ray, ALPHA_MAX, DEFAULT_K, TRANSMITTANCE_MIN};
use crate::math::Vec3;
use crate::scene::{sh, SceneSnapshot};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    /// k-buffer capacity. Affects speed only.
    pub k: usize,
    pub background: Vec3,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            k: DEFAULT_K,
            background: Vec3::zeros(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceResult {
    /// Composited radiance including the background term.
    pub color: Vec3,
    /// Transmittance left after the last composited hit.
    pub transmittance: f64,
}

/// One composited hit, kept for gradient replay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositedHit {
    pub hit: GaussianHit,
    pub alpha: f64,
    /// Transmittance in front of this hit.
    pub transmittance: f64,
    /// SH color before clamping to `[0, 1]`.
    pub color_unclamped: Vec3,
}

impl CompositedHit {
    pub fn color(&self) -> Vec3 {
        self.color_unclamped.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn alpha_clamped(&self) -> bool {
        self.alpha >= ALPHA_MAX
    }
}

/// Front-to-back compositing of the hits along `ray`.
pub fn trace_ray(ray: &Ray, snapshot: &SceneSnapshot, bvh: &Bvh, opts: &TraceOptions) -> TraceResult {
    march(ray, snapshot, bvh, opts, |_| {})
}

/// Like [`trace_ray`], also returning every composited hit in order.
pub fn trace_ray_recorded(
    ray: &Ray,
    snapshot: &SceneSnapshot,
    bvh: &Bvh,
    opts: &TraceOptions,
) -> (TraceResult, Vec<CompositedHit>) {
    let mut hits = Vec::new();
    let result = march(ray, snapshot, bvh, opts, |h| hits.push(h));
    (result, hits)
}

fn march(
    ray: &Ray,
    snapshot: &SceneSnapshot,
    bvh: &Bvh,
    opts: &TraceOptions,
    mut record: impl FnMut(CompositedHit),
) -> TraceResult {
    debug_assert_eq!(snapshot.len(), bvh.len(), "bvh built from another snapshot");
    let k = opts.k.max(1);
    let gaussians = snapshot.gaussians();
    let basis = sh::sh_basis(&ray.direction);
    let n_coeffs = sh::coeff_count(snapshot.sh_degree());

    let mut color = Vec3::zeros();
    let mut transmittance = 1.0;
    let mut buf = Vec::with_capacity(k);
    let mut after = None;
    'march: loop {
        bvh.collect(ray, after, k, &mut buf);
        for hit in &buf {
            let g = &gaussians[hit.gaussian_index];
            let alpha = (g.opacity * hit.response).min(ALPHA_MAX);
            let mut c = Vec3::repeat(0.5);
            for (coeff, b) in g.sh[..n_coeffs].iter().zip(&basis) {
                c += coeff * *b;
            }
            record(CompositedHit {
                hit: *hit,
                alpha,
                transmittance,
                color_unclamped: c,
            });
            color += c.map(|v| v.clamp(0.0, 1.0)) * (transmittance * alpha);
            transmittance *= 1.0 - alpha;
            if transmittance < TRANSMITTANCE_MIN {
                break 'march;
            }
        }
        if buf.len() < k {
            break;
        }
        after = buf.last().map(GaussianHit::key);
    }
    TraceResult {
        color: color + opts.background * transmittance,
        transmittance,
    }
}
