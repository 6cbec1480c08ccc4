//! Time-dependent deformation of a canonical Gaussian set.

mod hexplane;
mod keyframes;

pub use hexplane::{
    decode_residuals, encode_spacetime, interp_plane, Bounds, Dense, DeformationHeads, FeaturePlane,
    HexPlaneField, Mlp, PLANE_AXES, PLANE_NAMES,
};
pub use keyframes::KeyframeTrack;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::math::Vec3;
use crate::scene::{Gaussian, SceneSnapshot};
use crate::{Error, Result};

/// Floor applied to scale components after a residual is added.
pub const SCALE_EPSILON: f64 = 1e-6;

/// How the canonical scene moves over normalized time.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Deformation {
    #[default]
    None,
    Keyframes(KeyframeTrack),
    Hexplane(HexPlaneField),
}

impl Deformation {
    /// Checks that the deformation can be applied to a scene of `count` Gaussians.
    pub fn validate_for(&self, count: usize) -> Result<()> {
        match self {
            Deformation::Keyframes(track) => track.validate_for(count),
            _ => Ok(()),
        }
    }

    pub fn is_static(&self) -> bool {
        matches!(self, Deformation::None)
    }

    /// The deformation for a scene whose Gaussian `i` descends from Gaussian
    /// `origins[i]` of the current one.
    pub(crate) fn remap(&self, origins: &[usize]) -> Deformation {
        match self {
            Deformation::Keyframes(track) => Deformation::Keyframes(track.select(origins)),
            other => other.clone(),
        }
    }

    pub(crate) fn residuals(&self, index: usize, g: &Gaussian, t: f64) -> Residuals {
        match self {
            Deformation::None => Residuals::default(),
            Deformation::Keyframes(track) => track.residual(index, t),
            Deformation::Hexplane(field) => field.residual_at(&g.mean, t),
        }
    }
}

/// Additive residuals for one Gaussian: mean offset, quaternion increment
/// (`[w, x, y, z]`) and scale offset.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Residuals {
    pub mean: [f64; 3],
    pub rotation: [f64; 4],
    pub scale: [f64; 3],
}

impl Residuals {
    pub fn is_zero(&self) -> bool {
        self.mean.iter().chain(&self.rotation).chain(&self.scale).all(|v| *v == 0.0)
    }
}

/// Applies residuals to a Gaussian. Components whose residual is exactly zero
/// are left bit-identical.
pub fn apply_residuals(g: &Gaussian, r: &Residuals) -> Gaussian {
    let mut out = g.clone();
    for k in 0..3 {
        if r.mean[k] != 0.0 {
            out.mean[k] += r.mean[k];
        }
        if r.scale[k] != 0.0 {
            out.scale[k] = (g.scale[k] + r.scale[k]).max(SCALE_EPSILON);
        }
    }
    if r.rotation.iter().any(|v| *v != 0.0) {
        let [w, x, y, z] = r.rotation;
        let q = g.rotation + nalgebra::Quaternion::new(w, x, y, z);
        let n = q.norm();
        // A residual that cancels the rotation has no direction to normalize; keep the canonical one.
        if n > 1e-12 && n.is_finite() {
            out.rotation = q / n;
        }
    }
    out
}

/// The deformed snapshot at normalized time `t`.
pub fn deform_snapshot(
    canonical: &SceneSnapshot,
    deformation: &Deformation,
    t: f64,
) -> Result<SceneSnapshot> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::param(format!("time {t} outside [0, 1]")));
    }
    deformation.validate_for(canonical.len())?;
    if deformation.is_static() {
        return Ok(canonical.clone().with_time(t));
    }
    let gaussians: Vec<Gaussian> = canonical
        .gaussians()
        .par_iter()
        .enumerate()
        .map(|(i, g)| apply_residuals(g, &deformation.residuals(i, g, t)))
        .collect();
    Ok(SceneSnapshot::new_unchecked(gaussians, t, canonical.sh_degree()))
}

/// Mean offsets of every Gaussian at time `t`, without building a snapshot.
pub fn mean_offsets(canonical: &SceneSnapshot, deformation: &Deformation, t: f64) -> Vec<Vec3> {
    canonical
        .gaussians()
        .iter()
        .enumerate()
        .map(|(i, g)| Vec3::from(deformation.residuals(i, g, t).mean))
        .collect()
}
