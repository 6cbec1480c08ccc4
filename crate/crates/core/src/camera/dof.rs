//! Thin-lens depth of field: aperture-jittered rays refocused on the point
//! at the focus distance along the pinhole ray.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{pinhole_ray_with, CameraPose, SensorSpec, PIXEL_CENTER};
use crate::trace::Ray;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DofParams {
    /// Distance along the pinhole ray to the in-focus point, world units.
    pub focus_distance: f64,
    pub aperture_radius: f64,
    #[serde(default = "default_spp")]
    pub samples_per_pixel: usize,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_spp() -> usize {
    16
}

impl DofParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.focus_distance.is_finite() && self.focus_distance > 0.0) {
            return Err(Error::param("focus_distance must be positive"));
        }
        if !(self.aperture_radius.is_finite() && self.aperture_radius >= 0.0) {
            return Err(Error::param("aperture_radius must be non-negative"));
        }
        if self.samples_per_pixel == 0 {
            return Err(Error::param("samples_per_pixel must be at least 1"));
        }
        Ok(())
    }
}

/// Shirley-Chiu concentric map from the unit square to the unit disk.
pub fn concentric_disk(u1: f64, u2: f64) -> (f64, f64) {
    let a = 2.0 * u1 - 1.0;
    let b = 2.0 * u2 - 1.0;
    if a == 0.0 && b == 0.0 {
        return (0.0, 0.0);
    }
    let (r, phi) = if a.abs() > b.abs() {
        (a, std::f64::consts::FRAC_PI_4 * (b / a))
    } else {
        (b, std::f64::consts::FRAC_PI_2 - std::f64::consts::FRAC_PI_4 * (a / b))
    };
    (r * phi.cos(), r * phi.sin())
}

/// Unit-disk aperture sample for `(seed, pixel, sample_index)`. Counter-based:
/// each pixel owns a ChaCha stream and each sample a fixed block in it.
pub fn lens_sample(seed: u64, pixel_index: u64, sample_index: usize) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(pixel_index);
    // Two f64 draws consume four 32-bit words.
    rng.set_word_pos(sample_index as u128 * 4);
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    concentric_disk(u1, u2)
}

pub fn dof_sample_ray(
    pose: &CameraPose,
    sensor: &SensorSpec,
    dof: &DofParams,
    pixel: (usize, usize),
    sample_index: usize,
) -> Result<Ray> {
    dof.validate()?;
    if sample_index >= dof.samples_per_pixel {
        return Err(Error::param(format!(
            "sample {sample_index} out of range for {} samples per pixel",
            dof.samples_per_pixel
        )));
    }
    Ok(dof_ray_with(pose, sensor, sensor.focal_length()?, dof, pixel, sample_index))
}

pub(crate) fn dof_ray_with(
    pose: &CameraPose,
    sensor: &SensorSpec,
    focal: f64,
    dof: &DofParams,
    pixel: (usize, usize),
    sample_index: usize,
) -> Ray {
    let pinhole = pinhole_ray_with(pose, sensor, focal, pixel, PIXEL_CENTER);
    if dof.aperture_radius == 0.0 {
        return pinhole;
    }
    let focus = pinhole.at(dof.focus_distance);
    let pixel_index = (pixel.1 * sensor.width_px + pixel.0) as u64;
    let (lx, ly) = lens_sample(dof.rng_seed, pixel_index, sample_index);
    let origin = pinhole.origin + (pose.right() * lx + pose.up() * ly) * dof.aperture_radius;
    Ray::new(origin, focus - origin)
}
