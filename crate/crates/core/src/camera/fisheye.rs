//! Polynomial fisheye: polar angle as a quartic in sensor radius (mm).

use serde::{Deserialize, Serialize};

use super::{CameraPose, SensorSpec};
use crate::math::Vec3;
use crate::trace::Ray;
use crate::{Error, Result};

/// `theta(r) = k0 + k1 r + k2 r^2 + k3 r^3 + k4 r^4`, `r` in millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FisheyeParams {
    pub k: [f64; 5],
}

impl FisheyeParams {
    pub fn equidistant(k1: f64) -> Self {
        FisheyeParams {
            k: [0.0, k1, 0.0, 0.0, 0.0],
        }
    }

    pub fn theta(&self, r: f64) -> f64 {
        let k = &self.k;
        k[0] + r * (k[1] + r * (k[2] + r * (k[3] + r * k[4])))
    }
}

/// Samples used to check that the polynomial does not fold over the sensor.
const MONOTONE_SAMPLES: usize = 4096;

/// A fisheye lens validated against a sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisheyeLens {
    params: FisheyeParams,
}

impl FisheyeLens {
    /// Rejects lenses whose polar angle is not strictly increasing over the
    /// sensor's radial range.
    pub fn new(params: FisheyeParams, sensor: &SensorSpec) -> Result<Self> {
        if !params.k.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidLens("non-finite coefficient".into()));
        }
        let r_max = sensor.max_radius_mm();
        let mut prev = params.theta(0.0);
        for i in 1..=MONOTONE_SAMPLES {
            let r = r_max * i as f64 / MONOTONE_SAMPLES as f64;
            let theta = params.theta(r);
            if !(theta > prev) {
                return Err(Error::InvalidLens(format!(
                    "theta(r) is not strictly increasing near r = {r:.4} mm"
                )));
            }
            prev = theta;
        }
        Ok(FisheyeLens { params })
    }

    pub fn params(&self) -> &FisheyeParams {
        &self.params
    }

    /// Camera-space direction for a sensor point, or `None` outside the lens field.
    pub fn direction(&self, x_mm: f64, y_mm: f64) -> Option<Vec3> {
        let r = x_mm.hypot(y_mm);
        let theta = self.params.theta(r);
        if !(0.0..=std::f64::consts::PI).contains(&theta) {
            return None;
        }
        let phi = y_mm.atan2(x_mm);
        let (st, ct) = theta.sin_cos();
        Some(Vec3::new(st * phi.cos(), st * phi.sin(), -ct))
    }

    pub fn ray(&self, pose: &CameraPose, sensor: &SensorSpec, pixel: (usize, usize), jitter: (f64, f64)) -> Option<Ray> {
        let (x, y) = sensor.sensor_point(pixel, jitter);
        self.direction(x, y).map(|d| pose.ray(d))
    }
}

pub fn fisheye_ray(
    pose: &CameraPose,
    sensor: &SensorSpec,
    lens: &FisheyeLens,
    pixel: (usize, usize),
    jitter: (f64, f64),
) -> Option<Ray> {
    lens.ray(pose, sensor, pixel, jitter)
}
