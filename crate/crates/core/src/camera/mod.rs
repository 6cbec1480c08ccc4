//! Primary ray generation for pinhole, polynomial fisheye, thin-lens and
//! rolling-shutter cameras.
//!
//! Camera space looks down `-z` with `+x` right and `+y` up. Pixel `(i, j)`
//! is column `i`, row `j`, with row 0 at the top of the image.

mod dof;
mod fisheye;
mod rolling;

pub use dof::{concentric_disk, dof_sample_ray, lens_sample, DofParams};
pub use fisheye::{fisheye_ray, FisheyeLens, FisheyeParams};
pub use rolling::{chunk_schedule, row_sensing_time, Chunk, RollingShutterParams};

use std::fs;
use std::path::Path;

use nalgebra::Quaternion;
use serde::{Deserialize, Serialize};

use crate::math::{self, Mat3, Vec3};
use crate::trace::Ray;
use crate::{Error, Result};

/// Camera-to-world pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRecord", into = "PoseRecord")]
pub struct CameraPose {
    position: Vec3,
    orientation: Quaternion<f64>,
    rotation: Mat3,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseRecord {
    position: [f64; 3],
    orientation: [f64; 4],
}

impl TryFrom<PoseRecord> for CameraPose {
    type Error = Error;
    fn try_from(r: PoseRecord) -> Result<Self> {
        CameraPose::new(Vec3::from(r.position), math::quat_from_wxyz(r.orientation))
    }
}

impl From<CameraPose> for PoseRecord {
    fn from(p: CameraPose) -> Self {
        PoseRecord {
            position: p.position.into(),
            orientation: math::quat_to_wxyz(&p.orientation),
        }
    }
}

impl CameraPose {
    pub fn new(position: Vec3, orientation: Quaternion<f64>) -> Result<Self> {
        let n = orientation.norm();
        if !math::is_finite3(&position) || !n.is_finite() || (n - 1.0).abs() > 1e-6 {
            return Err(Error::param("camera pose needs a finite position and unit orientation"));
        }
        Ok(CameraPose {
            position,
            orientation,
            rotation: math::rotation_matrix(&orientation),
        })
    }

    /// Camera at `eye` looking at `target`, with `up` as the approximate up direction.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Self> {
        let back = (eye - target).normalize();
        let right = up.cross(&back);
        if !(right.norm() > 1e-12) {
            return Err(Error::param("look_at: up is parallel to the view direction"));
        }
        let right = right.normalize();
        let up = back.cross(&right);
        let m = Mat3::from_columns(&[right, up, back]);
        let rot = nalgebra::Rotation3::from_matrix_unchecked(m);
        let q = nalgebra::UnitQuaternion::from_rotation_matrix(&rot).into_inner();
        CameraPose::new(eye, q)
    }

    pub fn position(&self) -> Vec3 {
        self.position
    }

    pub fn orientation(&self) -> Quaternion<f64> {
        self.orientation
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn right(&self) -> Vec3 {
        self.rotation.column(0).into()
    }

    pub fn up(&self) -> Vec3 {
        self.rotation.column(1).into()
    }

    pub fn forward(&self) -> Vec3 {
        -Vec3::from(self.rotation.column(2))
    }

    /// World-space ray for a camera-space direction.
    fn ray(&self, dir_cam: Vec3) -> Ray {
        Ray::new(self.position, self.rotation * dir_cam)
    }
}

/// Physical sensor: pixel grid and its extent in millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    pub width_px: usize,
    pub height_px: usize,
    pub sensor_width_mm: f64,
    pub sensor_height_mm: f64,
    /// Required by the pinhole, thin-lens and rolling-shutter models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focal_length_mm: Option<f64>,
}

impl SensorSpec {
    pub fn new(width_px: usize, height_px: usize, sensor_width_mm: f64, sensor_height_mm: f64, focal_length_mm: Option<f64>) -> Result<Self> {
        let s = SensorSpec {
            width_px,
            height_px,
            sensor_width_mm,
            sensor_height_mm,
            focal_length_mm,
        };
        s.validate()?;
        Ok(s)
    }

    /// Square pixels: the millimeter height follows from the width and pixel aspect.
    pub fn square_pixels(width_px: usize, height_px: usize, sensor_width_mm: f64, focal_length_mm: Option<f64>) -> Result<Self> {
        let h = sensor_width_mm * height_px as f64 / width_px as f64;
        SensorSpec::new(width_px, height_px, sensor_width_mm, h, focal_length_mm)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width_px == 0 || self.height_px == 0 {
            return Err(Error::param("sensor pixel dimensions must be positive"));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.sensor_width_mm) || !positive(self.sensor_height_mm) {
            return Err(Error::param("sensor dimensions must be positive"));
        }
        if let Some(f) = self.focal_length_mm {
            if !positive(f) {
                return Err(Error::param("focal length must be positive"));
            }
        }
        let px = self.width_px as f64 / self.height_px as f64;
        let mm = self.sensor_width_mm / self.sensor_height_mm;
        if (px - mm).abs() > 1e-9 * px {
            return Err(Error::param(format!(
                "pixel aspect {px} differs from sensor aspect {mm}"
            )));
        }
        Ok(())
    }

    pub fn focal_length(&self) -> Result<f64> {
        self.focal_length_mm
            .ok_or_else(|| Error::param("this camera model needs sensor.focal_length_mm"))
    }

    /// Sensor-plane millimeters of a point on pixel `(i, j)` offset by `jitter`,
    /// relative to the principal point (`+y` up).
    pub fn sensor_point(&self, pixel: (usize, usize), jitter: (f64, f64)) -> (f64, f64) {
        let u = (pixel.0 as f64 + jitter.0) / self.width_px as f64;
        let v = (pixel.1 as f64 + jitter.1) / self.height_px as f64;
        ((u - 0.5) * self.sensor_width_mm, (0.5 - v) * self.sensor_height_mm)
    }

    /// Largest radial distance from the principal point on the sensor.
    pub fn max_radius_mm(&self) -> f64 {
        0.5 * self.sensor_width_mm.hypot(self.sensor_height_mm)
    }

    pub fn pixel_count(&self) -> usize {
        self.width_px * self.height_px
    }
}

pub const PIXEL_CENTER: (f64, f64) = (0.5, 0.5);

/// Ideal pinhole ray through `pixel + jitter`.
pub fn pinhole_ray(pose: &CameraPose, sensor: &SensorSpec, pixel: (usize, usize), jitter: (f64, f64)) -> Result<Ray> {
    Ok(pinhole_ray_with(pose, sensor, sensor.focal_length()?, pixel, jitter))
}

pub(crate) fn pinhole_ray_with(pose: &CameraPose, sensor: &SensorSpec, focal: f64, pixel: (usize, usize), jitter: (f64, f64)) -> Ray {
    let (x, y) = sensor.sensor_point(pixel, jitter);
    pose.ray(Vec3::new(x, y, -focal))
}

/// The optical model and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Effect {
    Pinhole,
    Fisheye(FisheyeParams),
    Dof(DofParams),
    Rolling(RollingShutterParams),
}

/// A complete, validated camera rig.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraRecord", into = "CameraRecord")]
pub struct Camera {
    pose: CameraPose,
    sensor: SensorSpec,
    effect: Effect,
    lens: Option<FisheyeLens>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraRecord {
    pose: CameraPose,
    sensor: SensorSpec,
    effect: Effect,
}

impl TryFrom<CameraRecord> for Camera {
    type Error = Error;
    fn try_from(r: CameraRecord) -> Result<Self> {
        Camera::new(r.pose, r.sensor, r.effect)
    }
}

impl From<Camera> for CameraRecord {
    fn from(c: Camera) -> Self {
        CameraRecord {
            pose: c.pose,
            sensor: c.sensor,
            effect: c.effect,
        }
    }
}

impl Camera {
    pub fn new(pose: CameraPose, sensor: SensorSpec, effect: Effect) -> Result<Self> {
        sensor.validate()?;
        let lens = match &effect {
            Effect::Fisheye(p) => Some(FisheyeLens::new(*p, &sensor)?),
            Effect::Pinhole => {
                sensor.focal_length()?;
                None
            }
            Effect::Dof(d) => {
                sensor.focal_length()?;
                d.validate()?;
                None
            }
            Effect::Rolling(r) => {
                sensor.focal_length()?;
                r.validate()?;
                None
            }
        };
        Ok(Camera {
            pose,
            sensor,
            effect,
            lens,
        })
    }

    pub fn pinhole(pose: CameraPose, sensor: SensorSpec) -> Result<Self> {
        Camera::new(pose, sensor, Effect::Pinhole)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json("camera", e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("camera serialization cannot fail")
    }

    pub fn pose(&self) -> &CameraPose {
        &self.pose
    }

    pub fn sensor(&self) -> &SensorSpec {
        &self.sensor
    }

    pub fn effect(&self) -> &Effect {
        &self.effect
    }

    pub fn width(&self) -> usize {
        self.sensor.width_px
    }

    pub fn height(&self) -> usize {
        self.sensor.height_px
    }

    /// Same pose and sensor with a different effect.
    pub fn with_effect(&self, effect: Effect) -> Result<Self> {
        Camera::new(self.pose, self.sensor, effect)
    }

    /// Appends the primary rays of a pixel to `out`. Fisheye pixels outside
    /// the lens field produce no ray; thin-lens pixels produce one ray per
    /// aperture sample (one when the aperture is closed).
    pub fn pixel_rays(&self, pixel: (usize, usize), out: &mut Vec<Ray>) {
        let focal = self.sensor.focal_length_mm.unwrap_or(f64::NAN);
        match &self.effect {
            Effect::Pinhole | Effect::Rolling(_) => {
                out.push(pinhole_ray_with(&self.pose, &self.sensor, focal, pixel, PIXEL_CENTER));
            }
            Effect::Fisheye(_) => {
                let lens = self.lens.as_ref().expect("fisheye lens built at construction");
                out.extend(lens.ray(&self.pose, &self.sensor, pixel, PIXEL_CENTER));
            }
            Effect::Dof(d) => {
                let samples = if d.aperture_radius == 0.0 { 1 } else { d.samples_per_pixel };
                for s in 0..samples {
                    out.push(dof::dof_ray_with(&self.pose, &self.sensor, focal, d, pixel, s));
                }
            }
        }
    }

    /// Distance from the camera center to a world point.
    pub fn distance_to(&self, p: &Vec3) -> f64 {
        (p - self.pose.position).norm()
    }
}
