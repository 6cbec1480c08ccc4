//! Ray tracing of dynamic scenes made of anisotropic 3D Gaussians.
//!
//! The crate is organised around the pipeline a frame goes through:
//!
//! * [`scene`]: the Gaussian primitive, snapshots, covariance and SH color.
//! * [`deform`]: time-dependent deformation (keyframe tracks or a hexplane field).
//! * [`trace`]: BVH construction, per-Gaussian peak response and k-buffer compositing.
//! * [`camera`]: pinhole, polynomial fisheye, thin-lens and rolling-shutter ray generation.
//! * [`render`]: tiled frame rendering, rolling-shutter chunk orchestration.
//! * [`fit`]: gradient-based fitting of Gaussian parameters against reference images.
//! * [`image`] and [`metrics`]: PPM interchange, PSNR, SSIM and masked variants.

pub mod camera;
pub mod deform;
mod error;
pub mod fit;
pub mod image;
pub mod math;
pub mod metrics;
pub mod render;
pub mod scene;
pub mod trace;

pub use camera::{Camera, CameraPose, Effect, SensorSpec};
pub use deform::{deform_snapshot, Deformation};
pub use error::{Error, Result};
pub use image::ImageBuffer;
pub use scene::{Gaussian, SceneFile, SceneSnapshot};
pub use trace::{Bvh, GaussianHit, Ray};

pub use nalgebra::{Matrix3, Quaternion, Vector3};
