//! Synthetic scenes and cameras shared by the benchmarks.

use nalgebra::{Quaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatrace::camera::RollingShutterParams;
use splatrace::deform::{KeyframeTrack, Residuals};
use splatrace::{Camera, CameraPose, Deformation, Effect, Gaussian, SceneFile, SceneSnapshot, SensorSpec};

/// `n` random Gaussians in a 3-unit cube around the origin, moving linearly
/// by up to `max_speed` units over normalized time.
pub fn moving_scene(n: usize, max_speed: f64, seed: u64) -> SceneFile {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut gaussians = Vec::with_capacity(n);
    let mut end = Vec::with_capacity(n);
    for _ in 0..n {
        let q = Quaternion::new(
            r.random_range(0.1..1.0),
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
        );
        gaussians.push(Gaussian {
            mean: Vector3::new(r.random_range(-1.5..1.5), r.random_range(-1.5..1.5), r.random_range(-1.5..1.5)),
            rotation: q / q.norm(),
            scale: Vector3::new(r.random_range(0.02..0.12), r.random_range(0.02..0.12), r.random_range(0.02..0.12)),
            opacity: r.random_range(0.3..0.9),
            sh: vec![Vector3::new(r.random_range(-1.5..1.5), r.random_range(-1.5..1.5), r.random_range(-1.5..1.5))],
        });
        let mut speed = || if max_speed > 0.0 { r.random_range(-max_speed..max_speed) } else { 0.0 };
        end.push(Residuals {
            mean: [speed(), speed(), 0.0],
            ..Residuals::default()
        });
    }
    let canonical = SceneSnapshot::new(gaussians, 0.0, 0).expect("valid gaussians");
    let track = KeyframeTrack::new(vec![0.0, 1.0], vec![vec![Residuals::default(); n], end]).expect("valid track");
    SceneFile::new(canonical, Deformation::Keyframes(track)).expect("matching track")
}

pub fn camera(size: usize, effect: Effect) -> Camera {
    let pose = CameraPose::look_at(Vector3::new(0.0, 0.0, 6.0), Vector3::zeros(), Vector3::y()).expect("valid pose");
    let sensor = SensorSpec::new(size, size, 36.0, 36.0, Some(50.0)).expect("valid sensor");
    Camera::new(pose, sensor, effect).expect("valid camera")
}

pub fn rolling(chunk_rows: usize) -> Effect {
    Effect::Rolling(RollingShutterParams {
        readout_time: 0.1,
        frame_time: 0.0,
        time_scale: 1.0,
        chunk_rows,
    })
}
