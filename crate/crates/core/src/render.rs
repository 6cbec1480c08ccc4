//! Frame rendering: tiled parallel tracing, thin-lens averaging and
//! rolling-shutter chunk orchestration.

use std::ops::Range;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::camera::{chunk_schedule, Camera, Effect, RollingShutterParams};
use crate::image::ImageBuffer;
use crate::math::Vec3;
use crate::scene::{SceneFile, SceneSnapshot};
use crate::trace::{trace_ray, Bvh, Ray, TraceOptions, DEFAULT_K};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub k: usize,
    pub background: Vec3,
    /// Side of the square pixel tiles handed to worker threads.
    pub tile_size: usize,
    /// Worker threads; 0 uses the global pool.
    pub threads: usize,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            k: DEFAULT_K,
            background: Vec3::zeros(),
            tile_size: 16,
            threads: 0,
        }
    }
}

impl RenderOptions {
    fn trace(&self) -> TraceOptions {
        TraceOptions {
            k: self.k,
            background: self.background,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tile_size == 0 {
            return Err(Error::param("tile size must be at least 1"));
        }
        if self.k == 0 {
            return Err(Error::param("k-buffer size must be at least 1"));
        }
        if !self.background.iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(Error::param("background color must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Runs `f` on a pool with the requested thread count.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> Result<R> {
        if self.threads == 0 {
            return Ok(f());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| Error::param(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
}

/// Mean traced radiance over a pixel's primary rays; background when it has none.
pub(crate) fn shade_pixel(
    camera: &Camera,
    snapshot: &SceneSnapshot,
    bvh: &Bvh,
    opts: &TraceOptions,
    pixel: (usize, usize),
    rays: &mut Vec<Ray>,
) -> Vec3 {
    rays.clear();
    camera.pixel_rays(pixel, rays);
    if rays.is_empty() {
        return opts.background;
    }
    let sum = rays
        .iter()
        .fold(Vec3::zeros(), |acc, r| acc + trace_ray(r, snapshot, bvh, opts).color);
    sum / rays.len() as f64
}

/// Renders the pixels of `rows` against one snapshot, tile-parallel. Returns
/// interleaved RGB for those rows.
fn render_rows(
    camera: &Camera,
    snapshot: &SceneSnapshot,
    bvh: &Bvh,
    rows: Range<usize>,
    opts: &RenderOptions,
) -> Vec<f64> {
    let width = camera.width();
    let tile = opts.tile_size;
    let trace = opts.trace();
    let tiles: Vec<(Range<usize>, Range<usize>)> = rows
        .clone()
        .step_by(tile)
        .flat_map(|y0| {
            let ys = y0..(y0 + tile).min(rows.end);
            (0..width)
                .step_by(tile)
                .map(move |x0| (x0..(x0 + tile).min(width), ys.clone()))
        })
        .collect();
    let shaded: Vec<Vec<Vec3>> = tiles
        .par_iter()
        .map(|(xs, ys)| {
            let mut rays = Vec::new();
            let mut out = Vec::with_capacity(xs.len() * ys.len());
            for y in ys.clone() {
                for x in xs.clone() {
                    out.push(shade_pixel(camera, snapshot, bvh, &trace, (x, y), &mut rays));
                }
            }
            out
        })
        .collect();
    let mut data = vec![0.0; rows.len() * width * 3];
    for ((xs, ys), colors) in tiles.iter().zip(shaded) {
        let mut it = colors.into_iter();
        for y in ys.clone() {
            for x in xs.clone() {
                let c = it.next().expect("tile size");
                let i = 3 * ((y - rows.start) * width + x);
                for k in 0..3 {
                    data[i + k] = c[k].clamp(0.0, 1.0);
                }
            }
        }
    }
    data
}

/// Renders one full frame of a fixed snapshot.
pub fn render_snapshot(camera: &Camera, snapshot: &SceneSnapshot, opts: &RenderOptions) -> Result<ImageBuffer> {
    opts.validate()?;
    opts.install(|| {
        let bvh = Bvh::build(snapshot);
        let data = render_rows(camera, snapshot, &bvh, 0..camera.height(), opts);
        ImageBuffer::from_rgb(camera.width(), camera.height(), data)
    })?
}

/// Renders the scene at normalized time `t`. Rolling-shutter cameras start
/// their readout at `t`.
pub fn render_frame(scene: &SceneFile, camera: &Camera, t: f64, opts: &RenderOptions) -> Result<ImageBuffer> {
    if let Effect::Rolling(rs) = camera.effect() {
        let rs = RollingShutterParams { frame_time: t, ..*rs };
        return render_rolling_frame(scene, camera, &rs, opts);
    }
    let snapshot = scene.at(t)?;
    render_snapshot(camera, &snapshot, opts)
}

/// Rolling-shutter frame: each chunk of rows is traced against the scene
/// deformed at the chunk's mean sensing time. Rays are pinhole rays.
pub fn render_rolling_frame(
    scene: &SceneFile,
    camera: &Camera,
    rs: &RollingShutterParams,
    opts: &RenderOptions,
) -> Result<ImageBuffer> {
    rs.validate()?;
    opts.validate()?;
    let camera = camera.with_effect(Effect::Rolling(*rs))?;
    let chunks = chunk_schedule(rs, camera.height());
    let parts: Vec<Result<Vec<f64>>> = opts.install(|| {
        chunks
            .par_iter()
            .map(|chunk| {
                let snapshot = scene.at(chunk.time)?;
                let bvh = Bvh::build(&snapshot);
                Ok(render_rows(&camera, &snapshot, &bvh, chunk.rows.clone(), opts))
            })
            .collect()
    })?;
    let mut data = Vec::with_capacity(camera.width() * camera.height() * 3);
    for part in parts {
        data.extend(part?);
    }
    ImageBuffer::from_rgb(camera.width(), camera.height(), data)
}

/// A rendering request as issued from the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderJob {
    pub scene: PathBuf,
    pub camera: PathBuf,
    pub t0: f64,
    pub t1: f64,
    pub frames: usize,
    /// Overrides the thin-lens sample count when set.
    pub samples_per_pixel: Option<usize>,
    pub options: RenderOptions,
}

impl RenderJob {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::param("frame count must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.t0) || !(0.0..=1.0).contains(&self.t1) || self.t0 > self.t1 {
            return Err(Error::param(format!("invalid time range [{}, {}]", self.t0, self.t1)));
        }
        if self.samples_per_pixel == Some(0) {
            return Err(Error::param("samples per pixel must be at least 1"));
        }
        self.options.validate()
    }

    /// Time of frame `i`: evenly spaced over `[t0, t1]`, a single frame at `t0`.
    pub fn frame_time(&self, i: usize) -> f64 {
        if self.frames <= 1 {
            return self.t0;
        }
        self.t0 + i as f64 * (self.t1 - self.t0) / (self.frames - 1) as f64
    }

    pub fn frame_name(i: usize) -> String {
        format!("frame_{i:05}.ppm")
    }

    /// Loads the scene and camera, applying the sample-count override.
    pub fn load(&self) -> Result<(SceneFile, Camera)> {
        self.validate()?;
        let scene = crate::scene::load_scene(&self.scene)?;
        let mut camera = Camera::load(&self.camera)?;
        if let (Some(spp), Effect::Dof(d)) = (self.samples_per_pixel, camera.effect()) {
            let d = crate::camera::DofParams { samples_per_pixel: spp, ..*d };
            camera = camera.with_effect(Effect::Dof(d))?;
        }
        Ok((scene, camera))
    }

    /// Renders every frame into `out_dir`, returning the written paths.
    pub fn render_sequence(&self, out_dir: &Path) -> Result<Vec<PathBuf>> {
        let (scene, camera) = self.load()?;
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        (0..self.frames)
            .map(|i| {
                let img = render_frame(&scene, &camera, self.frame_time(i), &self.options)?;
                let path = out_dir.join(Self::frame_name(i));
                img.save_ppm(&path)?;
                Ok(path)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{CameraPose, DofParams, SensorSpec};
    use crate::scene::Gaussian;

    fn camera(effect: Effect) -> Camera {
        let pose = CameraPose::look_at(Vec3::new(0.0, 0.0, 5.0), Vec3::zeros(), Vec3::y()).unwrap();
        let sensor = SensorSpec::new(33, 25, 33.0, 25.0, Some(35.0)).unwrap();
        Camera::new(pose, sensor, effect).unwrap()
    }

    fn one_gaussian() -> SceneFile {
        let g = Gaussian::isotropic(Vec3::zeros(), 0.4, 1.0, Vec3::repeat(1.0));
        SceneFile::static_scene(SceneSnapshot::new(vec![g], 0.0, 0).unwrap())
    }

    #[test]
    fn empty_scene_is_background() {
        let scene = SceneFile::static_scene(SceneSnapshot::new(vec![], 0.0, 0).unwrap());
        let bg = Vec3::new(0.2, 0.4, 0.6);
        let opts = RenderOptions { background: bg, ..Default::default() };
        let img = render_frame(&scene, &camera(Effect::Pinhole), 0.0, &opts).unwrap();
        assert_eq!(img, ImageBuffer::filled(33, 25, bg));
    }

    #[test]
    fn brightest_pixel_at_center() {
        let img = render_frame(&one_gaussian(), &camera(Effect::Pinhole), 0.0, &RenderOptions::default()).unwrap();
        let mut best = (0, 0, f64::MIN);
        for y in 0..25 {
            for x in 0..33 {
                if img.intensity(x, y) > best.2 {
                    best = (x, y, img.intensity(x, y));
                }
            }
        }
        assert_eq!((best.0, best.1), (16, 12));
    }

    #[test]
    fn thread_and_tile_independence() {
        let scene = one_gaussian();
        let cam = camera(Effect::Dof(DofParams { focus_distance: 3.0, aperture_radius: 0.2, samples_per_pixel: 4, rng_seed: 5 }));
        let base = render_frame(&scene, &cam, 0.0, &RenderOptions { threads: 1, tile_size: 4, ..Default::default() }).unwrap();
        for (threads, tile) in [(8, 4), (3, 7), (2, 64)] {
            let img = render_frame(&scene, &cam, 0.0, &RenderOptions { threads, tile_size: tile, ..Default::default() }).unwrap();
            assert_eq!(img.to_ppm(), base.to_ppm());
            assert_eq!(img, base);
        }
    }

    #[test]
    fn frame_times() {
        let job = RenderJob {
            scene: "s".into(),
            camera: "c".into(),
            t0: 0.2,
            t1: 0.6,
            frames: 5,
            samples_per_pixel: None,
            options: RenderOptions::default(),
        };
        assert_eq!(job.frame_time(0), 0.2);
        assert!((job.frame_time(4) - 0.6).abs() < 1e-15);
        assert!((job.frame_time(2) - 0.4).abs() < 1e-15);
        assert_eq!(RenderJob { frames: 1, ..job.clone() }.frame_time(0), 0.2);
        assert_eq!(RenderJob::frame_name(7), "frame_00007.ppm");
        assert!(RenderJob { frames: 0, ..job.clone() }.validate().is_err());
        assert!(RenderJob { t0: 0.7, ..job }.validate().is_err());
    }
}
