//! Gradient-based fitting of Gaussian parameters to reference images under
//! the L1 photometric loss.
//!
//! Each iteration samples one reference view, renders it with the current
//! parameters, and backpropagates the per-pixel loss through the compositing
//! of every primary ray. Per-row-block gradient buffers are reduced in block
//! order, so the result does not depend on the thread count.

mod backprop;
mod densify;
mod params;

pub use backprop::{backprop_ray, HitGradient};
pub use densify::{densify_and_prune, DensifyRule, Origin};
pub use params::{Adam, FitParams, LearningRates, ParamGradients, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON, OPACITY_CLAMP};

use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{chunk_schedule, Camera, Effect, RollingShutterParams};
use crate::deform::{Deformation, Residuals};
use crate::image::ImageBuffer;
use crate::math::Vec3;
use crate::metrics::psnr_from_mse;
use crate::render::RenderOptions;
use crate::scene::{SceneFile, SceneSnapshot};
use crate::trace::{trace_ray_recorded, Bvh, TraceOptions};
use crate::{Error, Result};

/// Rows per gradient block.
const BLOCK_ROWS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub iterations: usize,
    /// Leading iterations that fit the undeformed canonical scene against the
    /// earliest-time references only.
    pub coarse_iterations: usize,
    pub lr: LearningRates,
    /// Densify every this many iterations; 0 disables densification.
    pub densify_interval: usize,
    pub densify_threshold: f64,
    /// Multiply mean-gradient norms by the camera distance before thresholding.
    pub densify_distance_scaling: bool,
    pub split_scale_fraction: f64,
    pub prune_opacity: f64,
    pub rng_seed: u64,
    pub k: usize,
    pub background: [f64; 3],
    /// Worker threads; 0 uses the global pool.
    pub threads: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        let rule = DensifyRule::default();
        FitConfig {
            iterations: 1000,
            coarse_iterations: 0,
            lr: LearningRates::default(),
            densify_interval: 100,
            densify_threshold: rule.threshold,
            densify_distance_scaling: false,
            split_scale_fraction: rule.split_scale_fraction,
            prune_opacity: rule.prune_opacity,
            rng_seed: 0,
            k: crate::trace::DEFAULT_K,
            background: [0.0; 3],
            threads: 0,
        }
    }
}

impl FitConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: FitConfig = serde_json::from_str(text).map_err(|e| Error::json("fit config", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lr.all().iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::param("learning rates must be finite and non-negative"));
        }
        if self.iterations == 0 {
            return Err(Error::param("iterations must be at least 1"));
        }
        if self.coarse_iterations > self.iterations {
            return Err(Error::param("coarse_iterations exceeds iterations"));
        }
        if !(self.densify_threshold.is_finite() && self.densify_threshold > 0.0) {
            return Err(Error::param("densify_threshold must be positive"));
        }
        if !(self.split_scale_fraction.is_finite() && self.split_scale_fraction >= 0.0) {
            return Err(Error::param("split_scale_fraction must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.prune_opacity) {
            return Err(Error::param("prune_opacity must lie in [0, 1]"));
        }
        self.render_options().validate()
    }

    pub fn densify_rule(&self) -> DensifyRule {
        DensifyRule {
            threshold: self.densify_threshold,
            split_scale_fraction: self.split_scale_fraction,
            prune_opacity: self.prune_opacity,
            ..DensifyRule::default()
        }
    }

    fn render_options(&self) -> RenderOptions {
        RenderOptions {
            k: self.k,
            background: Vec3::from(self.background),
            threads: self.threads,
            ..RenderOptions::default()
        }
    }
}

/// A ground-truth image with the camera and time it was taken at.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub image: ImageBuffer,
    pub camera: Camera,
    pub time: f64,
}

impl Reference {
    pub fn new(image: ImageBuffer, camera: Camera, time: f64) -> Result<Self> {
        if image.width() != camera.width() || image.height() != camera.height() {
            return Err(Error::DimensionMismatch(image.width(), image.height(), camera.width(), camera.height()));
        }
        if !(0.0..=1.0).contains(&time) {
            return Err(Error::param(format!("reference time {time} outside [0, 1]")));
        }
        Ok(Reference { image, camera, time })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReferencesRecord {
    references: Vec<ReferenceRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReferenceRecord {
    image: PathBuf,
    camera: CameraSource,
    time: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CameraSource {
    Path(PathBuf),
    Inline(Box<Camera>),
}

/// Loads `{"references": [{"image", "camera", "time"}]}`. Image and camera
/// paths are relative to the references file; cameras may also be inline.
pub fn load_references(path: impl AsRef<Path>) -> Result<Vec<Reference>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let record: ReferencesRecord = serde_json::from_str(&text).map_err(|e| Error::json("references", e))?;
    if record.references.is_empty() {
        return Err(Error::param("at least one reference image is required"));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    record
        .references
        .into_iter()
        .map(|r| {
            let camera = match r.camera {
                CameraSource::Path(p) => Camera::load(base.join(p))?,
                CameraSource::Inline(c) => *c,
            };
            let image = ImageBuffer::load_ppm(base.join(&r.image))?;
            Reference::new(image, camera, r.time)
        })
        .collect()
}

/// Mean absolute difference over all pixels and channels.
pub fn l1_loss(rendered: &ImageBuffer, reference: &ImageBuffer) -> Result<f64> {
    rendered.same_size(reference)?;
    let n = rendered.data().len();
    if n == 0 {
        return Ok(0.0);
    }
    Ok(rendered.data().iter().zip(reference.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / n as f64)
}

/// One row of the loss trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub loss: f64,
    /// PSNR of the iteration's render against its reference.
    pub psnr: f64,
}

pub fn write_loss_trace(path: impl AsRef<Path>, trace: &[LossRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("iteration,loss,psnr\n");
    for r in trace {
        out.push_str(&format!("{},{},{}\n", r.iteration, r.loss, r.psnr));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub scene: SceneFile,
    pub trace: Vec<LossRecord>,
}

/// Loss and gradients of one rendered reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub mse: f64,
    pub gradients: ParamGradients,
    /// Camera distance of every deformed mean at the first sensing time.
    pub distances: Vec<f64>,
}

/// Renders `reference` from `params` deformed by `deformation` and returns the
/// L1 loss with its gradient in raw parameter space.
pub fn evaluate(
    params: &FitParams,
    deformation: &Deformation,
    reference: &Reference,
    opts: &TraceOptions,
) -> Result<Evaluation> {
    let camera = &reference.camera;
    let (w, h) = (camera.width(), camera.height());
    let segments: Vec<(Range<usize>, f64)> = match camera.effect() {
        Effect::Rolling(rs) => {
            let rs = RollingShutterParams { frame_time: reference.time, ..*rs };
            chunk_schedule(&rs, h).into_iter().map(|c| (c.rows, c.time)).collect()
        }
        _ => vec![(0..h, reference.time)],
    };
    let norm = 1.0 / (w * h * 3).max(1) as f64;

    let mut gradients = ParamGradients::zeros(params);
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut distances = Vec::new();
    for (rows, t) in segments {
        let canonical = params.snapshot(0.0);
        let (snapshot, residuals) = if deformation.is_static() {
            (canonical.clone(), vec![Residuals::default(); params.len()])
        } else {
            let snapshot = crate::deform::deform_snapshot(&canonical, deformation, t)?;
            let residuals = canonical
                .gaussians()
                .iter()
                .enumerate()
                .map(|(i, g)| deformation.residuals(i, g, t))
                .collect();
            (snapshot, residuals)
        };
        if distances.is_empty() {
            distances = snapshot.gaussians().iter().map(|g| camera.distance_to(&g.mean)).collect();
        }
        let bvh = Bvh::build(&snapshot);
        let blocks: Vec<Range<usize>> = rows
            .clone()
            .step_by(BLOCK_ROWS)
            .map(|y| y..(y + BLOCK_ROWS).min(rows.end))
            .collect();
        let parts: Vec<(f64, f64, ParamGradients)> = blocks
            .par_iter()
            .map(|block| {
                render_block(params, &snapshot, &bvh, &residuals, reference, block.clone(), opts, norm)
            })
            .collect();
        for (a, s, g) in parts {
            abs_sum += a;
            sq_sum += s;
            gradients.add(&g);
        }
    }
    Ok(Evaluation {
        loss: abs_sum * norm,
        mse: sq_sum * norm,
        gradients,
        distances,
    })
}

#[allow(clippy::too_many_arguments)]
fn render_block(
    params: &FitParams,
    snapshot: &SceneSnapshot,
    bvh: &Bvh,
    residuals: &[Residuals],
    reference: &Reference,
    rows: Range<usize>,
    opts: &TraceOptions,
    norm: f64,
) -> (f64, f64, ParamGradients) {
    let camera = &reference.camera;
    let mut grads = ParamGradients::zeros(params);
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut rays = Vec::new();
    let mut traced = Vec::new();
    for y in rows {
        for x in 0..camera.width() {
            rays.clear();
            camera.pixel_rays((x, y), &mut rays);
            traced.clear();
            traced.extend(rays.iter().map(|r| trace_ray_recorded(r, snapshot, bvh, opts)));
            let color = if rays.is_empty() {
                opts.background
            } else {
                traced.iter().fold(Vec3::zeros(), |acc, (res, _)| acc + res.color) / rays.len() as f64
            };
            let diff = color.map(|c| c.clamp(0.0, 1.0)) - reference.image.pixel(x, y);
            abs_sum += diff.abs().sum();
            sq_sum += diff.norm_squared();
            if rays.is_empty() {
                continue;
            }
            let d_color = diff.map(|d| if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 })
                * (norm / rays.len() as f64);
            if d_color == Vec3::zeros() {
                continue;
            }
            for (ray, (result, hits)) in rays.iter().zip(&traced) {
                backprop::backprop_recorded(ray, snapshot, result, hits, opts, &d_color, |hg| {
                    grads.accumulate(params, &residuals[hg.gaussian_index], &hg)
                });
            }
        }
    }
    (abs_sum, sq_sum, grads)
}

/// Fits the canonical Gaussians of `scene` to `references`. The deformation
/// is held fixed.
pub fn fit(scene: &SceneFile, references: &[Reference], config: &FitConfig) -> Result<FitOutcome> {
    config.validate()?;
    if references.is_empty() {
        return Err(Error::param("at least one reference image is required"));
    }
    let opts = config.render_options();
    opts.install(|| fit_loop(scene, references, config))?
}

fn fit_loop(scene: &SceneFile, references: &[Reference], config: &FitConfig) -> Result<FitOutcome> {
    let trace_opts = TraceOptions {
        k: config.k,
        background: Vec3::from(config.background),
    };
    let all: Vec<usize> = (0..references.len()).collect();
    let first_time = references.iter().map(|r| r.time).fold(f64::INFINITY, f64::min);
    let coarse: Vec<usize> = all.iter().copied().filter(|&i| references[i].time == first_time).collect();

    let mut params = FitParams::from_snapshot(&scene.canonical);
    let mut adam = Adam::new(config.lr, &params);
    let mut deformation = scene.deformation.clone();
    let mut accum = ParamGradients::zeros(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut trace = Vec::with_capacity(config.iterations);

    for iteration in 0..config.iterations {
        let is_coarse = iteration < config.coarse_iterations;
        let pool = if is_coarse { &coarse } else { &all };
        let reference = &references[pool[rng.random_range(0..pool.len())]];
        let active = if is_coarse { &Deformation::None } else { &deformation };
        let eval = evaluate(&params, active, reference, &trace_opts)?;
        if !eval.loss.is_finite() || !eval.gradients.all_finite() {
            return Err(Error::NonFiniteLoss { iteration });
        }
        trace.push(LossRecord {
            iteration,
            loss: eval.loss,
            psnr: psnr_from_mse(eval.mse),
        });

        let mut grads = eval.gradients;
        grads.mean_grad_max = std::mem::take(&mut accum.mean_grad_max);
        if config.densify_distance_scaling {
            grads.track_mean_norms(|i| eval.distances[i]);
        } else {
            grads.track_mean_norms(|_| 1.0);
        }
        accum.mean_grad_max = std::mem::take(&mut grads.mean_grad_max);
        adam.step(&mut params, &grads);

        let densify_now = config.densify_interval > 0
            && (iteration + 1) % config.densify_interval == 0
            && iteration + 1 < config.iterations;
        if densify_now {
            let (snapshot, origins) =
                densify_and_prune(&params.snapshot(0.0), &accum.mean_grad_max, &config.densify_rule());
            let raw_src: Vec<Option<usize>> = origins
                .iter()
                .map(|o| match o {
                    Origin::Kept(i) | Origin::Cloned(i) => Some(*i),
                    Origin::Split(_) => None,
                })
                .collect();
            let moment_src: Vec<Option<usize>> =
                origins.iter().map(|o| if let Origin::Kept(i) = o { Some(*i) } else { None }).collect();
            let sources: Vec<usize> = origins.iter().map(Origin::source).collect();
            adam = adam.remap(params.stride(), &moment_src);
            params = params.rebuild(snapshot.into_gaussians(), &raw_src);
            deformation = deformation.remap(&sources);
            accum = ParamGradients::zeros(&params);
        }
    }

    let canonical = SceneSnapshot::new(params.gaussians().to_vec(), scene.canonical.time(), params.sh_degree())?;
    Ok(FitOutcome {
        scene: SceneFile::new(canonical, deformation)?,
        trace,
    })
}
