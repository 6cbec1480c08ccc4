use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use splatrace::fit::{fit, load_references, write_loss_trace, FitConfig};
use splatrace::image::load_image;
use splatrace::metrics::{masked_metric, psnr, ssim, Metric};
use splatrace::render::{render_frame, RenderJob, RenderOptions};
use splatrace::scene::{load_scene, save_scene};
use splatrace::{Error, Vector3};

#[derive(Parser)]
#[command(name = "splatrace", version, about = "Ray tracer and fitter for deformable 3D Gaussian scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render one frame.
    Render {
        #[command(flatten)]
        input: SceneArgs,
        #[arg(long, default_value_t = 0.0)]
        time: f64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Render evenly spaced frames over a time range.
    Sequence {
        #[command(flatten)]
        input: SceneArgs,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        #[arg(long, default_value_t = 1.0)]
        t1: f64,
        #[arg(long)]
        frames: usize,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Compare two PPM images.
    Metrics {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Restrict to a centered circle of this diameter in pixels.
        #[arg(long)]
        mask_diameter: Option<f64>,
        #[arg(long, value_enum, default_value_t = MetricChoice::Both)]
        metric: MetricChoice,
    },
    /// Fit canonical Gaussian parameters to reference images.
    Fit {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        refs: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SceneArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    camera: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    /// Thin-lens samples per pixel, overriding the camera file.
    #[arg(long)]
    spp: Option<usize>,
    #[arg(long, default_value_t = splatrace::trace::DEFAULT_K)]
    k: usize,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long, default_value_t = 16)]
    tile: usize,
    /// Background color as `r,g,b` in [0, 1].
    #[arg(long, value_parser = parse_rgb, default_value = "0,0,0")]
    bg: Vector3<f64>,
}

impl RenderArgs {
    fn options(&self) -> RenderOptions {
        RenderOptions {
            k: self.k,
            background: self.bg,
            tile_size: self.tile,
            threads: self.threads,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricChoice {
    Psnr,
    Ssim,
    Both,
}

fn parse_rgb(s: &str) -> Result<Vector3<f64>, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [r, g, b] => Ok(Vector3::new(r, g, b)),
        _ => Err(format!("expected r,g,b, got {s:?}")),
    }
}

fn job(input: &SceneArgs, render: &RenderArgs, t0: f64, t1: f64, frames: usize) -> RenderJob {
    RenderJob {
        scene: input.scene.clone(),
        camera: input.camera.clone(),
        t0,
        t1,
        frames,
        samples_per_pixel: render.spp,
        options: render.options(),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Render { input, time, out, render } => {
            let job = job(&input, &render, time, time, 1);
            let (scene, camera) = job.load()?;
            let start = Instant::now();
            let img = render_frame(&scene, &camera, time, &job.options)?;
            img.save_ppm(&out)?;
            eprintln!("rendered {} in {:.3?}", out.display(), start.elapsed());
        }
        Command::Sequence { input, t0, t1, frames, out_dir, render } => {
            let job = job(&input, &render, t0, t1, frames);
            let start = Instant::now();
            let written = job.render_sequence(&out_dir)?;
            let per_frame = start.elapsed() / written.len().max(1) as u32;
            eprintln!("rendered {} frames into {} ({per_frame:.3?} per frame)", written.len(), out_dir.display());
        }
        Command::Metrics { a, b, mask_diameter, metric } => {
            let (a, b) = (load_image(&a)?, load_image(&b)?);
            let compute = |m: Metric| match mask_diameter {
                Some(d) => masked_metric(&a, &b, d, m),
                None => match m {
                    Metric::Psnr => psnr(&a, &b),
                    Metric::Ssim => ssim(&a, &b),
                },
            };
            if metric != MetricChoice::Ssim {
                println!("psnr={}", compute(Metric::Psnr)?);
            }
            if metric != MetricChoice::Psnr {
                println!("ssim={}", compute(Metric::Ssim)?);
            }
        }
        Command::Fit { scene, refs, config, out, trace } => {
            let scene = load_scene(&scene)?;
            let references = load_references(&refs)?;
            let config = match config {
                Some(path) => FitConfig::load(path)?,
                None => FitConfig::default(),
            };
            let start = Instant::now();
            let outcome = fit(&scene, &references, &config)?;
            save_scene(&outcome.scene, &out)?;
            if let Some(path) = trace {
                write_loss_trace(path, &outcome.trace)?;
            }
            if let Some(last) = outcome.trace.last() {
                eprintln!(
                    "fitted {} gaussians in {:.2?}: loss {:.6}, psnr {:.2} dB",
                    outcome.scene.canonical.len(),
                    start.elapsed(),
                    last.loss,
                    last.psnr
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
