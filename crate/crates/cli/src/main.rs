use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chromedge::colorspace::{rgb_to_xyz, xyz_to_rgb};
use chromedge::config::RunConfig;
use chromedge::harness::{
    evaluate, summary_lines, write_curve_csv, write_dataset, write_reports, DatasetManifest,
};
use chromedge::imaging::{add_gaussian_noise, load_image, save_image, NoiseParams};
use chromedge::metrics::{auc, format_float, pr_curve, MetricReport};
use chromedge::pipeline::{denoise_xyz, detect, detect_file, gray_to_rgb};
use chromedge::refine::EdgeMap;
use chromedge::synthetic::synthetic_suite;
use chromedge::Error;
use clap::{Args, Parser, Subcommand};

const EXIT_INPUT: u8 = 1;
const EXIT_PIPELINE: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

/// Noise-robust color edge detection.
#[derive(Parser, Debug)]
#[command(name = "chromedge", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Detect edges in one image and write a binary edge map.
    Detect {
        input: PathBuf,
        /// Output edge map (PNG, 0/255).
        #[arg(long)]
        out: PathBuf,
        /// Directory for the observed, denoised, strength and suppressed maps.
        #[arg(long)]
        dump: Option<PathBuf>,
        /// Reference edge map; prints metrics when given.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[command(flatten)]
        opts: Options,
    },
    /// Denoise an image (noise is injected first when --noise-var is set).
    Denoise {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: Options,
    },
    /// Run every configured method over a dataset manifest.
    Evaluate {
        /// CSV lines of image,ground_truth relative to the manifest.
        #[arg(long)]
        manifest: PathBuf,
        /// Report directory.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated methods to compare.
        #[arg(long)]
        methods: Option<String>,
        /// Method the others are compared against, or "none".
        #[arg(long)]
        baseline: Option<String>,
        #[command(flatten)]
        opts: Options,
    },
    /// Add seeded Gaussian noise to an image.
    Noise {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: Options,
    },
    /// Write the precision/recall sweep of one detection as CSV.
    Curve {
        input: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: Options,
    },
    /// Write the synthetic test scenes with their reference maps and a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
}

/// Settings shared by every subcommand. Flags override the config file,
/// which overrides the defaults.
#[derive(Args, Debug, Default)]
struct Options {
    /// key = value file; see the README for keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    sigma1: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    directions: Option<usize>,
    /// Variance of injected Gaussian noise on the [0,1] scale.
    #[arg(long)]
    noise_var: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    high_quantile: Option<f64>,
    #[arg(long)]
    low_ratio: Option<f64>,
    /// proposed, color-sobel, color-canny or agdd-only.
    #[arg(long)]
    method: Option<String>,
    /// Noise level assumed by the denoiser; defaults to the injected level.
    #[arg(long)]
    cbm3d_sigma: Option<f64>,
    /// Threshold increment of the precision/recall sweep.
    #[arg(long)]
    step: Option<f64>,
    /// Any config key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Options {
    fn resolve(&self, extra: &[(&str, Option<String>)]) -> Result<RunConfig, Error> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let flags = [
            ("sigma1", self.sigma1.map(|v| v.to_string())),
            ("sigma2", self.sigma2.map(|v| v.to_string())),
            ("rho", self.rho.map(|v| v.to_string())),
            ("directions", self.directions.map(|v| v.to_string())),
            ("noise_var", self.noise_var.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("high_quantile", self.high_quantile.map(|v| v.to_string())),
            ("low_ratio", self.low_ratio.map(|v| v.to_string())),
            ("method", self.method.clone()),
            ("cbm3d_sigma", self.cbm3d_sigma.map(|v| v.to_string())),
            ("step", self.step.map(|v| v.to_string())),
        ];
        for (key, value) in flags.iter().chain(extra) {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        for pair in &self.set {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got {pair:?}")))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load_rgb(path: &Path) -> Result<chromedge::PlanarImage, Error> {
    let img = load_image(path)?;
    if img.channels() == 1 {
        gray_to_rgb(&img)
    } else {
        Ok(img)
    }
}

fn print_report(m: &MetricReport) {
    println!(
        "psnr={} mse={} fom={} auc={} precision={} recall={} detected={} ideal={}",
        format_float(m.psnr),
        format_float(m.mse),
        format_float(m.fom),
        format_float(m.auc),
        format_float(m.precision),
        format_float(m.recall),
        m.detected_count,
        m.ideal_count
    );
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Detect {
            input,
            out,
            dump,
            gt,
            opts,
        } => {
            let cfg = opts.resolve(&[])?;
            let reference = gt.as_deref().map(EdgeMap::load).transpose()?;
            let det = detect_file(&input, &out, &cfg.pipeline_config()?, dump.as_deref())?;
            println!(
                "{}: {} edge pixels -> {}",
                det.method,
                det.edges.count(),
                out.display()
            );
            if let Some(gt) = reference {
                let m = MetricReport::compute(
                    &det.edges,
                    &det.sweep,
                    &gt,
                    cfg.step,
                    cfg.tolerance,
                    cfg.fom_alpha,
                )?;
                print_report(&m);
            }
        }
        Command::Denoise { input, out, opts } => {
            let cfg = opts.resolve(&[])?;
            let p = cfg.pipeline_config()?;
            let sigma = p.denoise_sigma();
            if sigma <= 0.0 {
                return Err(Error::Config(
                    "denoise needs --cbm3d-sigma or --noise-var to set the noise level".into(),
                ));
            }
            let clean = load_rgb(&input)?;
            let observed = match p.noise {
                Some(n) => add_gaussian_noise(&clean, &n)?,
                None => clean.clone(),
            };
            let xyz = rgb_to_xyz(&observed)?;
            let denoised = xyz_to_rgb(&denoise_xyz(&xyz, sigma, &p.cbm3d)?)?;
            save_image(&denoised, &out)?;
            if p.noise.is_some() {
                let before = chromedge::metrics::psnr_mse(&observed, &clean)?;
                let after = chromedge::metrics::psnr_mse(&denoised, &clean)?;
                println!(
                    "psnr noisy={} denoised={}",
                    format_float(before.psnr),
                    format_float(after.psnr)
                );
            }
            println!("denoised -> {}", out.display());
        }
        Command::Evaluate {
            manifest,
            out,
            methods,
            baseline,
            opts,
        } => {
            let cfg = opts.resolve(&[("methods", methods), ("baseline", baseline)])?;
            let manifest = DatasetManifest::load(&manifest)?;
            let eval = evaluate(&manifest, &cfg)?;
            write_reports(&eval, &out)?;
            for line in summary_lines(&eval) {
                println!("{line}");
            }
            for r in eval.results.iter().filter(|r| r.outcome.is_err()) {
                eprintln!(
                    "failed: {} ({}): {}",
                    r.image.display(),
                    r.method,
                    r.outcome.as_ref().unwrap_err()
                );
            }
            println!("reports -> {}", out.display());
            if eval.is_partial() {
                return Ok(EXIT_PARTIAL);
            }
        }
        Command::Noise { input, out, opts } => {
            let cfg = opts.resolve(&[])?;
            let img = load_image(&input)?;
            let noisy = add_gaussian_noise(&img, &NoiseParams::new(cfg.noise_var, cfg.seed)?)?;
            save_image(&noisy, &out)?;
            println!(
                "noise variance {} -> {}",
                format_float(cfg.noise_var),
                out.display()
            );
        }
        Command::Curve {
            input,
            gt,
            out,
            opts,
        } => {
            let cfg = opts.resolve(&[])?;
            let reference = EdgeMap::load(&gt)?;
            let det = detect(&load_rgb(&input)?, &cfg.pipeline_config()?)?;
            let curve = pr_curve(&det.sweep, &reference, cfg.step, cfg.tolerance)?;
            write_curve_csv(&out, &curve)?;
            println!(
                "{} points, auc={} -> {}",
                curve.len(),
                format_float(auc(&curve)?),
                out.display()
            );
        }
        Command::Synth { out } => {
            let path = write_dataset(&synthetic_suite(), &out)?;
            println!("manifest -> {}", path.display());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() {
                EXIT_INPUT
            } else {
                EXIT_PIPELINE
            })
        }
    }
}
