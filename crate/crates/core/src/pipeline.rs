//! End-to-end detection: load, optional noise, XYZ conversion, denoising,
//! edge strength map, refinement, save.

use std::path::Path;

use crate::baselines::{agdd_only, color_canny, color_sobel, Method};
use crate::cbm3d::{cbm3d_denoise_with_covariance, Cbm3dParams};
use crate::colorspace::{rgb_to_xyz, rgb_to_xyz_matrix, xyz_to_rgb};
use crate::error::{Error, Result, StageExt};
use crate::esm::{agdd_response_with, color_gradient, fuse_esm, ChannelCombine, EdgeStrengthMap};
use crate::imaging::{add_gaussian_noise, load_image, save_image, NoiseParams, PlanarImage};
use crate::kernels::direction_bank;
use crate::refine::{refine, EdgeMap, ThresholdParams};

/// Everything a detection run needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    /// Gaussian noise injected into the RGB input before anything else.
    pub noise: Option<NoiseParams>,
    /// Denoiser settings. A zero `sigma` means "use the injected noise
    /// level", and no denoising happens when that is zero as well.
    pub cbm3d: Cbm3dParams,
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
    pub directions: usize,
    pub combine: ChannelCombine,
    pub thresholds: ThresholdParams,
    pub method: Method,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            noise: None,
            cbm3d: Cbm3dParams::default(),
            sigma1: 1.0,
            sigma2: 2.0,
            rho: 2.0,
            directions: 8,
            combine: ChannelCombine::Sum,
            thresholds: ThresholdParams::default(),
            method: Method::Proposed,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma1", self.sigma1),
            ("sigma2", self.sigma2),
            ("rho", self.rho),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} must be positive, got {v}")));
            }
        }
        if self.sigma1 >= self.sigma2 {
            return Err(Error::param(format!(
                "sigma1 ({}) must be smaller than sigma2 ({})",
                self.sigma1, self.sigma2
            )));
        }
        if self.directions < 1 {
            return Err(Error::param("at least one direction is required"));
        }
        if let Some(n) = self.noise {
            NoiseParams::new(n.variance, n.seed)?;
        }
        self.thresholds.validate()?;
        if self.cbm3d.sigma != 0.0 {
            self.cbm3d.validate()?;
        } else {
            Cbm3dParams {
                sigma: 1.0,
                ..self.cbm3d
            }
            .validate()?;
        }
        Ok(())
    }

    /// Noise level the denoiser is told about.
    pub fn denoise_sigma(&self) -> f64 {
        if self.cbm3d.sigma > 0.0 {
            self.cbm3d.sigma
        } else {
            self.noise.map_or(0.0, |n| n.std_dev())
        }
    }
}

/// Intermediate and final products of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub method: Method,
    /// RGB input after noise injection.
    pub observed: PlanarImage,
    /// Denoised XYZ image, when the denoiser ran.
    pub denoised: Option<PlanarImage>,
    pub esm: EdgeStrengthMap,
    /// Map swept for precision/recall curves (after suppression where the
    /// method suppresses).
    pub sweep: EdgeStrengthMap,
    pub edges: EdgeMap,
}

/// Fused edge strength map of an XYZ image.
pub fn proposed_esm(xyz: &PlanarImage, cfg: &PipelineConfig) -> Result<EdgeStrengthMap> {
    let bank = direction_bank(cfg.directions)?;
    let grad = color_gradient(xyz, cfg.sigma1).stage("gradient")?;
    let a1 = agdd_response_with(xyz, cfg.sigma1, cfg.rho, &bank, cfg.combine)
        .stage("directional responses")?;
    let a2 = agdd_response_with(xyz, cfg.sigma2, cfg.rho, &bank, cfg.combine)
        .stage("directional responses")?;
    fuse_esm(&grad, &a1, &a2).stage("fusion")
}

/// Denoises an XYZ image whose noise was added in RGB.
pub fn denoise_xyz(xyz: &PlanarImage, sigma: f64, p: &Cbm3dParams) -> Result<PlanarImage> {
    let m = rgb_to_xyz_matrix();
    let cov = m.mul(&m.transpose());
    let params = Cbm3dParams { sigma, ..*p };
    cbm3d_denoise_with_covariance(xyz, &params, &cov).stage("denoise")
}

/// Runs the configured method on an RGB image.
pub fn detect(rgb: &PlanarImage, cfg: &PipelineConfig) -> Result<Detection> {
    cfg.validate().stage("configuration")?;
    let observed = match cfg.noise {
        Some(n) => add_gaussian_noise(rgb, &n).stage("noise")?,
        None => rgb.clone(),
    };
    let xyz = rgb_to_xyz(&observed).stage("color conversion")?;
    let t = &cfg.thresholds;
    let (denoised, esm, sweep, edges) = match cfg.method {
        Method::Proposed => {
            let sigma = cfg.denoise_sigma();
            let denoised = if sigma > 0.0 {
                Some(denoise_xyz(&xyz, sigma, &cfg.cbm3d)?)
            } else {
                None
            };
            let esm = proposed_esm(denoised.as_ref().unwrap_or(&xyz), cfg)?;
            let out = refine(&esm, t);
            (denoised, esm, out.suppressed, out.edges)
        }
        Method::ColorSobel => {
            let out = color_sobel(&xyz, t).stage("color sobel")?;
            (None, out.esm, out.sweep, out.edges)
        }
        Method::ColorCanny => {
            let out = color_canny(&xyz, cfg.sigma1, t).stage("color canny")?;
            (None, out.esm, out.sweep, out.edges)
        }
        Method::AgddOnly => {
            let out = agdd_only(
                &xyz,
                cfg.sigma1,
                cfg.sigma2,
                cfg.rho,
                cfg.directions,
                cfg.combine,
                t,
            )
            .stage("directional responses")?;
            (None, out.esm, out.sweep, out.edges)
        }
    };
    Ok(Detection {
        method: cfg.method,
        observed,
        denoised,
        esm,
        sweep,
        edges,
    })
}

/// Writes the observed input, the denoised image, the strength map and the
/// suppressed map into `dir`.
pub fn write_dumps(det: &Detection, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_image(&det.observed, dir.join("observed.png"))?;
    if let Some(d) = &det.denoised {
        save_image(&xyz_to_rgb(d)?, dir.join("denoised.png"))?;
    }
    save_image(&det.esm.to_image()?, dir.join("esm.png"))?;
    save_image(&det.sweep.to_image()?, dir.join("suppressed.png"))?;
    Ok(())
}

/// Loads `input`, detects, writes the edge map to `output` and optional
/// dumps.
pub fn detect_file(
    input: &Path,
    output: &Path,
    cfg: &PipelineConfig,
    dump: Option<&Path>,
) -> Result<Detection> {
    let img = load_image(input).stage("load")?;
    let rgb = if img.channels() == 1 {
        gray_to_rgb(&img)?
    } else {
        img
    };
    let det = detect(&rgb, cfg)?;
    det.edges.save(output).stage("save")?;
    if let Some(dir) = dump {
        write_dumps(&det, dir).stage("dump")?;
    }
    Ok(det)
}

/// Replicates a grayscale plane into three RGB planes.
pub fn gray_to_rgb(img: &PlanarImage) -> Result<PlanarImage> {
    let p = img.plane(0).to_vec();
    PlanarImage::new(
        img.width(),
        img.height(),
        crate::imaging::ColorSpace::Rgb,
        vec![p.clone(), p.clone(), p],
    )
}
