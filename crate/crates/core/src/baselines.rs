//! Reference detectors: color Sobel, color Canny and the directional-only
//! ablation of the proposed map.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esm::{
    agdd_response_with, color_gradient, fold_angle, fuse_directional, ChannelCombine,
    EdgeStrengthMap, GradientField,
};
use crate::imaging::{ColorSpace, Field, PlanarImage};
use crate::kernels::{convolve_field, direction_bank, KernelGrid, KernelMeta};
use crate::metrics::binarize;
use crate::refine::{
    hysteresis_at, nonmax_suppress, nonzero_quantile, refine, resolve_thresholds, EdgeMap,
    ThresholdParams,
};

/// Detector selected for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Proposed,
    ColorSobel,
    ColorCanny,
    AgddOnly,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Proposed,
        Method::ColorSobel,
        Method::ColorCanny,
        Method::AgddOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::ColorSobel => "color-sobel",
            Method::ColorCanny => "color-canny",
            Method::AgddOnly => "agdd-only",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| {
                Error::param(format!(
                    "unknown method {s:?}; expected one of proposed, color-sobel, color-canny, agdd-only"
                ))
            })
    }
}

/// Settings shared by the baselines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineParams {
    pub method: Method,
    /// Smoothing scale of the Canny gradient.
    pub sigma: f64,
    pub thresholds: ThresholdParams,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            method: Method::ColorCanny,
            sigma: 1.0,
            thresholds: ThresholdParams::default(),
        }
    }
}

impl BaselineParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::param(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        self.thresholds.validate()
    }
}

/// Output of a baseline: the strength map, the map used for threshold
/// sweeps, and the binary result.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutcome {
    pub esm: EdgeStrengthMap,
    pub sweep: EdgeStrengthMap,
    pub edges: EdgeMap,
}

/// 3×3 Sobel pair for convolution: `(horizontal, vertical)` derivatives.
pub fn sobel_kernels() -> (KernelGrid, KernelGrid) {
    let meta = KernelMeta {
        sigma: 1.0,
        rho: 1.0,
        theta: 0.0,
    };
    let deriv = vec![1.0, 0.0, -1.0];
    let smooth = vec![1.0, 2.0, 1.0];
    (
        KernelGrid::separable(deriv.clone(), smooth.clone(), meta).expect("3-tap factors"),
        KernelGrid::separable(smooth, deriv, meta).expect("3-tap factors"),
    )
}

/// Sum over planes of the Sobel gradient magnitudes.
pub fn sobel_gradient(img: &PlanarImage) -> Result<GradientField> {
    img.expect_space(ColorSpace::Xyz)?;
    let (ku, kv) = sobel_kernels();
    let n = img.width() * img.height();
    let mut magnitude = vec![0.0; n];
    let mut su = vec![0.0; n];
    let mut sv = vec![0.0; n];
    for c in 0..img.channels() {
        let plane = Field::from_plane(img, c);
        let gu = convolve_field(&plane, &ku);
        let gv = convolve_field(&plane, &kv);
        for i in 0..n {
            magnitude[i] += gu.data[i].hypot(gv.data[i]);
            su[i] += gu.data[i];
            sv[i] += gv.data[i];
        }
    }
    Ok(GradientField {
        width: img.width(),
        height: img.height(),
        magnitude,
        orientation: su
            .iter()
            .zip(&sv)
            .map(|(&u, &v)| fold_angle(v.atan2(u)))
            .collect(),
    })
}

/// Normalized Sobel magnitude binarized at the high quantile of its nonzero
/// values.
pub fn color_sobel(img: &PlanarImage, t: &ThresholdParams) -> Result<BaselineOutcome> {
    t.validate()?;
    let esm = EdgeStrengthMap::from_gradient(&sobel_gradient(img)?);
    let level = match t.absolute {
        Some((_, high)) => Some(high),
        None => nonzero_quantile(&esm.strength, t.high_quantile),
    };
    let edges = match level {
        Some(level) if level > 0.0 => binarize(&esm, level),
        _ => EdgeMap::empty(esm.width, esm.height),
    };
    Ok(BaselineOutcome {
        sweep: esm.clone(),
        esm,
        edges,
    })
}

/// Gradient-of-Gaussian color gradient, suppression and hysteresis.
pub fn color_canny(img: &PlanarImage, sigma: f64, t: &ThresholdParams) -> Result<BaselineOutcome> {
    t.validate()?;
    let esm = EdgeStrengthMap::from_gradient(&color_gradient(img, sigma)?);
    let sweep = nonmax_suppress(&esm);
    let (low, high) = resolve_thresholds(&esm, t);
    let edges = hysteresis_at(&sweep, low, high).edges;
    Ok(BaselineOutcome { esm, sweep, edges })
}

/// Two-scale directional responses alone, followed by the full refinement
/// chain.
pub fn agdd_only(
    img: &PlanarImage,
    sigma1: f64,
    sigma2: f64,
    rho: f64,
    directions: usize,
    combine: ChannelCombine,
    t: &ThresholdParams,
) -> Result<BaselineOutcome> {
    t.validate()?;
    let bank = direction_bank(directions)?;
    let a1 = agdd_response_with(img, sigma1, rho, &bank, combine)?;
    let a2 = agdd_response_with(img, sigma2, rho, &bank, combine)?;
    let esm = fuse_directional(&a1, &a2)?;
    let out = refine(&esm, t);
    Ok(BaselineOutcome {
        esm,
        sweep: out.suppressed,
        edges: out.edges,
    })
}
