//! Edge strength map: color vector gradient, multiscale directional
//! responses and their fusion.
//!
//! For each pixel the fused strength is
//!
//! ```text
//! max_n ( |∇P| + A1_n + A2_n ) / 3
//! ```
//!
//! where `|∇P|` is the sum of per-plane gradient-of-Gaussian magnitudes and
//! `A1_n`, `A2_n` are the anisotropic directional derivative responses at two
//! scales for orientation `n` of the bank. The map is divided by its global
//! maximum afterwards.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::{ColorSpace, Field, PlanarImage};
use crate::kernels::{agdd_kernel, convolve_field, gaussian_gradient_kernels, DirectionBank};

/// Below this global maximum a map is treated as flat and left unscaled.
pub const FLAT_EPSILON: f64 = 1e-12;

/// Gap, relative to the largest directional score in the image, under which
/// two scores count as tied. Keeps rounding noise (for instance the near-zero
/// responses at mirrored corners) from moving the argmax off the lowest index.
const TIE_RELATIVE: f64 = 1e-12;

/// Combined gradient magnitude of all planes plus a per-pixel orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    /// Sum over planes of `sqrt(g_u² + g_v²)`.
    pub magnitude: Vec<f64>,
    /// `atan2(Σg_v, Σg_u)` folded into `[0, π)`.
    pub orientation: Vec<f64>,
}

/// Folds an angle into `[0, π)`.
pub fn fold_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(PI);
    if t >= PI {
        0.0
    } else {
        t
    }
}

fn expect_xyz(img: &PlanarImage) -> Result<()> {
    img.expect_space(ColorSpace::Xyz)
}

/// Color vector gradient at scale `sigma`.
pub fn color_gradient(img: &PlanarImage, sigma: f64) -> Result<GradientField> {
    expect_xyz(img)?;
    let (du, dv) = gaussian_gradient_kernels(sigma)?;
    let n = img.width() * img.height();
    let mut magnitude = vec![0.0; n];
    let mut sum_u = vec![0.0; n];
    let mut sum_v = vec![0.0; n];
    for c in 0..img.channels() {
        let plane = Field::from_plane(img, c);
        let gu = convolve_field(&plane, &du);
        let gv = convolve_field(&plane, &dv);
        for i in 0..n {
            let (a, b) = (gu.data[i], gv.data[i]);
            magnitude[i] += a.hypot(b);
            sum_u[i] += a;
            sum_v[i] += b;
        }
    }
    let orientation = sum_u
        .iter()
        .zip(&sum_v)
        .map(|(&u, &v)| fold_angle(v.atan2(u)))
        .collect();
    Ok(GradientField {
        width: img.width(),
        height: img.height(),
        magnitude,
        orientation,
    })
}

/// How per-channel directional responses are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChannelCombine {
    /// `Σ_c |r_c|`, the same plane sum as the color gradient.
    #[default]
    Sum,
    /// `sqrt(Σ_c r_c²)`.
    L2,
}

/// One response field per orientation of a bank.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalResponses {
    pub bank: DirectionBank,
    pub fields: Vec<Field>,
}

impl DirectionalResponses {
    pub fn dims(&self) -> (usize, usize) {
        self.fields
            .first()
            .map(|f| (f.width, f.height))
            .unwrap_or((0, 0))
    }
}

/// Directional derivative responses `Σ_c |I_c ∗ G′_{σ,ρ,θ_n}|` for every
/// orientation in the bank.
pub fn agdd_response(
    img: &PlanarImage,
    sigma: f64,
    rho: f64,
    bank: &DirectionBank,
) -> Result<DirectionalResponses> {
    agdd_response_with(img, sigma, rho, bank, ChannelCombine::Sum)
}

pub fn agdd_response_with(
    img: &PlanarImage,
    sigma: f64,
    rho: f64,
    bank: &DirectionBank,
    combine: ChannelCombine,
) -> Result<DirectionalResponses> {
    expect_xyz(img)?;
    let kernels = bank
        .angles()
        .iter()
        .map(|&theta| agdd_kernel(sigma, rho, theta))
        .collect::<Result<Vec<_>>>()?;
    let planes: Vec<Field> = (0..img.channels())
        .map(|c| Field::from_plane(img, c))
        .collect();
    let fields = kernels
        .par_iter()
        .map(|k| {
            let mut acc = Field::zeros(img.width(), img.height());
            for plane in &planes {
                let r = convolve_field(plane, k);
                for (a, v) in acc.data.iter_mut().zip(&r.data) {
                    match combine {
                        ChannelCombine::Sum => *a += v.abs(),
                        ChannelCombine::L2 => *a += v * v,
                    }
                }
            }
            if combine == ChannelCombine::L2 {
                acc.data.iter_mut().for_each(|a| *a = a.sqrt());
            }
            acc
        })
        .collect();
    Ok(DirectionalResponses {
        bank: bank.clone(),
        fields,
    })
}

/// Normalized edge strength with the orientation that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeStrengthMap {
    pub width: usize,
    pub height: usize,
    pub strength: Vec<f64>,
    /// Angle in `[0, π)` along which the edge response peaked.
    pub orientation: Vec<f64>,
}

impl EdgeStrengthMap {
    /// Divides by the global maximum unless the map is flat.
    pub fn normalize(&mut self) {
        let max = self.strength.iter().copied().fold(0.0, f64::max);
        if max >= FLAT_EPSILON {
            self.strength.iter_mut().for_each(|s| *s /= max);
        }
    }

    /// Gradient magnitude alone as a normalized map.
    pub fn from_gradient(grad: &GradientField) -> Self {
        let mut esm = Self {
            width: grad.width,
            height: grad.height,
            strength: grad.magnitude.clone(),
            orientation: grad.orientation.clone(),
        };
        esm.normalize();
        esm
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.strength[row * self.width + col]
    }

    pub fn max(&self) -> f64 {
        self.strength.iter().copied().fold(0.0, f64::max)
    }

    /// Strength as a grayscale image for inspection or export.
    pub fn to_image(&self) -> Result<PlanarImage> {
        PlanarImage::new(
            self.width,
            self.height,
            ColorSpace::Scalar,
            vec![self.strength.clone()],
        )
    }

    /// Rebuilds a map from a grayscale image, orientation unknown (zero).
    pub fn from_image(img: &PlanarImage) -> Result<Self> {
        img.expect_space(ColorSpace::Scalar)?;
        Ok(Self {
            width: img.width(),
            height: img.height(),
            strength: img.plane(0).to_vec(),
            orientation: vec![0.0; img.width() * img.height()],
        })
    }
}

fn check_fused_dims(
    dims: (usize, usize),
    a1: &DirectionalResponses,
    a2: &DirectionalResponses,
) -> Result<()> {
    if a1.bank != a2.bank {
        return Err(Error::DimensionMismatch(
            "directional responses use different banks".into(),
        ));
    }
    if a1.fields.len() != a1.bank.len() || a2.fields.len() != a2.bank.len() {
        return Err(Error::DimensionMismatch(
            "one response field per bank direction is required".into(),
        ));
    }
    for f in a1.fields.iter().chain(&a2.fields) {
        if (f.width, f.height) != dims {
            return Err(Error::DimensionMismatch(format!(
                "response field {}x{} does not match {}x{}",
                f.width, f.height, dims.0, dims.1
            )));
        }
    }
    Ok(())
}

/// Per-pixel max over directions of `(offset + A1_n + A2_n) / divisor`.
/// The argmax is taken on `A1_n + A2_n`, which orders the directions the same
/// way, with near-equal scores resolved to the lowest index.
fn fuse_with(
    dims: (usize, usize),
    offset: impl Fn(usize) -> f64,
    divisor: f64,
    a1: &DirectionalResponses,
    a2: &DirectionalResponses,
) -> EdgeStrengthMap {
    let n = dims.0 * dims.1;
    let angles = a1.bank.angles();
    let scale = a1
        .fields
        .iter()
        .zip(&a2.fields)
        .flat_map(|(f1, f2)| f1.data.iter().zip(&f2.data).map(|(x, y)| x + y))
        .fold(0.0, f64::max);
    let tol = TIE_RELATIVE * scale;
    let mut strength = vec![0.0; n];
    let mut orientation = vec![0.0; n];
    for i in 0..n {
        let g = offset(i);
        let mut peak = f64::NEG_INFINITY;
        let mut best = f64::NEG_INFINITY;
        let mut best_n = 0;
        for (k, (f1, f2)) in a1.fields.iter().zip(&a2.fields).enumerate() {
            let pair = f1.data[i] + f2.data[i];
            peak = peak.max((g + f1.data[i] + f2.data[i]) / divisor);
            if k == 0 || pair > best + tol {
                best = pair;
                best_n = k;
            }
        }
        strength[i] = peak;
        orientation[i] = angles[best_n];
    }
    let mut esm = EdgeStrengthMap {
        width: dims.0,
        height: dims.1,
        strength,
        orientation,
    };
    esm.normalize();
    esm
}

/// Fuses the color gradient with two-scale directional responses and
/// normalizes by the global maximum. Ties in the max over directions go to
/// the lowest index.
pub fn fuse_esm(
    grad: &GradientField,
    a1: &DirectionalResponses,
    a2: &DirectionalResponses,
) -> Result<EdgeStrengthMap> {
    let dims = (grad.width, grad.height);
    check_fused_dims(dims, a1, a2)?;
    if grad.magnitude.len() != dims.0 * dims.1 {
        return Err(Error::DimensionMismatch("gradient field length".into()));
    }
    Ok(fuse_with(dims, |i| grad.magnitude[i].abs(), 3.0, a1, a2))
}

/// Directional responses alone: `max_n (A1_n + A2_n) / 2`, normalized.
pub fn fuse_directional(
    a1: &DirectionalResponses,
    a2: &DirectionalResponses,
) -> Result<EdgeStrengthMap> {
    let dims = a1.dims();
    check_fused_dims(dims, a1, a2)?;
    Ok(fuse_with(dims, |_| 0.0, 2.0, a1, a2))
}
