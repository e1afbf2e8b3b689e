//! Sampled filter grids and 2D convolution.
//!
//! Coordinates follow the image lattice: `u` runs along columns (left to
//! right), `v` along rows (top to bottom). Angles are measured from the `+u`
//! axis towards `+v`.
//!
//! All convolutions use reflect-101 boundary handling (`dcb|abcd|cba`).

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::{Field, PlanarImage};

/// Scale, anisotropy and orientation a kernel was built with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelMeta {
    pub sigma: f64,
    pub rho: f64,
    pub theta: f64,
}

/// Square `(2r+1)²` grid of taps centered at the origin.
///
/// `taps[(dv + r) * size + (du + r)]` holds the value at offset `(du, dv)`.
/// Separable kernels also carry their 1D factors so [`convolve_field`] can
/// take the two-pass route.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelGrid {
    radius: usize,
    taps: Vec<f64>,
    meta: KernelMeta,
    factors: Option<(Vec<f64>, Vec<f64>)>,
}

impl KernelGrid {
    /// Builds a grid from explicit taps (row-major, `v` outer).
    pub fn from_taps(radius: usize, taps: Vec<f64>, meta: KernelMeta) -> Result<Self> {
        let size = 2 * radius + 1;
        if taps.len() != size * size {
            return Err(Error::DimensionMismatch(format!(
                "kernel of radius {radius} needs {} taps, got {}",
                size * size,
                taps.len()
            )));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::param("kernel taps must be finite"));
        }
        Ok(Self {
            radius,
            taps,
            meta,
            factors: None,
        })
    }

    /// Separable grid `taps(du, dv) = along_u[du] * along_v[dv]`.
    pub fn separable(along_u: Vec<f64>, along_v: Vec<f64>, meta: KernelMeta) -> Result<Self> {
        if along_u.len() != along_v.len() || along_u.len().is_multiple_of(2) {
            return Err(Error::param("separable factors must share one odd length"));
        }
        let radius = along_u.len() / 2;
        let taps = along_v
            .iter()
            .flat_map(|&fv| along_u.iter().map(move |&fu| fu * fv))
            .collect();
        let mut grid = Self::from_taps(radius, taps, meta)?;
        grid.factors = Some((along_u, along_v));
        Ok(grid)
    }

    /// One-tap identity kernel.
    pub fn identity() -> Self {
        Self {
            radius: 0,
            taps: vec![1.0],
            meta: KernelMeta {
                sigma: 0.0,
                rho: 1.0,
                theta: 0.0,
            },
            factors: Some((vec![1.0], vec![1.0])),
        }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn size(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn meta(&self) -> KernelMeta {
        self.meta
    }

    pub fn factors(&self) -> Option<(&[f64], &[f64])> {
        self.factors
            .as_ref()
            .map(|(a, b)| (a.as_slice(), b.as_slice()))
    }

    pub fn tap(&self, du: isize, dv: isize) -> f64 {
        let r = self.radius as isize;
        self.taps[((dv + r) * (2 * r + 1) + (du + r)) as usize]
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().sum()
    }

    /// Drops the separable factors so convolution takes the dense route.
    pub fn into_dense(mut self) -> Self {
        self.factors = None;
        self
    }

    fn offsets(&self) -> impl Iterator<Item = (isize, isize)> {
        let r = self.radius as isize;
        (-r..=r).flat_map(move |dv| (-r..=r).map(move |du| (du, dv)))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(format!("{name} must be > 0, got {v}")))
    }
}

fn radius_for(extent: f64) -> usize {
    (3.0 * extent).ceil().max(1.0) as usize
}

/// Isotropic 2D Gaussian density at `(u, v)`.
pub fn gaussian_density(u: f64, v: f64, sigma: f64) -> f64 {
    (-(u * u + v * v) / (2.0 * sigma * sigma)).exp() / (2.0 * PI * sigma * sigma)
}

/// 1D Gaussian density; the 2D density is the product of two of these.
pub fn gaussian_density_1d(t: f64, sigma: f64) -> f64 {
    (-(t * t) / (2.0 * sigma * sigma)).exp() / ((2.0 * PI).sqrt() * sigma)
}

/// Raw samples of the 2D Gaussian density on radius `ceil(3σ)`, without
/// renormalization.
pub fn sampled_gaussian(sigma: f64) -> Result<KernelGrid> {
    check_positive("sigma", sigma)?;
    let r = radius_for(sigma) as isize;
    let meta = KernelMeta {
        sigma,
        rho: 1.0,
        theta: 0.0,
    };
    let taps = (-r..=r)
        .flat_map(|v| (-r..=r).map(move |u| gaussian_density(u as f64, v as f64, sigma)))
        .collect();
    KernelGrid::from_taps(r as usize, taps, meta)
}

fn gaussian_factor(sigma: f64) -> Vec<f64> {
    let r = radius_for(sigma) as isize;
    (-r..=r)
        .map(|t| gaussian_density_1d(t as f64, sigma))
        .collect()
}

/// Normalized isotropic Gaussian smoothing kernel (taps sum to 1).
pub fn gaussian_kernel(sigma: f64) -> Result<KernelGrid> {
    check_positive("sigma", sigma)?;
    let mut g = gaussian_factor(sigma);
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|x| *x /= s);
    let meta = KernelMeta {
        sigma,
        rho: 1.0,
        theta: 0.0,
    };
    KernelGrid::separable(g.clone(), g, meta)
}

/// Gradient-of-Gaussian kernels `(∂G/∂u, ∂G/∂v)`.
///
/// Taps are the sampled `(-u/σ²)·G_σ` (resp. `-v`) scaled so that the
/// discrete first moment is exactly `-1`: convolving the unit ramp
/// `I(u, v) = u` with `du` then yields exactly `1` away from borders.
pub fn gaussian_gradient_kernels(sigma: f64) -> Result<(KernelGrid, KernelGrid)> {
    check_positive("sigma", sigma)?;
    let g = gaussian_factor(sigma);
    let r = (g.len() / 2) as isize;
    let mut deriv: Vec<f64> = (-r..=r)
        .zip(&g)
        .map(|(t, &gt)| -(t as f64) / (sigma * sigma) * gt)
        .collect();
    let moment: f64 = (-r..=r).zip(&deriv).map(|(t, d)| t as f64 * d).sum();
    deriv.iter_mut().for_each(|d| *d /= -moment);
    let s: f64 = g.iter().sum();
    let smooth: Vec<f64> = g.iter().map(|x| x / s).collect();
    let meta = KernelMeta {
        sigma,
        rho: 1.0,
        theta: 0.0,
    };
    let du = KernelGrid::separable(deriv.clone(), smooth.clone(), meta)?;
    let dv = KernelGrid::separable(
        smooth,
        deriv,
        KernelMeta {
            theta: PI / 2.0,
            ..meta
        },
    )?;
    Ok((du, dv))
}

/// Rotation matrix `[[cos θ, sin θ], [-sin θ, cos θ]]`.
pub fn rotation(theta: f64) -> [[f64; 2]; 2] {
    let (s, c) = theta.sin_cos();
    [[c, s], [-s, c]]
}

/// Anisotropic Gaussian: narrow (`σ/ρ`) along `(cos θ, sin θ)` and wide
/// (`σρ`) across it, with the isotropic `1/(2πσ²)` prefactor.
pub fn anisotropic_gaussian(u: f64, v: f64, sigma: f64, rho: f64, theta: f64) -> f64 {
    let [[a, b], [c, d]] = rotation(theta);
    let p = a * u + b * v;
    let q = c * u + d * v;
    let quad = rho * rho * p * p + q * q / (rho * rho);
    (-quad / (2.0 * sigma * sigma)).exp() / (2.0 * PI * sigma * sigma)
}

/// Anisotropic Gaussian directional derivative along `(cos θ, sin θ)`.
///
/// Taps are `((cos θ, sin θ)·x) / (σ²ρ⁻²) · G_{σ,ρ,θ}(x)` on radius
/// `ceil(3σ·max(ρ, 1/ρ))`, corrected to sum to zero and scaled so that the
/// first moment along the direction is `1`. The response to a unit ramp along
/// the direction therefore has magnitude 1, matching
/// [`gaussian_gradient_kernels`].
pub fn agdd_kernel(sigma: f64, rho: f64, theta: f64) -> Result<KernelGrid> {
    check_positive("sigma", sigma)?;
    check_positive("rho", rho)?;
    let r = radius_for(sigma * rho.max(1.0 / rho)) as isize;
    let (s, c) = theta.sin_cos();
    let denom = sigma * sigma / (rho * rho);
    let mut taps: Vec<f64> = (-r..=r)
        .flat_map(|v| {
            (-r..=r).map(move |u| {
                let (u, v) = (u as f64, v as f64);
                (c * u + s * v) / denom * anisotropic_gaussian(u, v, sigma, rho, theta)
            })
        })
        .collect();
    let mean = taps.iter().sum::<f64>() / taps.len() as f64;
    taps.iter_mut().for_each(|t| *t -= mean);
    let meta = KernelMeta { sigma, rho, theta };
    let mut grid = KernelGrid::from_taps(r as usize, taps, meta)?;
    let moment: f64 = grid
        .offsets()
        .zip(&grid.taps)
        .map(|((du, dv), t)| (c * du as f64 + s * dv as f64) * t)
        .sum();
    grid.taps.iter_mut().for_each(|t| *t /= moment);
    Ok(grid)
}

/// Evenly spaced orientations covering `[0, π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionBank {
    angles: Vec<f64>,
}

impl DirectionBank {
    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

/// `θ_n = (n-1)π/N` for `n = 1..=N`.
pub fn direction_bank(count: usize) -> Result<DirectionBank> {
    if count == 0 {
        return Err(Error::param("direction count must be >= 1"));
    }
    Ok(DirectionBank {
        angles: (0..count).map(|i| i as f64 * PI / count as f64).collect(),
    })
}

/// Reflect-101 index into `0..len`.
pub fn reflect101(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    if m >= len as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

fn index_table(len: usize, radius: usize) -> Vec<usize> {
    // Entry j maps padded coordinate j - radius to a source index.
    (0..len + 2 * radius)
        .map(|j| reflect101(j as isize - radius as isize, len))
        .collect()
}

/// Dense 2D convolution `out(x) = Σ_k I(x - k)·K(k)` with reflect-101 padding.
pub fn convolve_dense(field: &Field, k: &KernelGrid) -> Field {
    let (w, h) = (field.width, field.height);
    let r = k.radius;
    let size = k.size();
    let cols = index_table(w, r);
    let rows = index_table(h, r);
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row_out)| {
        for (x, o) in row_out.iter_mut().enumerate() {
            let mut acc = 0.0;
            // Tap (du, dv) reads I(y - dv, x - du); with the padded tables,
            // y - dv + r = y + (size - 1 - (dv + r)).
            for tv in 0..size {
                let src = &field.data[rows[y + size - 1 - tv] * w..][..w];
                let krow = &k.taps[tv * size..][..size];
                for (tu, &kt) in krow.iter().enumerate() {
                    acc += src[cols[x + size - 1 - tu]] * kt;
                }
            }
            *o = acc;
        }
    });
    Field {
        width: w,
        height: h,
        data: out,
    }
}

/// Two-pass convolution with 1D factors (`along_u` over columns, then
/// `along_v` over rows).
pub fn convolve_separable(field: &Field, along_u: &[f64], along_v: &[f64]) -> Field {
    let (w, h) = (field.width, field.height);
    let ru = along_u.len() / 2;
    let rv = along_v.len() / 2;
    let cols = index_table(w, ru);
    let rows = index_table(h, rv);
    let mut tmp = vec![0.0; w * h];
    tmp.par_chunks_mut(w).enumerate().for_each(|(y, row_out)| {
        let src = &field.data[y * w..][..w];
        let n = along_u.len();
        for (x, o) in row_out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (t, &kt) in along_u.iter().enumerate() {
                acc += src[cols[x + n - 1 - t]] * kt;
            }
            *o = acc;
        }
    });
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row_out)| {
        let n = along_v.len();
        for (t, &kt) in along_v.iter().enumerate() {
            let src = &tmp[rows[y + n - 1 - t] * w..][..w];
            for (o, s) in row_out.iter_mut().zip(src) {
                *o += s * kt;
            }
        }
    });
    Field {
        width: w,
        height: h,
        data: out,
    }
}

/// Convolves a field, taking the separable route when the kernel has factors.
pub fn convolve_field(field: &Field, k: &KernelGrid) -> Field {
    match k.factors() {
        Some((fu, fv)) => convolve_separable(field, fu, fv),
        None => convolve_dense(field, k),
    }
}

/// Per-channel convolution. Responses are returned unclamped since
/// derivative kernels produce signed output.
pub fn convolve(img: &PlanarImage, k: &KernelGrid) -> Vec<Field> {
    (0..img.channels())
        .map(|c| convolve_field(&Field::from_plane(img, c), k))
        .collect()
}
