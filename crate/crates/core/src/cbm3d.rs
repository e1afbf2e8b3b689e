//! Collaborative block-matching denoiser for color images (hard-threshold
//! stage).
//!
//! The XYZ input is mapped to luminance/chrominance. Blocks are grouped by
//! similarity on the luminance plane only, and every group's coordinates are
//! reused to filter all three planes: each stack goes through a separable 3D
//! transform (orthonormal 2D DCT per block, orthonormal Haar along the
//! stack), small coefficients are zeroed, and the inverse transform yields
//! block estimates that are blended back with weights `1/N_retained`.
//!
//! Reference blocks are processed in parallel, but accumulation always runs
//! in reference order, so the output is bit-identical across thread counts.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::colorspace::{xyz_to_yuv, yuv_to_xyz, ConversionMatrix, XYZ_TO_YUV};
use crate::error::{Error, Result};
use crate::imaging::{ColorSpace, PlanarImage};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cbm3dParams {
    pub block_size: usize,
    /// Distance between reference blocks.
    pub step: usize,
    /// Candidate offsets range over `[-search_radius, search_radius]`.
    pub search_radius: usize,
    /// Upper bound on the group size; must be a power of two.
    pub max_group: usize,
    /// Mean squared per-pixel distance below which a block joins a group.
    pub match_threshold: f64,
    pub hard_lambda: f64,
    /// Noise standard deviation on the `[0,1]` scale.
    pub sigma: f64,
}

impl Default for Cbm3dParams {
    fn default() -> Self {
        Self {
            block_size: 8,
            step: 3,
            search_radius: 19,
            max_group: 16,
            match_threshold: 3000.0 / (255.0 * 255.0),
            hard_lambda: 2.7,
            sigma: 0.0,
        }
    }
}

impl Cbm3dParams {
    pub fn with_sigma(sigma: f64) -> Self {
        Self {
            sigma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_size < 2 {
            return Err(Error::param("block_size must be >= 2"));
        }
        if self.step == 0 {
            return Err(Error::param("step must be >= 1"));
        }
        if !self.max_group.is_power_of_two() {
            return Err(Error::param(format!(
                "max_group must be a power of two, got {}",
                self.max_group
            )));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::param(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        if !(self.hard_lambda.is_finite() && self.hard_lambda >= 0.0) {
            return Err(Error::param("hard_lambda must be >= 0"));
        }
        if !(self.match_threshold.is_finite() && self.match_threshold >= 0.0) {
            return Err(Error::param("match_threshold must be >= 0"));
        }
        Ok(())
    }
}

/// A stack of similar blocks from one plane.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGroup {
    pub block_size: usize,
    /// Top-left `(row, col)` of each member.
    pub coords: Vec<(usize, usize)>,
    /// `block_size²` samples per member, row-major.
    pub patches: Vec<Vec<f64>>,
    pub reference: usize,
}

impl BlockGroup {
    /// Copies the blocks at `coords` out of a row-major plane.
    pub fn gather(
        plane: &[f64],
        width: usize,
        block_size: usize,
        coords: Vec<(usize, usize)>,
    ) -> Self {
        let patches = coords
            .iter()
            .map(|&(r, c)| extract_block(plane, width, block_size, r, c))
            .collect();
        Self {
            block_size,
            coords,
            patches,
            reference: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

fn extract_block(plane: &[f64], width: usize, bs: usize, row: usize, col: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(bs * bs);
    for r in row..row + bs {
        out.extend_from_slice(&plane[r * width + col..][..bs]);
    }
    out
}

fn block_distance(
    plane: &[f64],
    width: usize,
    bs: usize,
    a: (usize, usize),
    b: (usize, usize),
) -> f64 {
    let mut acc = 0.0;
    for i in 0..bs {
        let ra = &plane[(a.0 + i) * width + a.1..][..bs];
        let rb = &plane[(b.0 + i) * width + b.1..][..bs];
        for (x, y) in ra.iter().zip(rb) {
            let d = x - y;
            acc += d * d;
        }
    }
    acc / (bs * bs) as f64
}

/// Largest power of two `<= n` (n >= 1).
fn floor_pow2(n: usize) -> usize {
    1 << (usize::BITS - 1 - n.leading_zeros())
}

/// Coordinates of the blocks grouped with the reference at `reference`.
///
/// Candidates are all blocks whose top-left corner lies within
/// `search_radius` of the reference's (clipped to the image). Those with a
/// mean squared distance below `match_threshold` are sorted by distance, ties
/// broken row-major, and the list (reference first) is cut to the largest
/// power of two not exceeding `max_group`.
pub fn match_coords(
    plane: &[f64],
    width: usize,
    height: usize,
    reference: (usize, usize),
    p: &Cbm3dParams,
) -> Vec<(usize, usize)> {
    let bs = p.block_size;
    let (r0, c0) = reference;
    let row_lo = r0.saturating_sub(p.search_radius);
    let row_hi = (r0 + p.search_radius).min(height - bs);
    let col_lo = c0.saturating_sub(p.search_radius);
    let col_hi = (c0 + p.search_radius).min(width - bs);
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for r in row_lo..=row_hi {
        for c in col_lo..=col_hi {
            if (r, c) == reference {
                continue;
            }
            let d = block_distance(plane, width, bs, reference, (r, c));
            if d < p.match_threshold {
                candidates.push((d, r, c));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let n = floor_pow2((candidates.len() + 1).min(p.max_group));
    std::iter::once(reference)
        .chain(candidates.into_iter().map(|(_, r, c)| (r, c)))
        .take(n)
        .collect()
}

/// Groups the reference block at `reference` with its most similar blocks.
pub fn block_match(
    channel: &PlanarImage,
    reference: (usize, usize),
    p: &Cbm3dParams,
) -> Result<BlockGroup> {
    channel.expect_space(ColorSpace::Scalar)?;
    p.validate()?;
    let (w, h) = (channel.width(), channel.height());
    if reference.0 + p.block_size > h || reference.1 + p.block_size > w {
        return Err(Error::param(format!(
            "reference block at {reference:?} does not fit in {w}x{h}"
        )));
    }
    let coords = match_coords(channel.plane(0), w, h, reference, p);
    Ok(BlockGroup::gather(
        channel.plane(0),
        w,
        p.block_size,
        coords,
    ))
}

/// Orthonormal DCT-II basis, `basis[k * n + i]`.
pub fn dct_matrix(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for k in 0..n {
        let scale = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        for i in 0..n {
            m[k * n + i] = scale * (PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
        }
    }
    m
}

/// `C·X·Cᵀ` for a square block.
fn dct2(block: &[f64], basis: &[f64], n: usize) -> Vec<f64> {
    let mut tmp = vec![0.0; n * n];
    // tmp = C X
    for k in 0..n {
        for j in 0..n {
            tmp[k * n + j] = (0..n).map(|i| basis[k * n + i] * block[i * n + j]).sum();
        }
    }
    let mut out = vec![0.0; n * n];
    for k in 0..n {
        for l in 0..n {
            out[k * n + l] = (0..n).map(|j| tmp[k * n + j] * basis[l * n + j]).sum();
        }
    }
    out
}

/// `Cᵀ·Y·C`, the inverse of [`dct2`].
fn idct2(coeffs: &[f64], basis: &[f64], n: usize) -> Vec<f64> {
    let mut tmp = vec![0.0; n * n];
    for i in 0..n {
        for l in 0..n {
            tmp[i * n + l] = (0..n).map(|k| basis[k * n + i] * coeffs[k * n + l]).sum();
        }
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = (0..n).map(|l| tmp[i * n + l] * basis[l * n + j]).sum();
        }
    }
    out
}

/// Full dyadic orthonormal Haar transform in place; `x.len()` must be a
/// power of two. Index 0 ends up holding `Σx/√n`.
pub fn haar_forward(x: &mut [f64]) {
    let mut len = x.len();
    let mut tmp = vec![0.0; len];
    while len > 1 {
        let half = len / 2;
        for i in 0..half {
            let (a, b) = (x[2 * i], x[2 * i + 1]);
            tmp[i] = (a + b) / std::f64::consts::SQRT_2;
            tmp[half + i] = (a - b) / std::f64::consts::SQRT_2;
        }
        x[..len].copy_from_slice(&tmp[..len]);
        len = half;
    }
}

pub fn haar_inverse(x: &mut [f64]) {
    let n = x.len();
    let mut tmp = vec![0.0; n];
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        for i in 0..half {
            let (s, d) = (x[i], x[half + i]);
            tmp[2 * i] = (s + d) / std::f64::consts::SQRT_2;
            tmp[2 * i + 1] = (s - d) / std::f64::consts::SQRT_2;
        }
        x[..len].copy_from_slice(&tmp[..len]);
        len *= 2;
    }
}

/// 3D spectrum of a group: `spectrum[k][i]` is stack frequency `k`, 2D
/// coefficient `i`.
pub fn forward_3d(group: &BlockGroup) -> Vec<Vec<f64>> {
    let n = group.block_size;
    let basis = dct_matrix(n);
    let mut spec: Vec<Vec<f64>> = group.patches.iter().map(|p| dct2(p, &basis, n)).collect();
    let mut column = vec![0.0; spec.len()];
    for i in 0..n * n {
        for (k, s) in spec.iter().enumerate() {
            column[k] = s[i];
        }
        haar_forward(&mut column);
        for (k, s) in spec.iter_mut().enumerate() {
            s[i] = column[k];
        }
    }
    spec
}

pub fn inverse_3d(spectrum: &[Vec<f64>], block_size: usize) -> Vec<Vec<f64>> {
    let n = block_size;
    let basis = dct_matrix(n);
    let mut spec = spectrum.to_vec();
    let mut column = vec![0.0; spec.len()];
    for i in 0..n * n {
        for (k, s) in spec.iter().enumerate() {
            column[k] = s[i];
        }
        haar_inverse(&mut column);
        for (k, s) in spec.iter_mut().enumerate() {
            s[i] = column[k];
        }
    }
    spec.iter().map(|s| idct2(s, &basis, n)).collect()
}

/// Hard-thresholds a group in the 3D transform domain.
///
/// Coefficients with `|c| < hard_lambda * sigma` are zeroed, except the 3D
/// DC term. Returns the filtered group and its aggregation weight
/// `1 / max(1, N_retained)`.
pub fn hard_threshold_group(group: &BlockGroup, p: &Cbm3dParams) -> Result<(BlockGroup, f64)> {
    if group.is_empty() || !group.len().is_power_of_two() {
        return Err(Error::param(format!(
            "group size must be a nonzero power of two, got {}",
            group.len()
        )));
    }
    let threshold = p.hard_lambda * p.sigma;
    let mut spectrum = forward_3d(group);
    let mut retained = 0usize;
    for (k, s) in spectrum.iter_mut().enumerate() {
        for (i, c) in s.iter_mut().enumerate() {
            if (k, i) == (0, 0) || c.abs() >= threshold {
                if *c != 0.0 {
                    retained += 1;
                }
            } else {
                *c = 0.0;
            }
        }
    }
    let patches = inverse_3d(&spectrum, group.block_size);
    let weight = 1.0 / retained.max(1) as f64;
    Ok((
        BlockGroup {
            patches,
            ..group.clone()
        },
        weight,
    ))
}

/// Weighted accumulation of block estimates into one plane.
#[derive(Debug, Clone)]
pub struct Aggregator {
    width: usize,
    height: usize,
    numerator: Vec<f64>,
    denominator: Vec<f64>,
}

impl Aggregator {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            numerator: vec![0.0; width * height],
            denominator: vec![0.0; width * height],
        }
    }

    pub fn add(&mut self, group: &BlockGroup, weight: f64) {
        let bs = group.block_size;
        for (&(r, c), patch) in group.coords.iter().zip(&group.patches) {
            for i in 0..bs {
                let base = (r + i) * self.width + c;
                for j in 0..bs {
                    self.numerator[base + j] += weight * patch[i * bs + j];
                    self.denominator[base + j] += weight;
                }
            }
        }
    }

    /// Normalized estimate; pixels no block covered take `fallback`.
    pub fn finish(&self, fallback: &[f64]) -> Vec<f64> {
        self.numerator
            .iter()
            .zip(&self.denominator)
            .zip(fallback)
            .map(|((&n, &d), &f)| if d > 0.0 { n / d } else { f })
            .collect()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Blends filtered groups into a plane: each pixel is
/// `Σ(weight·sample) / Σweight` over the blocks covering it, or the input
/// value if none does.
pub fn aggregate(input: &PlanarImage, groups: &[(BlockGroup, f64)]) -> Result<PlanarImage> {
    input.expect_space(ColorSpace::Scalar)?;
    let (w, h) = (input.width(), input.height());
    let mut acc = Aggregator::new(w, h);
    for (g, weight) in groups {
        if weight.is_nan() || *weight <= 0.0 {
            return Err(Error::param("aggregation weights must be positive"));
        }
        if g.coords
            .iter()
            .any(|&(r, c)| r + g.block_size > h || c + g.block_size > w)
        {
            return Err(Error::param("block outside image bounds"));
        }
        acc.add(g, *weight);
    }
    PlanarImage::new(w, h, ColorSpace::Scalar, vec![acc.finish(input.plane(0))])
}

/// Reference positions along one axis: every `step`, plus a final position
/// flush with the far edge.
pub fn reference_positions(len: usize, block_size: usize, step: usize) -> Vec<usize> {
    let last = len - block_size;
    let mut v: Vec<usize> = (0..=last).step_by(step).collect();
    if *v.last().unwrap() != last {
        v.push(last);
    }
    v
}

/// Group coordinates for every reference block of an XYZ image, computed on
/// its luminance plane.
pub fn plan_groups(img: &PlanarImage, p: &Cbm3dParams) -> Result<Vec<Vec<(usize, usize)>>> {
    img.expect_space(ColorSpace::Xyz)?;
    p.validate()?;
    check_size(img, p)?;
    let yuv = xyz_to_yuv(img)?;
    Ok(plan_on_plane(yuv.plane(0), img.width(), img.height(), p))
}

fn plan_on_plane(
    luma: &[f64],
    width: usize,
    height: usize,
    p: &Cbm3dParams,
) -> Vec<Vec<(usize, usize)>> {
    let refs: Vec<(usize, usize)> = reference_positions(height, p.block_size, p.step)
        .into_iter()
        .flat_map(|r| {
            reference_positions(width, p.block_size, p.step)
                .into_iter()
                .map(move |c| (r, c))
        })
        .collect();
    refs.par_iter()
        .map(|&r| match_coords(luma, width, height, r, p))
        .collect()
}

fn check_size(img: &PlanarImage, p: &Cbm3dParams) -> Result<()> {
    if img.width() < p.block_size || img.height() < p.block_size {
        return Err(Error::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            block: p.block_size,
        });
    }
    Ok(())
}

/// Per-channel noise standard deviations after the luminance–chrominance
/// map, for noise with covariance `sigma² · cov` in XYZ.
pub fn yuv_channel_sigmas(sigma: f64, cov: &ConversionMatrix) -> [f64; 3] {
    let t = XYZ_TO_YUV;
    let full = t.mul(cov).mul(&t.transpose());
    [0, 1, 2].map(|i| sigma * full.0[i][i].max(0.0).sqrt())
}

/// Identity covariance: i.i.d. noise of standard deviation `sigma` per plane.
pub const IID: ConversionMatrix =
    ConversionMatrix([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

/// Denoises an XYZ image corrupted by i.i.d. noise of std `p.sigma` per plane.
pub fn cbm3d_denoise(img: &PlanarImage, p: &Cbm3dParams) -> Result<PlanarImage> {
    cbm3d_denoise_with_covariance(img, p, &IID)
}

/// Denoises an XYZ image whose noise covariance is `p.sigma² · cov`.
///
/// Noise added in RGB and carried through the linear XYZ map has
/// `cov = M·Mᵀ`; the per-channel thresholds follow from it.
pub fn cbm3d_denoise_with_covariance(
    img: &PlanarImage,
    p: &Cbm3dParams,
    cov: &ConversionMatrix,
) -> Result<PlanarImage> {
    img.expect_space(ColorSpace::Xyz)?;
    p.validate()?;
    check_size(img, p)?;
    let (w, h) = (img.width(), img.height());
    let yuv = xyz_to_yuv(img)?;
    let sigmas = yuv_channel_sigmas(p.sigma, cov);
    let plan = plan_on_plane(yuv.plane(0), w, h, p);

    let mut accumulators = vec![Aggregator::new(w, h); 3];
    // Bounded batches keep memory flat on large images; accumulation order
    // is fixed by the plan.
    for batch in plan.chunks(256) {
        let filtered: Vec<[(BlockGroup, f64); 3]> = batch
            .par_iter()
            .map(|coords| {
                [0, 1, 2].map(|c| {
                    let group = BlockGroup::gather(yuv.plane(c), w, p.block_size, coords.clone());
                    let params = Cbm3dParams {
                        sigma: sigmas[c],
                        ..*p
                    };
                    hard_threshold_group(&group, &params).expect("planned groups are powers of two")
                })
            })
            .collect();
        for groups in &filtered {
            for (acc, (g, weight)) in accumulators.iter_mut().zip(groups) {
                acc.add(g, *weight);
            }
        }
    }
    let planes = accumulators
        .iter()
        .enumerate()
        .map(|(c, acc)| acc.finish(yuv.plane(c)))
        .collect();
    let denoised = PlanarImage::new(w, h, ColorSpace::Yuv, planes)?;
    yuv_to_xyz(&denoised)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{add_gaussian_noise, NoiseParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(w: usize, h: usize, data: Vec<f64>) -> PlanarImage {
        PlanarImage::new(w, h, ColorSpace::Scalar, vec![data]).unwrap()
    }

    /// Exhaustive matcher: scores every block in the image, filters by the
    /// window and threshold, then sorts the whole list.
    fn brute_force_match(
        img: &PlanarImage,
        reference: (usize, usize),
        p: &Cbm3dParams,
    ) -> Vec<(usize, usize)> {
        let bs = p.block_size;
        let (w, h) = (img.width(), img.height());
        let mut all = Vec::new();
        for r in 0..=h - bs {
            for c in 0..=w - bs {
                let in_window = r.abs_diff(reference.0) <= p.search_radius
                    && c.abs_diff(reference.1) <= p.search_radius;
                if !in_window || (r, c) == reference {
                    continue;
                }
                let mut d = 0.0;
                for i in 0..bs {
                    for j in 0..bs {
                        let diff =
                            img.get(0, reference.0 + i, reference.1 + j) - img.get(0, r + i, c + j);
                        d += diff * diff;
                    }
                }
                d /= (bs * bs) as f64;
                if d < p.match_threshold {
                    all.push((d, r, c));
                }
            }
        }
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut out = vec![reference];
        out.extend(all.into_iter().map(|(_, r, c)| (r, c)));
        let mut n = 1;
        while n * 2 <= out.len().min(p.max_group) {
            n *= 2;
        }
        out.truncate(n);
        out
    }

    #[test]
    fn constant_image_groups_are_row_major() {
        let img = scalar(20, 20, vec![0.3; 400]);
        let p = Cbm3dParams {
            block_size: 4,
            search_radius: 3,
            ..Cbm3dParams::default()
        };
        let g = block_match(&img, (5, 5), &p).unwrap();
        assert_eq!(g.len(), 16);
        assert_eq!(g.coords[0], (5, 5));
        let mut expected = Vec::new();
        for r in 2..=8 {
            for c in 2..=8 {
                if (r, c) != (5, 5) {
                    expected.push((r, c));
                }
            }
        }
        assert_eq!(&g.coords[1..], &expected[..15]);
    }

    #[test]
    fn single_twin_block_pairs_up() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (w, h) = (24, 24);
        // Checkerboard of random values with large contrast, then copy the
        // reference block to one other location.
        let mut data: Vec<f64> = (0..w * h)
            .map(|i| if (i / w + i % w) % 2 == 0 { 0.9 } else { 0.1 } + rng.random_range(-0.05..0.05))
            .collect();
        let bs = 4;
        let (src, dst) = ((3usize, 3usize), (14usize, 15usize));
        for i in 0..bs {
            for j in 0..bs {
                data[(dst.0 + i) * w + dst.1 + j] = data[(src.0 + i) * w + src.1 + j];
            }
        }
        let img = scalar(w, h, data);
        let p = Cbm3dParams {
            block_size: bs,
            search_radius: 19,
            match_threshold: 1e-6,
            ..Cbm3dParams::default()
        };
        let g = block_match(&img, src, &p).unwrap();
        assert_eq!(g.coords, vec![src, dst]);
    }

    #[test]
    fn block_match_agrees_with_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10 {
            let img = scalar(32, 32, (0..1024).map(|_| rng.random::<f64>()).collect());
            let p = Cbm3dParams {
                block_size: 4,
                search_radius: 7,
                match_threshold: 0.12,
                ..Cbm3dParams::default()
            };
            let reference = (rng.random_range(0..=28), rng.random_range(0..=28));
            let g = block_match(&img, reference, &p).unwrap();
            assert_eq!(g.coords, brute_force_match(&img, reference, &p));
        }
    }

    #[test]
    fn group_sizes_are_powers_of_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = scalar(32, 32, (0..1024).map(|_| rng.random::<f64>()).collect());
        for t in [0.0, 0.05, 0.1, 0.15, 1.0] {
            let p = Cbm3dParams {
                block_size: 4,
                match_threshold: t,
                ..Cbm3dParams::default()
            };
            let g = block_match(&img, (10, 10), &p).unwrap();
            assert!(g.len().is_power_of_two() && g.len() <= 16);
        }
    }

    #[test]
    fn dct_2x2_matches_dense_matrix_oracle() {
        let group = BlockGroup {
            block_size: 2,
            coords: vec![(0, 0)],
            patches: vec![vec![1.0, 0.0, 0.0, 0.0]],
            reference: 0,
        };
        let spec = forward_3d(&group);
        // Kronecker product C ⊗ C applied to vec(X), C the 2-point DCT.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let c = [[s, s], [s, -s]];
        let x = [1.0, 0.0, 0.0, 0.0];
        let mut oracle = [0.0; 4];
        for k in 0..2 {
            for l in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        oracle[k * 2 + l] += c[k][i] * c[l][j] * x[i * 2 + j];
                    }
                }
            }
        }
        for (a, b) in spec[0].iter().zip(oracle) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(oracle.iter().all(|v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn transform_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for n in [1usize, 2, 4, 8, 16] {
            let group = BlockGroup {
                block_size: 8,
                coords: vec![(0, 0); n],
                patches: (0..n)
                    .map(|_| (0..64).map(|_| rng.random::<f64>()).collect())
                    .collect(),
                reference: 0,
            };
            let spec = forward_3d(&group);
            let e_in: f64 = group.patches.iter().flatten().map(|x| x * x).sum();
            let e_out: f64 = spec.iter().flatten().map(|x| x * x).sum();
            assert!((e_in - e_out).abs() < 1e-6);
            let back = inverse_3d(&spec, 8);
            for (a, b) in back.iter().flatten().zip(group.patches.iter().flatten()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn haar_dc_is_scaled_sum() {
        let mut x = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        haar_forward(&mut x);
        assert!((x[0] - 36.0 / 8f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_sigma_threshold_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let group = BlockGroup {
            block_size: 8,
            coords: vec![(0, 0); 4],
            patches: (0..4)
                .map(|_| (0..64).map(|_| rng.random::<f64>()).collect())
                .collect(),
            reference: 0,
        };
        let (out, w) = hard_threshold_group(&group, &Cbm3dParams::with_sigma(0.0)).unwrap();
        for (a, b) in out
            .patches
            .iter()
            .flatten()
            .zip(group.patches.iter().flatten())
        {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(w > 0.0 && w <= 1.0);
    }

    #[test]
    fn constant_group_survives_thresholding() {
        let group = BlockGroup {
            block_size: 8,
            coords: vec![(0, 0); 8],
            patches: vec![vec![0.37; 64]; 8],
            reference: 0,
        };
        let (out, w) = hard_threshold_group(&group, &Cbm3dParams::with_sigma(0.5)).unwrap();
        for v in out.patches.iter().flatten() {
            assert!((v - 0.37).abs() < 1e-12);
        }
        assert_eq!(w, 1.0);
    }

    #[test]
    fn thresholding_contracts_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let group = BlockGroup {
            block_size: 4,
            coords: vec![(0, 0); 8],
            patches: (0..8)
                .map(|_| (0..16).map(|_| rng.random::<f64>()).collect())
                .collect(),
            reference: 0,
        };
        let before = forward_3d(&group);
        let (out, _) = hard_threshold_group(&group, &Cbm3dParams::with_sigma(0.1)).unwrap();
        let after = forward_3d(&out);
        for (a, b) in after.iter().flatten().zip(before.iter().flatten()) {
            assert!(a.abs() <= b.abs() + 1e-12);
        }
    }

    #[test]
    fn aggregate_single_and_overlap() {
        let input = scalar(6, 6, vec![0.9; 36]);
        let g = BlockGroup {
            block_size: 2,
            coords: vec![(0, 0)],
            patches: vec![vec![0.25; 4]],
            reference: 0,
        };
        let out = aggregate(&input, &[(g, 1.0)]).unwrap();
        assert_eq!(out.get(0, 0, 0), 0.25);
        assert_eq!(out.get(0, 1, 1), 0.25);
        assert_eq!(out.get(0, 3, 3), 0.9);

        let a = BlockGroup {
            block_size: 2,
            coords: vec![(0, 0)],
            patches: vec![vec![0.2; 4]],
            reference: 0,
        };
        let b = BlockGroup {
            block_size: 2,
            coords: vec![(0, 1)],
            patches: vec![vec![0.6; 4]],
            reference: 0,
        };
        let out = aggregate(&input, &[(a, 0.5), (b, 0.5)]).unwrap();
        assert!((out.get(0, 0, 1) - 0.4).abs() < 1e-15);
        assert_eq!(out.get(0, 0, 0), 0.2);
        assert_eq!(out.get(0, 0, 2), 0.6);
    }

    #[test]
    fn aggregate_matches_direct_accumulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (w, h, bs) = (10, 9, 3);
        let input = scalar(w, h, (0..w * h).map(|_| rng.random::<f64>()).collect());
        let groups: Vec<(BlockGroup, f64)> = (0..12)
            .map(|_| {
                let n = [1, 2, 4][rng.random_range(0..3)];
                let coords: Vec<(usize, usize)> = (0..n)
                    .map(|_| (rng.random_range(0..=h - bs), rng.random_range(0..=w - bs)))
                    .collect();
                let patches = (0..n)
                    .map(|_| (0..bs * bs).map(|_| rng.random::<f64>()).collect())
                    .collect();
                (
                    BlockGroup {
                        block_size: bs,
                        coords,
                        patches,
                        reference: 0,
                    },
                    rng.random_range(0.01..1.0),
                )
            })
            .collect();
        let out = aggregate(&input, &groups).unwrap();
        for y in 0..h {
            for x in 0..w {
                let (mut num, mut den) = (0.0, 0.0);
                for (g, wt) in &groups {
                    for (&(r, c), patch) in g.coords.iter().zip(&g.patches) {
                        if (r..r + bs).contains(&y) && (c..c + bs).contains(&x) {
                            num += wt * patch[(y - r) * bs + (x - c)];
                            den += wt;
                        }
                    }
                }
                let expected = if den > 0.0 {
                    num / den
                } else {
                    input.get(0, y, x)
                };
                assert!((out.get(0, y, x) - expected.clamp(0.0, 1.0)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn reference_grid_covers_edges() {
        assert_eq!(reference_positions(20, 8, 3), vec![0, 3, 6, 9, 12]);
        assert_eq!(reference_positions(21, 8, 3), vec![0, 3, 6, 9, 12, 13]);
        assert_eq!(reference_positions(8, 8, 3), vec![0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let small = PlanarImage::filled(5, 5, ColorSpace::Xyz, &[0.5; 3]).unwrap();
        assert!(matches!(
            cbm3d_denoise(&small, &Cbm3dParams::default()),
            Err(Error::ImageTooSmall { .. })
        ));
        let rgb = PlanarImage::filled(16, 16, ColorSpace::Rgb, &[0.5; 3]).unwrap();
        assert!(matches!(
            cbm3d_denoise(&rgb, &Cbm3dParams::default()),
            Err(Error::WrongSpace { .. })
        ));
        let bad = Cbm3dParams {
            max_group: 12,
            ..Cbm3dParams::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_sigma_denoise_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let values: Vec<f64> = (0..3 * 24 * 20)
            .map(|_| rng.random_range(0.2..0.8))
            .collect();
        let img = PlanarImage::from_fn(24, 20, ColorSpace::Xyz, |c, r, col| {
            values[c * 480 + r * 24 + col]
        })
        .unwrap();
        let img = add_gaussian_noise(&img, &NoiseParams::new(0.02, 5).unwrap()).unwrap();
        let out = cbm3d_denoise(&img, &Cbm3dParams::with_sigma(0.0)).unwrap();
        for c in 0..3 {
            for (a, b) in out.plane(c).iter().zip(img.plane(c)) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn noisy_constant_variance_drops() {
        let clean = PlanarImage::filled(48, 48, ColorSpace::Xyz, &[0.5, 0.45, 0.55]).unwrap();
        let noisy = add_gaussian_noise(&clean, &NoiseParams::new(0.01, 77).unwrap()).unwrap();
        let out = cbm3d_denoise(&noisy, &Cbm3dParams::with_sigma(0.1)).unwrap();
        for c in 0..3 {
            let p = out.plane(c);
            let m = p.iter().sum::<f64>() / p.len() as f64;
            let var = p.iter().map(|x| (x - m).powi(2)).sum::<f64>() / p.len() as f64;
            assert!(var <= 0.1 * 0.01, "plane {c} variance {var}");
        }
    }

    #[test]
    fn chroma_perturbations_do_not_change_groups() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let base: Vec<[f64; 3]> = (0..32 * 32)
            .map(|_| {
                let l = rng.random_range(0.3..0.7);
                [l, l, l]
            })
            .collect();
        let img = PlanarImage::from_fn(32, 32, ColorSpace::Xyz, |c, r, col| base[r * 32 + col][c])
            .unwrap();
        // Shift X up and Z down by the same amount: luminance is unchanged.
        let perturbed = PlanarImage::from_fn(32, 32, ColorSpace::Xyz, |c, r, col| {
            let d = 0.2 * (((r * 7 + col * 3) % 5) as f64 / 4.0 - 0.5);
            base[r * 32 + col][c] + [d, 0.0, -d][c]
        })
        .unwrap();
        let p = Cbm3dParams {
            match_threshold: 0.02,
            ..Cbm3dParams::default()
        };
        assert_eq!(
            plan_groups(&img, &p).unwrap(),
            plan_groups(&perturbed, &p).unwrap()
        );
    }

    #[test]
    fn denoise_is_deterministic() {
        let clean = PlanarImage::from_fn(32, 32, ColorSpace::Xyz, |c, r, col| {
            if col > 15 {
                0.7
            } else {
                0.3 + 0.05 * c as f64 + 0.001 * r as f64
            }
        })
        .unwrap();
        let noisy = add_gaussian_noise(&clean, &NoiseParams::new(0.01, 1).unwrap()).unwrap();
        let p = Cbm3dParams::with_sigma(0.1);
        let a = cbm3d_denoise(&noisy, &p).unwrap();
        let b = cbm3d_denoise(&noisy, &p).unwrap();
        assert_eq!(a, b);
        assert!(a.planes().iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn channel_sigmas_for_iid_noise() {
        let s = yuv_channel_sigmas(0.3, &IID);
        assert!((s[0] - 0.3 / 3f64.sqrt()).abs() < 1e-12);
        assert!((s[1] - 0.3 / 2f64.sqrt()).abs() < 1e-12);
        assert!((s[2] - 0.3 * (6f64).sqrt() / 4.0).abs() < 1e-12);
    }
}
