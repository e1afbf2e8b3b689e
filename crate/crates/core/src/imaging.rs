//! Raster types, 8-bit file I/O and the seeded Gaussian noise injector.
//!
//! [`PlanarImage`] stores one `f64` plane per channel with samples clamped to
//! `[0, 1]`. Unbounded intermediate results (filter responses, gradient
//! magnitudes) live in [`Field`] instead, which carries no range invariant.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ColorSpace {
    Rgb,
    Xyz,
    Lab,
    Yuv,
    Scalar,
}

impl ColorSpace {
    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Scalar => 1,
            _ => 3,
        }
    }
}

/// H×W×C raster with per-channel planes in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarImage {
    width: usize,
    height: usize,
    space: ColorSpace,
    planes: Vec<Vec<f64>>,
}

impl PlanarImage {
    /// Builds an image from planes, clamping every sample to `[0, 1]`.
    ///
    /// Fails on zero dimensions, a plane count that does not match the space
    /// tag, a plane of the wrong length, or a non-finite sample.
    pub fn new(
        width: usize,
        height: usize,
        space: ColorSpace,
        mut planes: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::DimensionMismatch(format!(
                "image dimensions must be nonzero, got {width}x{height}"
            )));
        }
        if planes.len() != space.channels() {
            return Err(Error::DimensionMismatch(format!(
                "{space:?} needs {} planes, got {}",
                space.channels(),
                planes.len()
            )));
        }
        for (c, plane) in planes.iter_mut().enumerate() {
            if plane.len() != width * height {
                return Err(Error::DimensionMismatch(format!(
                    "plane {c} has {} samples, expected {}",
                    plane.len(),
                    width * height
                )));
            }
            for (i, v) in plane.iter_mut().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        channel: c,
                        index: i,
                    });
                }
                *v = v.clamp(0.0, 1.0);
            }
        }
        Ok(Self {
            width,
            height,
            space,
            planes,
        })
    }

    /// Constant image with one value per channel.
    pub fn filled(width: usize, height: usize, space: ColorSpace, values: &[f64]) -> Result<Self> {
        let planes = values.iter().map(|&v| vec![v; width * height]).collect();
        Self::new(width, height, space, planes)
    }

    /// Builds an image by evaluating `f(channel, row, col)` at every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        space: ColorSpace,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let planes = (0..space.channels())
            .map(|c| {
                (0..width * height)
                    .map(|i| f(c, i / width, i % width))
                    .collect()
            })
            .collect();
        Self::new(width, height, space, planes)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.planes.len()
    }

    pub fn space(&self) -> ColorSpace {
        self.space
    }

    pub fn plane(&self, channel: usize) -> &[f64] {
        &self.planes[channel]
    }

    pub fn planes(&self) -> &[Vec<f64>] {
        &self.planes
    }

    pub fn into_planes(self) -> Vec<Vec<f64>> {
        self.planes
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.planes[channel][row * self.width + col]
    }

    /// Returns the pixel at `(row, col)` for a three-channel image.
    pub fn pixel3(&self, row: usize, col: usize) -> [f64; 3] {
        let i = row * self.width + col;
        [self.planes[0][i], self.planes[1][i], self.planes[2][i]]
    }

    /// Extracts one channel as a scalar image.
    pub fn channel_image(&self, channel: usize) -> PlanarImage {
        PlanarImage {
            width: self.width,
            height: self.height,
            space: ColorSpace::Scalar,
            planes: vec![self.planes[channel].clone()],
        }
    }

    /// Re-tags the image. The channel count must agree with the new tag.
    pub fn with_space(self, space: ColorSpace) -> Result<Self> {
        if space.channels() != self.channels() {
            return Err(Error::DimensionMismatch(format!(
                "cannot tag a {}-channel image as {space:?}",
                self.channels()
            )));
        }
        Ok(Self { space, ..self })
    }

    pub fn expect_space(&self, space: ColorSpace) -> Result<()> {
        if self.space != space {
            return Err(Error::WrongSpace {
                expected: space,
                actual: self.space,
            });
        }
        Ok(())
    }

    pub fn same_dims<T: Dims>(&self, other: &T) -> bool {
        self.width == other.dims().0 && self.height == other.dims().1
    }
}

/// Anything with a width and height.
pub trait Dims {
    fn dims(&self) -> (usize, usize);
}

impl Dims for PlanarImage {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Unbounded scalar field, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Field {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "field of {width}x{height} needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_plane(img: &PlanarImage, channel: usize) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            data: img.plane(channel).to_vec(),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Dims for Field {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Reads an 8-bit PNG or binary PNM (P5/P6) file.
///
/// Alpha channels are dropped. Anything wider than 8 bits per sample is
/// rejected rather than truncated.
pub fn load_image(path: impl AsRef<Path>) -> Result<PlanarImage> {
    use image::DynamicImage as D;

    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = image::guess_format(&bytes).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if !matches!(format, image::ImageFormat::Png | image::ImageFormat::Pnm) {
        return Err(Error::UnsupportedFormat(path.to_path_buf()));
    }
    let decoded =
        image::load_from_memory_with_format(&bytes, format).map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let scale = |v: u8| f64::from(v) / 255.0;
    match decoded {
        D::ImageLuma8(buf) => {
            let plane = buf.into_raw().into_iter().map(scale).collect();
            PlanarImage::new(w, h, ColorSpace::Scalar, vec![plane])
        }
        D::ImageLumaA8(buf) => {
            let plane = buf
                .into_raw()
                .chunks_exact(2)
                .map(|p| scale(p[0]))
                .collect();
            PlanarImage::new(w, h, ColorSpace::Scalar, vec![plane])
        }
        D::ImageRgb8(buf) => split_interleaved(w, h, &buf.into_raw(), 3),
        D::ImageRgba8(buf) => split_interleaved(w, h, &buf.into_raw(), 4),
        other => Err(Error::UnsupportedBitDepth {
            path: path.to_path_buf(),
            detail: format!("{:?}", other.color()),
        }),
    }
}

fn split_interleaved(w: usize, h: usize, raw: &[u8], stride: usize) -> Result<PlanarImage> {
    let mut planes: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(w * h)).collect();
    for px in raw.chunks_exact(stride) {
        for (plane, &v) in planes.iter_mut().zip(px) {
            plane.push(f64::from(v) / 255.0);
        }
    }
    PlanarImage::new(w, h, ColorSpace::Rgb, planes)
}

/// Quantizes a `[0,1]` sample to 8 bits with `round(x * 255)`.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes an RGB or scalar image as 8-bit PNG, PPM (P6) or PGM (P5),
/// chosen by file extension.
pub fn save_image(img: &PlanarImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if !matches!(img.space(), ColorSpace::Rgb | ColorSpace::Scalar) {
        return Err(Error::param(format!(
            "only RGB or scalar images can be saved, got {:?}",
            img.space()
        )));
    }
    let channels = img.channels();
    let mut raw = Vec::with_capacity(img.width() * img.height() * channels);
    for i in 0..img.width() * img.height() {
        for c in 0..channels {
            raw.push(quantize(img.plane(c)[i]));
        }
    }
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "png" => {
            let color = if channels == 3 {
                image::ExtendedColorType::Rgb8
            } else {
                image::ExtendedColorType::L8
            };
            image::save_buffer_with_format(
                path,
                &raw,
                img.width() as u32,
                img.height() as u32,
                color,
                image::ImageFormat::Png,
            )
            .map_err(|e| Error::Encode {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        }
        "ppm" | "pgm" | "pnm" => {
            let magic = if channels == 3 { "P6" } else { "P5" };
            let mut out = Vec::with_capacity(raw.len() + 32);
            write!(out, "{magic}\n{} {}\n255\n", img.width(), img.height())
                .expect("writing to a Vec cannot fail");
            out.extend_from_slice(&raw);
            fs::write(path, out).map_err(|e| Error::io(path, e))
        }
        _ => Err(Error::UnsupportedFormat(path.to_path_buf())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Variance on the `[0,1]` intensity scale.
    pub variance: f64,
    pub seed: u64,
}

impl NoiseParams {
    pub fn new(variance: f64, seed: u64) -> Result<Self> {
        if !(variance.is_finite() && variance >= 0.0) {
            return Err(Error::param(format!(
                "noise variance must be finite and >= 0, got {variance}"
            )));
        }
        Ok(Self { variance, seed })
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Adds i.i.d. zero-mean Gaussian noise to every sample and clamps to `[0,1]`.
///
/// Samples are drawn from a ChaCha8 stream seeded with `params.seed`, channel
/// by channel in row-major order, so the output is reproducible bit for bit.
pub fn add_gaussian_noise(img: &PlanarImage, params: &NoiseParams) -> Result<PlanarImage> {
    let params = NoiseParams::new(params.variance, params.seed)?;
    if params.variance == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, params.std_dev()).map_err(|e| Error::param(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let planes = img
        .planes()
        .iter()
        .map(|plane| plane.iter().map(|&v| v + normal.sample(&mut rng)).collect())
        .collect();
    PlanarImage::new(img.width(), img.height(), img.space(), planes)
}
