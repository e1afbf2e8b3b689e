//! RGB → XYZ → L*a*b* conversions and the luminance–chrominance transform
//! used for collaborative denoising.
//!
//! XYZ images are stored with each channel divided by its row sum so that
//! RGB white maps to `(1, 1, 1)` and every channel spans `[0, 1]`.

use crate::error::{Error, Result};
use crate::imaging::{ColorSpace, PlanarImage};

/// 3×3 linear map applied to column vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConversionMatrix(pub [[f64; 3]; 3]);

/// Linear RGB to CIE XYZ (D65 primaries).
pub const RGB_TO_XYZ: ConversionMatrix = ConversionMatrix([
    [0.412453, 0.357580, 0.180423],
    [0.212671, 0.715160, 0.072169],
    [0.019334, 0.119193, 0.950227],
]);

impl ConversionMatrix {
    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    pub fn row_sums(&self) -> [f64; 3] {
        self.0.map(|r| r.iter().sum())
    }

    /// Divides every row by its sum.
    pub fn row_normalized(&self) -> Self {
        let sums = self.row_sums();
        let mut m = self.0;
        for (row, s) in m.iter_mut().zip(sums) {
            row.iter_mut().for_each(|x| *x /= s);
        }
        Self(m)
    }

    pub fn mul(&self, other: &Self) -> Self {
        let (a, b) = (&self.0, &other.0);
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        Self(m)
    }

    pub fn transpose(&self) -> Self {
        let a = &self.0;
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = a[j][i];
            }
        }
        Self(m)
    }

    pub fn inverse(&self) -> Option<Self> {
        let m = &self.0;
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| {
            m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]
        };
        let c00 = cof(1, 2, 1, 2);
        let c01 = -cof(1, 2, 0, 2);
        let c02 = cof(1, 2, 0, 1);
        let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
        if det.abs() < 1e-15 {
            return None;
        }
        let adj = [
            [c00, -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
            [c01, cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
            [c02, -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
        ];
        Some(Self(adj.map(|r| r.map(|x| x / det))))
    }
}

/// The stored RGB→XYZ map: [`RGB_TO_XYZ`] with each row scaled to sum to 1.
pub fn rgb_to_xyz_matrix() -> ConversionMatrix {
    RGB_TO_XYZ.row_normalized()
}

/// Reference white in the same scale as the XYZ image it is applied to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhitePoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl WhitePoint {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        if [x, y, z].iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(Self { x, y, z })
        } else {
            Err(Error::param(format!(
                "white point components must be positive, got ({x}, {y}, {z})"
            )))
        }
    }

    /// RGB white through the unnormalized matrix: the row sums
    /// `(0.950456, 1.0, 1.088754)`.
    pub fn rgb_white_unnormalized() -> Self {
        let [x, y, z] = RGB_TO_XYZ.row_sums();
        Self { x, y, z }
    }
}

impl Default for WhitePoint {
    /// RGB white in the row-normalized storage scale used by [`rgb_to_xyz`].
    fn default() -> Self {
        Self {
            x: 1.0,
            y: 1.0,
            z: 1.0,
        }
    }
}

fn map_pixels(
    img: &PlanarImage,
    space: ColorSpace,
    f: impl Fn([f64; 3]) -> [f64; 3],
) -> Result<PlanarImage> {
    let n = img.width() * img.height();
    let mut planes = vec![vec![0.0; n]; 3];
    let (p0, p1, p2) = (img.plane(0), img.plane(1), img.plane(2));
    for i in 0..n {
        let out = f([p0[i], p1[i], p2[i]]);
        for c in 0..3 {
            planes[c][i] = out[c];
        }
    }
    PlanarImage::new(img.width(), img.height(), space, planes)
}

pub fn rgb_to_xyz(img: &PlanarImage) -> Result<PlanarImage> {
    img.expect_space(ColorSpace::Rgb)?;
    let m = rgb_to_xyz_matrix();
    map_pixels(img, ColorSpace::Xyz, |p| m.apply(p))
}

/// Inverse of [`rgb_to_xyz`]; out-of-gamut results are clamped.
pub fn xyz_to_rgb(img: &PlanarImage) -> Result<PlanarImage> {
    img.expect_space(ColorSpace::Xyz)?;
    let inv = rgb_to_xyz_matrix()
        .inverse()
        .expect("RGB to XYZ matrix is invertible");
    map_pixels(img, ColorSpace::Rgb, |p| inv.apply(p))
}

/// `t` at which the cube-root and linear branches meet: `(6/29)^3`.
pub const LAB_KNOT: f64 = (6.0 / 29.0) * (6.0 / 29.0) * (6.0 / 29.0);

pub fn lab_f_cube(t: f64) -> f64 {
    t.cbrt()
}

pub fn lab_f_linear(t: f64) -> f64 {
    (29.0 / 6.0) * (29.0 / 6.0) * t / 3.0 + 16.0 / 116.0
}

/// Piecewise companding function of the L*a*b* transform.
pub fn lab_f(t: f64) -> f64 {
    if t > LAB_KNOT {
        lab_f_cube(t)
    } else {
        lab_f_linear(t)
    }
}

/// Unscaled `(L, a, b)` for one XYZ pixel.
pub fn xyz_to_lab_pixel(xyz: [f64; 3], wp: &WhitePoint) -> [f64; 3] {
    let fx = lab_f(xyz[0] / wp.x);
    let fy = lab_f(xyz[1] / wp.y);
    let fz = lab_f(xyz[2] / wp.z);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// L*a*b* with storage scaling: `L/100`, and `a`, `b` mapped from
/// `[-128, 127]` to `[0, 1]`.
pub fn xyz_to_lab(img: &PlanarImage, wp: &WhitePoint) -> Result<PlanarImage> {
    img.expect_space(ColorSpace::Xyz)?;
    map_pixels(img, ColorSpace::Lab, |p| {
        let [l, a, b] = xyz_to_lab_pixel(p, wp);
        [l / 100.0, (a + 128.0) / 255.0, (b + 128.0) / 255.0]
    })
}

/// Centering offset added to the two chrominance channels.
pub const CHROMA_OFFSET: f64 = 0.5;

/// Opponent luminance–chrominance rows (before the chroma offset):
/// luminance is the channel mean, chrominance uses the two orthogonal
/// difference axes `(1, 0, -1)` and `(1, -2, 1)`.
pub const XYZ_TO_YUV: ConversionMatrix = ConversionMatrix([
    [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    [0.5, 0.0, -0.5],
    [0.25, -0.5, 0.25],
]);

pub fn xyz_to_yuv_pixel(p: [f64; 3]) -> [f64; 3] {
    let [y, u, v] = XYZ_TO_YUV.apply(p);
    [y, u + CHROMA_OFFSET, v + CHROMA_OFFSET]
}

pub fn yuv_to_xyz_pixel(p: [f64; 3]) -> [f64; 3] {
    let (m, u, v) = (p[0], p[1] - CHROMA_OFFSET, p[2] - CHROMA_OFFSET);
    [
        m + u + 2.0 * v / 3.0,
        m - 4.0 * v / 3.0,
        m - u + 2.0 * v / 3.0,
    ]
}

pub fn xyz_to_yuv(img: &PlanarImage) -> Result<PlanarImage> {
    img.expect_space(ColorSpace::Xyz)?;
    map_pixels(img, ColorSpace::Yuv, xyz_to_yuv_pixel)
}

pub fn yuv_to_xyz(img: &PlanarImage) -> Result<PlanarImage> {
    img.expect_space(ColorSpace::Yuv)?;
    map_pixels(img, ColorSpace::Xyz, yuv_to_xyz_pixel)
}
