//! Synthetic color scenes with exact edge ground truth.
//!
//! Pixel `(r, c)` covers `[c, c+1] × [r, r+1]` and has its center at
//! `(c + 0.5, r + 0.5)`. Scenes are rendered with 4×4 supersampling, so hard
//! boundaries are anti-aliased. The reference edge of a scene marks, for
//! every pair of 4-adjacent pixels whose centers fall in different regions,
//! the pixel whose center lies closer to the boundary.

use crate::imaging::{ColorSpace, PlanarImage};
use crate::refine::EdgeMap;

const SUPERSAMPLE: usize = 4;

/// Region outline as a signed distance (negative inside).
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Rect {
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
    },
    Circle {
        cx: f64,
        cy: f64,
        r: f64,
    },
    Ellipse {
        cx: f64,
        cy: f64,
        rx: f64,
        ry: f64,
    },
    /// Convex polygon, vertices in either winding order.
    Polygon(Vec<(f64, f64)>),
    /// Points with `x·cosθ + y·sinθ > offset`.
    HalfPlane {
        theta: f64,
        offset: f64,
    },
}

impl Shape {
    pub fn sdf(&self, x: f64, y: f64) -> f64 {
        match self {
            Shape::Rect { x0, y0, x1, y1 } => {
                let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
                let (hx, hy) = ((x1 - x0) / 2.0, (y1 - y0) / 2.0);
                let dx = (x - cx).abs() - hx;
                let dy = (y - cy).abs() - hy;
                let outside = dx.max(0.0).hypot(dy.max(0.0));
                outside + dx.max(dy).min(0.0)
            }
            Shape::Circle { cx, cy, r } => (x - cx).hypot(y - cy) - r,
            Shape::Ellipse { cx, cy, rx, ry } => {
                // First-order distance estimate; exact on the axes.
                let (u, v) = ((x - cx) / rx, (y - cy) / ry);
                let k = u.hypot(v);
                if k == 0.0 {
                    return -rx.min(*ry);
                }
                let grad = (u / rx).hypot(v / ry) / k;
                (k - 1.0) / grad
            }
            Shape::Polygon(pts) => {
                let n = pts.len();
                let mut d = f64::INFINITY;
                let (mut pos, mut neg) = (false, false);
                for i in 0..n {
                    let (ax, ay) = pts[i];
                    let (bx, by) = pts[(i + 1) % n];
                    let (ex, ey) = (bx - ax, by - ay);
                    let (wx, wy) = (x - ax, y - ay);
                    let t = ((wx * ex + wy * ey) / (ex * ex + ey * ey)).clamp(0.0, 1.0);
                    d = d.min((wx - t * ex).hypot(wy - t * ey));
                    let cross = ex * wy - ey * wx;
                    pos |= cross > 0.0;
                    neg |= cross < 0.0;
                }
                if !(pos && neg) {
                    -d
                } else {
                    d
                }
            }
            Shape::HalfPlane { theta, offset } => offset - (x * theta.cos() + y * theta.sin()),
        }
    }
}

/// A colored shape drawn over everything before it.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub shape: Shape,
    pub color: [f64; 3],
    /// Width of a linear transition across the boundary; 0 for a hard edge.
    pub ramp: f64,
}

impl Region {
    pub fn hard(shape: Shape, color: [f64; 3]) -> Self {
        Self {
            shape,
            color,
            ramp: 0.0,
        }
    }

    pub fn soft(shape: Shape, color: [f64; 3], ramp: f64) -> Self {
        Self { shape, color, ramp }
    }

    fn coverage(&self, x: f64, y: f64) -> f64 {
        let d = self.shape.sdf(x, y);
        if self.ramp > 0.0 {
            (0.5 - d / self.ramp).clamp(0.0, 1.0)
        } else if d < 0.0 {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub name: &'static str,
    pub width: usize,
    pub height: usize,
    pub background: [f64; 3],
    pub regions: Vec<Region>,
}

/// A rendered scene and its reference edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub name: &'static str,
    pub image: PlanarImage,
    pub ground_truth: EdgeMap,
}

impl SceneSpec {
    fn color_at(&self, x: f64, y: f64) -> [f64; 3] {
        let mut col = self.background;
        for reg in &self.regions {
            let a = reg.coverage(x, y);
            if a > 0.0 {
                for (c, fg) in col.iter_mut().zip(reg.color) {
                    *c += a * (fg - *c);
                }
            }
        }
        col
    }

    /// Index of the topmost region containing the point (0 for background).
    fn label(&self, x: f64, y: f64) -> usize {
        self.regions
            .iter()
            .rposition(|r| r.shape.sdf(x, y) < 0.0)
            .map_or(0, |i| i + 1)
    }

    fn boundary_distance(&self, x: f64, y: f64, a: usize, b: usize) -> f64 {
        [a, b]
            .iter()
            .filter(|&&l| l > 0)
            .map(|&l| self.regions[l - 1].shape.sdf(x, y).abs())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn render(&self) -> PlanarImage {
        let s = SUPERSAMPLE as f64;
        PlanarImage::from_fn(self.width, self.height, ColorSpace::Rgb, |c, r, col| {
            let mut acc = 0.0;
            for i in 0..SUPERSAMPLE {
                for j in 0..SUPERSAMPLE {
                    let x = col as f64 + (j as f64 + 0.5) / s;
                    let y = r as f64 + (i as f64 + 0.5) / s;
                    acc += self.color_at(x, y)[c];
                }
            }
            acc / (s * s)
        })
        .expect("scene colors lie in [0, 1]")
    }

    pub fn ground_truth(&self) -> EdgeMap {
        let (w, h) = (self.width, self.height);
        let center = |r: usize, c: usize| (c as f64 + 0.5, r as f64 + 0.5);
        let labels: Vec<usize> = (0..w * h)
            .map(|i| {
                let (x, y) = center(i / w, i % w);
                self.label(x, y)
            })
            .collect();
        let mut gt = EdgeMap::empty(w, h);
        for r in 0..h {
            for c in 0..w {
                for (r2, c2) in [(r, c + 1), (r + 1, c)] {
                    if r2 >= h || c2 >= w {
                        continue;
                    }
                    let (a, b) = (labels[r * w + c], labels[r2 * w + c2]);
                    if a == b {
                        continue;
                    }
                    let (x1, y1) = center(r, c);
                    let (x2, y2) = center(r2, c2);
                    let d1 = self.boundary_distance(x1, y1, a, b);
                    let d2 = self.boundary_distance(x2, y2, a, b);
                    if d1 <= d2 {
                        gt.set(r, c, true);
                    } else {
                        gt.set(r2, c2, true);
                    }
                }
            }
        }
        gt
    }

    pub fn build(&self) -> Scene {
        Scene {
            name: self.name,
            image: self.render(),
            ground_truth: self.ground_truth(),
        }
    }
}

const N: usize = 64;

fn spec(name: &'static str, background: [f64; 3], regions: Vec<Region>) -> SceneSpec {
    SceneSpec {
        name,
        width: N,
        height: N,
        background,
        regions,
    }
}

/// Axis-aligned square whose sides run through pixel centers `lo` and `hi`.
fn centered_rect(lo: usize, hi: usize) -> Shape {
    Shape::Rect {
        x0: lo as f64 + 0.5,
        y0: lo as f64 + 0.5,
        x1: hi as f64 + 0.5,
        y1: hi as f64 + 0.5,
    }
}

/// Two-tone square on a uniform background.
pub fn square_spec() -> SceneSpec {
    spec(
        "square",
        [0.15, 0.25, 0.55],
        vec![Region::hard(centered_rect(16, 47), [0.85, 0.45, 0.2])],
    )
}

/// The ten scenes of the evaluation suite.
pub fn suite_specs() -> Vec<SceneSpec> {
    use std::f64::consts::PI;
    vec![
        square_spec(),
        spec(
            "circle",
            [0.2, 0.6, 0.3],
            vec![Region::hard(
                Shape::Circle {
                    cx: 32.0,
                    cy: 32.0,
                    r: 18.3,
                },
                [0.7, 0.2, 0.6],
            )],
        ),
        spec(
            "overlapping-squares",
            [0.1, 0.1, 0.2],
            vec![
                Region::hard(
                    Shape::Rect {
                        x0: 10.5,
                        y0: 12.5,
                        x1: 38.5,
                        y1: 40.5,
                    },
                    [0.8, 0.3, 0.3],
                ),
                Region::hard(
                    Shape::Rect {
                        x0: 26.5,
                        y0: 24.5,
                        x1: 53.5,
                        y1: 52.5,
                    },
                    [0.3, 0.8, 0.5],
                ),
            ],
        ),
        spec(
            "ring",
            [0.9, 0.85, 0.3],
            vec![
                Region::hard(
                    Shape::Circle {
                        cx: 32.0,
                        cy: 32.0,
                        r: 22.2,
                    },
                    [0.2, 0.3, 0.7],
                ),
                Region::hard(
                    Shape::Circle {
                        cx: 32.0,
                        cy: 32.0,
                        r: 10.4,
                    },
                    [0.9, 0.85, 0.3],
                ),
            ],
        ),
        spec(
            "vertical-bands",
            [0.8, 0.2, 0.2],
            vec![
                Region::hard(
                    Shape::HalfPlane {
                        theta: 0.0,
                        offset: 16.5,
                    },
                    [0.2, 0.3, 0.8],
                ),
                Region::hard(
                    Shape::HalfPlane {
                        theta: 0.0,
                        offset: 32.5,
                    },
                    [0.2, 0.8, 0.3],
                ),
                Region::hard(
                    Shape::HalfPlane {
                        theta: 0.0,
                        offset: 48.5,
                    },
                    [0.85, 0.8, 0.75],
                ),
            ],
        ),
        spec(
            "horizontal-bands",
            [0.3, 0.3, 0.7],
            vec![
                Region::hard(
                    Shape::HalfPlane {
                        theta: PI / 2.0,
                        offset: 20.5,
                    },
                    [0.6, 0.4, 0.2],
                ),
                Region::hard(
                    Shape::HalfPlane {
                        theta: PI / 2.0,
                        offset: 42.5,
                    },
                    [0.3, 0.75, 0.6],
                ),
            ],
        ),
        spec(
            "ramp-square",
            [0.2, 0.2, 0.5],
            vec![Region::soft(centered_rect(18, 45), [0.85, 0.7, 0.3], 4.0)],
        ),
        spec(
            "ramp-circle",
            [0.75, 0.3, 0.25],
            vec![Region::soft(
                Shape::Circle {
                    cx: 31.5,
                    cy: 32.5,
                    r: 17.6,
                },
                [0.2, 0.55, 0.75],
                4.0,
            )],
        ),
        spec(
            "rotated-square",
            [0.25, 0.5, 0.25],
            vec![Region::hard(
                Shape::Polygon(vec![(31.6, 10.3), (53.4, 32.1), (31.6, 53.9), (9.8, 32.1)]),
                [0.9, 0.6, 0.7],
            )],
        ),
        spec(
            "ellipse-and-bar",
            [0.15, 0.35, 0.45],
            vec![
                Region::hard(
                    Shape::Ellipse {
                        cx: 24.0,
                        cy: 30.0,
                        rx: 14.3,
                        ry: 9.2,
                    },
                    [0.85, 0.75, 0.2],
                ),
                Region::hard(
                    Shape::Rect {
                        x0: 44.5,
                        y0: 8.5,
                        x1: 54.5,
                        y1: 56.5,
                    },
                    [0.7, 0.25, 0.45],
                ),
            ],
        ),
    ]
}

pub fn synthetic_suite() -> Vec<Scene> {
    suite_specs().iter().map(SceneSpec::build).collect()
}

/// Chebyshev Hausdorff distance between two pixel sets; infinite when
/// exactly one of them is empty.
pub fn hausdorff(a: &EdgeMap, b: &EdgeMap) -> f64 {
    let pa = a.points();
    let pb = b.points();
    if pa.is_empty() && pb.is_empty() {
        return 0.0;
    }
    if pa.is_empty() || pb.is_empty() {
        return f64::INFINITY;
    }
    let directed = |from: &[(usize, usize)], to: &[(usize, usize)]| {
        from.iter()
            .map(|&(r, c)| {
                to.iter()
                    .map(|&(r2, c2)| r.abs_diff(r2).max(c.abs_diff(c2)))
                    .min()
                    .unwrap_or(usize::MAX)
            })
            .max()
            .unwrap_or(0)
    };
    directed(&pa, &pb).max(directed(&pb, &pa)) as f64
}
