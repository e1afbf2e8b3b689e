//! Edge strength map to binary edge map: non-maximum suppression,
//! double-threshold hysteresis and morphological clean-up.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esm::EdgeStrengthMap;
use crate::imaging::{save_image, ColorSpace, PlanarImage};

/// Post-suppression values at or below this are treated as zero.
pub const NONZERO_FLOOR: f64 = 1e-9;

/// Binary per-pixel mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMap {
    pub width: usize,
    pub height: usize,
    pub mask: Vec<bool>,
}

impl EdgeMap {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            mask: vec![false; width * height],
        }
    }

    pub fn from_mask(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "mask of {} entries for {width}x{height}",
                mask.len()
            )));
        }
        Ok(Self {
            width,
            height,
            mask,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut mask = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                mask.push(f(r, c));
            }
        }
        Self {
            width,
            height,
            mask,
        }
    }

    /// Parses rows of `#`/`1` (set) and `.`/`0` (unset).
    pub fn from_ascii(rows: &[&str]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        Self::from_fn(width, height, |r, c| {
            matches!(rows[r].as_bytes()[c], b'#' | b'1')
        })
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.width + col]
    }

    fn get_signed(&self, row: isize, col: isize) -> bool {
        row >= 0
            && col >= 0
            && (row as usize) < self.height
            && (col as usize) < self.width
            && self.mask[row as usize * self.width + col as usize]
    }

    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.mask[row * self.width + col] = v;
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    /// Set pixels as `(row, col)` in raster order.
    pub fn points(&self) -> Vec<(usize, usize)> {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| (i / self.width, i % self.width))
            .collect()
    }

    pub fn same_dims(&self, other: &EdgeMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// 0/1 grayscale image.
    pub fn to_image(&self) -> PlanarImage {
        let plane = self
            .mask
            .iter()
            .map(|&m| if m { 1.0 } else { 0.0 })
            .collect();
        PlanarImage::new(self.width, self.height, ColorSpace::Scalar, vec![plane])
            .expect("binary plane is valid")
    }

    /// Any pixel whose mean over channels is at least one half is set.
    pub fn from_image(img: &PlanarImage) -> Self {
        let n = img.width() * img.height();
        let mask = (0..n)
            .map(|i| {
                let s: f64 = (0..img.channels()).map(|c| img.plane(c)[i]).sum();
                s / img.channels() as f64 >= 0.5
            })
            .collect();
        Self {
            width: img.width(),
            height: img.height(),
            mask,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_image(&self.to_image(), path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::from_image(&crate::imaging::load_image(path)?))
    }
}

/// Double-threshold settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdParams {
    /// Quantile of the nonzero suppressed strengths used as the high threshold.
    pub high_quantile: f64,
    /// Low threshold as a fraction of the high one.
    pub low_ratio: f64,
    /// Connected components with fewer pixels are dropped.
    pub min_component: usize,
    /// Branches of at most this many pixels hanging off a junction are
    /// pruned. Zero disables pruning.
    #[serde(default = "default_spur_length")]
    pub spur_length: usize,
    /// Fixed `(low, high)` thresholds instead of the quantile rule.
    pub absolute: Option<(f64, f64)>,
}

impl Default for ThresholdParams {
    fn default() -> Self {
        Self {
            high_quantile: 0.90,
            low_ratio: 0.4,
            min_component: 8,
            spur_length: 2,
            absolute: None,
        }
    }
}

fn default_spur_length() -> usize {
    2
}

impl ThresholdParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.high_quantile > 0.0 && self.high_quantile < 1.0) {
            return Err(Error::param(format!(
                "high quantile must lie in (0, 1), got {}",
                self.high_quantile
            )));
        }
        if !(self.low_ratio > 0.0 && self.low_ratio < 1.0) {
            return Err(Error::param(format!(
                "low ratio must lie in (0, 1), got {}",
                self.low_ratio
            )));
        }
        if let Some((lo, hi)) = self.absolute {
            if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi) {
                return Err(Error::param(format!(
                    "absolute thresholds need 0 <= low <= high, got ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }
}

/// Neighbor offset `(drow, dcol)` along an orientation, quantized to the
/// four sectors 0, π/4, π/2 and 3π/4. Angles run from +col towards +row.
pub fn sector_offset(theta: f64) -> (isize, isize) {
    let k = (theta.rem_euclid(PI) / (PI / 4.0)).round() as usize % 4;
    match k {
        0 => (0, 1),
        1 => (1, 1),
        2 => (1, 0),
        _ => (1, -1),
    }
}

/// Keeps a pixel only where it is at least as large as both neighbors along
/// its orientation. Out-of-image neighbors count as zero.
pub fn nonmax_suppress(esm: &EdgeStrengthMap) -> EdgeStrengthMap {
    let (w, h) = (esm.width, esm.height);
    let at = |r: isize, c: isize| -> f64 {
        if r < 0 || c < 0 || r as usize >= h || c as usize >= w {
            0.0
        } else {
            esm.strength[r as usize * w + c as usize]
        }
    };
    let strength: Vec<f64> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let s = esm.strength[i];
            if s <= 0.0 {
                return 0.0;
            }
            let (r, c) = ((i / w) as isize, (i % w) as isize);
            let (dr, dc) = sector_offset(esm.orientation[i]);
            if s >= at(r + dr, c + dc) && s >= at(r - dr, c - dc) {
                s
            } else {
                0.0
            }
        })
        .collect();
    EdgeStrengthMap {
        width: w,
        height: h,
        strength,
        orientation: esm.orientation.clone(),
    }
}

/// Nearest-rank quantile of the values above [`NONZERO_FLOOR`].
pub fn nonzero_quantile(values: &[f64], q: f64) -> Option<f64> {
    let mut v: Vec<f64> = values
        .iter()
        .copied()
        .filter(|&x| x > NONZERO_FLOOR)
        .collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    Some(v[rank - 1])
}

/// Result of double thresholding.
#[derive(Debug, Clone, PartialEq)]
pub struct HysteresisOutcome {
    pub edges: EdgeMap,
    pub low: f64,
    pub high: f64,
    /// The high threshold was not positive, so every nonzero pixel was kept.
    pub degenerate: bool,
}

/// Thresholds actually applied to a suppressed map.
pub fn resolve_thresholds(esm: &EdgeStrengthMap, t: &ThresholdParams) -> (f64, f64) {
    match t.absolute {
        Some(pair) => pair,
        None => {
            let high = nonzero_quantile(&esm.strength, t.high_quantile).unwrap_or(0.0);
            (t.low_ratio * high, high)
        }
    }
}

/// Strong pixels (≥ high) seed an 8-connected flood through pixels ≥ low.
/// Quantile thresholds are taken from `esm` itself.
pub fn hysteresis(esm: &EdgeStrengthMap, t: &ThresholdParams) -> HysteresisOutcome {
    let (low, high) = resolve_thresholds(esm, t);
    hysteresis_at(esm, low, high)
}

/// Hysteresis with explicit thresholds. A non-positive `high` keeps every
/// nonzero pixel and flags the outcome as degenerate.
pub fn hysteresis_at(esm: &EdgeStrengthMap, low: f64, high: f64) -> HysteresisOutcome {
    let (w, h) = (esm.width, esm.height);
    if high <= 0.0 {
        let mask = esm.strength.iter().map(|&s| s > NONZERO_FLOOR).collect();
        return HysteresisOutcome {
            edges: EdgeMap {
                width: w,
                height: h,
                mask,
            },
            low,
            high,
            degenerate: true,
        };
    }
    let mut mask = vec![false; w * h];
    let mut queue = VecDeque::new();
    for (i, &s) in esm.strength.iter().enumerate() {
        if s >= high && s > 0.0 {
            mask[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (r, c) = ((i / w) as isize, (i % w) as isize);
        for dr in -1..=1 {
            for dc in -1..=1 {
                let (rr, cc) = (r + dr, c + dc);
                if rr < 0 || cc < 0 || rr as usize >= h || cc as usize >= w {
                    continue;
                }
                let j = rr as usize * w + cc as usize;
                if !mask[j] && esm.strength[j] >= low && esm.strength[j] > 0.0 {
                    mask[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    HysteresisOutcome {
        edges: EdgeMap {
            width: w,
            height: h,
            mask,
        },
        low,
        high,
        degenerate: false,
    }
}

/// 3×3 closing of the image as if surrounded by unset pixels.
pub fn close3x3(m: &EdgeMap) -> EdgeMap {
    let (w, h) = (m.width as isize, m.height as isize);
    // Dilation over the image grown by one pixel on every side.
    let pw = (w + 2) as usize;
    let mut dil = vec![false; pw * (h + 2) as usize];
    for r in -1..=h {
        for c in -1..=w {
            dil[(r + 1) as usize * pw + (c + 1) as usize] =
                (-1..=1).any(|dr| (-1..=1).any(|dc| m.get_signed(r + dr, c + dc)));
        }
    }
    EdgeMap::from_fn(m.width, m.height, |r, c| {
        (0..3).all(|dr| (0..3).all(|dc| dil[(r + dr) * pw + c + dc]))
    })
}

/// Neighbors P2..P9 clockwise from north.
fn ring(m: &EdgeMap, r: usize, c: usize) -> [bool; 8] {
    let (r, c) = (r as isize, c as isize);
    [
        m.get_signed(r - 1, c),
        m.get_signed(r - 1, c + 1),
        m.get_signed(r, c + 1),
        m.get_signed(r + 1, c + 1),
        m.get_signed(r + 1, c),
        m.get_signed(r + 1, c - 1),
        m.get_signed(r, c - 1),
        m.get_signed(r - 1, c - 1),
    ]
}

fn transitions(p: &[bool; 8]) -> usize {
    (0..8).filter(|&k| !p[k] && p[(k + 1) % 8]).count()
}

/// Two-subiteration Zhang–Suen thinning to a fixed point.
pub fn zhang_suen(m: &EdgeMap) -> EdgeMap {
    let mut cur = m.clone();
    loop {
        let mut changed = false;
        for pass in 0..2 {
            let mut remove = Vec::new();
            for r in 0..cur.height {
                for c in 0..cur.width {
                    if !cur.get(r, c) {
                        continue;
                    }
                    let p = ring(&cur, r, c);
                    let (p2, p4, p6, p8) = (p[0], p[2], p[4], p[6]);
                    let b = p.iter().filter(|&&x| x).count();
                    if !(2..=6).contains(&b) || transitions(&p) != 1 {
                        continue;
                    }
                    let ok = if pass == 0 {
                        !(p2 && p4 && p6) && !(p4 && p6 && p8)
                    } else {
                        !(p2 && p4 && p8) && !(p2 && p6 && p8)
                    };
                    if ok {
                        remove.push((r, c));
                    }
                }
            }
            changed |= !remove.is_empty();
            for (r, c) in remove {
                cur.set(r, c, false);
            }
        }
        if !changed {
            return cur;
        }
    }
}

/// Yokoi 8-connectivity number; a set pixel is simple when this equals 1.
fn crossing_number8(p: &[bool; 8]) -> usize {
    // Reorder to counter-clockwise from east: x1 = E, x2 = NE, x3 = N, ...
    let x = [p[2], p[1], p[0], p[7], p[6], p[5], p[4], p[3]];
    let nb = |k: usize| !x[k % 8];
    [0usize, 2, 4, 6]
        .iter()
        .map(|&k| {
            let a = nb(k) as i32;
            (a - a * nb(k + 1) as i32 * nb(k + 2) as i32) as usize
        })
        .sum()
}

fn in_crowded_square(m: &EdgeMap, r: usize, c: usize) -> bool {
    let (r, c) = (r as isize, c as isize);
    for (dr, dc) in [(-1, -1), (-1, 0), (0, -1), (0, 0)] {
        let (r0, c0) = (r + dr, c + dc);
        let set = [(0, 0), (0, 1), (1, 0), (1, 1)]
            .iter()
            .filter(|(a, b)| m.get_signed(r0 + a, c0 + b))
            .count();
        if set >= 3 {
            return true;
        }
    }
    false
}

/// Removes simple, non-end pixels that sit in a 2×2 square holding three or
/// more set pixels, leaving 8-connected curves one pixel wide.
pub fn remove_redundant(m: &EdgeMap) -> EdgeMap {
    let mut cur = m.clone();
    loop {
        let mut changed = false;
        for r in 0..cur.height {
            for c in 0..cur.width {
                if !cur.get(r, c) || !in_crowded_square(&cur, r, c) {
                    continue;
                }
                let p = ring(&cur, r, c);
                let neighbors = p.iter().filter(|&&x| x).count();
                if neighbors >= 2 && crossing_number8(&p) == 1 {
                    cur.set(r, c, false);
                    changed = true;
                }
            }
        }
        if !changed {
            return cur;
        }
    }
}

/// 8-connected components, each as raster-ordered pixel indices.
pub fn components(m: &EdgeMap) -> Vec<Vec<usize>> {
    let (w, h) = (m.width, m.height);
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for start in 0..w * h {
        if !m.mask[start] || seen[start] {
            continue;
        }
        let mut comp = vec![start];
        seen[start] = true;
        let mut k = 0;
        while k < comp.len() {
            let i = comp[k];
            k += 1;
            let (r, c) = ((i / w) as isize, (i % w) as isize);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (rr, cc) = (r + dr, c + dc);
                    if m.get_signed(rr, cc) {
                        let j = rr as usize * w + cc as usize;
                        if !seen[j] {
                            seen[j] = true;
                            comp.push(j);
                        }
                    }
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Drops 8-connected components with fewer than `min_size` pixels.
pub fn remove_small_components(m: &EdgeMap, min_size: usize) -> EdgeMap {
    let mut out = EdgeMap::empty(m.width, m.height);
    for comp in components(m) {
        if comp.len() >= min_size {
            for i in comp {
                out.mask[i] = true;
            }
        }
    }
    out
}

/// No 2×2 square holds three or more set pixels.
pub fn is_thin(m: &EdgeMap) -> bool {
    for r in 0..m.height.saturating_sub(1) {
        for c in 0..m.width.saturating_sub(1) {
            let n = [(0, 0), (0, 1), (1, 0), (1, 1)]
                .iter()
                .filter(|(a, b)| m.get(r + a, c + b))
                .count();
            if n >= 3 {
                return false;
            }
        }
    }
    true
}

fn neighbor_indices(m: &EdgeMap, i: usize) -> Vec<usize> {
    let w = m.width;
    let (r, c) = ((i / w) as isize, (i % w) as isize);
    let mut out = Vec::with_capacity(8);
    for dr in -1..=1 {
        for dc in -1..=1 {
            if (dr != 0 || dc != 0) && m.get_signed(r + dr, c + dc) {
                out.push((r + dr) as usize * w + (c + dc) as usize);
            }
        }
    }
    out
}

/// Removes branches of at most `max_len` pixels that run from an end pixel
/// to a junction (a pixel with three or more neighbors). Open curves that
/// end without reaching a junction are kept whatever their length.
pub fn prune_spurs(m: &EdgeMap, max_len: usize) -> EdgeMap {
    if max_len == 0 {
        return m.clone();
    }
    let mut out = m.clone();
    for start in 0..m.mask.len() {
        if !m.mask[start] || neighbor_indices(m, start).len() != 1 {
            continue;
        }
        let mut branch = vec![start];
        let mut prev = start;
        let mut cur = neighbor_indices(m, start)[0];
        loop {
            let nb = neighbor_indices(m, cur);
            if nb.len() >= 3 {
                if branch.len() <= max_len {
                    for &i in &branch {
                        out.mask[i] = false;
                    }
                }
                break;
            }
            if nb.len() != 2 || branch.len() >= max_len {
                break;
            }
            branch.push(cur);
            let next = if nb[0] == prev { nb[1] } else { nb[0] };
            prev = cur;
            cur = next;
        }
    }
    out
}

/// Upper bound on refinement rounds; real maps settle in two or three.
const MAX_REFINE_ROUNDS: usize = 64;

fn refine_round(edges: &EdgeMap, t: &ThresholdParams) -> EdgeMap {
    let closed = close3x3(edges);
    let thinned = remove_redundant(&zhang_suen(&closed));
    let pruned = if t.spur_length > 0 {
        remove_redundant(&prune_spurs(&thinned, t.spur_length))
    } else {
        thinned
    };
    remove_small_components(&pruned, t.min_component)
}

/// Gap closing, thinning, spur pruning and small-component removal,
/// repeated until the map stops changing.
pub fn morph_refine(edges: &EdgeMap, t: &ThresholdParams) -> EdgeMap {
    let mut cur = refine_round(edges, t);
    for _ in 1..MAX_REFINE_ROUNDS {
        let next = refine_round(&cur, t);
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

/// Binary strength map of an edge map, so a refined result can be fed back
/// through [`refine`].
pub fn edges_as_strength(m: &EdgeMap) -> EdgeStrengthMap {
    EdgeStrengthMap {
        width: m.width,
        height: m.height,
        strength: m.mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        orientation: vec![0.0; m.mask.len()],
    }
}

/// Every stage of the refinement chain.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub suppressed: EdgeStrengthMap,
    pub thresholded: HysteresisOutcome,
    pub edges: EdgeMap,
}

/// Suppression, hysteresis and morphological refinement. Quantile
/// thresholds come from the strength distribution before suppression.
pub fn refine(esm: &EdgeStrengthMap, t: &ThresholdParams) -> RefineOutcome {
    let suppressed = nonmax_suppress(esm);
    let (low, high) = resolve_thresholds(esm, t);
    let thresholded = hysteresis_at(&suppressed, low, high);
    let edges = morph_refine(&thresholded.edges, t);
    RefineOutcome {
        suppressed,
        thresholded,
        edges,
    }
}
