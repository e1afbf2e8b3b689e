//! Evaluation measures: precision/recall with spatial tolerance, threshold
//! sweeps and their area, PSNR/MSE, Pratt's figure of merit, and per-method
//! aggregate tables.

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::esm::EdgeStrengthMap;
use crate::imaging::PlanarImage;
use crate::refine::EdgeMap;

/// Default matching tolerance in pixels (Chebyshev).
pub const DEFAULT_TOLERANCE: usize = 1;
/// Default threshold increment of the PR sweep.
pub const DEFAULT_STEP: f64 = 0.001;
/// Default FOM scaling constant.
pub const DEFAULT_ALPHA: f64 = 1.0 / 9.0;

/// Writes non-finite numbers as `"inf"`, `"-inf"` or `"nan"`.
pub fn serialize_float<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(&format_float(*v))
    }
}

pub fn serialize_opt_float<S: Serializer>(
    v: &Option<f64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) => serialize_float(x, s),
        None => s.serialize_none(),
    }
}

/// Text form used in reports; infinities print as `inf`.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

/// One precision/recall measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

fn check_dims(a: &EdgeMap, b: &EdgeMap) -> Result<()> {
    if !a.same_dims(b) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} against {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// Number of one-to-one matches between predicted and reference pixels.
/// Candidate pairs within the Chebyshev tolerance are taken nearest first
/// (squared Euclidean distance, then raster order of prediction and
/// reference), and each pixel is used at most once.
pub fn match_count(pred: &EdgeMap, gt: &EdgeMap, tolerance: usize) -> usize {
    let (w, h) = (pred.width, pred.height);
    let t = tolerance as isize;
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for (p, _) in pred.mask.iter().enumerate().filter(|(_, &m)| m) {
        let (r, c) = ((p / w) as isize, (p % w) as isize);
        for dr in -t..=t {
            for dc in -t..=t {
                let (rr, cc) = (r + dr, c + dc);
                if rr < 0 || cc < 0 || rr as usize >= h || cc as usize >= w {
                    continue;
                }
                let g = rr as usize * w + cc as usize;
                if gt.mask[g] {
                    pairs.push(((dr * dr + dc * dc) as usize, p, g));
                }
            }
        }
    }
    if tolerance == 0 {
        return pairs.len();
    }
    pairs.sort_unstable();
    let mut used_p = vec![false; w * h];
    let mut used_g = vec![false; w * h];
    let mut n = 0;
    for (_, p, g) in pairs {
        if !used_p[p] && !used_g[g] {
            used_p[p] = true;
            used_g[g] = true;
            n += 1;
        }
    }
    n
}

fn point_from_counts(threshold: f64, tp: usize, n_pred: usize, n_gt: usize) -> PrPoint {
    let fp = n_pred - tp;
    let fn_ = n_gt - tp;
    let precision = if n_pred == 0 {
        if n_gt == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        tp as f64 / n_pred as f64
    };
    let recall = if n_gt == 0 {
        1.0
    } else {
        tp as f64 / n_gt as f64
    };
    PrPoint {
        threshold,
        precision,
        recall,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
    }
}

/// Precision and recall of a binary prediction. An empty prediction has
/// precision 1 against an empty reference and 0 otherwise; an empty reference
/// has recall 1.
pub fn precision_recall(pred: &EdgeMap, gt: &EdgeMap, tolerance: usize) -> Result<PrPoint> {
    check_dims(pred, gt)?;
    let tp = match_count(pred, gt, tolerance);
    Ok(point_from_counts(f64::NAN, tp, pred.count(), gt.count()))
}

/// Threshold grid `0, step, 2·step, …` up to 1.
pub fn threshold_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::param(format!(
            "threshold step must be positive, got {step}"
        )));
    }
    let n = (1.0 / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| (i as f64 * step).min(1.0)).collect())
}

/// Sweeps binarization `esm ≥ t` over the threshold grid.
pub fn pr_curve(
    esm: &EdgeStrengthMap,
    gt: &EdgeMap,
    step: f64,
    tolerance: usize,
) -> Result<Vec<PrPoint>> {
    if (esm.width, esm.height) != (gt.width, gt.height) {
        return Err(Error::DimensionMismatch(format!(
            "map {}x{} against reference {}x{}",
            esm.width, esm.height, gt.width, gt.height
        )));
    }
    let grid = threshold_grid(step)?;
    let n_gt = gt.count();
    Ok(grid
        .par_iter()
        .map(|&t| {
            let pred = binarize(esm, t);
            let tp = match_count(&pred, gt, tolerance);
            point_from_counts(t, tp, pred.count(), n_gt)
        })
        .collect())
}

/// Pixels with strength at or above `t`.
pub fn binarize(esm: &EdgeStrengthMap, t: f64) -> EdgeMap {
    EdgeMap {
        width: esm.width,
        height: esm.height,
        mask: esm.strength.iter().map(|&s| s >= t).collect(),
    }
}

/// Trapezoidal area under precision as a function of recall, clamped to
/// `[0, 1]`.
pub fn auc(curve: &[PrPoint]) -> Result<f64> {
    if curve.len() < 2 {
        return Err(Error::param(format!(
            "area needs at least two points, got {}",
            curve.len()
        )));
    }
    let mut pts: Vec<(f64, f64)> = curve.iter().map(|p| (p.recall, p.precision)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let area: f64 = pts
        .windows(2)
        .map(|w| (w[0].1 + w[1].1) * (w[1].0 - w[0].0) / 2.0)
        .sum();
    Ok(area.clamp(0.0, 1.0))
}

/// Rasters comparable on the 0–255 scale.
pub trait Raster {
    fn dims(&self) -> (usize, usize, usize);
    /// Samples scaled to 0–255, channel-major.
    fn samples_255(&self) -> Vec<f64>;
}

impl Raster for EdgeMap {
    fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, 1)
    }
    fn samples_255(&self) -> Vec<f64> {
        self.mask
            .iter()
            .map(|&m| if m { 255.0 } else { 0.0 })
            .collect()
    }
}

impl Raster for PlanarImage {
    fn dims(&self) -> (usize, usize, usize) {
        (self.width(), self.height(), self.channels())
    }
    fn samples_255(&self) -> Vec<f64> {
        self.planes().iter().flatten().map(|v| v * 255.0).collect()
    }
}

/// Peak signal-to-noise ratio and mean squared error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsnrMse {
    /// dB; `+∞` when the inputs agree exactly.
    #[serde(serialize_with = "serialize_float")]
    pub psnr: f64,
    pub mse: f64,
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}

pub fn psnr_mse<T: Raster>(pred: &T, reference: &T) -> Result<PsnrMse> {
    if pred.dims() != reference.dims() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} against {:?}",
            pred.dims(),
            reference.dims()
        )));
    }
    let a = pred.samples_255();
    let b = reference.samples_255();
    if a.is_empty() {
        return Err(Error::param("cannot compare empty rasters"));
    }
    let mse = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    Ok(PsnrMse {
        psnr: psnr_from_mse(mse),
        mse,
    })
}

/// Exact squared Euclidean distance transform of a 1D sampled function
/// (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    let first = match f.iter().position(|x| x.is_finite()) {
        Some(i) => i,
        None => {
            out.iter_mut().for_each(|o| *o = f64::INFINITY);
            return;
        }
    };
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            let s =
                ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
}

/// Squared Euclidean distance from every pixel to the nearest set pixel.
pub fn squared_distance_transform(m: &EdgeMap) -> Vec<f64> {
    let (w, h) = (m.width, m.height);
    let mut d: Vec<f64> = m
        .mask
        .iter()
        .map(|&s| if s { 0.0 } else { f64::INFINITY })
        .collect();
    let mut col_in = vec![0.0; h];
    let mut col_out = vec![0.0; h];
    for c in 0..w {
        for r in 0..h {
            col_in[r] = d[r * w + c];
        }
        edt_1d(&col_in, &mut col_out);
        for r in 0..h {
            d[r * w + c] = col_out[r];
        }
    }
    let mut row_out = vec![0.0; w];
    for r in 0..h {
        edt_1d(&d[r * w..(r + 1) * w], &mut row_out);
        d[r * w..(r + 1) * w].copy_from_slice(&row_out);
    }
    d
}

/// Pratt's figure of merit. An empty prediction scores 0.
pub fn fom(pred: &EdgeMap, gt: &EdgeMap, alpha: f64) -> Result<f64> {
    check_dims(pred, gt)?;
    let n_ideal = gt.count();
    if n_ideal == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::param(format!("alpha must be positive, got {alpha}")));
    }
    let dist = squared_distance_transform(gt);
    let n_det = pred.count();
    let sum: f64 = pred
        .mask
        .iter()
        .zip(&dist)
        .filter(|(&m, _)| m)
        .map(|(_, &d2)| 1.0 / (1.0 + alpha * d2))
        .sum();
    Ok(sum / n_ideal.max(n_det) as f64)
}

/// All measures for one detection against its reference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    #[serde(skip)]
    pub pr_curve: Vec<PrPoint>,
    pub auc: f64,
    #[serde(serialize_with = "serialize_float")]
    pub psnr: f64,
    pub mse: f64,
    pub fom: f64,
    pub precision: f64,
    pub recall: f64,
    pub detected_count: usize,
    pub ideal_count: usize,
}

impl MetricReport {
    /// Scores the final binary map and the sweep over its strength map.
    pub fn compute(
        edges: &EdgeMap,
        sweep_map: &EdgeStrengthMap,
        gt: &EdgeMap,
        step: f64,
        tolerance: usize,
        alpha: f64,
    ) -> Result<Self> {
        let pr_curve = pr_curve(sweep_map, gt, step, tolerance)?;
        let area = auc(&pr_curve)?;
        let pm = psnr_mse(edges, gt)?;
        let point = precision_recall(edges, gt, tolerance)?;
        Ok(Self {
            auc: area,
            psnr: pm.psnr,
            mse: pm.mse,
            fom: fom(edges, gt, alpha)?,
            precision: point.precision,
            recall: point.recall,
            detected_count: edges.count(),
            ideal_count: gt.count(),
            pr_curve,
        })
    }

    pub fn table_row(&self, label: impl Into<String>) -> TableRow {
        TableRow {
            label: label.into(),
            psnr: Some(self.psnr),
            mse: Some(self.mse),
            fom: Some(self.fom),
            auc: Some(self.auc),
            detected: Some(self.detected_count),
        }
    }
}

/// One image's entry in an aggregate table; absent columns are skipped.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TableRow {
    pub label: String,
    #[serde(serialize_with = "serialize_opt_float")]
    pub psnr: Option<f64>,
    pub mse: Option<f64>,
    pub fom: Option<f64>,
    pub auc: Option<f64>,
    pub detected: Option<usize>,
}

/// Means of one method's rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub images: usize,
    #[serde(serialize_with = "serialize_opt_float")]
    pub mean_psnr: Option<f64>,
    pub mean_mse: Option<f64>,
    pub mean_fom: Option<f64>,
    pub mean_auc: Option<f64>,
    pub mean_detected: Option<f64>,
}

/// Method mean minus baseline mean for each column present in both.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanDifference {
    pub method: String,
    pub baseline: String,
    #[serde(serialize_with = "serialize_opt_float")]
    pub psnr: Option<f64>,
    pub mse: Option<f64>,
    pub fom: Option<f64>,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableSummary {
    pub methods: Vec<MethodSummary>,
    pub differences: Vec<MeanDifference>,
}

impl TableSummary {
    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn difference(&self, method: &str) -> Option<&MeanDifference> {
        self.differences.iter().find(|d| d.method == method)
    }
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

fn diff(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

/// Per-method means and, with a baseline, differences of every other method
/// against it.
pub fn aggregate_table(
    groups: &[(String, Vec<TableRow>)],
    baseline: Option<&str>,
) -> Result<TableSummary> {
    if groups.is_empty() || groups.iter().any(|(_, rows)| rows.is_empty()) {
        return Err(Error::param(
            "aggregate table needs at least one row per method",
        ));
    }
    let methods: Vec<MethodSummary> = groups
        .iter()
        .map(|(name, rows)| MethodSummary {
            method: name.clone(),
            images: rows.len(),
            mean_psnr: mean_of(rows.iter().map(|r| r.psnr)),
            mean_mse: mean_of(rows.iter().map(|r| r.mse)),
            mean_fom: mean_of(rows.iter().map(|r| r.fom)),
            mean_auc: mean_of(rows.iter().map(|r| r.auc)),
            mean_detected: mean_of(rows.iter().map(|r| r.detected.map(|d| d as f64))),
        })
        .collect();
    let mut differences = Vec::new();
    if let Some(base) = baseline {
        let b = methods
            .iter()
            .find(|m| m.method == base)
            .ok_or_else(|| Error::param(format!("unknown baseline method {base}")))?;
        for m in methods.iter().filter(|m| m.method != base) {
            differences.push(MeanDifference {
                method: m.method.clone(),
                baseline: base.to_string(),
                psnr: diff(m.mean_psnr, b.mean_psnr),
                mse: diff(m.mean_mse, b.mean_mse),
                fom: diff(m.mean_fom, b.mean_fom),
                auc: diff(m.mean_auc, b.mean_auc),
            });
        }
    }
    Ok(TableSummary {
        methods,
        differences,
    })
}
