//! Dataset evaluation: runs every configured method over a manifest of
//! image / ground-truth pairs and writes CSV and JSON reports.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::Method;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::imaging::{load_image, save_image, PlanarImage};
use crate::metrics::{
    aggregate_table, auc, format_float, serialize_float, serialize_opt_float, MetricReport,
    PrPoint, TableRow, TableSummary,
};
use crate::pipeline::{detect, gray_to_rgb};
use crate::refine::EdgeMap;
use crate::synthetic::Scene;

/// One image and its reference edge map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub ground_truth: PathBuf,
}

/// Image / ground-truth pairs, one `image,ground_truth` line each. Relative
/// paths are resolved against the manifest's directory; `#` starts a
/// comment line.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut entries = Vec::new();
        for (n, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Config(format!("manifest: {e}")))?;
            let line = record.position().map_or(n as u64 + 1, |p| p.line());
            if record.iter().all(str::is_empty) {
                continue;
            }
            if record.len() != 2 || record[0].is_empty() || record[1].is_empty() {
                return Err(Error::Config(format!(
                    "manifest line {line}: expected image,ground_truth"
                )));
            }
            entries.push(ManifestEntry {
                image: base.join(&record[0]),
                ground_truth: base.join(&record[1]),
            });
        }
        if entries.is_empty() {
            return Err(Error::Config("manifest lists no images".into()));
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Problems that would make an entry fail: missing files and size
    /// mismatches, keyed by entry index.
    pub fn check(&self) -> Vec<(usize, Error)> {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(i, e)| load_pair(e).err().map(|err| (i, err)))
            .collect()
    }
}

fn load_pair(entry: &ManifestEntry) -> Result<(PlanarImage, EdgeMap)> {
    let img = load_image(&entry.image)?;
    let rgb = if img.channels() == 1 {
        gray_to_rgb(&img)?
    } else {
        img
    };
    let gt = EdgeMap::load(&entry.ground_truth)?;
    if (rgb.width(), rgb.height()) != (gt.width, gt.height) {
        return Err(Error::DimensionMismatch(format!(
            "{} is {}x{} but {} is {}x{}",
            entry.image.display(),
            rgb.width(),
            rgb.height(),
            entry.ground_truth.display(),
            gt.width,
            gt.height
        )));
    }
    Ok((rgb, gt))
}

/// Scores of one method on one image, or why they are missing.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryResult {
    pub index: usize,
    pub image: PathBuf,
    pub method: Method,
    pub outcome: std::result::Result<MetricReport, String>,
}

/// Dataset-level curve of one method: counts summed over images.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PooledCurve {
    pub method: Method,
    #[serde(skip)]
    pub points: Vec<PrPoint>,
    pub auc: f64,
}

/// Everything an evaluation run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Manifest order, then configured method order.
    pub results: Vec<EntryResult>,
    pub curves: Vec<PooledCurve>,
    /// Absent when no method scored any image.
    pub summary: Option<TableSummary>,
    pub failures: usize,
}

impl Evaluation {
    pub fn is_partial(&self) -> bool {
        self.failures > 0
    }

    pub fn reports_for(&self, method: Method) -> impl Iterator<Item = &MetricReport> {
        self.results
            .iter()
            .filter(move |r| r.method == method)
            .filter_map(|r| r.outcome.as_ref().ok())
    }
}

fn score(
    img: &PlanarImage,
    gt: &EdgeMap,
    method: Method,
    seed: u64,
    cfg: &RunConfig,
) -> Result<MetricReport> {
    let mut p = cfg.pipeline_for_seed(seed)?;
    p.method = method;
    let det = detect(img, &p)?;
    MetricReport::compute(
        &det.edges,
        &det.sweep,
        gt,
        cfg.step,
        cfg.tolerance,
        cfg.fom_alpha,
    )
    .map_err(|e| e.in_stage("metrics"))
}

/// Sums per-image counts at each threshold.
pub fn pool_curves<'a>(curves: impl IntoIterator<Item = &'a [PrPoint]>) -> Vec<PrPoint> {
    let mut pooled: Vec<PrPoint> = Vec::new();
    for curve in curves {
        if pooled.is_empty() {
            pooled = curve
                .iter()
                .map(|p| PrPoint {
                    true_positives: 0,
                    false_positives: 0,
                    false_negatives: 0,
                    ..*p
                })
                .collect();
        }
        for (acc, p) in pooled.iter_mut().zip(curve) {
            acc.true_positives += p.true_positives;
            acc.false_positives += p.false_positives;
            acc.false_negatives += p.false_negatives;
        }
    }
    for p in &mut pooled {
        let (tp, fp, fneg) = (p.true_positives, p.false_positives, p.false_negatives);
        p.precision = if tp + fp == 0 {
            if tp + fneg == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            tp as f64 / (tp + fp) as f64
        };
        p.recall = if tp + fneg == 0 {
            1.0
        } else {
            tp as f64 / (tp + fneg) as f64
        };
    }
    pooled
}

/// Runs every configured method over every entry. Entry `i` is noised with
/// seed `cfg.seed + i`, so results do not depend on scheduling.
pub fn evaluate(manifest: &DatasetManifest, cfg: &RunConfig) -> Result<Evaluation> {
    cfg.validate()?;
    let per_entry: Vec<Vec<EntryResult>> = manifest
        .entries
        .par_iter()
        .enumerate()
        .map(|(index, entry)| {
            let seed = cfg.seed.wrapping_add(index as u64);
            let loaded = load_pair(entry);
            cfg.methods
                .iter()
                .map(|&method| {
                    let outcome = match &loaded {
                        Ok((img, gt)) => {
                            score(img, gt, method, seed, cfg).map_err(|e| e.to_string())
                        }
                        Err(e) => Err(e.to_string()),
                    };
                    EntryResult {
                        index,
                        image: entry.image.clone(),
                        method,
                        outcome,
                    }
                })
                .collect()
        })
        .collect();
    let results: Vec<EntryResult> = per_entry.into_iter().flatten().collect();
    let failures = results.iter().filter(|r| r.outcome.is_err()).count();

    let mut curves = Vec::new();
    let mut groups = Vec::new();
    for &method in &cfg.methods {
        let reports: Vec<&MetricReport> = results
            .iter()
            .filter(|r| r.method == method)
            .filter_map(|r| r.outcome.as_ref().ok())
            .collect();
        if reports.is_empty() {
            continue;
        }
        let points = pool_curves(reports.iter().map(|r| r.pr_curve.as_slice()));
        curves.push(PooledCurve {
            method,
            auc: auc(&points)?,
            points,
        });
        let rows: Vec<TableRow> = results
            .iter()
            .filter(|r| r.method == method)
            .filter_map(|r| {
                r.outcome
                    .as_ref()
                    .ok()
                    .map(|m| m.table_row(r.image.display().to_string()))
            })
            .collect();
        groups.push((method.to_string(), rows));
    }
    let summary = if groups.is_empty() {
        None
    } else {
        let baseline = cfg
            .baseline
            .map(|b| b.to_string())
            .filter(|b| groups.iter().any(|(name, _)| name == b));
        Some(aggregate_table(&groups, baseline.as_deref())?)
    };
    Ok(Evaluation {
        results,
        curves,
        summary,
        failures,
    })
}

#[derive(Serialize)]
struct CsvRow {
    image: String,
    method: Method,
    status: &'static str,
    #[serde(serialize_with = "serialize_opt_float")]
    psnr: Option<f64>,
    mse: Option<f64>,
    fom: Option<f64>,
    auc: Option<f64>,
    precision: Option<f64>,
    recall: Option<f64>,
    detected: Option<usize>,
    ideal: Option<usize>,
    error: String,
}

impl From<&EntryResult> for CsvRow {
    fn from(r: &EntryResult) -> Self {
        let m = r.outcome.as_ref().ok();
        Self {
            image: r.image.display().to_string(),
            method: r.method,
            status: if m.is_some() { "ok" } else { "failed" },
            psnr: m.map(|m| m.psnr),
            mse: m.map(|m| m.mse),
            fom: m.map(|m| m.fom),
            auc: m.map(|m| m.auc),
            precision: m.map(|m| m.precision),
            recall: m.map(|m| m.recall),
            detected: m.map(|m| m.detected_count),
            ideal: m.map(|m| m.ideal_count),
            error: r.outcome.as_ref().err().cloned().unwrap_or_default(),
        }
    }
}

#[derive(Serialize)]
struct CurveRow {
    threshold: f64,
    precision: f64,
    recall: f64,
    true_positives: usize,
    false_positives: usize,
    false_negatives: usize,
}

#[derive(Serialize)]
struct JsonEntry<'a> {
    index: usize,
    image: String,
    method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<&'a MetricReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    entries: Vec<JsonEntry<'a>>,
    curves: &'a [PooledCurve],
    summary: Option<&'a TableSummary>,
    failures: usize,
    partial: bool,
}

#[derive(Serialize)]
struct SummaryRow {
    method: String,
    images: usize,
    #[serde(serialize_with = "serialize_opt_float")]
    mean_psnr: Option<f64>,
    mean_mse: Option<f64>,
    mean_fom: Option<f64>,
    mean_auc: Option<f64>,
    #[serde(serialize_with = "serialize_float")]
    pooled_auc: f64,
    baseline: String,
    #[serde(serialize_with = "serialize_opt_float")]
    psnr_difference: Option<f64>,
    mse_difference: Option<f64>,
    fom_difference: Option<f64>,
    auc_difference: Option<f64>,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Encode {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Report files written by [`write_reports`], relative to the output
/// directory.
pub const RESULTS_CSV: &str = "results.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const REPORT_JSON: &str = "report.json";

/// File name of a method's pooled PR curve.
pub fn curve_file_name(method: Method) -> String {
    format!("pr_{method}.csv")
}

/// Writes a PR curve as `threshold,precision,recall,...` rows.
pub fn write_curve_csv(path: &Path, points: &[PrPoint]) -> Result<()> {
    write_csv(
        path,
        points.iter().map(|p| CurveRow {
            threshold: p.threshold,
            precision: p.precision,
            recall: p.recall,
            true_positives: p.true_positives,
            false_positives: p.false_positives,
            false_negatives: p.false_negatives,
        }),
    )
}

/// Per-image rows, summary, JSON report and one curve file per method.
pub fn write_reports(eval: &Evaluation, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_csv(
        &dir.join(RESULTS_CSV),
        eval.results.iter().map(CsvRow::from),
    )?;
    if let Some(summary) = &eval.summary {
        let rows = summary.methods.iter().map(|m| {
            let d = summary.difference(&m.method);
            let pooled = eval
                .curves
                .iter()
                .find(|c| c.method.name() == m.method)
                .map_or(f64::NAN, |c| c.auc);
            SummaryRow {
                method: m.method.clone(),
                images: m.images,
                mean_psnr: m.mean_psnr,
                mean_mse: m.mean_mse,
                mean_fom: m.mean_fom,
                mean_auc: m.mean_auc,
                pooled_auc: pooled,
                baseline: d.map(|d| d.baseline.clone()).unwrap_or_default(),
                psnr_difference: d.and_then(|d| d.psnr),
                mse_difference: d.and_then(|d| d.mse),
                fom_difference: d.and_then(|d| d.fom),
                auc_difference: d.and_then(|d| d.auc),
            }
        });
        write_csv(&dir.join(SUMMARY_CSV), rows)?;
    }
    for c in &eval.curves {
        write_curve_csv(&dir.join(curve_file_name(c.method)), &c.points)?;
    }
    let report = JsonReport {
        entries: eval
            .results
            .iter()
            .map(|r| JsonEntry {
                index: r.index,
                image: r.image.display().to_string(),
                method: r.method,
                metrics: r.outcome.as_ref().ok(),
                error: r.outcome.as_ref().err().map(String::as_str),
            })
            .collect(),
        curves: &eval.curves,
        summary: eval.summary.as_ref(),
        failures: eval.failures,
        partial: eval.is_partial(),
    };
    let path = dir.join(REPORT_JSON);
    let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Encode {
        path: path.clone(),
        message: e.to_string(),
    })?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

/// One-line text summary per method, for terminals.
pub fn summary_lines(eval: &Evaluation) -> Vec<String> {
    let Some(summary) = &eval.summary else {
        return vec!["no method produced a result".into()];
    };
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format_float((x * 1e4).round() / 1e4));
    let mut out: Vec<String> = summary
        .methods
        .iter()
        .map(|m| {
            format!(
                "{:<12} images={} psnr={} mse={} fom={} auc={}",
                m.method,
                m.images,
                opt(m.mean_psnr),
                opt(m.mean_mse),
                opt(m.mean_fom),
                opt(m.mean_auc)
            )
        })
        .collect();
    for d in &summary.differences {
        out.push(format!(
            "{} - {}: psnr {} mse {} fom {} auc {}",
            d.method,
            d.baseline,
            opt(d.psnr),
            opt(d.mse),
            opt(d.fom),
            opt(d.auc)
        ));
    }
    if eval.failures > 0 {
        out.push(format!("{} failed entries", eval.failures));
    }
    out
}

/// Writes scenes as `<name>.png` and `<name>_gt.png` plus a manifest, and
/// returns the manifest path.
pub fn write_dataset(scenes: &[Scene], dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut text = String::from("# image,ground_truth\n");
    for s in scenes {
        let img = format!("{}.png", s.name);
        let gt = format!("{}_gt.png", s.name);
        save_image(&s.image, dir.join(&img))?;
        s.ground_truth.save(dir.join(&gt))?;
        text.push_str(&format!("{img},{gt}\n"));
    }
    let path = dir.join("manifest.csv");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
