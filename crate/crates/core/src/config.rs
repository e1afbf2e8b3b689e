//! Run settings and their text file format.
//!
//! A config file holds one `key = value` pair per line. Blank lines and
//! lines starting with `#` are ignored, and `-` in keys is read as `_`.
//! Command-line flags use the same keys, so precedence is simply the order
//! of application: defaults, then the file, then flags.
//!
//! ```text
//! # detector
//! sigma1 = 1
//! sigma2 = 2
//! rho = 2
//! directions = 8
//! # noise injected before detection (0 disables)
//! noise_var = 0.01
//! seed = 7
//! methods = proposed, color-sobel, color-canny
//! baseline = color-sobel
//! ```

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::baselines::Method;
use crate::error::{Error, Result};
use crate::esm::ChannelCombine;
use crate::imaging::NoiseParams;
use crate::metrics::{format_float, DEFAULT_ALPHA, DEFAULT_STEP, DEFAULT_TOLERANCE};
use crate::pipeline::PipelineConfig;

/// Keys understood by [`RunConfig::set`].
pub const KEYS: &[&str] = &[
    "sigma1",
    "sigma2",
    "rho",
    "directions",
    "combine",
    "method",
    "noise_var",
    "seed",
    "cbm3d_sigma",
    "block_size",
    "block_step",
    "search_radius",
    "max_group",
    "match_threshold",
    "hard_lambda",
    "high_quantile",
    "low_ratio",
    "low_threshold",
    "high_threshold",
    "min_component",
    "spur_length",
    "methods",
    "baseline",
    "step",
    "tolerance",
    "fom_alpha",
];

/// Everything a detection or evaluation run can be configured with.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Detector settings; `noise` is filled from `noise_var` and `seed`.
    pub pipeline: PipelineConfig,
    pub noise_var: f64,
    pub seed: u64,
    /// Methods compared by an evaluation run.
    pub methods: Vec<Method>,
    /// Method the others are compared against in the summary.
    pub baseline: Option<Method>,
    pub step: f64,
    pub tolerance: usize,
    pub fom_alpha: f64,
    /// Fixed hysteresis thresholds; both or neither must be set.
    pub low_threshold: Option<f64>,
    pub high_threshold: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            noise_var: 0.0,
            seed: 0,
            methods: vec![Method::Proposed, Method::ColorSobel, Method::ColorCanny],
            baseline: Some(Method::ColorSobel),
            step: DEFAULT_STEP,
            tolerance: DEFAULT_TOLERANCE,
            fom_alpha: DEFAULT_ALPHA,
            low_threshold: None,
            high_threshold: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_combine(value: &str) -> Result<ChannelCombine> {
    match value.to_ascii_lowercase().as_str() {
        "sum" => Ok(ChannelCombine::Sum),
        "l2" => Ok(ChannelCombine::L2),
        _ => Err(Error::Config(format!(
            "invalid value {value:?} for combine; expected sum or l2"
        ))),
    }
}

fn combine_name(c: ChannelCombine) -> &'static str {
    match c {
        ChannelCombine::Sum => "sum",
        ChannelCombine::L2 => "l2",
    }
}

fn method(value: &str) -> Result<Method> {
    value
        .parse::<Method>()
        .map_err(|e| Error::Config(e.to_string()))
}

impl RunConfig {
    /// Sets one key. Unknown keys and unparsable values are config errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let p = &mut self.pipeline;
        match key.as_str() {
            "sigma1" => p.sigma1 = parse(&key, value)?,
            "sigma2" => p.sigma2 = parse(&key, value)?,
            "rho" => p.rho = parse(&key, value)?,
            "directions" => p.directions = parse(&key, value)?,
            "combine" => p.combine = parse_combine(value)?,
            "method" => p.method = method(value)?,
            "noise_var" => self.noise_var = parse(&key, value)?,
            "seed" => self.seed = parse(&key, value)?,
            "cbm3d_sigma" => p.cbm3d.sigma = parse(&key, value)?,
            "block_size" => p.cbm3d.block_size = parse(&key, value)?,
            "block_step" => p.cbm3d.step = parse(&key, value)?,
            "search_radius" => p.cbm3d.search_radius = parse(&key, value)?,
            "max_group" => p.cbm3d.max_group = parse(&key, value)?,
            "match_threshold" => p.cbm3d.match_threshold = parse(&key, value)?,
            "hard_lambda" => p.cbm3d.hard_lambda = parse(&key, value)?,
            "high_quantile" => p.thresholds.high_quantile = parse(&key, value)?,
            "low_ratio" => p.thresholds.low_ratio = parse(&key, value)?,
            "low_threshold" => self.low_threshold = Some(parse(&key, value)?),
            "high_threshold" => self.high_threshold = Some(parse(&key, value)?),
            "min_component" => p.thresholds.min_component = parse(&key, value)?,
            "spur_length" => p.thresholds.spur_length = parse(&key, value)?,
            "methods" => {
                let list = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(method)
                    .collect::<Result<Vec<_>>>()?;
                if list.is_empty() {
                    return Err(Error::Config(
                        "methods must name at least one method".into(),
                    ));
                }
                self.methods = list;
            }
            "baseline" => {
                self.baseline = match value.to_ascii_lowercase().as_str() {
                    "" | "none" => None,
                    _ => Some(method(value)?),
                }
            }
            "step" => self.step = parse(&key, value)?,
            "tolerance" => self.tolerance = parse(&key, value)?,
            "fom_alpha" => self.fom_alpha = parse(&key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies every pair of a config text, reporting the offending line.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected key = value, got {line:?}",
                    n + 1
                ))
            })?;
            self.set(key, value).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("line {}: {msg}", n + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    /// Defaults overlaid with `path`.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_file(path)?;
        Ok(cfg)
    }

    /// Detector settings for one image, with noise seeded by `seed`.
    pub fn pipeline_for_seed(&self, seed: u64) -> Result<PipelineConfig> {
        let mut p = self.pipeline;
        p.noise = if self.noise_var > 0.0 {
            Some(NoiseParams::new(self.noise_var, seed)?)
        } else {
            NoiseParams::new(self.noise_var, seed)?;
            None
        };
        p.thresholds.absolute = match (self.low_threshold, self.high_threshold) {
            (None, None) => None,
            (Some(lo), Some(hi)) => Some((lo, hi)),
            _ => {
                return Err(Error::Config(
                    "low_threshold and high_threshold must be given together".into(),
                ))
            }
        };
        p.validate()?;
        Ok(p)
    }

    /// Detector settings using the configured seed.
    pub fn pipeline_config(&self) -> Result<PipelineConfig> {
        self.pipeline_for_seed(self.seed)
    }

    /// Checks every setting, including the evaluation ones.
    pub fn validate(&self) -> Result<()> {
        self.pipeline_config()?;
        crate::metrics::threshold_grid(self.step)?;
        if !(self.fom_alpha > 0.0 && self.fom_alpha.is_finite()) {
            return Err(Error::param(format!(
                "fom_alpha must be positive, got {}",
                self.fom_alpha
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::Config(
                "methods must name at least one method".into(),
            ));
        }
        Ok(())
    }

    /// The config in file form; reading it back gives an equal config.
    pub fn to_text(&self) -> String {
        let p = &self.pipeline;
        let c = &p.cbm3d;
        let t = &p.thresholds;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("sigma1", format_float(p.sigma1));
        put("sigma2", format_float(p.sigma2));
        put("rho", format_float(p.rho));
        put("directions", p.directions.to_string());
        put("combine", combine_name(p.combine).into());
        put("method", p.method.to_string());
        put("noise_var", format_float(self.noise_var));
        put("seed", self.seed.to_string());
        put("cbm3d_sigma", format_float(c.sigma));
        put("block_size", c.block_size.to_string());
        put("block_step", c.step.to_string());
        put("search_radius", c.search_radius.to_string());
        put("max_group", c.max_group.to_string());
        put("match_threshold", format_float(c.match_threshold));
        put("hard_lambda", format_float(c.hard_lambda));
        put("high_quantile", format_float(t.high_quantile));
        put("low_ratio", format_float(t.low_ratio));
        if let (Some(lo), Some(hi)) = (self.low_threshold, self.high_threshold) {
            put("low_threshold", format_float(lo));
            put("high_threshold", format_float(hi));
        }
        put("min_component", t.min_component.to_string());
        put("spur_length", t.spur_length.to_string());
        let methods: Vec<&str> = self.methods.iter().map(|m| m.name()).collect();
        put("methods", methods.join(", "));
        put(
            "baseline",
            self.baseline.map_or("none".to_string(), |m| m.to_string()),
        );
        put("step", format_float(self.step));
        put("tolerance", self.tolerance.to_string());
        put("fom_alpha", format_float(self.fom_alpha));
        out
    }
}
