//! Plain-text `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys,
//! repeated keys and out-of-range values are errors reported with their
//! line number.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fusion::FusionMode;
use crate::geodesic::{Metric, DEFAULT_TRUNCATION};
use crate::loss::DEFAULT_WT;
use crate::metrics::DEFAULT_BRANCH_THRESHOLD;
use crate::phantom::PhantomSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub ct: Option<PathBuf>,
    pub stage1: Option<PathBuf>,
    pub pf: Option<PathBuf>,
    pub pg: Option<PathBuf>,
    pub label: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub threshold: f64,
    pub th: f64,
    pub w_t: f64,
    pub metric: Metric,
    pub mode: FusionMode,
    pub tb: f64,
    pub seed: u64,
    pub hu_lo: f64,
    pub hu_hi: f64,
    /// Gaps cut into the synthetic fine-tune prediction.
    pub breakages: usize,
    pub gap_width: usize,
    pub noise_sigma: f64,
    pub vessel: bool,
    pub phantom: PhantomSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            ct: None,
            stage1: None,
            pf: None,
            pg: None,
            label: None,
            out_dir: PathBuf::from("out"),
            threshold: 0.5,
            th: DEFAULT_TRUNCATION,
            w_t: DEFAULT_WT,
            metric: Metric::GrayvalueSum,
            mode: FusionMode::G2F,
            tb: DEFAULT_BRANCH_THRESHOLD,
            seed: 0,
            hu_lo: -1000.0,
            hu_hi: 600.0,
            breakages: 3,
            gap_width: 2,
            noise_sigma: 0.0,
            vessel: false,
            phantom: PhantomSpec::standard(),
        }
    }
}

/// Ordered `(line, key, value)` entries of a config file.
pub fn parse_entries(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut entries: Vec<(usize, String, String)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
            line: n + 1,
            message: format!("expected `key = value`, got {line:?}"),
        })?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if entries.iter().any(|(_, seen, _)| *seen == k) {
            return Err(Error::Config {
                line: n + 1,
                message: format!("duplicate key {k:?}"),
            });
        }
        entries.push((n + 1, k, v));
    }
    Ok(entries)
}

fn value<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config {
        line,
        message: format!("{key}: cannot parse {v:?}"),
    })
}

fn ranged(line: usize, key: &str, v: &str, ok: impl Fn(f64) -> bool, range: &str) -> Result<f64> {
    let x: f64 = value(line, key, v)?;
    if x.is_finite() && ok(x) {
        Ok(x)
    } else {
        Err(Error::Config {
            line,
            message: format!("{key} = {x} is outside {range}"),
        })
    }
}

fn triple<T: FromStr + Copy>(line: usize, key: &str, v: &str) -> Result<[T; 3]> {
    let parts: Vec<T> = v
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| value(line, key, s))
        .collect::<Result<_>>()?;
    match parts.as_slice() {
        [a, b, c] => Ok([*a, *b, *c]),
        [a] => Ok([*a; 3]),
        _ => Err(Error::Config {
            line,
            message: format!("{key}: expected 1 or 3 values"),
        }),
    }
}

fn flag(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config {
            line,
            message: format!("{key}: expected true or false"),
        }),
    }
}

/// Apply one phantom key; returns false when `key` is not a phantom key.
pub fn apply_phantom_key(spec: &mut PhantomSpec, line: usize, key: &str, v: &str) -> Result<bool> {
    match key {
        "dims" => spec.dims = triple(line, key, v)?,
        "spacing" => {
            let s: [f64; 3] = triple(line, key, v)?;
            if s.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::Config {
                    line,
                    message: "spacing must be positive".into(),
                });
            }
            spec.spacing = s;
        }
        "depth" => spec.depth = value(line, key, v)?,
        "root_radius" => spec.root_radius = ranged(line, key, v, |x| x >= 1.0, "[1, inf)")?,
        "radius_decay" => {
            spec.radius_decay = ranged(line, key, v, |x| x > 0.0 && x <= 1.0, "(0, 1]")?
        }
        "segment_length" => spec.segment_length = ranged(line, key, v, |x| x > 0.0, "(0, inf)")?,
        "branch_angle" => {
            spec.branch_angle = ranged(line, key, v, |x| x > 0.0 && x < 180.0, "(0, 180)")?
        }
        "seed" => spec.seed = value(line, key, v)?,
        _ => return Ok(false),
    }
    Ok(true)
}

/// Parse a phantom description; keys are the [`PhantomSpec`] field names.
pub fn parse_phantom_spec(text: &str) -> Result<PhantomSpec> {
    let mut spec = PhantomSpec::standard();
    for (line, key, v) in parse_entries(text)? {
        if !apply_phantom_key(&mut spec, line, &key, &v)? {
            return Err(Error::Config {
                line,
                message: format!("unknown key {key:?}"),
            });
        }
    }
    Ok(spec)
}

impl RunConfig {
    /// Parse a config. Relative paths are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut c = RunConfig::default();
        let path = |v: &str| Some(base_dir.join(v));
        for (line, key, v) in parse_entries(text)? {
            let v = v.as_str();
            match key.as_str() {
                "ct" => c.ct = path(v),
                "stage1" => c.stage1 = path(v),
                "pf" => c.pf = path(v),
                "pg" => c.pg = path(v),
                "label" => c.label = path(v),
                "out_dir" => c.out_dir = base_dir.join(v),
                "threshold" => {
                    c.threshold = ranged(line, &key, v, |x| x > 0.0 && x < 1.0, "(0, 1)")?
                }
                "th" => c.th = ranged(line, &key, v, |x| x > 0.0, "(0, inf)")?,
                "w_t" => c.w_t = ranged(line, &key, v, |x| x >= 0.0, "[0, inf)")?,
                "metric" => c.metric = v.parse().map_err(|e: Error| config_err(line, e))?,
                "mode" => c.mode = v.parse().map_err(|e: Error| config_err(line, e))?,
                "tb" => c.tb = ranged(line, &key, v, |x| x > 0.0 && x <= 1.0, "(0, 1]")?,
                "seed" => c.seed = value(line, &key, v)?,
                "hu_lo" => c.hu_lo = value(line, &key, v)?,
                "hu_hi" => c.hu_hi = value(line, &key, v)?,
                "breakages" => c.breakages = value(line, &key, v)?,
                "gap_width" => {
                    c.gap_width = value(line, &key, v)?;
                    if c.gap_width == 0 {
                        return Err(Error::Config {
                            line,
                            message: "gap_width must be positive".into(),
                        });
                    }
                }
                "noise_sigma" => c.noise_sigma = ranged(line, &key, v, |x| x >= 0.0, "[0, inf)")?,
                "vessel" => c.vessel = flag(line, &key, v)?,
                other => {
                    // The pipeline seeds the phantom from `seed`.
                    let phantom_key = match other.strip_prefix("phantom_") {
                        Some("seed") | None => "",
                        Some(k) => k,
                    };
                    if !apply_phantom_key(&mut c.phantom, line, phantom_key, v)? {
                        return Err(Error::Config {
                            line,
                            message: format!("unknown key {other:?}"),
                        });
                    }
                }
            }
            if c.hu_lo >= c.hu_hi {
                return Err(Error::Config {
                    line,
                    message: "hu_lo must be below hu_hi".into(),
                });
            }
        }
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

fn config_err(line: usize, e: Error) -> Error {
    Error::Config {
        line,
        message: e.to_string(),
    }
}
