//! Flat `key = value` configuration shared by every subcommand.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are the long
//! flag names without the leading dashes; `-` and `_` are interchangeable.
//! Relative paths in a file are resolved against the file's directory.
//! Entries apply in order, file first, then flags. `preset = paper` resets
//! the grids and cost parameters at the point where it appears, so
//! `--preset paper` discards file values for those settings while other
//! flags still override it.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use biasaudit_core::{AssignPolicy, AuditConfig, AverageMode, ZeroPolicy};

/// Everything a subcommand may need; the audit settings plus the extras
/// used by `scenario` and `synth`.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    pub audit: AuditConfig,
    pub seed: u64,
    pub models: Option<PathBuf>,
    pub fprs: Vec<f64>,
    pub attempts: Option<u64>,
}

/// One `key = value` pair and where it came from, for error messages.
#[derive(Debug, Clone)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub origin: String,
}

pub const KEYS: &[&str] = &[
    "scores",
    "metadata",
    "groups",
    "policy",
    "design_fprs",
    "alphas",
    "dcf_pt",
    "dcf_cmiss",
    "dcf_cfa",
    "dcf_normalize",
    "zero_policy",
    "average_mode",
    "out",
    "preset",
    "strict",
    "emit_figures",
    "attempts_per_hour",
    "exposure_quantile",
    "grid_quantiles",
    "seed",
    "models",
    "fpr",
    "attempts",
];

pub fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

pub fn parse_file(path: &Path) -> Result<Vec<Entry>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_text(&text, &path.display().to_string())
}

pub fn parse_text(text: &str, source: &str) -> Result<Vec<Entry>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let origin = format!("{source}:{}", i + 1);
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("{origin}: expected `key = value`"))?;
        let key = normalize_key(k);
        if !KEYS.contains(&key.as_str()) {
            return Err(format!("{origin}: unknown key `{}`", k.trim()));
        }
        out.push(Entry {
            key,
            value: v.trim().to_string(),
            origin,
        });
    }
    Ok(out)
}

fn parse<T: FromStr>(value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| e.to_string())
}

fn parse_list(value: &str) -> Result<Vec<f64>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| format!("`{s}`: {e}")))
        .collect()
}

fn parse_bool(value: &str) -> Result<bool, String> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(format!("`{other}` is not a boolean")),
    }
}

fn resolve(base: Option<&Path>, value: &str) -> PathBuf {
    let p = PathBuf::from(value);
    match base {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p,
    }
}

impl Settings {
    /// Builds settings from config-file entries and command-line entries.
    pub fn build(file: &[Entry], file_dir: Option<&Path>, flags: &[Entry]) -> Result<Self, String> {
        let mut s = Settings::default();
        let wants_preset = file.iter().chain(flags).filter(|e| e.key == "preset");
        for e in wants_preset {
            if !e.value.eq_ignore_ascii_case("paper") {
                return Err(format!("{}: unknown preset `{}`", e.origin, e.value));
            }
        }
        for e in file {
            s.apply(e, file_dir)?;
        }
        for e in flags {
            s.apply(e, None)?;
        }
        Ok(s)
    }

    fn apply(&mut self, e: &Entry, base: Option<&Path>) -> Result<(), String> {
        let a = &mut self.audit;
        let v = e.value.as_str();
        let r: Result<(), String> = (|| {
            match e.key.as_str() {
                "scores" => a.scores_path = resolve(base, v),
                "metadata" => a.metadata_path = resolve(base, v),
                "groups" => {
                    a.group_attributes = v
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(String::from)
                        .collect()
                }
                "policy" => a.policy = parse::<AssignPolicy>(v)?,
                "design_fprs" => a.design_fprs = parse_list(v)?,
                "alphas" => a.alphas = parse_list(v)?,
                "dcf_pt" => a.dcf.p_target = parse(v)?,
                "dcf_cmiss" => a.dcf.c_miss = parse(v)?,
                "dcf_cfa" => a.dcf.c_fa = parse(v)?,
                "dcf_normalize" => a.dcf.normalize = parse_bool(v)?,
                "zero_policy" => a.zero_policy = parse::<ZeroPolicy>(v)?,
                "average_mode" => a.average_mode = parse::<AverageMode>(v)?,
                "out" => a.output_dir = Some(resolve(base, v)),
                // The value itself is checked in `build`.
                "preset" => a.apply_paper_preset(),
                "strict" => a.strict = parse_bool(v)?,
                "emit_figures" => a.emit_figures = parse_bool(v)?,
                "attempts_per_hour" => a.attempts_per_hour = parse(v)?,
                "exposure_quantile" => a.exposure_quantile = parse(v)?,
                "grid_quantiles" => {
                    a.grid_quantiles = match v {
                        "" | "exact" => None,
                        k => Some(parse(k)?),
                    }
                }
                "seed" => self.seed = parse(v)?,
                "models" => self.models = Some(resolve(base, v)),
                "fpr" => self.fprs = parse_list(v)?,
                "attempts" => self.attempts = Some(parse(v)?),
                other => return Err(format!("unknown key `{other}`")),
            }
            Ok(())
        })();
        r.map_err(|msg| format!("{}: {}: {msg}", e.origin, e.key))
    }
}
