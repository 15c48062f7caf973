//! End-to-end audit: load, group, disaggregate, measure, aggregate, and
//! write the report files.
//!
//! `report.json` holds the full [`BiasReport`]; the CSV files mirror its
//! tables for diffing. All CSVs are UTF-8, comma separated, LF terminated,
//! with `.` as decimal separator and shortest round-trip float formatting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::{self, ExposureEntry};
use crate::bias::{self, AverageMode, BiasMeasure, BiasOptions, BiasVector, ZeroPolicy};
use crate::error::{Error, Result};
use crate::meta::{self, Calibration, FdrResult, NrbResult};
use crate::metrics::{
    disaggregate_trial_metric_on_grid, DcfParams, GroupMetricVector, SweepGrid, TrialMetric,
};
use crate::serde_util::{format_real, group_map, real};
use crate::trials::{self, AssignPolicy, GroupKey, GroupedTrials, Label};

pub const SCHEMA_VERSION: u32 = 1;

pub const REPORT_JSON: &str = "report.json";
pub const BASE_METRICS_CSV: &str = "table_base_metrics.csv";
pub const BIAS_MEASURES_CSV: &str = "table_bias_measures.csv";
pub const THRESHOLD_CSV: &str = "table_threshold_decomposition.csv";
pub const FDR_GRID_CSV: &str = "fig_fdr_grid.csv";
pub const NRB_SUITE_CSV: &str = "fig_nrb_suite.csv";

const POOLED: &str = "pooled";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub scores_path: PathBuf,
    pub metadata_path: PathBuf,
    pub group_attributes: Vec<String>,
    pub policy: AssignPolicy,
    pub dcf: DcfParams,
    pub design_fprs: Vec<f64>,
    pub alphas: Vec<f64>,
    pub zero_policy: ZeroPolicy,
    pub average_mode: AverageMode,
    pub output_dir: Option<PathBuf>,
    pub emit_figures: bool,
    /// Fail on groups without targets or nontargets instead of dropping them.
    pub strict: bool,
    pub attempts_per_hour: f64,
    /// Success probability used for the "attempts until likely" view.
    pub exposure_quantile: f64,
    /// `None` sweeps every distinct score; `Some(k)` uses `k` quantiles.
    pub grid_quantiles: Option<usize>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            scores_path: PathBuf::new(),
            metadata_path: PathBuf::new(),
            group_attributes: Vec::new(),
            policy: AssignPolicy::BothMatch,
            dcf: DcfParams::default(),
            design_fprs: meta::DEFAULT_DESIGN_FPRS.to_vec(),
            alphas: meta::DEFAULT_ALPHAS.to_vec(),
            zero_policy: ZeroPolicy::Error,
            average_mode: AverageMode::Pooled,
            output_dir: None,
            emit_figures: true,
            strict: false,
            attempts_per_hour: attack::DEFAULT_ATTEMPTS_PER_HOUR,
            exposure_quantile: attack::DEFAULT_SUCCESS_QUANTILE,
            grid_quantiles: None,
        }
    }
}

impl AuditConfig {
    pub fn new(
        scores_path: impl Into<PathBuf>,
        metadata_path: impl Into<PathBuf>,
        group_attributes: &[&str],
    ) -> Self {
        AuditConfig {
            scores_path: scores_path.into(),
            metadata_path: metadata_path.into(),
            group_attributes: group_attributes.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    /// Resets grids and cost parameters to the published defaults.
    pub fn apply_paper_preset(&mut self) {
        let d = AuditConfig::default();
        self.design_fprs = d.design_fprs;
        self.alphas = d.alphas;
        self.dcf = d.dcf;
        self.attempts_per_hour = d.attempts_per_hour;
        self.exposure_quantile = d.exposure_quantile;
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.scores_path.as_os_str().is_empty() {
            return invalid("scores path is empty");
        }
        if self.metadata_path.as_os_str().is_empty() {
            return invalid("metadata path is empty");
        }
        if self.group_attributes.is_empty() {
            return Err(Error::NoAttributes);
        }
        self.dcf.validate()?;
        meta::check_design_fprs(&self.design_fprs)?;
        meta::check_alphas(&self.alphas)?;
        if !(self.attempts_per_hour > 0.0 && self.attempts_per_hour.is_finite()) {
            return invalid("attempts per hour must be positive");
        }
        if !(self.exposure_quantile > 0.0 && self.exposure_quantile < 1.0) {
            return invalid("exposure quantile must lie in (0, 1)");
        }
        if matches!(self.grid_quantiles, Some(k) if k < 2) {
            return invalid("quantile grid needs at least 2 points");
        }
        Ok(())
    }

    fn grid(&self) -> SweepGrid {
        self.grid_quantiles.map_or(SweepGrid::Exact, SweepGrid::Quantiles)
    }

    fn bias_options(&self) -> BiasOptions {
        BiasOptions {
            zero_policy: self.zero_policy,
            average: self.average_mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Fraction,
    Percent,
    Ratio,
    LogRatio,
}

impl Unit {
    pub fn as_str(self) -> &'static str {
        match self {
            Unit::Fraction => "fraction",
            Unit::Percent => "percent",
            Unit::Ratio => "ratio",
            Unit::LogRatio => "log_ratio",
        }
    }
}

/// One base metric per group. `vector` is in machine units (fractions);
/// `display` repeats it in the conventional presentation unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseMetricTable {
    pub vector: GroupMetricVector,
    pub unit: Unit,
    pub display_unit: Unit,
    #[serde(with = "group_map")]
    pub display: BTreeMap<GroupKey, f64>,
    pub aggregate_display: f64,
}

impl BaseMetricTable {
    fn new(vector: GroupMetricVector) -> Self {
        let (display_unit, scale) = if vector.metric_name == "eer" {
            (Unit::Percent, 100.0)
        } else {
            (Unit::Fraction, 1.0)
        };
        BaseMetricTable {
            display: vector.per_group.iter().map(|(k, v)| (k.clone(), v * scale)).collect(),
            aggregate_display: vector.aggregate * scale,
            vector,
            unit: Unit::Fraction,
            display_unit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedBias {
    pub unit: Unit,
    #[serde(flatten)]
    pub bias: BiasVector,
}

impl TaggedBias {
    fn new(bias: BiasVector) -> Self {
        let unit = match bias.measure {
            BiasMeasure::G2minDiff => Unit::Fraction,
            BiasMeasure::G2avgRatio => Unit::Ratio,
            BiasMeasure::G2avgLogRatio => Unit::LogRatio,
        };
        TaggedBias { unit, bias }
    }
}

/// Per-group FPR/FNR at the threshold calibrated to one design FPR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDecomposition {
    pub design_fpr: f64,
    #[serde(with = "real")]
    pub threshold: f64,
    pub pooled_fpr: f64,
    pub pooled_fnr: f64,
    pub fpr: GroupMetricVector,
    pub fnr: GroupMetricVector,
    pub bias: Vec<TaggedBias>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureBlock {
    pub design_fpr: f64,
    #[serde(with = "real")]
    pub threshold: f64,
    pub attempts_per_hour: f64,
    pub quantile: f64,
    pub entries: Vec<ExposureEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialCounts {
    pub total: usize,
    pub unassigned: usize,
    pub groups: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub schema_version: u32,
    pub config: AuditConfig,
    pub trial_counts: TrialCounts,
    pub base_metrics: Vec<BaseMetricTable>,
    pub bias_measures: Vec<TaggedBias>,
    pub threshold_decomposition: Vec<ThresholdDecomposition>,
    pub fdr_grid: Vec<FdrResult>,
    pub nrb_suite: Vec<NrbResult>,
    pub exposure: Vec<ExposureBlock>,
    pub warnings: Vec<String>,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::from(e).at(path))
}

/// Loads both input files and runs the whole pipeline.
pub fn run_audit(config: &AuditConfig) -> Result<BiasReport> {
    config.validate()?;
    let trials = trials::load_trials(open(&config.scores_path)?).map_err(|e| e.at(&config.scores_path))?;
    let metadata =
        trials::load_metadata(open(&config.metadata_path)?).map_err(|e| e.at(&config.metadata_path))?;
    let grouped = trials::assign_groups(&trials, &metadata, &config.group_attributes, config.policy)?;
    audit_grouped(grouped, config)
}

/// Moves groups lacking targets or nontargets into `unassigned`.
fn drop_degenerate(grouped: &mut GroupedTrials, strict: bool, warnings: &mut Vec<String>) -> Result<()> {
    let bad: Vec<(GroupKey, &'static str)> = grouped
        .groups
        .iter()
        .filter_map(|(k, ts)| {
            [Label::Target, Label::Nontarget]
                .into_iter()
                .find(|&l| !ts.iter().any(|t| t.label == l))
                .map(|l| (k.clone(), l.as_str()))
        })
        .collect();
    for (group, missing) in bad {
        if strict {
            return Err(Error::DegenerateGroup { group, missing });
        }
        warnings.push(format!("group {group} lacks {missing} trials; excluded from group metrics"));
        let ts = grouped.groups.remove(&group).unwrap_or_default();
        grouped.unassigned.extend(ts);
    }
    if grouped.groups.is_empty() {
        return Err(Error::NoGroups);
    }
    Ok(())
}

fn push_bias(
    out: &mut Vec<TaggedBias>,
    warnings: &mut Vec<String>,
    v: &GroupMetricVector,
    opts: &BiasOptions,
) {
    for measure in BiasMeasure::ALL {
        match bias::compute(measure, v, opts) {
            Ok(b) => out.push(TaggedBias::new(b)),
            Err(e) => warnings.push(format!("{} of {}: {e}", measure.name(), v.metric_name)),
        }
    }
}

/// Runs the pipeline on already grouped trials.
pub fn audit_grouped(mut grouped: GroupedTrials, config: &AuditConfig) -> Result<BiasReport> {
    config.validate()?;
    let mut warnings = Vec::new();
    drop_degenerate(&mut grouped, config.strict, &mut warnings)?;
    if !grouped.unassigned.is_empty() {
        warnings.push(format!(
            "{} trials not assigned to any group; counted in pooled metrics only",
            grouped.unassigned.len()
        ));
    }
    let grid = config.grid();
    let opts = config.bias_options();

    let eer = disaggregate_trial_metric_on_grid(&grouped, &TrialMetric::Eer, grid)?;
    let cdet = disaggregate_trial_metric_on_grid(&grouped, &TrialMetric::MinCdet(config.dcf), grid)?;

    let mut bias_measures = Vec::new();
    for v in [&eer, &cdet] {
        push_bias(&mut bias_measures, &mut warnings, v, &opts);
    }

    let curve = meta::pooled_curve(&grouped, grid)?;
    let mut design_fprs = config.design_fprs.clone();
    design_fprs.sort_by(f64::total_cmp);
    design_fprs.dedup();
    let calibrations: Vec<Calibration> = design_fprs
        .iter()
        .map(|&d| meta::calibrate(&curve, &grouped, d))
        .collect::<Result<_>>()?;

    let mut threshold_decomposition = Vec::new();
    let mut fdr_grid = Vec::new();
    let mut exposure = Vec::new();
    for cal in &calibrations {
        let mut bias = Vec::new();
        push_bias(&mut bias, &mut warnings, &cal.fprs, &opts);
        push_bias(&mut bias, &mut warnings, &cal.fnrs, &opts);
        threshold_decomposition.push(ThresholdDecomposition {
            design_fpr: cal.design_fpr,
            threshold: cal.point.threshold,
            pooled_fpr: cal.point.fpr,
            pooled_fnr: cal.point.fnr,
            fpr: cal.fprs.clone(),
            fnr: cal.fnrs.clone(),
            bias,
        });
        fdr_grid.extend(meta::fdr_row(cal, &config.alphas)?);
        exposure.push(ExposureBlock {
            design_fpr: cal.design_fpr,
            threshold: cal.point.threshold,
            attempts_per_hour: config.attempts_per_hour,
            quantile: config.exposure_quantile,
            entries: attack::compare_group_exposure_at(
                &cal.fprs,
                config.attempts_per_hour,
                config.exposure_quantile,
            )?,
        });
    }

    let mut suite: Vec<&GroupMetricVector> = vec![&eer, &cdet];
    for cal in calibrations.iter().rev() {
        suite.push(&cal.fprs);
        suite.push(&cal.fnrs);
    }
    let mut nrb_suite = Vec::new();
    for v in suite {
        match meta::nrb_with(v, &opts) {
            Ok(r) => {
                if !r.infinite_groups.is_empty() {
                    let names: Vec<String> = r.infinite_groups.iter().map(ToString::to_string).collect();
                    warnings.push(format!(
                        "nrb of {} is infinite; zero-valued groups: {}",
                        r.metric_name,
                        names.join(", ")
                    ));
                }
                nrb_suite.push(r);
            }
            Err(e) => warnings.push(format!("nrb of {}: {e}", v.metric_name)),
        }
    }

    Ok(BiasReport {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        trial_counts: TrialCounts {
            total: grouped.len(),
            unassigned: grouped.unassigned.len(),
            groups: grouped.group_count(),
        },
        base_metrics: vec![BaseMetricTable::new(eer), BaseMetricTable::new(cdet)],
        bias_measures,
        threshold_decomposition,
        fdr_grid,
        nrb_suite,
        exposure,
        warnings,
    })
}

fn csv_line(out: &mut String, fields: &[&str]) {
    out.push_str(&fields.join(","));
    out.push('\n');
}

fn opt_real(v: Option<f64>) -> String {
    v.map(format_real).unwrap_or_default()
}

pub fn base_metrics_csv(report: &BiasReport) -> String {
    let mut out = String::new();
    csv_line(&mut out, &["metric", "group", "value", "unit", "display_value", "display_unit"]);
    for t in &report.base_metrics {
        let rows = t
            .vector
            .per_group
            .iter()
            .map(|(k, v)| (k.to_string(), *v, t.display[k]))
            .chain([(POOLED.to_string(), t.vector.aggregate, t.aggregate_display)]);
        for (group, value, display) in rows {
            csv_line(
                &mut out,
                &[
                    &t.vector.metric_name,
                    &group,
                    &format_real(value),
                    t.unit.as_str(),
                    &format_real(display),
                    t.display_unit.as_str(),
                ],
            );
        }
    }
    out
}

fn reference_fields(r: &bias::Reference) -> (String, String) {
    match r {
        bias::Reference::BestGroup { group, value } => (group.to_string(), format_real(*value)),
        bias::Reference::Average { mode, value } => {
            let mode = match mode {
                AverageMode::Pooled => "pooled",
                AverageMode::GroupMean => "group_mean",
            };
            (mode.to_string(), format_real(*value))
        }
    }
}

pub fn bias_measures_csv(report: &BiasReport) -> String {
    let mut out = String::new();
    csv_line(
        &mut out,
        &["measure", "metric", "group", "value", "unit", "reference", "reference_value"],
    );
    for t in &report.bias_measures {
        let (reference, reference_value) = reference_fields(&t.bias.reference);
        for (k, v) in &t.bias.per_group {
            csv_line(
                &mut out,
                &[
                    t.bias.measure.name(),
                    &t.bias.metric_name,
                    &k.to_string(),
                    &format_real(*v),
                    t.unit.as_str(),
                    &reference,
                    &reference_value,
                ],
            );
        }
    }
    out
}

pub fn threshold_decomposition_csv(report: &BiasReport) -> String {
    let mut out = String::new();
    csv_line(
        &mut out,
        &[
            "design_fpr",
            "threshold",
            "rate",
            "group",
            "value",
            "g2min_diff",
            "g2avg_ratio",
            "g2avg_log_ratio",
        ],
    );
    for d in &report.threshold_decomposition {
        for v in [&d.fpr, &d.fnr] {
            let rate = if std::ptr::eq(v, &d.fpr) { "fpr" } else { "fnr" };
            let lookup = |m: BiasMeasure, k: &GroupKey| {
                d.bias
                    .iter()
                    .find(|t| t.bias.measure == m && t.bias.metric_name == v.metric_name)
                    .and_then(|t| t.bias.per_group.get(k).copied())
            };
            for (k, value) in &v.per_group {
                csv_line(
                    &mut out,
                    &[
                        &format_real(d.design_fpr),
                        &format_real(d.threshold),
                        rate,
                        &k.to_string(),
                        &format_real(*value),
                        &opt_real(lookup(BiasMeasure::G2minDiff, k)),
                        &opt_real(lookup(BiasMeasure::G2avgRatio, k)),
                        &opt_real(lookup(BiasMeasure::G2avgLogRatio, k)),
                    ],
                );
            }
            csv_line(
                &mut out,
                &[
                    &format_real(d.design_fpr),
                    &format_real(d.threshold),
                    rate,
                    POOLED,
                    &format_real(v.aggregate),
                    "",
                    "",
                    "",
                ],
            );
        }
    }
    out
}

pub fn fdr_grid_csv(report: &BiasReport) -> String {
    let mut out = String::from("design_fpr,alpha,fdr\n");
    for r in &report.fdr_grid {
        let _ = writeln!(
            out,
            "{},{},{}",
            format_real(r.design_fpr),
            format_real(r.alpha),
            format_real(r.fdr)
        );
    }
    out
}

pub fn nrb_suite_csv(report: &BiasReport) -> String {
    let mut out = String::from("metric_name,nrb\n");
    for r in &report.nrb_suite {
        let _ = writeln!(out, "{},{}", r.metric_name, format_real(r.nrb));
    }
    out
}

pub fn report_json(report: &BiasReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

/// Writes the report files into `output_dir`, returning the paths written.
pub fn emit(report: &BiasReport, output_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(output_dir).map_err(|e| Error::from(e).at(output_dir))?;
    let mut files = vec![
        (REPORT_JSON, report_json(report)?),
        (BASE_METRICS_CSV, base_metrics_csv(report)),
        (BIAS_MEASURES_CSV, bias_measures_csv(report)),
        (THRESHOLD_CSV, threshold_decomposition_csv(report)),
    ];
    if report.config.emit_figures {
        files.push((FDR_GRID_CSV, fdr_grid_csv(report)));
        files.push((NRB_SUITE_CSV, nrb_suite_csv(report)));
    }
    let mut written = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let path = output_dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::from(e).at(&path))?;
        written.push(path);
    }
    Ok(written)
}
