//! Meta-measures that fold a whole group set into one number.
//!
//! FDR (fairness discrepancy rate) at a shared threshold:
//!
//! ```text
//! FDR = 1 - (alpha * max_delta_fpr + (1 - alpha) * max_delta_fnr)
//! ```
//!
//! where `max_delta_*` is the largest group-to-min difference of that
//! error rate. 1 means no discrepancy.
//!
//! NRB (normalised reliability bias): mean absolute group-to-average log
//! ratio. 0 means every group matches the average.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bias::{self, BiasOptions};
use crate::error::{Error, Result};
use crate::metrics::{
    compute_sweep_on_grid, disaggregate_at_threshold, disaggregate_trial_metric_on_grid,
    split_scores, threshold_for_fpr, DcfParams, GroupMetricVector, OperatingPoint, RateKind,
    SweepCurve, SweepGrid, TrialMetric,
};
use crate::serde_util::{format_real, group_real_map, real};
use crate::trials::{GroupKey, GroupedTrials};

/// Design false-positive rates used for calibrated thresholds by default.
pub const DEFAULT_DESIGN_FPRS: [f64; 5] = [0.001, 0.01, 0.025, 0.05, 0.1];
/// FDR weights evaluated by default; `alpha` weights the FPR term.
pub const DEFAULT_ALPHAS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdrResult {
    pub alpha: f64,
    pub design_fpr: f64,
    #[serde(with = "real")]
    pub threshold: f64,
    pub max_delta_fpr: f64,
    pub max_delta_fnr: f64,
    /// `alpha * max_delta_fpr + (1 - alpha) * max_delta_fnr`, i.e. `1 - fdr`
    /// without the cancellation of forming `fdr` first.
    pub discrepancy: f64,
    pub fdr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NrbResult {
    pub metric_name: String,
    pub group_count: usize,
    #[serde(with = "real")]
    pub nrb: f64,
    #[serde(with = "group_real_map")]
    pub per_group_log_ratios: BTreeMap<GroupKey, f64>,
    /// Groups whose log ratio is infinite (zero metric under the
    /// `infinity` zero policy).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub infinite_groups: Vec<GroupKey>,
}

fn max_spread(v: &GroupMetricVector) -> Result<f64> {
    let diffs = bias::g2min_diff(v)?;
    Ok(diffs.per_group.values().copied().fold(0.0, f64::max))
}

pub fn fdr(
    group_fprs: &GroupMetricVector,
    group_fnrs: &GroupMetricVector,
    alpha: f64,
    design_fpr: f64,
    threshold: f64,
) -> Result<FdrResult> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside [0, 1]")));
    }
    if !(design_fpr > 0.0 && design_fpr <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "design FPR {design_fpr} outside (0, 1]"
        )));
    }
    if !group_fprs.per_group.keys().eq(group_fnrs.per_group.keys()) {
        return Err(Error::GroupSetMismatch);
    }
    let max_delta_fpr = max_spread(group_fprs)?;
    let max_delta_fnr = max_spread(group_fnrs)?;
    let discrepancy = alpha * max_delta_fpr + (1.0 - alpha) * max_delta_fnr;
    Ok(FdrResult {
        alpha,
        design_fpr,
        threshold,
        max_delta_fpr,
        max_delta_fnr,
        discrepancy,
        fdr: 1.0 - discrepancy,
    })
}

pub(crate) fn pooled_curve(grouped: &GroupedTrials, grid: SweepGrid) -> Result<SweepCurve> {
    let (tar, non) = split_scores(grouped.pooled());
    compute_sweep_on_grid(&tar, &non, grid)
}

/// Threshold calibrated on the pooled population to a design FPR, with
/// each group's FPR and FNR at that threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub design_fpr: f64,
    pub point: OperatingPoint,
    pub fprs: GroupMetricVector,
    pub fnrs: GroupMetricVector,
}

pub fn rate_name(which: RateKind, design_fpr: f64) -> String {
    format!("{}@{}", which.name(), format_real(design_fpr))
}

pub fn calibrate(curve: &SweepCurve, grouped: &GroupedTrials, design_fpr: f64) -> Result<Calibration> {
    let point = threshold_for_fpr(curve, design_fpr)?;
    let fprs = disaggregate_at_threshold(grouped, point.threshold, RateKind::Fpr)?
        .renamed(rate_name(RateKind::Fpr, design_fpr));
    let fnrs = disaggregate_at_threshold(grouped, point.threshold, RateKind::Fnr)?
        .renamed(rate_name(RateKind::Fnr, design_fpr));
    Ok(Calibration {
        design_fpr,
        point,
        fprs,
        fnrs,
    })
}

fn check_grid(values: &[f64], what: &str, ok: impl Fn(f64) -> bool) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidParameter(format!("empty {what} list")));
    }
    match values.iter().find(|&&v| !ok(v)) {
        Some(v) => Err(Error::InvalidParameter(format!("{what} {v} out of range"))),
        None => Ok(()),
    }
}

pub(crate) fn check_design_fprs(design_fprs: &[f64]) -> Result<()> {
    check_grid(design_fprs, "design FPR", |v| v > 0.0 && v <= 1.0)
}

pub(crate) fn check_alphas(alphas: &[f64]) -> Result<()> {
    check_grid(alphas, "alpha", |v| (0.0..=1.0).contains(&v))
}

fn sorted_grid(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// FDR over every `(design_fpr, alpha)` cell, ordered by design FPR then alpha.
pub fn fdr_grid(grouped: &GroupedTrials, design_fprs: &[f64], alphas: &[f64]) -> Result<Vec<FdrResult>> {
    check_design_fprs(design_fprs)?;
    check_alphas(alphas)?;
    let curve = pooled_curve(grouped, SweepGrid::Exact)?;
    let mut out = Vec::new();
    for design_fpr in sorted_grid(design_fprs) {
        let cal = calibrate(&curve, grouped, design_fpr)?;
        out.extend(fdr_row(&cal, alphas)?);
    }
    Ok(out)
}

pub(crate) fn fdr_row(cal: &Calibration, alphas: &[f64]) -> Result<Vec<FdrResult>> {
    sorted_grid(alphas)
        .into_iter()
        .map(|alpha| fdr(&cal.fprs, &cal.fnrs, alpha, cal.design_fpr, cal.point.threshold))
        .collect()
}

pub fn nrb(v: &GroupMetricVector) -> Result<NrbResult> {
    nrb_with(v, &BiasOptions::default())
}

pub fn nrb_with(v: &GroupMetricVector, opts: &BiasOptions) -> Result<NrbResult> {
    let logs = bias::g2avg_log_ratio_with(v, opts)?;
    let g = logs.per_group.len();
    let nrb = logs.per_group.values().map(|x| x.abs()).sum::<f64>() / g as f64;
    let infinite_groups = logs
        .per_group
        .iter()
        .filter(|(_, x)| x.is_infinite())
        .map(|(k, _)| k.clone())
        .collect();
    Ok(NrbResult {
        metric_name: v.metric_name.clone(),
        group_count: g,
        nrb,
        per_group_log_ratios: logs.per_group,
        infinite_groups,
    })
}

/// The base metrics the NRB suite runs over, in report order: EER,
/// minCDet, then FPR and FNR at each design FPR from largest to smallest.
pub(crate) fn suite_vectors(
    grouped: &GroupedTrials,
    design_fprs: &[f64],
    dcf: &DcfParams,
    grid: SweepGrid,
) -> Result<Vec<GroupMetricVector>> {
    check_design_fprs(design_fprs)?;
    let mut out = vec![
        disaggregate_trial_metric_on_grid(grouped, &TrialMetric::Eer, grid)?,
        disaggregate_trial_metric_on_grid(grouped, &TrialMetric::MinCdet(*dcf), grid)?,
    ];
    let curve = pooled_curve(grouped, grid)?;
    for design_fpr in sorted_grid(design_fprs).into_iter().rev() {
        let cal = calibrate(&curve, grouped, design_fpr)?;
        out.push(cal.fprs);
        out.push(cal.fnrs);
    }
    Ok(out)
}

pub fn nrb_suite(grouped: &GroupedTrials, design_fprs: &[f64], dcf: &DcfParams) -> Result<Vec<NrbResult>> {
    nrb_suite_with(grouped, design_fprs, dcf, &BiasOptions::default())
}

pub fn nrb_suite_with(
    grouped: &GroupedTrials,
    design_fprs: &[f64],
    dcf: &DcfParams,
    opts: &BiasOptions,
) -> Result<Vec<NrbResult>> {
    suite_vectors(grouped, design_fprs, dcf, SweepGrid::Exact)?
        .iter()
        .map(|v| nrb_with(v, opts))
        .collect()
}
