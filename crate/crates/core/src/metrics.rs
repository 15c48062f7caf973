//! Threshold sweeps and detection metrics.
//!
//! The decision rule everywhere is: accept iff `score >= threshold`.
//! All rates are fractions in `[0, 1]`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::serde_util::group_map;
use crate::trials::{GroupKey, GroupedTrials, Label, TrialRecord};

/// False-positive and false-negative rates over a grid of thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    /// Ascending, distinct. The last entry is always `+inf`.
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub fnr: Vec<f64>,
    /// Nontarget scores at or above each threshold.
    pub false_accepts: Vec<u64>,
    /// Target scores below each threshold.
    pub misses: Vec<u64>,
    pub n_target: u64,
    pub n_nontarget: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SweepGrid {
    /// Every distinct observed score plus the `+inf` sentinel.
    #[default]
    Exact,
    /// At most this many pooled-score quantiles plus the sentinel.
    Quantiles(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    #[serde(with = "crate::serde_util::real")]
    pub threshold: f64,
    pub fpr: f64,
    pub fnr: f64,
}

/// Detection cost parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcfParams {
    pub c_miss: f64,
    pub c_fa: f64,
    pub p_target: f64,
    pub normalize: bool,
}

impl Default for DcfParams {
    fn default() -> Self {
        DcfParams {
            c_miss: 1.0,
            c_fa: 1.0,
            p_target: 0.05,
            normalize: true,
        }
    }
}

impl DcfParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.c_miss > 0.0
            && self.c_miss.is_finite()
            && self.c_fa > 0.0
            && self.c_fa.is_finite()
            && self.p_target > 0.0
            && self.p_target < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid DCF parameters {self:?}")))
        }
    }

    fn miss_weight(&self) -> f64 {
        self.c_miss * self.p_target
    }

    fn fa_weight(&self) -> f64 {
        self.c_fa * (1.0 - self.p_target)
    }

    /// Detection cost at one operating point.
    pub fn cost(&self, fpr: f64, fnr: f64) -> f64 {
        let raw = self.miss_weight() * fnr + self.fa_weight() * fpr;
        if self.normalize {
            raw / self.miss_weight().min(self.fa_weight())
        } else {
            raw
        }
    }
}

/// Error count behind one rate, kept so that rates can be smoothed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateCounts {
    pub errors: u64,
    pub total: u64,
}

impl RateCounts {
    pub fn rate(&self) -> f64 {
        self.errors as f64 / self.total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCounts {
    #[serde(with = "group_map")]
    pub per_group: BTreeMap<GroupKey, RateCounts>,
    pub aggregate: RateCounts,
}

/// One base metric evaluated per group, plus its value on the pooled
/// population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetricVector {
    pub metric_name: String,
    #[serde(with = "group_map")]
    pub per_group: BTreeMap<GroupKey, f64>,
    pub aggregate: f64,
    /// Present for count-based metrics (FPR/FNR at a threshold).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<MetricCounts>,
}

impl GroupMetricVector {
    pub fn new(
        metric_name: impl Into<String>,
        per_group: BTreeMap<GroupKey, f64>,
        aggregate: f64,
    ) -> Result<Self> {
        let v = GroupMetricVector {
            metric_name: metric_name.into(),
            per_group,
            aggregate,
            counts: None,
        };
        v.validate()?;
        Ok(v)
    }

    /// Builds a vector from `(key, value)` pairs.
    pub fn from_pairs<K: Into<GroupKey>>(
        metric_name: impl Into<String>,
        pairs: impl IntoIterator<Item = (K, f64)>,
        aggregate: f64,
    ) -> Result<Self> {
        Self::new(
            metric_name,
            pairs.into_iter().map(|(k, v)| (k.into(), v)).collect(),
            aggregate,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.per_group.is_empty() {
            return Err(Error::NoGroups);
        }
        let bad = |v: f64| !v.is_finite() || v < 0.0;
        if let Some(v) = self.per_group.values().copied().find(|&v| bad(v)) {
            return Err(Error::InvalidParameter(format!(
                "metric `{}` has invalid value {v}",
                self.metric_name
            )));
        }
        if bad(self.aggregate) {
            return Err(Error::InvalidParameter(format!(
                "metric `{}` has invalid aggregate {}",
                self.metric_name, self.aggregate
            )));
        }
        Ok(())
    }

    /// Every value (groups and aggregate) multiplied by `c`. Counts are dropped.
    pub fn scaled(&self, c: f64) -> Self {
        GroupMetricVector {
            metric_name: self.metric_name.clone(),
            per_group: self.per_group.iter().map(|(k, v)| (k.clone(), v * c)).collect(),
            aggregate: self.aggregate * c,
            counts: None,
        }
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.metric_name = name.into();
        self
    }

    pub fn len(&self) -> usize {
        self.per_group.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_group.is_empty()
    }
}

impl From<&str> for GroupKey {
    /// A key with the single attribute `group`.
    fn from(value: &str) -> Self {
        GroupKey::single("group", value)
    }
}

/// Metrics that are optimised per group over that group's own sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrialMetric {
    Eer,
    MinCdet(DcfParams),
}

impl TrialMetric {
    pub fn name(&self) -> &'static str {
        match self {
            TrialMetric::Eer => "eer",
            TrialMetric::MinCdet(_) => "min_cdet",
        }
    }

    pub fn evaluate(&self, curve: &SweepCurve) -> f64 {
        match self {
            TrialMetric::Eer => eer(curve).0,
            TrialMetric::MinCdet(p) => min_cdet(curve, p).0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateKind {
    Fpr,
    Fnr,
}

impl RateKind {
    pub fn name(self) -> &'static str {
        match self {
            RateKind::Fpr => "fpr",
            RateKind::Fnr => "fnr",
        }
    }
}

fn sorted(scores: &[f64]) -> Result<Vec<f64>> {
    if let Some(&s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFiniteInput(s));
    }
    let mut v = scores.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

pub fn compute_sweep(target_scores: &[f64], nontarget_scores: &[f64]) -> Result<SweepCurve> {
    compute_sweep_on_grid(target_scores, nontarget_scores, SweepGrid::Exact)
}

pub fn compute_sweep_on_grid(
    target_scores: &[f64],
    nontarget_scores: &[f64],
    grid: SweepGrid,
) -> Result<SweepCurve> {
    if target_scores.is_empty() {
        return Err(Error::EmptyPopulation("target"));
    }
    if nontarget_scores.is_empty() {
        return Err(Error::EmptyPopulation("nontarget"));
    }
    let tar = sorted(target_scores)?;
    let non = sorted(nontarget_scores)?;

    let mut pooled: Vec<f64> = Vec::with_capacity(tar.len() + non.len());
    pooled.extend_from_slice(&tar);
    pooled.extend_from_slice(&non);
    pooled.sort_by(f64::total_cmp);
    pooled.dedup();

    let mut thresholds = match grid {
        SweepGrid::Quantiles(k) if k >= 2 && k < pooled.len() => {
            let last = pooled.len() - 1;
            let mut q: Vec<f64> = (0..k).map(|i| pooled[i * last / (k - 1)]).collect();
            q.dedup();
            q
        }
        _ => pooled,
    };
    thresholds.push(f64::INFINITY);

    let (n, m) = (tar.len() as u64, non.len() as u64);
    let mut misses = Vec::with_capacity(thresholds.len());
    let mut false_accepts = Vec::with_capacity(thresholds.len());
    let (mut ti, mut ni) = (0usize, 0usize);
    for &t in &thresholds {
        while ti < tar.len() && tar[ti] < t {
            ti += 1;
        }
        while ni < non.len() && non[ni] < t {
            ni += 1;
        }
        misses.push(ti as u64);
        false_accepts.push(m - ni as u64);
    }

    Ok(SweepCurve {
        fpr: false_accepts.iter().map(|&c| c as f64 / m as f64).collect(),
        fnr: misses.iter().map(|&c| c as f64 / n as f64).collect(),
        thresholds,
        false_accepts,
        misses,
        n_target: n,
        n_nontarget: m,
    })
}

impl SweepCurve {
    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    /// `(threshold, fpr, fnr)` triples, e.g. for DET plotting.
    pub fn points(&self) -> impl Iterator<Item = OperatingPoint> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    pub fn point(&self, i: usize) -> OperatingPoint {
        OperatingPoint {
            threshold: self.thresholds[i],
            fpr: self.fpr[i],
            fnr: self.fnr[i],
        }
    }
}

/// Equal error rate and the threshold at which it occurs.
///
/// Finds the first grid point where `fnr - fpr` becomes nonnegative and
/// linearly interpolates both rates between it and its predecessor. A
/// grid point with `fnr == fpr` is returned as is.
pub fn eer(curve: &SweepCurve) -> (f64, f64) {
    let diff = |i: usize| curve.fnr[i] - curve.fpr[i];
    let i = (0..curve.len())
        .find(|&i| diff(i) >= 0.0)
        .unwrap_or(curve.len() - 1);
    if diff(i) == 0.0 || i == 0 {
        return (curve.fpr[i], curve.thresholds[i]);
    }
    let (d0, d1) = (diff(i - 1), diff(i));
    let t = d0 / (d0 - d1);
    let rate = curve.fpr[i - 1] + t * (curve.fpr[i] - curve.fpr[i - 1]);
    let (lo, hi) = (curve.thresholds[i - 1], curve.thresholds[i]);
    let threshold = if hi.is_finite() { lo + t * (hi - lo) } else { lo };
    (rate, threshold)
}

/// Minimum detection cost over the grid; ties resolve to the smallest threshold.
pub fn min_cdet(curve: &SweepCurve, params: &DcfParams) -> (f64, f64) {
    let mut best = (f64::INFINITY, f64::INFINITY);
    for i in 0..curve.len() {
        let c = params.cost(curve.fpr[i], curve.fnr[i]);
        if c < best.0 {
            best = (c, curve.thresholds[i]);
        }
    }
    best
}

/// Smallest grid threshold whose false-positive rate does not exceed `target_fpr`.
pub fn threshold_for_fpr(curve: &SweepCurve, target_fpr: f64) -> Result<OperatingPoint> {
    if !(target_fpr > 0.0 && target_fpr <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "design FPR {target_fpr} outside (0, 1]"
        )));
    }
    // fpr is nonincreasing and ends at 0, so the search always succeeds.
    let i = curve.fpr.partition_point(|&f| f > target_fpr);
    Ok(curve.point(i))
}

pub(crate) fn split_scores<'a>(trials: impl IntoIterator<Item = &'a TrialRecord>) -> (Vec<f64>, Vec<f64>) {
    let mut tar = Vec::new();
    let mut non = Vec::new();
    for t in trials {
        match t.label {
            Label::Target => tar.push(t.score),
            Label::Nontarget => non.push(t.score),
        }
    }
    (tar, non)
}

fn check_group(key: &GroupKey, trials: &[TrialRecord], need: Option<Label>) -> Result<()> {
    let has = |l: Label| trials.iter().any(|t| t.label == l);
    for label in [Label::Target, Label::Nontarget] {
        if need.is_none_or(|n| n == label) && !has(label) {
            return Err(Error::DegenerateGroup {
                group: key.clone(),
                missing: label.as_str(),
            });
        }
    }
    Ok(())
}

/// Evaluates a per-group optimised metric on each group's own trials.
pub fn disaggregate_trial_metric(
    grouped: &GroupedTrials,
    metric: &TrialMetric,
) -> Result<GroupMetricVector> {
    disaggregate_trial_metric_on_grid(grouped, metric, SweepGrid::Exact)
}

pub fn disaggregate_trial_metric_on_grid(
    grouped: &GroupedTrials,
    metric: &TrialMetric,
    grid: SweepGrid,
) -> Result<GroupMetricVector> {
    if let TrialMetric::MinCdet(p) = metric {
        p.validate()?;
    }
    let mut per_group = BTreeMap::new();
    for (key, trials) in &grouped.groups {
        check_group(key, trials, None)?;
        let (tar, non) = split_scores(trials);
        let curve = compute_sweep_on_grid(&tar, &non, grid)?;
        per_group.insert(key.clone(), metric.evaluate(&curve));
    }
    let (tar, non) = split_scores(grouped.pooled());
    let aggregate = metric.evaluate(&compute_sweep_on_grid(&tar, &non, grid)?);
    GroupMetricVector::new(metric.name(), per_group, aggregate)
}

/// Error counts for one population at a fixed threshold.
pub fn rate_counts_at<'a>(
    trials: impl IntoIterator<Item = &'a TrialRecord>,
    threshold: f64,
    which: RateKind,
) -> RateCounts {
    let mut counts = RateCounts { errors: 0, total: 0 };
    for t in trials {
        match (which, t.label) {
            (RateKind::Fpr, Label::Nontarget) => {
                counts.total += 1;
                counts.errors += u64::from(t.score >= threshold);
            }
            (RateKind::Fnr, Label::Target) => {
                counts.total += 1;
                counts.errors += u64::from(t.score < threshold);
            }
            _ => {}
        }
    }
    counts
}

/// Each group's FPR or FNR at one shared threshold.
pub fn disaggregate_at_threshold(
    grouped: &GroupedTrials,
    threshold: f64,
    which: RateKind,
) -> Result<GroupMetricVector> {
    let need = match which {
        RateKind::Fpr => Label::Nontarget,
        RateKind::Fnr => Label::Target,
    };
    let mut counts = BTreeMap::new();
    for (key, trials) in &grouped.groups {
        check_group(key, trials, Some(need))?;
        counts.insert(key.clone(), rate_counts_at(trials, threshold, which));
    }
    let aggregate = rate_counts_at(grouped.pooled(), threshold, which);
    if aggregate.total == 0 {
        return Err(Error::EmptyPopulation(need.as_str()));
    }
    let mut v = GroupMetricVector::new(
        format!("{}@{threshold}", which.name()),
        counts.iter().map(|(k, c)| (k.clone(), c.rate())).collect(),
        aggregate.rate(),
    )?;
    v.counts = Some(MetricCounts {
        per_group: counts,
        aggregate,
    });
    Ok(v)
}
