//! Per-group bias measures computed from a [`GroupMetricVector`].
//!
//! * group-to-min difference: `b_g - b_min`
//! * group-to-average ratio: `b_g / b_avg`
//! * group-to-average log ratio: `-ln(b_g / b_avg)`, positive when the
//!   group does better (lower error) than average
//!
//! `b_avg` is the pooled-population value by default.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::GroupMetricVector;
use crate::serde_util::group_real_map;
use crate::trials::GroupKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasMeasure {
    G2minDiff,
    G2avgRatio,
    G2avgLogRatio,
}

impl BiasMeasure {
    pub const ALL: [BiasMeasure; 3] = [
        BiasMeasure::G2minDiff,
        BiasMeasure::G2avgRatio,
        BiasMeasure::G2avgLogRatio,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BiasMeasure::G2minDiff => "g2min_diff",
            BiasMeasure::G2avgRatio => "g2avg_ratio",
            BiasMeasure::G2avgLogRatio => "g2avg_log_ratio",
        }
    }
}

/// What to do with zero-valued group metrics under the ratio measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroPolicy {
    #[default]
    Error,
    /// Zero group values yield a log ratio of `+inf`.
    Infinity,
    /// Rates become `(errors + 0.5) / (total + 0.5)` when the vector
    /// carries error counts.
    Smooth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AverageMode {
    /// The metric evaluated on the pooled trial list.
    #[default]
    Pooled,
    /// Unweighted mean of the group values.
    GroupMean,
}

impl FromStr for ZeroPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "error" => Ok(ZeroPolicy::Error),
            "infinity" | "inf" => Ok(ZeroPolicy::Infinity),
            "smooth" => Ok(ZeroPolicy::Smooth),
            other => Err(Error::InvalidParameter(format!("unknown zero policy `{other}`"))),
        }
    }
}

impl FromStr for AverageMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "pooled" => Ok(AverageMode::Pooled),
            "group_mean" => Ok(AverageMode::GroupMean),
            other => Err(Error::InvalidParameter(format!("unknown average mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BiasOptions {
    pub zero_policy: ZeroPolicy,
    pub average: AverageMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reference {
    /// Lowest-valued group; ties go to the smallest key.
    BestGroup { group: GroupKey, value: f64 },
    Average { mode: AverageMode, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasVector {
    pub measure: BiasMeasure,
    pub metric_name: String,
    #[serde(with = "group_real_map")]
    pub per_group: BTreeMap<GroupKey, f64>,
    pub reference: Reference,
}

pub fn compute(
    measure: BiasMeasure,
    v: &GroupMetricVector,
    opts: &BiasOptions,
) -> Result<BiasVector> {
    match measure {
        BiasMeasure::G2minDiff => g2min_diff(v),
        BiasMeasure::G2avgRatio => g2avg_ratio_with(v, opts),
        BiasMeasure::G2avgLogRatio => g2avg_log_ratio_with(v, opts),
    }
}

pub fn g2min_diff(v: &GroupMetricVector) -> Result<BiasVector> {
    // BTreeMap iteration is key-ordered, so strict `<` keeps the smallest key on ties.
    let (best, &min) = v
        .per_group
        .iter()
        .fold(None, |acc: Option<(&GroupKey, &f64)>, (k, x)| match acc {
            Some((_, m)) if m <= x => acc,
            _ => Some((k, x)),
        })
        .ok_or(Error::NoGroups)?;
    Ok(BiasVector {
        measure: BiasMeasure::G2minDiff,
        metric_name: v.metric_name.clone(),
        per_group: v.per_group.iter().map(|(k, &b)| (k.clone(), b - min)).collect(),
        reference: Reference::BestGroup {
            group: best.clone(),
            value: min,
        },
    })
}

/// Group values and the average they are compared against, after smoothing.
fn ratio_inputs(v: &GroupMetricVector, opts: &BiasOptions) -> Result<(BTreeMap<GroupKey, f64>, f64)> {
    if v.per_group.is_empty() {
        return Err(Error::NoGroups);
    }
    let smooth = |c: &crate::metrics::RateCounts| (c.errors as f64 + 0.5) / (c.total as f64 + 0.5);
    let (values, pooled) = match (&v.counts, opts.zero_policy) {
        (Some(counts), ZeroPolicy::Smooth) => (
            counts.per_group.iter().map(|(k, c)| (k.clone(), smooth(c))).collect(),
            smooth(&counts.aggregate),
        ),
        _ => (v.per_group.clone(), v.aggregate),
    };
    let average = match opts.average {
        AverageMode::Pooled => pooled,
        AverageMode::GroupMean => values.values().sum::<f64>() / values.len() as f64,
    };
    if average <= 0.0 {
        return Err(Error::ZeroAggregate);
    }
    Ok((values, average))
}

pub fn g2avg_ratio(v: &GroupMetricVector) -> Result<BiasVector> {
    g2avg_ratio_with(v, &BiasOptions::default())
}

pub fn g2avg_ratio_with(v: &GroupMetricVector, opts: &BiasOptions) -> Result<BiasVector> {
    let (values, average) = ratio_inputs(v, opts)?;
    Ok(BiasVector {
        measure: BiasMeasure::G2avgRatio,
        metric_name: v.metric_name.clone(),
        per_group: values.into_iter().map(|(k, b)| (k, b / average)).collect(),
        reference: Reference::Average {
            mode: opts.average,
            value: average,
        },
    })
}

pub fn g2avg_log_ratio(v: &GroupMetricVector) -> Result<BiasVector> {
    g2avg_log_ratio_with(v, &BiasOptions::default())
}

pub fn g2avg_log_ratio_with(v: &GroupMetricVector, opts: &BiasOptions) -> Result<BiasVector> {
    let (values, average) = ratio_inputs(v, opts)?;
    let mut per_group = BTreeMap::new();
    for (k, b) in values {
        if b == 0.0 && opts.zero_policy != ZeroPolicy::Infinity {
            return Err(Error::ZeroGroupValue(k));
        }
        per_group.insert(k, -(b / average).ln());
    }
    Ok(BiasVector {
        measure: BiasMeasure::G2avgLogRatio,
        metric_name: v.metric_name.clone(),
        per_group,
        reference: Reference::Average {
            mode: opts.average,
            value: average,
        },
    })
}
