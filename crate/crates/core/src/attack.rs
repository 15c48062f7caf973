//! Repeated-attempt exposure implied by a false-positive rate.
//!
//! An attacker with access to the device tries to verify at a fixed rate.
//! Attempts are independent Bernoulli trials that succeed with probability
//! equal to the FPR. Two views are reported: the mean number of attempts
//! until the first success (`1 / fpr`) and the number of attempts needed to
//! succeed with a given probability.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::GroupMetricVector;
use crate::trials::GroupKey;

pub const DEFAULT_ATTEMPTS_PER_HOUR: f64 = 60.0;
pub const DEFAULT_SUCCESS_QUANTILE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackScenario {
    pub fpr: f64,
    pub attempts_per_hour: f64,
}

impl AttackScenario {
    pub fn new(fpr: f64, attempts_per_hour: f64) -> Result<Self> {
        if !(fpr > 0.0 && fpr <= 1.0) {
            return Err(Error::InvalidParameter(format!("FPR {fpr} outside (0, 1]")));
        }
        if !(attempts_per_hour > 0.0 && attempts_per_hour.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "attempt rate {attempts_per_hour} must be positive"
            )));
        }
        Ok(AttackScenario {
            fpr,
            attempts_per_hour,
        })
    }

    /// Probability of at least one false accept in `n` attempts.
    pub fn success_probability(&self, n: u64) -> f64 {
        if n == 0 {
            return 0.0;
        }
        if self.fpr >= 1.0 {
            return 1.0;
        }
        // 1 - (1 - p)^n without losing precision for small p.
        -(n as f64 * (-self.fpr).ln_1p()).exp_m1()
    }

    /// `(1 / fpr, 1 / (fpr * rate))`.
    pub fn expected_time_to_success(&self) -> (f64, f64) {
        let attempts = 1.0 / self.fpr;
        (attempts, attempts / self.attempts_per_hour)
    }

    /// Smallest `n` whose success probability reaches `q`.
    pub fn attempts_for_probability(&self, q: f64) -> Result<u64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidParameter(format!("probability {q} outside (0, 1)")));
        }
        if self.fpr >= 1.0 {
            return Ok(1);
        }
        let estimate = ((-q).ln_1p() / (-self.fpr).ln_1p()).ceil().max(1.0);
        let mut n = estimate as u64;
        // Settle rounding at the ceiling boundary.
        while self.success_probability(n) < q {
            n += 1;
        }
        while n > 1 && self.success_probability(n - 1) >= q {
            n -= 1;
        }
        Ok(n)
    }
}

/// Per-group exposure. Hour fields are `None` for a zero FPR, which never
/// admits the attacker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureEntry {
    pub group: GroupKey,
    pub fpr: f64,
    pub expected_attempts: Option<f64>,
    pub expected_hours: Option<f64>,
    pub attempts_to_quantile: Option<u64>,
    pub hours_to_quantile: Option<f64>,
    pub zero_fpr: bool,
}

/// Exposure of every group, most exposed (shortest expected time) first.
pub fn compare_group_exposure(
    group_fprs: &GroupMetricVector,
    attempts_per_hour: f64,
) -> Result<Vec<ExposureEntry>> {
    compare_group_exposure_at(group_fprs, attempts_per_hour, DEFAULT_SUCCESS_QUANTILE)
}

pub fn compare_group_exposure_at(
    group_fprs: &GroupMetricVector,
    attempts_per_hour: f64,
    quantile: f64,
) -> Result<Vec<ExposureEntry>> {
    let mut out = Vec::with_capacity(group_fprs.len());
    for (group, &fpr) in &group_fprs.per_group {
        if fpr == 0.0 {
            // Validate the rate even when the entry is flagged.
            AttackScenario::new(1.0, attempts_per_hour)?;
            out.push(ExposureEntry {
                group: group.clone(),
                fpr,
                expected_attempts: None,
                expected_hours: None,
                attempts_to_quantile: None,
                hours_to_quantile: None,
                zero_fpr: true,
            });
            continue;
        }
        let s = AttackScenario::new(fpr, attempts_per_hour)?;
        let (attempts, hours) = s.expected_time_to_success();
        let n = s.attempts_for_probability(quantile)?;
        out.push(ExposureEntry {
            group: group.clone(),
            fpr,
            expected_attempts: Some(attempts),
            expected_hours: Some(hours),
            attempts_to_quantile: Some(n),
            hours_to_quantile: Some(n as f64 / attempts_per_hour),
            zero_fpr: false,
        });
    }
    // Stable sort over key-ordered input keeps ties lexicographic.
    out.sort_by(|a, b| {
        let h = |e: &ExposureEntry| e.expected_hours.unwrap_or(f64::INFINITY);
        h(a).total_cmp(&h(b))
    });
    Ok(out)
}

/// Convenience map view of [`compare_group_exposure`].
pub fn exposure_map(entries: &[ExposureEntry]) -> BTreeMap<GroupKey, &ExposureEntry> {
    entries.iter().map(|e| (e.group.clone(), e)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn success_probability_cases() {
        let s = AttackScenario::new(1.0, 60.0).unwrap();
        assert_eq!(s.success_probability(1), 1.0);
        let s = AttackScenario::new(0.001, 60.0).unwrap();
        assert_eq!(s.success_probability(0), 0.0);
        // 1 - 0.999^1020 = 0.63960...
        assert!((s.success_probability(1020) - 0.6396).abs() < 1e-4);
    }

    #[test]
    fn expected_time() {
        let (a, h) = AttackScenario::new(0.001, 60.0).unwrap().expected_time_to_success();
        assert!((a - 1000.0).abs() < 1e-9);
        assert!((h - 16.6667).abs() < 1e-3);
        let (a, h) = AttackScenario::new(0.005, 60.0).unwrap().expected_time_to_success();
        assert!((a - 200.0).abs() < 1e-9);
        assert!((h - 3.3333).abs() < 1e-3);
        let (a, h) = AttackScenario::new(1.0, 60.0).unwrap().expected_time_to_success();
        assert_eq!((a, h), (1.0, 1.0 / 60.0));
    }

    #[test]
    fn attempts_for_probability_cases() {
        let s = AttackScenario::new(0.5, 60.0).unwrap();
        assert_eq!(s.attempts_for_probability(0.5).unwrap(), 1);
        let s = AttackScenario::new(0.001, 60.0).unwrap();
        assert_eq!(s.attempts_for_probability(0.5).unwrap(), 693);
        let s = AttackScenario::new(1.0, 60.0).unwrap();
        assert_eq!(s.attempts_for_probability(0.99).unwrap(), 1);
        assert!(s.attempts_for_probability(1.0).is_err());
    }

    #[test]
    fn scenario_validation() {
        assert!(AttackScenario::new(0.0, 60.0).is_err());
        assert!(AttackScenario::new(1.5, 60.0).is_err());
        assert!(AttackScenario::new(0.1, 0.0).is_err());
    }

    #[test]
    fn exposure_ordering() {
        let v = GroupMetricVector::from_pairs("fpr", [("A", 0.001), ("B", 0.005)], 0.003).unwrap();
        let e = compare_group_exposure(&v, 60.0).unwrap();
        assert_eq!(e[0].group, GroupKey::from("B"));
        assert!((e[0].expected_hours.unwrap() - 10.0 / 3.0).abs() < 1e-12);
        assert!((e[1].expected_hours.unwrap() - 50.0 / 3.0).abs() < 1e-12);

        let v = GroupMetricVector::from_pairs("fpr", [("b", 0.01), ("a", 0.01), ("z", 0.0)], 0.01).unwrap();
        let e = compare_group_exposure(&v, 60.0).unwrap();
        let order: Vec<String> = e.iter().map(|x| x.group.values()[0].clone()).collect();
        assert_eq!(order, ["a", "b", "z"]);
        assert!(e[2].zero_fpr && e[2].expected_hours.is_none());
        assert_eq!(e[0].expected_hours, e[1].expected_hours);

        let v = GroupMetricVector::from_pairs("fpr", [("solo", 0.2)], 0.2).unwrap();
        assert_eq!(compare_group_exposure(&v, 60.0).unwrap().len(), 1);
    }
}
