//! Reproducible Gaussian score fixtures with closed-form ground truth.
//!
//! Each group draws target scores from `N(mu_target, sigma^2)` and
//! nontarget scores from `N(mu_nontarget, sigma^2)`.
//!
//! Generator: group `i` (in model order) uses `ChaCha8Rng` seeded with
//! `seed_from_u64(seed)` and switched to stream `i`, so groups are
//! independent and can be generated in any order. Normal deviates come from
//! `rand_distr::StandardNormal` (ziggurat) and are scaled as
//! `mu + sigma * z`. Targets are drawn first, then nontargets. Every trial
//! gets two fresh speaker ids, `g{i:03}s{k:07}`, carrying the group's
//! attributes.

use std::io::{BufRead, BufReader, Read};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::trials::{GroupKey, Label, SpeakerMetadata, TrialRecord};

pub const MODELS_HEADER: &str = "group,mu_target,mu_nontarget,sigma,n_target,n_nontarget";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScoreModel {
    pub group: GroupKey,
    pub mu_target: f64,
    pub mu_nontarget: f64,
    pub sigma: f64,
    pub n_target: usize,
    pub n_nontarget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub models: Vec<GroupScoreModel>,
    pub seed: u64,
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn std_normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

impl GroupScoreModel {
    pub fn validate(&self) -> Result<()> {
        let finite = self.mu_target.is_finite() && self.mu_nontarget.is_finite();
        if !finite || !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "group {}: means must be finite and sigma positive",
                self.group
            )));
        }
        if self.n_target == 0 || self.n_nontarget == 0 {
            return Err(Error::InvalidParameter(format!(
                "group {}: counts must be at least 1",
                self.group
            )));
        }
        Ok(())
    }

    /// EER of the equal-variance model: both rates cross at the midpoint.
    pub fn analytic_eer(&self) -> f64 {
        std_normal_cdf(-(self.mu_target - self.mu_nontarget) / (2.0 * self.sigma))
    }

    /// `(fpr, fnr)` at `threshold` under the accept-iff-`score >= threshold` rule.
    pub fn analytic_rates_at(&self, threshold: f64) -> (f64, f64) {
        let fpr = std_normal_cdf(-(threshold - self.mu_nontarget) / self.sigma);
        let fnr = std_normal_cdf((threshold - self.mu_target) / self.sigma);
        (fpr, fnr)
    }

    /// Threshold at which the nontarget tail equals `fpr`.
    pub fn analytic_threshold_for_fpr(&self, fpr: f64) -> f64 {
        self.mu_nontarget + self.sigma * std_normal_quantile(1.0 - fpr)
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::InvalidParameter("no group models".into()));
        }
        for (i, m) in self.models.iter().enumerate() {
            m.validate()?;
            if self.models[..i].iter().any(|o| o.group == m.group) {
                return Err(Error::InvalidParameter(format!("duplicate group {}", m.group)));
            }
        }
        Ok(())
    }
}

pub fn generate(spec: &SynthSpec) -> Result<(Vec<TrialRecord>, Vec<SpeakerMetadata>)> {
    spec.validate()?;
    let mut trials = Vec::new();
    let mut metadata = Vec::new();
    for (gi, model) in spec.models.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(gi as u64);
        let attributes: std::collections::BTreeMap<String, String> = model
            .group
            .names()
            .iter()
            .cloned()
            .zip(model.group.values().iter().cloned())
            .collect();
        let mut next_id = 0usize;
        let mut speaker = |metadata: &mut Vec<SpeakerMetadata>| {
            let id = format!("g{gi:03}s{next_id:07}");
            next_id += 1;
            metadata.push(SpeakerMetadata {
                speaker_id: id.clone(),
                attributes: attributes.clone(),
            });
            id
        };
        let populations = [
            (Label::Target, model.mu_target, model.n_target),
            (Label::Nontarget, model.mu_nontarget, model.n_nontarget),
        ];
        for (label, mu, n) in populations {
            for _ in 0..n {
                let z: f64 = rng.sample(StandardNormal);
                let enroll_id = speaker(&mut metadata);
                let test_id = speaker(&mut metadata);
                trials.push(TrialRecord {
                    enroll_id,
                    test_id,
                    label,
                    score: mu + model.sigma * z,
                });
            }
        }
    }
    Ok((trials, metadata))
}

/// Reads group models from CSV with header
/// `group,mu_target,mu_nontarget,sigma,n_target,n_nontarget`, where
/// `group` is written as `name=value;name=value`.
pub fn load_models<R: Read>(source: R) -> Result<Vec<GroupScoreModel>> {
    let mut lines = BufReader::new(source).lines().enumerate();
    let header = match lines.next() {
        Some((_, h)) => h?,
        None => String::new(),
    };
    if header.trim() != MODELS_HEADER {
        return Err(Error::MissingHeader {
            expected: MODELS_HEADER,
        });
    }
    let mut out = Vec::new();
    for (i, text) in lines {
        let line = i + 1;
        let text = text?;
        let text = text.trim();
        if text.is_empty() {
            continue;
        }
        let f: Vec<&str> = text.split(',').map(str::trim).collect();
        if f.len() != 6 {
            return Err(Error::MalformedRow {
                line,
                expected: 6,
                found: f.len(),
            });
        }
        let bad = |what: &str| Error::InvalidParameter(format!("line {line}: bad {what}"));
        let real = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
        let count = |s: &str, what: &str| s.parse::<usize>().map_err(|_| bad(what));
        let model = GroupScoreModel {
            group: f[0].parse()?,
            mu_target: real(f[1], "mu_target")?,
            mu_nontarget: real(f[2], "mu_nontarget")?,
            sigma: real(f[3], "sigma")?,
            n_target: count(f[4], "n_target")?,
            n_nontarget: count(f[5], "n_nontarget")?,
        };
        model.validate()?;
        out.push(model);
    }
    Ok(out)
}

/// Two single-attribute groups with a mild separability gap; used when
/// no models are supplied.
pub fn demo_models() -> Vec<GroupScoreModel> {
    vec![
        GroupScoreModel {
            group: GroupKey::single("group", "a"),
            mu_target: 2.0,
            mu_nontarget: 0.0,
            sigma: 1.0,
            n_target: 5000,
            n_nontarget: 20000,
        },
        GroupScoreModel {
            group: GroupKey::single("group", "b"),
            mu_target: 1.6,
            mu_nontarget: 0.2,
            sigma: 1.0,
            n_target: 5000,
            n_nontarget: 20000,
        },
    ]
}
