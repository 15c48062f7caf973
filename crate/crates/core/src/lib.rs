//! Bias auditing for binary verification systems.
//!
//! The pipeline starts from raw trial scores and speaker metadata
//! ([`trials`]), computes per-group detection metrics ([`metrics`]),
//! derives difference- and ratio-based bias measures ([`bias`]) and
//! aggregates them into the FDR and NRB meta-measures ([`meta`]).
//! [`attack`] turns group false-positive rates into attacker exposure,
//! [`synth`] generates Gaussian score fixtures with closed-form ground
//! truth, and [`report`] ties everything into one audit run.

pub mod attack;
pub mod bias;
mod error;
pub mod meta;
pub mod metrics;
pub mod report;
mod serde_util;
pub mod synth;
pub mod trials;

pub use attack::{AttackScenario, ExposureEntry};
pub use bias::{AverageMode, BiasMeasure, BiasOptions, BiasVector, ZeroPolicy};
pub use error::{Error, Result};
pub use meta::{FdrResult, NrbResult};
pub use metrics::{
    DcfParams, GroupMetricVector, OperatingPoint, RateCounts, RateKind, SweepCurve, SweepGrid,
    TrialMetric,
};
pub use report::{AuditConfig, BiasReport};
pub use synth::{GroupScoreModel, SynthSpec};
pub use trials::{AssignPolicy, GroupKey, GroupedTrials, Label, SpeakerMetadata, TrialRecord};
