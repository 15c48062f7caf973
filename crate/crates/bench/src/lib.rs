//! Fixtures shared by the benchmarks.

use biasaudit_core::synth::generate;
use biasaudit_core::trials::assign_groups;
use biasaudit_core::{AssignPolicy, GroupKey, GroupScoreModel, GroupedTrials, Label, SynthSpec};

/// `groups` Gaussian groups with `per_side` targets and nontargets each;
/// separation shrinks slightly from one group to the next.
pub fn models(groups: usize, per_side: usize) -> Vec<GroupScoreModel> {
    (0..groups)
        .map(|i| GroupScoreModel {
            group: GroupKey::single("group", &format!("g{i}")),
            mu_target: 2.0 - 0.1 * i as f64,
            mu_nontarget: 0.0,
            sigma: 1.0,
            n_target: per_side,
            n_nontarget: per_side,
        })
        .collect()
}

pub fn grouped(groups: usize, per_side: usize, seed: u64) -> GroupedTrials {
    let spec = SynthSpec {
        models: models(groups, per_side),
        seed,
    };
    let (trials, metadata) = generate(&spec).expect("valid synthetic spec");
    assign_groups(&trials, &metadata, &["group"], AssignPolicy::BothMatch).expect("grouping succeeds")
}

/// Target and nontarget scores of a single group.
pub fn scores(per_side: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let g = grouped(1, per_side, seed);
    let mut tar = Vec::with_capacity(per_side);
    let mut non = Vec::with_capacity(per_side);
    for t in g.pooled() {
        match t.label {
            Label::Target => tar.push(t.score),
            Label::Nontarget => non.push(t.score),
        }
    }
    (tar, non)
}
