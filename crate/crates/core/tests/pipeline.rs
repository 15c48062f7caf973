//! End-to-end audits over synthetic populations.

use std::fs::{self, File};
use std::path::Path;

use biasaudit_core::bias::{self, BiasMeasure};
use biasaudit_core::meta::{self, fdr, nrb_suite};
use biasaudit_core::metrics::{disaggregate_at_threshold, RateKind};
use biasaudit_core::report::{
    self, audit_grouped, emit, report_json, run_audit, BASE_METRICS_CSV, BIAS_MEASURES_CSV,
    FDR_GRID_CSV, NRB_SUITE_CSV, REPORT_JSON, THRESHOLD_CSV,
};
use biasaudit_core::synth::{demo_models, generate, std_normal_quantile};
use biasaudit_core::trials::{assign_groups, write_metadata, write_trials};
use biasaudit_core::{
    AssignPolicy, AuditConfig, BiasOptions, BiasReport, DcfParams, Error, GroupKey, GroupScoreModel,
    GroupedTrials, Label, SynthSpec, TrialRecord,
};

fn model(name: &str, mu_t: f64, mu_n: f64, n_t: usize, n_n: usize) -> GroupScoreModel {
    GroupScoreModel {
        group: GroupKey::from(name),
        mu_target: mu_t,
        mu_nontarget: mu_n,
        sigma: 1.0,
        n_target: n_t,
        n_nontarget: n_n,
    }
}

fn write_fixture(dir: &Path, spec: &SynthSpec) -> AuditConfig {
    let (trials, metadata) = generate(spec).unwrap();
    let scores = dir.join("scores.csv");
    let meta = dir.join("metadata.csv");
    write_trials(File::create(&scores).unwrap(), &trials).unwrap();
    write_metadata(File::create(&meta).unwrap(), &metadata).unwrap();
    AuditConfig::new(scores, meta, &["group"])
}

fn demo_report(dir: &Path) -> BiasReport {
    let config = write_fixture(
        dir,
        &SynthSpec {
            models: demo_models(),
            seed: 7,
        },
    );
    run_audit(&config).unwrap()
}

/// Every input row, laid out at exact normal quantiles (no sampling noise).
fn quantile_trials(group: &str, mu_t: f64, mu_n: f64, n_t: usize, n_n: usize) -> Vec<TrialRecord> {
    let at = |mu: f64, k: usize, n: usize| mu + std_normal_quantile((k as f64 + 0.5) / n as f64);
    let row = |label, score| TrialRecord {
        enroll_id: format!("{group}-e"),
        test_id: format!("{group}-t"),
        label,
        score,
    };
    (0..n_t)
        .map(|k| row(Label::Target, at(mu_t, k, n_t)))
        .chain((0..n_n).map(|k| row(Label::Nontarget, at(mu_n, k, n_n))))
        .collect()
}

fn grouped(parts: Vec<(&str, Vec<TrialRecord>)>) -> GroupedTrials {
    GroupedTrials {
        groups: parts.into_iter().map(|(g, ts)| (GroupKey::from(g), ts)).collect(),
        unassigned: Vec::new(),
        policy: AssignPolicy::BothMatch,
    }
}

#[test]
fn emits_the_six_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let r = demo_report(dir.path());
    let out = dir.path().join("out");
    let written = emit(&r, &out).unwrap();
    let mut names: Vec<String> = written
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let mut want = vec![
        REPORT_JSON,
        BASE_METRICS_CSV,
        BIAS_MEASURES_CSV,
        THRESHOLD_CSV,
        FDR_GRID_CSV,
        NRB_SUITE_CSV,
    ];
    want.sort();
    assert_eq!(names, want);

    let grid = fs::read_to_string(out.join(FDR_GRID_CSV)).unwrap();
    let mut lines = grid.lines();
    assert_eq!(lines.next(), Some("design_fpr,alpha,fdr"));
    assert_eq!(lines.count(), 25);

    let suite = fs::read_to_string(out.join(NRB_SUITE_CSV)).unwrap();
    assert_eq!(suite.lines().count(), 1 + 2 + 2 * 5);
}

#[test]
fn figures_can_be_suppressed() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = demo_report(dir.path());
    r.config.emit_figures = false;
    let written = emit(&r, &dir.path().join("out")).unwrap();
    assert_eq!(written.len(), 4);
}

#[test]
fn output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = demo_report(dir.path());
    let b = demo_report(dir.path());
    emit(&a, &dir.path().join("a")).unwrap();
    emit(&b, &dir.path().join("b")).unwrap();
    for name in [
        REPORT_JSON,
        BASE_METRICS_CSV,
        BIAS_MEASURES_CSV,
        THRESHOLD_CSV,
        FDR_GRID_CSV,
        NRB_SUITE_CSV,
    ] {
        let x = fs::read(dir.path().join("a").join(name)).unwrap();
        let y = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(x, y, "{name} differs between runs");
    }
}

#[test]
fn json_round_trips_and_is_internally_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let r = demo_report(dir.path());
    let json = report_json(&r).unwrap();
    let back: BiasReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, r);

    let opts = BiasOptions::default();
    // Bias measures recomputed from the reported base metrics.
    for table in &back.base_metrics {
        for m in BiasMeasure::ALL {
            let recomputed = bias::compute(m, &table.vector, &opts).unwrap();
            let reported = back
                .bias_measures
                .iter()
                .find(|b| b.bias.measure == m && b.bias.metric_name == table.vector.metric_name)
                .unwrap();
            assert_eq!(reported.bias, recomputed);
        }
        // Display values are the machine values in presentation units.
        let scale = if table.vector.metric_name == "eer" { 100.0 } else { 1.0 };
        for (k, v) in &table.vector.per_group {
            assert_eq!(table.display[k], v * scale);
        }
        assert_eq!(table.aggregate_display, table.vector.aggregate * scale);
    }
    // FDR cells recomputed from the reported per-group rates.
    for cell in &back.fdr_grid {
        let d = back
            .threshold_decomposition
            .iter()
            .find(|d| d.design_fpr == cell.design_fpr)
            .unwrap();
        let again = fdr(&d.fpr, &d.fnr, cell.alpha, cell.design_fpr, d.threshold).unwrap();
        assert_eq!(*cell, again);
    }
    // NRB entries are the mean absolute log ratio of their vector.
    for entry in &back.nrb_suite {
        let mean = entry.per_group_log_ratios.values().map(|x| x.abs()).sum::<f64>()
            / entry.group_count as f64;
        assert_eq!(entry.nrb, mean);
    }
    // Pooled calibration respects the design FPR.
    for d in &back.threshold_decomposition {
        assert!(d.pooled_fpr <= d.design_fpr);
        assert_eq!(d.fpr.aggregate, d.pooled_fpr);
    }
}

#[test]
fn worse_group_is_ranked_worse_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let r = demo_report(dir.path());
    let (a, b) = (GroupKey::from("a"), GroupKey::from("b"));
    let eer = &r.base_metrics[0].vector;
    assert!(eer.per_group[&b] > eer.per_group[&a]);
    for tb in r.bias_measures.iter().filter(|t| t.bias.metric_name == "eer") {
        let v = &tb.bias.per_group;
        match tb.bias.measure {
            BiasMeasure::G2minDiff => assert!(v[&a] == 0.0 && v[&b] > 0.0),
            BiasMeasure::G2avgRatio => assert!(v[&a] < 1.0 && v[&b] > 1.0),
            BiasMeasure::G2avgLogRatio => assert!(v[&a] > 0.0 && v[&b] < 0.0),
        }
    }
    // The demo group b has more exposure at every design point.
    for block in &r.exposure {
        assert_eq!(block.entries[0].group, b);
    }
}

#[test]
fn fdr_rises_as_the_design_fpr_falls() {
    // Shifted nontarget distributions: the FPR gap shrinks with the threshold.
    let g = grouped(vec![
        ("a", quantile_trials("a", 3.0, 0.5, 4_000, 60_000)),
        ("b", quantile_trials("b", 3.0, 0.0, 4_000, 60_000)),
    ]);
    let cells = meta::fdr_grid(&g, &meta::DEFAULT_DESIGN_FPRS, &[1.0]).unwrap();
    assert_eq!(cells.len(), 5);
    for w in cells.windows(2) {
        assert!(w[0].design_fpr < w[1].design_fpr);
        assert!(w[0].fdr > w[1].fdr, "{:?}", w);
    }
}

#[test]
fn constant_ratio_gives_constant_nrb() {
    // Exponential nontarget tails: P(s >= t) = exp(-t) for group b and
    // 5 exp(-t) for group a once t >= ln 5, so the FPR ratio is 5 at every
    // threshold that matters and each log ratio is ln(5/3) or ln 3.
    let n = 200_000;
    let tail = |shift: f64| -> Vec<f64> {
        (0..n)
            .map(|k| shift - (1.0 - (k as f64 + 0.5) / n as f64).ln())
            .collect()
    };
    let rows = |g: &str, non: Vec<f64>| -> Vec<TrialRecord> {
        let mk = |label, score| TrialRecord {
            enroll_id: format!("{g}-e"),
            test_id: format!("{g}-t"),
            label,
            score,
        };
        (0..1000)
            .map(|k| mk(Label::Target, k as f64 * 0.02))
            .chain(non.into_iter().map(|s| mk(Label::Nontarget, s)))
            .collect()
    };
    let g = grouped(vec![
        ("a", rows("a", tail(5f64.ln()))),
        ("b", rows("b", tail(0.0))),
    ]);
    let suite = nrb_suite(&g, &meta::DEFAULT_DESIGN_FPRS, &DcfParams::default()).unwrap();
    assert_eq!(suite.len(), 2 + 2 * 5);
    let expected = 5f64.ln() / 2.0;
    for entry in suite.iter().filter(|e| e.metric_name.starts_with("fpr@")) {
        assert!(
            (entry.nrb - expected).abs() < 0.02,
            "{}: {} vs {expected}",
            entry.metric_name,
            entry.nrb
        );
    }
    let names: Vec<&str> = suite.iter().map(|e| e.metric_name.as_str()).collect();
    assert_eq!(&names[..4], ["eer", "min_cdet", "fpr@0.1", "fnr@0.1"]);
    assert_eq!(names[names.len() - 2], "fpr@0.001");
}

#[test]
fn empirical_rates_converge_to_closed_form() {
    let models = vec![model("a", 2.0, 0.0, 60_000, 60_000), model("b", 1.5, 0.3, 60_000, 60_000)];
    let spec = SynthSpec {
        models: models.clone(),
        seed: 3,
    };
    let (trials, metadata) = generate(&spec).unwrap();
    let g = assign_groups(&trials, &metadata, &["group"], AssignPolicy::BothMatch).unwrap();
    let t = 1.0;
    let fprs = disaggregate_at_threshold(&g, t, RateKind::Fpr).unwrap();
    let fnrs = disaggregate_at_threshold(&g, t, RateKind::Fnr).unwrap();
    for m in &models {
        let (fpr, fnr) = m.analytic_rates_at(t);
        // Five binomial standard errors.
        let se = |p: f64, n: usize| 5.0 * (p * (1.0 - p) / n as f64).sqrt();
        assert!((fprs.per_group[&m.group] - fpr).abs() < se(fpr, m.n_nontarget));
        assert!((fnrs.per_group[&m.group] - fnr).abs() < se(fnr, m.n_target));
    }
}

#[test]
fn degenerate_groups_are_dropped_or_rejected() {
    let mut parts = vec![
        ("a", quantile_trials("a", 2.0, 0.0, 200, 400)),
        ("b", quantile_trials("b", 2.0, 0.0, 200, 400)),
    ];
    parts.push(("c", quantile_trials("c", 2.0, 0.0, 50, 0)));
    let config = AuditConfig::new("unused", "unused", &["group"]);
    let r = audit_grouped(grouped(parts.clone()), &config).unwrap();
    assert_eq!(r.trial_counts.groups, 2);
    assert_eq!(r.trial_counts.unassigned, 50);
    assert!(r.warnings.iter().any(|w| w.contains("group=c")));

    let strict = AuditConfig {
        strict: true,
        ..config
    };
    let err = audit_grouped(grouped(parts), &strict).unwrap_err();
    assert!(err.is_degenerate_group());
}

#[test]
fn zero_rates_become_warnings() {
    // Group a never reaches the tightest threshold, which b sets.
    let g = grouped(vec![
        ("a", quantile_trials("a", 2.0, -1.5, 500, 2_000)),
        ("b", quantile_trials("b", 2.0, 0.5, 500, 2_000)),
    ]);
    let config = AuditConfig::new("unused", "unused", &["group"]);
    let r = audit_grouped(g, &config).unwrap();
    assert!(r.warnings.iter().any(|w| w.contains("fpr@0.001")), "{:?}", r.warnings);
    assert!(r.nrb_suite.iter().all(|e| e.metric_name != "fpr@0.001"));
    // The difference measure is still reported for that vector.
    let d = r
        .threshold_decomposition
        .iter()
        .find(|d| d.design_fpr == 0.001)
        .unwrap();
    assert!(d
        .bias
        .iter()
        .any(|b| b.bias.measure == BiasMeasure::G2minDiff && b.bias.metric_name == "fpr@0.001"));
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let config = AuditConfig::new(&missing, dir.path().join("meta.csv"), &["group"]);
    let err = run_audit(&config).unwrap_err();
    assert!(matches!(err.root(), Error::Io(_)));
    assert!(err.to_string().contains("nope.csv"), "{err}");
}

#[test]
fn malformed_row_reports_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("scores.csv");
    let meta = dir.path().join("meta.csv");
    fs::write(&scores, "enroll_id,test_id,label,score\na,b,target,1.0\na,b,maybe,2.0\n").unwrap();
    fs::write(&meta, "speaker_id,group\na,x\nb,x\n").unwrap();
    let err = run_audit(&AuditConfig::new(&scores, &meta, &["group"])).unwrap_err();
    assert!(matches!(err.root(), Error::BadLabel { line: 3, .. }), "{err:?}");
    assert!(err.to_string().contains("scores.csv"));
    assert!(err.root().is_data_error());
}

#[test]
fn paper_preset_restores_default_grids() {
    let mut config = AuditConfig::new("s", "m", &["group"]);
    config.design_fprs = vec![0.2];
    config.alphas = vec![0.3];
    config.dcf.p_target = 0.5;
    config.apply_paper_preset();
    assert_eq!(config.design_fprs, meta::DEFAULT_DESIGN_FPRS);
    assert_eq!(config.alphas, meta::DEFAULT_ALPHAS);
    assert_eq!(config.dcf, DcfParams::default());
}

#[test]
fn quantile_grid_approximates_the_exact_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let exact = demo_report(dir.path());
    let mut config = exact.config.clone();
    config.grid_quantiles = Some(2_000);
    let approx = run_audit(&config).unwrap();
    let e0 = &exact.base_metrics[0].vector;
    let e1 = &approx.base_metrics[0].vector;
    for (k, v) in &e0.per_group {
        assert!((v - e1.per_group[k]).abs() < 0.01);
    }
}

#[test]
fn csv_tables_have_stable_headers() {
    let dir = tempfile::tempdir().unwrap();
    let r = demo_report(dir.path());
    let first = |s: String| s.lines().next().unwrap().to_string();
    assert_eq!(
        first(report::base_metrics_csv(&r)),
        "metric,group,value,unit,display_value,display_unit"
    );
    assert_eq!(first(report::nrb_suite_csv(&r)), "metric_name,nrb");
    assert_eq!(first(report::fdr_grid_csv(&r)), "design_fpr,alpha,fdr");
}
