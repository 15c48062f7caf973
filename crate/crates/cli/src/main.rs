//! `biasaudit` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 degenerate group under `--strict`.

mod config;

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use biasaudit_core::attack::AttackScenario;
use biasaudit_core::report::{self, BiasReport};
use biasaudit_core::synth::{self, SynthSpec};
use biasaudit_core::trials::{write_metadata, write_trials};
use biasaudit_core::Error;
use clap::{Args, Parser, Subcommand};

use crate::config::{Entry, Settings};

#[derive(Parser)]
#[command(name = "biasaudit", version, about = "Bias audit for verification score files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline; writes every report file to --out (JSON to stdout without it).
    Audit(Common),
    /// Per-group EER and minCDet table.
    Metrics(Common),
    /// FDR over the design-FPR x alpha grid.
    Fdr(Common),
    /// NRB for every base metric.
    Nrb(Common),
    /// Attacker exposure for one or more false-positive rates.
    Scenario(ScenarioArgs),
    /// Writes a synthetic scores/metadata pair to --out.
    Synth(SynthArgs),
}

#[derive(Args)]
struct Common {
    /// key=value configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trial scores CSV: enroll_id,test_id,label,score.
    #[arg(long)]
    scores: Option<String>,
    /// Speaker metadata CSV: speaker_id plus attribute columns.
    #[arg(long)]
    metadata: Option<String>,
    /// Comma-separated grouping attributes, e.g. gender,nationality.
    #[arg(long)]
    groups: Option<String>,
    /// Trial assignment: both-match or enrollment-only.
    #[arg(long)]
    policy: Option<String>,
    /// Comma-separated design FPRs for threshold calibration.
    #[arg(long)]
    design_fprs: Option<String>,
    /// Comma-separated FDR weights on the FPR term.
    #[arg(long)]
    alphas: Option<String>,
    #[arg(long)]
    dcf_pt: Option<String>,
    #[arg(long)]
    dcf_cmiss: Option<String>,
    #[arg(long)]
    dcf_cfa: Option<String>,
    /// true or false.
    #[arg(long)]
    dcf_normalize: Option<String>,
    /// error, infinity or smooth.
    #[arg(long)]
    zero_policy: Option<String>,
    /// pooled or group-mean.
    #[arg(long)]
    average_mode: Option<String>,
    #[arg(long)]
    attempts_per_hour: Option<String>,
    /// Success probability for the attempts-until-likely column.
    #[arg(long)]
    exposure_quantile: Option<String>,
    /// Sweep over this many score quantiles instead of every distinct score.
    #[arg(long)]
    grid_quantiles: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Reset grids and cost parameters to the published defaults.
    #[arg(long, value_parser = ["paper"])]
    preset: Option<String>,
    /// Fail (exit 3) on groups without targets or nontargets.
    #[arg(long)]
    strict: bool,
    /// Skip the figure-data CSVs.
    #[arg(long)]
    no_figures: bool,
}

#[derive(Args)]
struct ScenarioArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated false-positive rates; the first is the reference.
    #[arg(long)]
    fpr: Option<String>,
    /// Also report the success probability after this many attempts.
    #[arg(long)]
    attempts: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    /// Group model CSV; the built-in two-group demo when omitted.
    #[arg(long)]
    models: Option<String>,
    #[arg(long)]
    seed: Option<String>,
}

enum Failure {
    Usage(String),
    Core(Error),
    Io(PathBuf, io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Core(e) if e.is_degenerate_group() => 3,
            Failure::Core(e) if e.is_data_error() => 2,
            Failure::Core(_) => 1,
            Failure::Io(..) => 2,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => m.clone(),
            Failure::Core(e) => e.to_string(),
            Failure::Io(p, e) => format!("{}: {e}", p.display()),
        }
    }
}

impl Common {
    /// Flag values as config entries. `preset` goes first so that the other
    /// flags override it.
    fn entries(&self, extra: &[(&str, &Option<String>)]) -> Vec<Entry> {
        let strict = self.strict.then(|| "true".to_string());
        let no_figures = self.no_figures.then(|| "false".to_string());
        let flags: [(&str, &Option<String>); 19] = [
            ("preset", &self.preset),
            ("scores", &self.scores),
            ("metadata", &self.metadata),
            ("groups", &self.groups),
            ("policy", &self.policy),
            ("design_fprs", &self.design_fprs),
            ("alphas", &self.alphas),
            ("dcf_pt", &self.dcf_pt),
            ("dcf_cmiss", &self.dcf_cmiss),
            ("dcf_cfa", &self.dcf_cfa),
            ("dcf_normalize", &self.dcf_normalize),
            ("zero_policy", &self.zero_policy),
            ("average_mode", &self.average_mode),
            ("attempts_per_hour", &self.attempts_per_hour),
            ("exposure_quantile", &self.exposure_quantile),
            ("grid_quantiles", &self.grid_quantiles),
            ("out", &self.out),
            ("strict", &strict),
            ("emit_figures", &no_figures),
        ];
        flags
            .iter()
            .chain(extra)
            .filter_map(|(key, value)| {
                value.as_ref().map(|v| Entry {
                    key: key.to_string(),
                    value: v.clone(),
                    origin: format!("--{}", key.replace('_', "-")),
                })
            })
            .collect()
    }

    fn settings(&self, extra: &[(&str, &Option<String>)]) -> Result<Settings, Failure> {
        let (file, dir) = match &self.config {
            Some(path) => (
                config::parse_file(path).map_err(Failure::Usage)?,
                path.parent().map(Path::to_path_buf),
            ),
            None => (Vec::new(), None),
        };
        Settings::build(&file, dir.as_deref(), &self.entries(extra)).map_err(Failure::Usage)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Io(path.to_path_buf(), e))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Io(dir.to_path_buf(), e))
}

fn audit(common: &Common) -> Result<(BiasReport, Option<PathBuf>), Failure> {
    let s = common.settings(&[])?;
    let report = report::run_audit(&s.audit)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok((report, s.audit.output_dir.clone()))
}

/// Writes one table either into the output directory or to stdout.
fn table(out: Option<PathBuf>, name: &str, contents: &str) -> Result<(), Failure> {
    match out {
        Some(dir) => {
            create_dir(&dir)?;
            let path = dir.join(name);
            write_file(&path, contents)?;
            println!("{}", path.display());
            Ok(())
        }
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn scenario(args: &ScenarioArgs) -> Result<(), Failure> {
    let s = args
        .common
        .settings(&[("fpr", &args.fpr), ("attempts", &args.attempts)])?;
    let Some(&reference) = s.fprs.first() else {
        return Err(Failure::Usage("scenario needs --fpr (or `fpr =` in the config)".into()));
    };
    let rate = s.audit.attempts_per_hour;
    let q = s.audit.exposure_quantile;
    let mut out = String::from(
        "fpr,attempts_per_hour,expected_attempts,expected_hours,quantile,attempts_to_quantile,hours_to_quantile,exposure_vs_first",
    );
    if s.attempts.is_some() {
        out.push_str(",attempts,success_probability");
    }
    out.push('\n');
    let (_, reference_hours) = AttackScenario::new(reference, rate)?.expected_time_to_success();
    for &fpr in &s.fprs {
        let sc = AttackScenario::new(fpr, rate)?;
        let (attempts, hours) = sc.expected_time_to_success();
        let n = sc.attempts_for_probability(q)?;
        out.push_str(&format!(
            "{fpr},{rate},{attempts},{hours},{q},{n},{},{}",
            n as f64 / rate,
            reference_hours / hours
        ));
        if let Some(k) = s.attempts {
            out.push_str(&format!(",{k},{}", sc.success_probability(k)));
        }
        out.push('\n');
    }
    table(s.audit.output_dir, "scenario.csv", &out)
}

fn synth(args: &SynthArgs) -> Result<(), Failure> {
    let s = args
        .common
        .settings(&[("models", &args.models), ("seed", &args.seed)])?;
    let Some(dir) = s.audit.output_dir.clone() else {
        return Err(Failure::Usage("synth needs --out".into()));
    };
    let models = match &s.models {
        Some(path) => {
            let f = File::open(path).map_err(|e| Failure::Io(path.clone(), e))?;
            synth::load_models(f).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => synth::demo_models(),
    };
    let (trials, metadata) = synth::generate(&SynthSpec {
        models,
        seed: s.seed,
    })?;
    create_dir(&dir)?;
    let scores = dir.join("scores.csv");
    let meta = dir.join("metadata.csv");
    let open = |p: &Path| {
        File::create(p)
            .map(io::BufWriter::new)
            .map_err(|e| Failure::Io(p.to_path_buf(), e))
    };
    let mut w = open(&scores)?;
    write_trials(&mut w, &trials)?;
    w.flush().map_err(|e| Failure::Io(scores.clone(), e))?;
    let mut w = open(&meta)?;
    write_metadata(&mut w, &metadata)?;
    w.flush().map_err(|e| Failure::Io(meta.clone(), e))?;
    println!("{}\n{}", scores.display(), meta.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Audit(c) => {
            let (report, out) = audit(&c)?;
            match out {
                Some(dir) => {
                    for p in report::emit(&report, &dir)? {
                        println!("{}", p.display());
                    }
                }
                None => print!("{}", report::report_json(&report)?),
            }
            Ok(())
        }
        Command::Metrics(c) => {
            let (r, out) = audit(&c)?;
            table(out, report::BASE_METRICS_CSV, &report::base_metrics_csv(&r))
        }
        Command::Fdr(c) => {
            let (r, out) = audit(&c)?;
            table(out, report::FDR_GRID_CSV, &report::fdr_grid_csv(&r))
        }
        Command::Nrb(c) => {
            let (r, out) = audit(&c)?;
            table(out, report::NRB_SUITE_CSV, &report::nrb_suite_csv(&r))
        }
        Command::Scenario(a) => scenario(&a),
        Command::Synth(a) => synth(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
