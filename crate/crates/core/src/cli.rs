//! Command-line front end: `repair`, `gen-tests` and `report`.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use crate::bugspec::{load_bug_spec, BugSpec};
use crate::harness::{OracleKind, Verdict};
use crate::llm::{Provider, API_KEY_ENV};
use crate::pairing::validate_candidates;
use crate::repair::{RepairConfig, RepairSession, RepairStatus};
use crate::report::{load_rows, ReportRow, RowStatus, RunReport, ROW_FILE};
use crate::similarity::delta;
use crate::values::params_envelope;

pub const EXIT_PLAUSIBLE: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_EXHAUSTED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "contrast-repair", version, about = "Repair a buggy function by conversing with a language model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a repair session for one bug.
    Repair(RepairArgs),
    /// Generate and validate mutants of the failing tests.
    GenTests(GenTestsArgs),
    /// Summarize report rows written by `repair`.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Live,
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

/// Options shared by `repair` and `gen-tests`.
#[derive(Debug, Args)]
pub struct Common {
    /// Bug spec JSON file.
    #[arg(long)]
    pub bug: PathBuf,
    /// JSON file with defaults for any of the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Mutants generated per failing test.
    #[arg(long)]
    pub candidates: Option<usize>,
    /// Per-test timeout.
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    /// Adapter processes run concurrently while validating mutants.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RepairArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub provider: Option<ProviderKind>,
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub augment_budget: Option<usize>,
    /// Chat-completions endpoint for the live provider.
    #[arg(long)]
    pub url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
}

#[derive(Debug, Args)]
pub struct GenTestsArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory searched recursively for report rows.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
}

/// Config file contents; every key mirrors a flag.
#[derive(Debug, Default, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    pub provider: Option<ProviderKind>,
    pub mock_script: Option<PathBuf>,
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub theta: Option<f64>,
    pub seed: Option<u64>,
    pub candidates: Option<usize>,
    pub timeout_secs: Option<u64>,
    pub workers: Option<usize>,
    pub augment_budget: Option<usize>,
    pub url: Option<String>,
    pub model: Option<String>,
    pub out: Option<PathBuf>,
    pub mutation_budget_secs: Option<u64>,
    pub dependency_char_budget: Option<usize>,
    pub prompt_char_budget: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

fn file_config(common: &Common) -> Result<FileConfig> {
    common
        .config
        .as_deref()
        .map(FileConfig::load)
        .transpose()
        .map(Option::unwrap_or_default)
}

fn base_config(common: &Common, file: &FileConfig) -> RepairConfig {
    let mut cfg = RepairConfig::default();
    if let Some(v) = common.seed.or(file.seed) {
        cfg.mutation.rng_seed = v;
    }
    if let Some(v) = common.candidates.or(file.candidates) {
        cfg.mutation.candidate_count = v;
    }
    if let Some(v) = common.timeout_secs.or(file.timeout_secs) {
        cfg.test_timeout_secs = v;
    }
    if let Some(v) = common.workers.or(file.workers) {
        cfg.workers = v;
    }
    if let Some(v) = file.mutation_budget_secs {
        cfg.mutation_budget_secs = v;
    }
    if let Some(v) = file.dependency_char_budget {
        cfg.dependency_char_budget = v;
    }
    if let Some(v) = file.prompt_char_budget {
        cfg.prompt.prompt_char_budget = v;
    }
    cfg
}

fn repair_config(args: &RepairArgs, file: &FileConfig) -> RepairConfig {
    let mut cfg = base_config(&args.common, file);
    let b = &mut cfg.budget;
    b.m = args.m.or(file.m).unwrap_or(b.m);
    b.n = args.n.or(file.n).unwrap_or(b.n);
    b.k = args.k.or(file.k).unwrap_or(b.k);
    b.augment_budget = args.augment_budget.or(file.augment_budget).unwrap_or(b.augment_budget);
    cfg.theta = args.theta.or(file.theta).unwrap_or(cfg.theta);
    if let Some(url) = args.url.clone().or_else(|| file.url.clone()) {
        cfg.provider.url = url;
    }
    if let Some(model) = args.model.clone().or_else(|| file.model.clone()) {
        cfg.provider.model = model;
    }
    cfg
}

fn out_dir(common: &Common, file: &FileConfig, bug: &BugSpec) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| file.out.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&bug.id))
}

fn make_provider(args: &RepairArgs, file: &FileConfig, cfg: &RepairConfig) -> Result<Provider> {
    let kind = args.provider.or(file.provider).unwrap_or(ProviderKind::Live);
    match kind {
        ProviderKind::Mock => {
            let Some(script) = args.mock_script.as_ref().or(file.mock_script.as_ref()) else {
                bail!("--provider mock needs --mock-script");
            };
            Ok(Provider::mock_from_script(script)?)
        }
        ProviderKind::Live => {
            if std::env::var_os(API_KEY_ENV).is_none() {
                bail!("{API_KEY_ENV} is not set; use --provider mock for offline runs");
            }
            Ok(Provider::live(&cfg.provider)?)
        }
    }
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    for item in items {
        serde_json::to_writer(&mut file, item)?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

fn cmd_repair(args: RepairArgs) -> Result<i32> {
    let file = file_config(&args.common)?;
    let bug = load_bug_spec(&args.common.bug)?;
    let cfg = repair_config(&args, &file);
    cfg.validate().map_err(anyhow::Error::msg)?;
    let provider = make_provider(&args, &file, &cfg)?;
    let out = out_dir(&args.common, &file, &bug);
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let run = RepairSession::new(&bug, &cfg, &provider).run();
    write_jsonl(&out.join("conversation.jsonl"), &run.log)?;
    let (status, code) = match &run.result {
        Ok(RepairStatus::Plausible(patches)) => {
            for (i, patch) in patches.iter().enumerate() {
                fs::write(out.join(format!("patch_{}.txt", i + 1)), patch)?;
            }
            (RowStatus::Plausible, EXIT_PLAUSIBLE)
        }
        Ok(RepairStatus::Exhausted) => (RowStatus::Exhausted, EXIT_EXHAUSTED),
        Err(_) => (RowStatus::Error, EXIT_ERROR),
    };
    let row = ReportRow {
        id: bug.id.clone(),
        status,
        query_count: run.metrics.query_count,
        plausible_count: run.metrics.plausible_count,
        wall_seconds: run.metrics.wall_seconds,
        correct: None,
    };
    fs::write(out.join(ROW_FILE), serde_json::to_string_pretty(&row)? + "\n")?;
    if let Err(e) = run.result {
        return Err(e.into());
    }
    println!(
        "{}: {} after {} queries ({} plausible) in {:.1}s; output in {}",
        bug.id,
        match status {
            RowStatus::Plausible => "plausible",
            _ => "exhausted",
        },
        row.query_count,
        row.plausible_count,
        row.wall_seconds,
        out.display()
    );
    Ok(code)
}

fn cmd_gen_tests(args: GenTestsArgs) -> Result<i32> {
    let file = file_config(&args.common)?;
    let bug = load_bug_spec(&args.common.bug)?;
    let cfg = base_config(&args.common, &file);
    cfg.validate().map_err(anyhow::Error::msg)?;
    let out = out_dir(&args.common, &file, &bug);
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join("candidates.jsonl");

    let harness = cfg.harness_for(&bug);
    let original = bug.buggy_source.as_str();
    let suite = harness.run_suite(original)?;
    let recorded = harness.capture(original, bug.oracle_kind_default)?;
    let failing = suite
        .assemble(&recorded, bug.oracle_kind_default)
        .failing_cases();
    let usable: Vec<_> = failing
        .iter()
        .filter(|f| f.oracle == OracleKind::Exception && !f.params.is_empty())
        .collect();
    if usable.is_empty() {
        eprintln!("warning: no failing test with an exception oracle; nothing to mutate");
    }

    let deadline = Instant::now() + Duration::from_secs(cfg.mutation_budget_secs);
    let mut lines = Vec::new();
    let mut passing = 0;
    for f in usable {
        for (cand, verdict) in validate_candidates(f, &harness, original, &cfg.mutation, deadline)? {
            let label = verdict.as_ref().map(Verdict::label).unwrap_or("unvalidated");
            passing += usize::from(label == "pass");
            lines.push(json!({
                "id": cand.id,
                "failing": f.id,
                "args": params_envelope(&cand.params),
                "verdict": label,
                "delta": delta(&f.params, &cand.params).value(),
            }));
        }
    }
    write_jsonl(&path, &lines)?;
    println!(
        "{} candidates ({} passing) written to {}",
        lines.len(),
        passing,
        path.display()
    );
    Ok(EXIT_PLAUSIBLE)
}

fn cmd_report(args: ReportArgs) -> Result<i32> {
    let report = RunReport::from_rows(load_rows(&args.input)?);
    match args.format {
        Format::Table => print!("{}", report.to_table()),
        Format::Json => println!("{}", report.to_json()),
    }
    Ok(0)
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Repair(a) => cmd_repair(a),
        Command::GenTests(a) => cmd_gen_tests(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}
