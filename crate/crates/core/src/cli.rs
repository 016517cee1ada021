//! Command-line front end. [`run`] parses argv, dispatches and returns the
//! process exit code: 0 on success, 1 on validation or scoring errors, 2 on
//! usage errors.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bench::{
    bin_by_proposal_count, bin_by_reward, overlap_analysis, score_ic_run, score_manager_run, score_verdicts,
    selector_overlap, BinReport, Coverage, Verdict,
};
use crate::curate::{
    build_sft_targets, filter_leakage, required_sample_size, tally_rationales, token_length_stats,
    whitespace_count, BenchmarkKeys, Confidence, SelectionRationale,
};
use crate::llm::{backend_from_value_seeded, SharedBackend};
use crate::manager::{decide_batch, DecisionRecord, ManagerRunConfig};
use crate::model::{dataset_stats, read_jsonl, to_jsonl_string, validate_dataset, IssueRecord, ManagerInstance};
use crate::p2a::{path_component, run_p2a_batch, write_p2a_outputs, P2AConfig, P2AStatus};
use crate::reward::service::{score_request, serve_blocking, ScoreRequest};
use crate::reward::RewardWeights;

#[derive(Debug, Parser)]
#[command(name = "propsel", version, about = "Proposal selection, synthesis and evaluation toolkit")]
pub struct Cli {
    /// JSON config file; command-line flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice (retry jitter, pool shuffling).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Instances processed concurrently by batch commands.
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    /// Output directory; every file the command writes goes here.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Print JSON instead of aligned text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a dataset against every instance invariant.
    Validate { dataset: PathBuf },
    /// Run the manager over a dataset and write decisions.jsonl.
    Select(SelectArgs),
    /// Score a manager decision log or IC verdicts.
    #[command(subcommand)]
    Score(ScoreCommand),
    /// Bin and overlap analyses.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Reward computation and the scoring service.
    #[command(subcommand)]
    Reward(RewardCommand),
    /// Dataset curation tools.
    #[command(subcommand)]
    Curate(CurateCommand),
    /// End-to-end proposal → selection → implementation.
    #[command(subcommand)]
    P2a(P2aCommand),
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Backend JSON file (HTTP config or mock script).
    #[arg(long)]
    pub backend: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ScoreCommand {
    Manager {
        #[arg(long)]
        dataset: PathBuf,
        /// Decision log (JSONL).
        #[arg(long)]
        run: PathBuf,
        /// Count instances missing from the log as misses instead of failing.
        #[arg(long)]
        allow_partial: bool,
    },
    Ic {
        /// Issues with prices; when omitted, verdict prices are used.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Verdicts (JSONL).
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        allow_partial: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BinKind {
    ProposalCount,
    Reward,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OverlapMode {
    /// Both runs must cover the same instances.
    Selector,
    /// Plain set algebra on the passed ids.
    Sets,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    Bins {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum, default_value = "proposal-count")]
        by: BinKind,
        #[arg(long)]
        allow_partial: bool,
        /// Print CSV instead of text.
        #[arg(long)]
        csv: bool,
    },
    Overlap {
        /// Verdicts of run A.
        #[arg(long)]
        a: PathBuf,
        /// Verdicts of run B.
        #[arg(long)]
        b: PathBuf,
        #[arg(long, value_enum, default_value = "selector")]
        mode: OverlapMode,
    },
}

#[derive(Debug, Subcommand)]
pub enum RewardCommand {
    /// Score requests (one JSON object per line) and print breakdowns.
    Score {
        #[arg(long)]
        input: PathBuf,
    },
    /// Serve POST /score and /score_batch.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum CurateCommand {
    SampleSize {
        #[arg(long)]
        population: u64,
        #[arg(long, default_value_t = 0.05)]
        margin: f64,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
    },
    FilterLeakage {
        #[arg(long)]
        train: PathBuf,
        /// Benchmark issues (JSONL); ids and (repo, issue_number) are keys.
        #[arg(long)]
        benchmark: PathBuf,
    },
    Annotate {
        #[arg(long)]
        dataset: PathBuf,
        /// Teacher backend JSON file.
        #[arg(long)]
        teacher: Option<PathBuf>,
    },
    Stats {
        /// Prompt-length statistics over a dataset.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Rationale tags (JSONL) to tally.
        #[arg(long)]
        rationales: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum P2aCommand {
    Run {
        #[arg(long)]
        dataset: PathBuf,
        /// Directory holding one checkout per instance, named after its id.
        #[arg(long)]
        workspaces: PathBuf,
    },
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

/// Reproducibility record written to every output directory.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    pub config: Value,
    pub inputs: Vec<InputDigest>,
    pub backends: Vec<String>,
    pub timestamp: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

pub fn file_digest(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

struct Ctx<'a> {
    config: Value,
    seed: Option<u64>,
    parallelism: usize,
    out: Option<PathBuf>,
    json: bool,
    argv: Vec<String>,
    stdout: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn say(&mut self, text: &str) -> Result<(), CliError> {
        self.stdout.write_all(text.as_bytes()).map_err(failed)?;
        if !text.ends_with('\n') {
            self.stdout.write_all(b"\n").map_err(failed)?;
        }
        Ok(())
    }

    fn cfg(&self, key: &str) -> Option<&Value> {
        self.config.get(key)
    }

    fn cfg_bool(&self, key: &str) -> bool {
        self.cfg(key).and_then(Value::as_bool).unwrap_or(false)
    }

    fn out_dir(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Usage("this command writes files and needs --out DIR".into()))
    }

    /// Backend from a file flag, else from the config key.
    fn backend(&self, flag: Option<&Path>, key: &str, seed_offset: u64) -> Result<SharedBackend, CliError> {
        let value = match flag {
            Some(path) => read_json(path)?,
            None => self
                .cfg(key)
                .cloned()
                .ok_or_else(|| CliError::Usage(format!("no backend: pass --{key} FILE or set `{key}` in --config")))?,
        };
        backend_from_value_seeded(&value, self.seed.map(|s| s.wrapping_add(seed_offset))).map_err(failed)
    }

    fn manager_config(&self) -> Result<ManagerRunConfig, CliError> {
        match self.cfg("manager_config") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| failed(format!("manager_config: {e}"))),
            None => Ok(ManagerRunConfig::default()),
        }
    }

    fn weights(&self) -> Result<Option<RewardWeights>, CliError> {
        self.cfg("weights")
            .map(|v| {
                let w: RewardWeights = serde_json::from_value(v.clone()).map_err(|e| failed(format!("weights: {e}")))?;
                w.validate().map_err(failed)?;
                Ok(w)
            })
            .transpose()
    }

    /// Writes `files` plus `run_manifest.json` under `--out`, when given.
    fn emit(&self, files: &[(&str, String)], inputs: &[&Path], backends: Vec<String>) -> Result<(), CliError> {
        let Some(dir) = self.out.as_deref() else {
            return Ok(());
        };
        fs::create_dir_all(dir).map_err(failed)?;
        for (name, contents) in files {
            fs::write(dir.join(name), contents).map_err(failed)?;
        }
        self.write_manifest(dir, inputs, backends)
    }

    fn write_manifest(&self, dir: &Path, inputs: &[&Path], backends: Vec<String>) -> Result<(), CliError> {
        let inputs = inputs
            .iter()
            .map(|p| {
                Ok(InputDigest {
                    path: p.display().to_string(),
                    sha256: file_digest(p).map_err(|e| failed(format!("{}: {e}", p.display())))?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let mut config = self.config.clone();
        if let Value::Object(map) = &mut config {
            map.insert("seed".into(), json!(self.seed));
            map.insert("parallelism".into(), json!(self.parallelism));
        }
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.argv.clone(),
            config,
            inputs,
            backends,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(failed)?;
        fs::write(dir.join("run_manifest.json"), text + "\n").map_err(failed)
    }
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|e| failed(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| failed(format!("{}: {e}", path.display())))
}

fn load<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    read_jsonl(path).map_err(failed)
}

fn load_dataset(path: &Path) -> Result<Vec<ManagerInstance>, CliError> {
    let instances: Vec<ManagerInstance> = load(path)?;
    validate_dataset(&instances).map_err(failed)?;
    Ok(instances)
}

fn coverage(flag: bool, ctx: &Ctx) -> Coverage {
    if flag || ctx.cfg_bool("allow_partial") {
        Coverage::AllowPartial
    } else {
        Coverage::Strict
    }
}

fn pretty(value: &impl Serialize) -> Result<String, CliError> {
    serde_json::to_string_pretty(value).map(|s| s + "\n").map_err(failed)
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let rendered = err.render().to_string();
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(rendered.as_bytes());
                    0
                }
                _ => {
                    let _ = stderr.write_all(rendered.as_bytes());
                    if matches!(err.kind(), ErrorKind::InvalidSubcommand | ErrorKind::MissingSubcommand | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                        use clap::CommandFactory;
                        let _ = writeln!(stderr, "\n{}", Cli::command().render_help());
                    }
                    2
                }
            };
        }
    };
    let argv_text = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(cli, argv_text, stdout) {
        Ok(()) => 0,
        Err(err) => {
            let (CliError::Usage(msg) | CliError::Failed(msg)) = &err;
            let _ = writeln!(stderr, "error: {msg}");
            err.exit_code()
        }
    }
}

fn dispatch(cli: Cli, argv: Vec<String>, stdout: &mut dyn Write) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => read_json(path)?,
        None => Value::Object(Default::default()),
    };
    if !config.is_object() {
        return Err(CliError::Usage("--config must hold a JSON object".into()));
    }
    let seed = cli.seed.or_else(|| config.get("seed").and_then(Value::as_u64));
    let parallelism = cli
        .parallelism
        .or_else(|| config.get("parallelism").and_then(Value::as_u64).map(|n| n as usize))
        .unwrap_or(1);
    if parallelism == 0 {
        return Err(CliError::Usage("--parallelism must be at least 1".into()));
    }
    let mut ctx = Ctx {
        config,
        seed,
        parallelism,
        out: cli.out.clone(),
        json: cli.json,
        argv,
        stdout,
    };
    match cli.command {
        Command::Validate { dataset } => validate(&mut ctx, &dataset),
        Command::Select(args) => select(&mut ctx, &args),
        Command::Score(cmd) => score(&mut ctx, cmd),
        Command::Analyze(cmd) => analyze(&mut ctx, cmd),
        Command::Reward(cmd) => reward(&mut ctx, cmd),
        Command::Curate(cmd) => curate(&mut ctx, cmd),
        Command::P2a(P2aCommand::Run { dataset, workspaces }) => p2a(&mut ctx, &dataset, &workspaces),
    }
}

fn validate(ctx: &mut Ctx, dataset: &Path) -> Result<(), CliError> {
    let instances = load_dataset(dataset)?;
    let stats = dataset_stats(&instances);
    let report = pretty(&stats)?;
    ctx.say(&if ctx.json {
        report.clone()
    } else {
        format!(
            "ok: {} issues, {} proposals, total {}\n",
            stats.n_issues, stats.n_proposals, stats.total_price
        )
    })?;
    ctx.emit(&[("validation.json", report)], &[dataset], vec![])
}

fn select(ctx: &mut Ctx, args: &SelectArgs) -> Result<(), CliError> {
    ctx.out_dir()?;
    let instances = load_dataset(&args.dataset)?;
    let backend = ctx.backend(args.backend.as_deref(), "backend", 0)?;
    let decisions = decide_batch(&instances, backend.as_ref(), &ctx.manager_config()?, ctx.parallelism);
    let records: Vec<DecisionRecord> = decisions.iter().map(|d| d.to_record()).collect();
    let n_err = records.iter().filter(|r| r.error.is_some()).count();
    ctx.say(&format!("{} decisions, {} errors\n", records.len(), n_err))?;
    ctx.emit(
        &[("decisions.jsonl", to_jsonl_string(&records))],
        &[&args.dataset],
        vec![backend.model().to_string()],
    )
}

fn score(ctx: &mut Ctx, cmd: ScoreCommand) -> Result<(), CliError> {
    match cmd {
        ScoreCommand::Manager { dataset, run, allow_partial } => {
            let instances = load_dataset(&dataset)?;
            let decisions: Vec<DecisionRecord> = load(&run)?;
            let s = score_manager_run(&decisions, &instances, coverage(allow_partial, ctx)).map_err(failed)?;
            let json = pretty(&s.to_report_json())?;
            let text = s.to_text();
            ctx.say(if ctx.json { &json } else { &text })?;
            ctx.emit(&[("report.json", json), ("report.txt", text)], &[&dataset, &run], vec![])
        }
        ScoreCommand::Ic { dataset, run, allow_partial } => {
            let verdicts: Vec<Verdict> = load(&run)?;
            let s = match &dataset {
                Some(path) => {
                    let issues: Vec<IssueRecord> = load(path)?;
                    score_ic_run(&verdicts, &issues, coverage(allow_partial, ctx))
                }
                None => score_verdicts(&verdicts),
            }
            .map_err(failed)?;
            let json = pretty(&s.to_report_json())?;
            let text = s.to_text();
            ctx.say(if ctx.json { &json } else { &text })?;
            let mut inputs: Vec<&Path> = vec![&run];
            if let Some(d) = &dataset {
                inputs.insert(0, d);
            }
            ctx.emit(&[("report.json", json), ("report.txt", text)], &inputs, vec![])
        }
    }
}

fn analyze(ctx: &mut Ctx, cmd: AnalyzeCommand) -> Result<(), CliError> {
    match cmd {
        AnalyzeCommand::Bins { dataset, run, by, allow_partial, csv } => {
            let instances = load_dataset(&dataset)?;
            let decisions: Vec<DecisionRecord> = load(&run)?;
            let cov = coverage(allow_partial, ctx);
            let report: BinReport = match by {
                BinKind::ProposalCount => bin_by_proposal_count(&decisions, &instances, cov),
                BinKind::Reward => bin_by_reward(&decisions, &instances, cov),
            }
            .map_err(failed)?;
            let json = pretty(&report.to_report_json())?;
            let (text, csv_text) = (report.to_text(), report.to_csv());
            ctx.say(if csv {
                &csv_text
            } else if ctx.json {
                &json
            } else {
                &text
            })?;
            ctx.emit(
                &[("bins.json", json), ("bins.txt", text), ("bins.csv", csv_text)],
                &[&dataset, &run],
                vec![],
            )
        }
        AnalyzeCommand::Overlap { a, b, mode } => {
            let run_a: Vec<Verdict> = load(&a)?;
            let run_b: Vec<Verdict> = load(&b)?;
            let report = match mode {
                OverlapMode::Selector => selector_overlap(&run_a, &run_b).map_err(failed)?,
                OverlapMode::Sets => {
                    let passed = |run: &[Verdict]| -> BTreeSet<String> {
                        run.iter().filter(|v| v.passed).map(|v| v.instance_id.clone()).collect()
                    };
                    overlap_analysis(&passed(&run_a), &passed(&run_b))
                }
            };
            let json = pretty(&report)?;
            let text = report.to_text();
            ctx.say(if ctx.json { &json } else { &text })?;
            ctx.emit(&[("overlap.json", json), ("overlap.txt", text)], &[&a, &b], vec![])
        }
    }
}

fn reward(ctx: &mut Ctx, cmd: RewardCommand) -> Result<(), CliError> {
    match cmd {
        RewardCommand::Score { input } => {
            let default_weights = ctx.weights()?;
            let requests: Vec<ScoreRequest> = load(&input)?;
            let mut lines = String::new();
            for (idx, mut req) in requests.into_iter().enumerate() {
                if req.weights.is_none() {
                    req.weights = default_weights;
                }
                let breakdown = score_request(&req).map_err(|e| failed(format!("request {}: {e}", idx + 1)))?;
                lines.push_str(&serde_json::to_string(&breakdown).map_err(failed)?);
                lines.push('\n');
            }
            ctx.say(&lines)?;
            ctx.emit(&[("rewards.jsonl", lines.clone())], &[&input], vec![])
        }
        RewardCommand::Serve { port, host } => {
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| CliError::Usage(format!("bad address {host}:{port}: {e}")))?;
            ctx.say(&format!("listening on http://{addr}\n"))?;
            serve_blocking(addr).map_err(failed)
        }
    }
}

fn curate(ctx: &mut Ctx, cmd: CurateCommand) -> Result<(), CliError> {
    match cmd {
        CurateCommand::SampleSize { population, margin, confidence } => {
            let level = Confidence::try_from(confidence).map_err(failed)?;
            let n = required_sample_size(population, margin, level).map_err(failed)?;
            ctx.say(&format!("{n}\n"))?;
            ctx.emit(
                &[(
                    "sample_size.json",
                    pretty(&json!({"population": population, "margin": margin, "confidence": confidence, "sample_size": n}))?,
                )],
                &[],
                vec![],
            )
        }
        CurateCommand::FilterLeakage { train, benchmark } => {
            ctx.out_dir()?;
            let instances: Vec<ManagerInstance> = load(&train)?;
            let bench: Vec<IssueRecord> = load(&benchmark)?;
            let (kept, report) = filter_leakage(instances, &BenchmarkKeys::from_issues(&bench));
            ctx.say(&format!("kept {} of {}, removed {}\n", report.n_kept, report.n_input, report.removed.len()))?;
            ctx.emit(
                &[("filtered.jsonl", to_jsonl_string(&kept)), ("removal_report.json", pretty(&report)?)],
                &[&train, &benchmark],
                vec![],
            )
        }
        CurateCommand::Annotate { dataset, teacher } => {
            ctx.out_dir()?;
            let instances = load_dataset(&dataset)?;
            let backend = ctx.backend(teacher.as_deref(), "teacher", 0)?;
            let results = build_sft_targets(&instances, backend.as_ref(), &ctx.manager_config()?, ctx.parallelism);
            let mut annotated = Vec::new();
            let mut failures = Vec::new();
            for (inst, result) in instances.iter().zip(results) {
                match result {
                    Ok(a) => annotated.push(a),
                    Err(e) => failures.push(json!({"instance_id": inst.id(), "error": e.to_string()})),
                }
            }
            ctx.say(&format!("annotated {}, failed {}\n", annotated.len(), failures.len()))?;
            ctx.emit(
                &[("annotated.jsonl", to_jsonl_string(&annotated)), ("failures.jsonl", to_jsonl_string(&failures))],
                &[&dataset],
                vec![backend.model().to_string()],
            )
        }
        CurateCommand::Stats { dataset, rationales } => {
            if dataset.is_none() && rationales.is_none() {
                return Err(CliError::Usage("curate stats needs --dataset and/or --rationales".into()));
            }
            let mut files = Vec::new();
            let mut inputs: Vec<&Path> = Vec::new();
            if let Some(path) = &dataset {
                let instances: Vec<ManagerInstance> = load(path)?;
                let stats = token_length_stats(&instances, &whitespace_count).map_err(failed)?;
                let json = pretty(&stats)?;
                ctx.say(&if ctx.json {
                    json.clone()
                } else {
                    format!(
                        "prompt length (whitespace tokens): n={} mean={:.2} median={:.2} p90={} min={} max={}\n",
                        stats.n, stats.mean, stats.median, stats.p90, stats.min, stats.max
                    )
                })?;
                files.push(("length_stats.json", json));
                inputs.push(path);
            }
            if let Some(path) = &rationales {
                let tags: Vec<SelectionRationale> = load(path)?;
                let tally = tally_rationales(&tags);
                let json = pretty(&tally)?;
                let text = tally.to_text();
                ctx.say(if ctx.json { &json } else { &text })?;
                files.push(("rationale_tally.json", json));
                files.push(("rationale_tally.txt", text));
                inputs.push(path);
            }
            ctx.emit(&files, &inputs, vec![])
        }
    }
}

fn p2a(ctx: &mut Ctx, dataset: &Path, workspaces: &Path) -> Result<(), CliError> {
    let out = ctx.out_dir()?.to_path_buf();
    let issues: Vec<IssueRecord> = load(dataset)?;
    let section = ctx
        .cfg("p2a")
        .cloned()
        .ok_or_else(|| CliError::Usage("p2a run needs a `p2a` section in --config".into()))?;
    let config = P2AConfig::from_json(&section, ctx.seed).map_err(failed)?;
    let dirs: Vec<PathBuf> = issues.iter().map(|i| workspaces.join(path_component(&i.id))).collect();
    let results = run_p2a_batch(&issues, &dirs, &config, ctx.parallelism).map_err(failed)?;
    write_p2a_outputs(&results, &issues, &out).map_err(failed)?;
    let patched = results.iter().filter(|r| r.status == P2AStatus::Patched).count();
    ctx.say(&format!("{} instances, {} patched\n", results.len(), patched))?;
    ctx.write_manifest(&out, &[dataset], config.backend_models())
}

