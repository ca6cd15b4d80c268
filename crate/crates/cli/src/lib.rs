//! Command-line front end: instance bundles, config resolution, providers and
//! the run / generate / evaluate entry points.

pub mod bundle;
pub mod evaluate;
pub mod http;

use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use testfix_core::agent::{Provider, ScriptedProvider};
use testfix_core::audit::{AuditLog, Clock, LogicalClock, SystemClock};
use testfix_core::generate::{generate_tests, persist_generated, register_tests, GenerateRequest};
use testfix_core::util::write_atomic;
use testfix_core::{ConfigOverrides, TestKind, Workflow, WorkflowConfig};

use bundle::InstanceBundle;

pub const EXIT_SOLVED: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_EXHAUSTED: i32 = 2;
pub const EXIT_HACKED: i32 = 3;
pub const EXIT_INVALID_INSTANCE: i32 = 4;
pub const EXIT_PROVIDER: i32 = 5;
/// Bad flags, unreadable or inconsistent bundles (sysexits `EX_USAGE`).
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] testfix_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use testfix_core::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(E::InvalidInstance(_) | E::InvalidManifest(_)) => EXIT_INVALID_INSTANCE,
            CliError::Core(E::Provider(_)) => EXIT_PROVIDER,
            CliError::Core(E::InvalidConfig(_)) => EXIT_USAGE,
            CliError::Core(_) => EXIT_INTERNAL,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "testfix", version, about = "Test-driven repair of failing tests")]
pub struct Cli {
    /// Log level for stderr diagnostics (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Repair an instance; writes final.diff, summary.json and audit.jsonl.
    Run(RunArgs),
    /// Generate reproduction tests and add them to the bundle's manifest.
    Generate(GenerateArgs),
    /// Score finished runs against each bundle's gold patch.
    Evaluate(EvaluateArgs),
    /// Print the effective configuration as JSON.
    ShowConfig(ConfigArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Flat JSON config file; omitted keys take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<u32>,
    #[arg(long)]
    pub max_tests_debug: Option<u32>,
    #[arg(long)]
    pub generate_turns: Option<u32>,
    #[arg(long)]
    pub debug_turns: Option<u32>,
    #[arg(long)]
    pub revise_turns: Option<u32>,
    #[arg(long)]
    pub explore_turns: Option<u32>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_fuzz: Option<u32>,
    /// Per-test timeout in seconds.
    #[arg(long)]
    pub test_timeout: Option<u64>,
    #[arg(long)]
    pub debug_parallelism: Option<u32>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<WorkflowConfig, CliError> {
        let overrides = ConfigOverrides {
            num_total_iterations: self.iterations,
            max_tests_debug: self.max_tests_debug,
            generate_tests_max_turns: self.generate_turns,
            debug_one_max_turns: self.debug_turns,
            revise_patch_max_turns: self.revise_turns,
            explore_files_max_turns: self.explore_turns,
            temperature: self.temperature,
            max_fuzz: self.max_fuzz,
            test_timeout_secs: self.test_timeout,
            debug_parallelism: self.debug_parallelism,
        };
        Ok(WorkflowConfig::resolve(self.config.as_deref(), &overrides)?)
    }
}

#[derive(Debug, Clone, Args)]
pub struct ProviderArgs {
    /// Replay a scripted provider file instead of calling a model.
    #[arg(long, conflicts_with_all = ["endpoint", "model"])]
    pub mock_script: Option<PathBuf>,
    /// OpenAI-compatible API base URL. The bearer token is read from TESTFIX_API_KEY.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// HTTP request timeout in seconds.
    #[arg(long, default_value_t = 600)]
    pub request_timeout: u64,
}

impl ProviderArgs {
    fn build(&self) -> Result<Box<dyn Provider>, CliError> {
        if let Some(path) = &self.mock_script {
            let p = ScriptedProvider::load(path).map_err(|e| CliError::Usage(format!("mock script: {e}")))?;
            tracing::info!(script = %path.display(), "using scripted provider");
            return Ok(Box::new(p));
        }
        match (&self.endpoint, &self.model) {
            (Some(endpoint), Some(model)) => {
                let p = http::HttpProvider::from_env(endpoint, model, Duration::from_secs(self.request_timeout))
                    .map_err(CliError::Usage)?;
                tracing::info!(
                    endpoint = %endpoint,
                    model = %model,
                    credential = if std::env::var_os(http::API_KEY_ENV).is_some() { "set" } else { "unset" },
                    "using HTTP provider"
                );
                Ok(Box::new(p))
            }
            _ => Err(CliError::Usage(
                "give --mock-script, or both --endpoint and --model".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Bundle directory containing instance.json.
    #[arg(long)]
    pub bundle: PathBuf,
    /// Artifact directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub provider: ProviderArgs,
    /// Run without the debugger even if the bundle configures one.
    #[arg(long)]
    pub no_debugger: bool,
    /// Deterministic log timestamps, for reproducible artifacts.
    #[arg(long)]
    pub logical_clock: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub provider: ProviderArgs,
    /// Generate even though the manifest already has reproduction tests.
    #[arg(long)]
    pub force: bool,
    /// Where to write the extended manifest (default: the bundle's manifest).
    #[arg(long)]
    pub manifest_out: Option<PathBuf>,
    /// Directory for the generation log and summary.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub logical_clock: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Run artifact directory (repeatable).
    #[arg(long = "run", required = true)]
    pub runs: Vec<PathBuf>,
    /// Bundle to use for every run instead of the one recorded in its summary.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn clock(logical: bool) -> Box<dyn Clock> {
    if logical {
        Box::new(LogicalClock::default())
    } else {
        Box::new(SystemClock)
    }
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
    text.push('\n');
    Ok(write_atomic(path, text.as_bytes())?)
}

pub fn cmd_run(args: &RunArgs) -> Result<i32, CliError> {
    let config = args.config.resolve()?;
    let bundle = InstanceBundle::load(&args.bundle)?;
    let provider = args.provider.build()?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::Usage(format!("{}: {e}", args.out.display())))?;

    // Streamed under a temporary name; renamed once the run ends.
    let partial = args.out.join("audit.jsonl.partial");
    let audit = AuditLog::to_file(&partial, clock(args.logical_clock))?;
    let debugger = if args.no_debugger {
        None
    } else {
        bundle.debugger_command.as_deref()
    };
    let wf = Workflow {
        issue: &bundle.issue,
        manifest: &bundle.manifest,
        config: &config,
        provider: provider.as_ref(),
        debugger_command: debugger,
        audit: &audit,
    };
    let result = wf.run();
    drop(audit);
    std::fs::rename(&partial, args.out.join("audit.jsonl")).map_err(|e| CliError::Usage(format!("audit log: {e}")))?;

    let final_path = args.out.join("final.diff");
    match result {
        Ok(r) => {
            let mut summary = r.summary(&config);
            summary["bundle"] = json!(bundle.dir);
            match &r.final_patch {
                Some(diff) => {
                    write_atomic(&final_path, diff.as_bytes())?;
                    summary["final_patch_file"] = json!("final.diff");
                }
                None => {
                    let _ = std::fs::remove_file(&final_path);
                    summary["final_patch_file"] = Value::Null;
                }
            }
            write_json(&args.out.join("summary.json"), &summary)?;
            eprintln!(
                "outcome: {} after {} iteration(s); exit {}",
                summary["outcome"].as_str().unwrap_or("?"),
                r.state.iteration,
                r.exit_code()
            );
            Ok(r.exit_code())
        }
        Err(e) => {
            let err = CliError::Core(e);
            let summary = json!({
                "outcome": "error",
                "error": err.to_string(),
                "exit_code": err.exit_code(),
                "bundle": bundle.dir,
                "config": config,
            });
            write_json(&args.out.join("summary.json"), &summary)?;
            Err(err)
        }
    }
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<i32, CliError> {
    let config = args.config.resolve()?;
    let bundle = InstanceBundle::load(&args.bundle)?;
    let has_repro = bundle.manifest.tests.iter().any(|t| t.kind == TestKind::Reproduction);
    if has_repro && !args.force {
        return Err(CliError::Usage(
            "the manifest already has reproduction tests; pass --force to generate more".into(),
        ));
    }
    let provider = args.provider.build()?;
    let audit = match &args.out {
        Some(dir) => AuditLog::to_file(&dir.join("audit.jsonl"), clock(args.logical_clock))?,
        None => AuditLog::in_memory(clock(args.logical_clock)),
    };
    let outcome = generate_tests(&GenerateRequest {
        issue: &bundle.issue,
        manifest: &bundle.manifest,
        config: &config,
        provider: provider.as_ref(),
        audit: &audit,
        example: bundle.example(),
    })?;
    let extended = register_tests(&bundle.manifest, &outcome.accepted)?;
    let manifest_out = args
        .manifest_out
        .clone()
        .unwrap_or_else(|| bundle.manifest_path.clone());
    persist_generated(&bundle.issue.repo_root, &outcome, &extended, &manifest_out)?;

    if let Some(dir) = &args.out {
        let summary = json!({
            "accepted": outcome.accepted.iter().map(|g| json!({
                "name": g.test.name,
                "file": g.test.file,
                "line": g.test.line,
                "single_assert": g.single_assert,
                "initial_status": g.initial_status.as_str(),
            })).collect::<Vec<_>>(),
            "discarded": outcome.discarded.iter().map(|d| json!({"name": d.name, "reason": d.reason})).collect::<Vec<_>>(),
            "files": outcome.files.iter().map(|(p, _)| p).collect::<Vec<_>>(),
            "manifest": manifest_out,
            "turns_used": outcome.turns_used,
            "tokens": outcome.usage,
        });
        write_json(&dir.join("generate.json"), &summary)?;
    }
    eprintln!(
        "registered {} generated test(s), discarded {}; manifest written to {}",
        outcome.accepted.len(),
        outcome.discarded.len(),
        manifest_out.display()
    );
    Ok(0)
}

pub fn cmd_show_config(args: &ConfigArgs) -> Result<i32, CliError> {
    let config = args.resolve()?;
    println!("{}", serde_json::to_string_pretty(&config).expect("config serializes"));
    Ok(0)
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = cli.log_level.parse().unwrap_or(tracing::Level::WARN);
    let _ = tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .try_init();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Evaluate(a) => evaluate::cmd_evaluate(a),
        Command::ShowConfig(a) => cmd_show_config(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
