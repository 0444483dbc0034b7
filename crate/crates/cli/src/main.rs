mod backends;
mod paths;

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use gpsr_core::eval::{evaluate_suite, gold_table, EvalOptions};
use gpsr_core::executor::{self, InteractionScript, RunOptions};
use gpsr_core::grammar::{default_counts, generate_suite, read_suite, write_suite, Command, CommandCategory, TemplateBank};
use gpsr_core::llm::{read_transcript, write_transcript, BackendHandle, ReplayBackend};
use gpsr_core::planning::{run_episode, AttemptVerdict, PlanningConfig, PlanningError, PlanningResult, ValidationMode};
use gpsr_core::prompt::{build_prompt, PromptBank, PromptConfig};
use gpsr_core::world::WorldModel;
use gpsr_core::{parse, validate_static, ParseOutcome, Plan};
use thiserror::Error;

use backends::BackendsFile;
use paths::OutDir;

const EXIT_OTHER: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_UNPARSEABLE: u8 = 3;
const EXIT_EXECUTION: u8 = 4;
const EXIT_CHECK: u8 = 5;
const EXIT_BACKEND: u8 = 6;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Backend(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Input(_) => EXIT_OTHER,
            CliError::Backend(_) => EXIT_BACKEND,
        }
    }
}

impl From<PlanningError> for CliError {
    fn from(e: PlanningError) -> Self {
        match e {
            PlanningError::BackendUnavailable(_) => CliError::Backend(e.to_string()),
            PlanningError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            PlanningError::Prompt(_) => CliError::Input(e.to_string()),
        }
    }
}

/// Plans, runs and evaluates service-robot commands with a chat model.
#[derive(Debug, Parser)]
#[command(name = "gpsr", version)]
struct Cli {
    /// World description (TOML). Defaults to the built-in benchmark world.
    #[arg(long, global = true, env = "GPSR_WORLD")]
    world: Option<PathBuf>,
    /// Prompt bank (TOML). Defaults to the built-in bank.
    #[arg(long, global = true, env = "GPSR_PROMPT_BANK")]
    prompt_bank: Option<PathBuf>,
    /// Command template bank (TOML). Defaults to the built-in bank.
    #[arg(long, global = true, env = "GPSR_TEMPLATES")]
    templates: Option<PathBuf>,
    /// HTTP backend definitions (TOML).
    #[arg(long, global = true, env = "GPSR_BACKENDS")]
    backends_file: Option<PathBuf>,
    /// Every file written goes under this directory.
    #[arg(long, global = true, env = "GPSR_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    /// Log more (repeatable). Logs go to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Generate a seeded command suite with gold plans (JSON Lines).
    Generate(GenerateArgs),
    /// Print the planning prompt for a command.
    Prompt(PromptArgs),
    /// Plan one command and print the canonical plan.
    Plan(PlanArgs),
    /// Parse a response and print the canonical plan or the failure class.
    Parse(ParseArgs),
    /// Execute a plan (or plan a command first) in the simulator.
    Run(RunArgs),
    /// Evaluate backends on a command suite.
    Eval(EvalArgs),
    /// Re-plan the command of a recorded transcript from its responses.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    seed: u64,
    /// Only this category (A, B or C); needs --count.
    #[arg(long = "type", requires = "count")]
    category: Option<CommandCategory>,
    #[arg(long)]
    count: Option<usize>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PromptArgs {
    #[arg(long)]
    command: String,
    #[arg(long)]
    word_budget: Option<usize>,
}

#[derive(Debug, Args)]
struct BackendArgs {
    /// `mock:<name>` or a name from the backends file.
    #[arg(long, default_value = "mock:gold")]
    backend: String,
    /// Extra gold plans for mock backends.
    #[arg(long)]
    suite: Option<PathBuf>,
    /// Write every exchange to this transcript file.
    #[arg(long, conflicts_with = "replay")]
    record: Option<PathBuf>,
    /// Serve responses from this transcript instead of the backend.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Skip static validation of parsed plans.
    #[arg(long)]
    parse_only: bool,
    #[arg(long, default_value_t = 5)]
    max_attempts: usize,
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[arg(long)]
    command: String,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Debug, Args)]
struct ParseArgs {
    /// Response text; read from --input or stdin when omitted.
    text: Option<String>,
    #[arg(long, conflicts_with = "text")]
    input: Option<PathBuf>,
    /// Also run static validation against the world.
    #[arg(long)]
    validate: bool,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// File holding a plan.
    #[arg(long, conflicts_with_all = ["plan_text", "command"])]
    plan: Option<PathBuf>,
    #[arg(long, conflicts_with = "command")]
    plan_text: Option<String>,
    /// Plan this command first.
    #[arg(long)]
    command: Option<String>,
    /// Interaction script: a file or a shipped name (default, escort, question).
    #[arg(long)]
    script: Option<String>,
    /// Write the machine-readable trace here.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[arg(long, default_value_t = executor::DEFAULT_FOLLOW_STEP_LIMIT)]
    follow_step_limit: usize,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Suite file from `generate`.
    #[arg(long, conflicts_with = "seed")]
    suite: Option<PathBuf>,
    /// Generate the 34/33/33 suite from this seed instead.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated backend names.
    #[arg(long, value_delimiter = ',')]
    backends: Vec<String>,
    /// Directory of transcripts to replay.
    #[arg(long, conflicts_with = "record")]
    replay: Option<PathBuf>,
    /// Directory to write one transcript per backend.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write per-command records (JSON Lines) here.
    #[arg(long)]
    records: Option<PathBuf>,
    /// Exit with a dedicated code when a threshold fails.
    #[arg(long)]
    check: bool,
    #[arg(long)]
    parse_only: bool,
    #[arg(long, default_value_t = 5)]
    max_attempts: usize,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    transcript: PathBuf,
    #[arg(long)]
    parse_only: bool,
}

struct Context {
    world: WorldModel,
    bank: Arc<PromptBank>,
    templates_path: Option<PathBuf>,
    backends: BackendsFile,
    out: OutDir,
}

impl Context {
    fn load(cli: &Cli) -> Result<Self, CliError> {
        let world = match &cli.world {
            Some(p) => WorldModel::from_path(p).map_err(|e| CliError::Input(e.to_string()))?,
            None => WorldModel::benchmark(),
        };
        let bank = match &cli.prompt_bank {
            Some(p) => PromptBank::from_path(p).map_err(|e| CliError::Input(e.to_string()))?,
            None => PromptBank::default_bank(),
        };
        if let Some(p) = &cli.templates {
            if !p.is_file() {
                return Err(CliError::Input(format!("template bank {} does not exist", p.display())));
            }
        }
        let backends = match &cli.backends_file {
            Some(p) => BackendsFile::load(p)?,
            None => BackendsFile::default(),
        };
        Ok(Context {
            world,
            bank: Arc::new(bank),
            templates_path: cli.templates.clone(),
            backends,
            out: OutDir::new(&cli.out_dir),
        })
    }

    fn templates(&self) -> Result<TemplateBank, CliError> {
        match &self.templates_path {
            Some(p) => TemplateBank::from_path(p).map_err(|e| CliError::Input(e.to_string())),
            None => Ok(TemplateBank::default_bank()),
        }
    }

    fn planning_config(&self, backend: BackendHandle, parse_only: bool, max_attempts: usize) -> PlanningConfig {
        let mut config = PlanningConfig::new(backend);
        config.bank = self.bank.clone();
        config.max_consecutive_exceptions = max_attempts;
        if parse_only {
            config.validation = ValidationMode::ParseOnly;
        }
        config
    }

    fn load_suite(&self, path: &Path) -> Result<Vec<Command>, CliError> {
        read_suite(path).map_err(|e| CliError::Input(format!("cannot read suite {}: {e}", path.display())))
    }

    /// Backend for `plan` and `run`, with replay and the mock gold table.
    fn single_backend(&self, args: &BackendArgs) -> Result<BackendHandle, CliError> {
        if let Some(path) = &args.replay {
            let replay = ReplayBackend::from_path(&args.backend, path)
                .map_err(|e| CliError::Input(format!("cannot read transcript {}: {e}", path.display())))?;
            return Ok(Arc::new(replay));
        }
        let suite = match &args.suite {
            Some(p) => self.load_suite(p)?,
            None => Vec::new(),
        };
        backends::resolve(&args.backend, &self.backends, &gold_table(&suite, &self.bank))
    }
}

fn print_attempts(result: &PlanningResult, out: &mut impl std::io::Write) -> std::io::Result<()> {
    for (i, a) in result.attempt_log.iter().enumerate() {
        let verdict = match &a.verdict {
            AttemptVerdict::Accepted => "accepted".to_string(),
            AttemptVerdict::ParseFailed(f) => format!("{}: {}", f.kind, f.detail),
            AttemptVerdict::Invalid(r) => format!("invalid: {}", r.detail),
        };
        writeln!(out, "attempt {}: {}", i + 1, verdict)?;
        writeln!(out, "  response: {}", a.raw_response.replace('\n', "\n            "))?;
        if let Some(s) = &a.suffix {
            writeln!(out, "  suffix: {s}")?;
        }
    }
    Ok(())
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Input(e.to_string())
}

fn cmd_generate(ctx: &Context, args: &GenerateArgs) -> Result<u8, CliError> {
    let counts = match (args.category, args.count) {
        (Some(c), Some(n)) => BTreeMap::from([(c, n)]),
        (None, Some(n)) => CommandCategory::ALL.iter().map(|&c| (c, n)).collect(),
        _ => default_counts(),
    };
    let suite = generate_suite(args.seed, &counts, &ctx.world, &ctx.templates()?)
        .map_err(|e| CliError::Input(e.to_string()))?;
    match &args.out {
        Some(p) => {
            let path = ctx.out.resolve(p)?;
            write_suite(&path, &suite).map_err(io_err)?;
            eprintln!("wrote {} commands to {}", suite.len(), path.display());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            for c in &suite {
                writeln!(stdout, "{}", serde_json::to_string(c).expect("command serializes")).map_err(io_err)?;
            }
        }
    }
    Ok(0)
}

fn cmd_prompt(ctx: &Context, args: &PromptArgs) -> Result<u8, CliError> {
    let mut config = PromptConfig::default();
    if let Some(b) = args.word_budget {
        config.word_budget = b;
    }
    let bundle = build_prompt(&args.command, &ctx.world, &ctx.bank, &config).map_err(|e| CliError::Input(e.to_string()))?;
    println!("{}", bundle.render());
    Ok(0)
}

fn cmd_plan(ctx: &Context, args: &PlanArgs) -> Result<u8, CliError> {
    let record = args.backend.record.as_ref().map(|p| ctx.out.resolve(p)).transpose()?;
    let backend = ctx.single_backend(&args.backend)?;
    let config = ctx.planning_config(backend, args.backend.parse_only, args.backend.max_attempts);
    let recorder = Arc::new(gpsr_core::llm::Recorder::new(config.backend.clone()));
    let config = config.with_backend(recorder.clone());
    let result = gpsr_core::plan(&args.command, &ctx.world, &config);
    if let Some(path) = record {
        write_transcript(&path, &recorder.take()).map_err(io_err)?;
    }
    let result = result?;
    let mut stdout = std::io::stdout().lock();
    match result.plan() {
        Some(plan) => {
            writeln!(stdout, "{plan}").map_err(io_err)?;
            if result.attempts > 1 {
                print_attempts(&result, &mut std::io::stderr()).map_err(io_err)?;
            }
            Ok(0)
        }
        None => {
            writeln!(stdout, "UNPARSEABLE after {} attempts", result.attempts).map_err(io_err)?;
            print_attempts(&result, &mut stdout).map_err(io_err)?;
            Ok(EXIT_UNPARSEABLE)
        }
    }
}

fn cmd_parse(ctx: &Context, args: &ParseArgs) -> Result<u8, CliError> {
    let text = match (&args.text, &args.input) {
        (Some(t), _) => t.clone(),
        (None, Some(p)) => std::fs::read_to_string(p).map_err(io_err)?,
        (None, None) => std::io::read_to_string(std::io::stdin()).map_err(io_err)?,
    };
    match parse(&text) {
        ParseOutcome::Parsed { plan } => {
            println!("{plan}");
            if args.validate {
                let report = validate_static(&plan, &ctx.world);
                if !report.is_valid() {
                    println!("INVALID {}: {}", serde_json::to_string(&report.verdict).unwrap_or_default(), report.detail);
                    return Ok(EXIT_UNPARSEABLE);
                }
            }
            Ok(0)
        }
        ParseOutcome::Failed(f) => {
            println!("{}: {}", f.kind, f.detail);
            Ok(EXIT_UNPARSEABLE)
        }
    }
}

fn load_script(name: Option<&str>, fallback: &str) -> Result<InteractionScript, CliError> {
    let name = name.unwrap_or(fallback);
    if let Some(s) = InteractionScript::shipped(name) {
        return Ok(s);
    }
    InteractionScript::from_path(name).map_err(|e| CliError::Input(e.to_string()))
}

fn cmd_run(ctx: &Context, args: &RunArgs) -> Result<u8, CliError> {
    let trace_out = args.trace_out.as_ref().map(|p| ctx.out.resolve(p)).transpose()?;
    let record = args.backend.record.as_ref().map(|p| ctx.out.resolve(p)).transpose()?;
    let options = RunOptions {
        follow_step_limit: args.follow_step_limit,
    };
    let backend = ctx.single_backend(&args.backend)?;
    let config = ctx.planning_config(backend, args.backend.parse_only, args.backend.max_attempts);

    let plan_source = match (&args.plan, &args.plan_text) {
        (Some(p), _) => Some(std::fs::read_to_string(p).map_err(io_err)?),
        (None, Some(t)) => Some(t.clone()),
        (None, None) => None,
    };
    let mut stdout = std::io::stdout().lock();

    if let Some(text) = plan_source {
        let plan: Plan = match parse(&text) {
            ParseOutcome::Parsed { plan } => plan,
            ParseOutcome::Failed(f) => {
                writeln!(stdout, "{}: {}", f.kind, f.detail).map_err(io_err)?;
                return Ok(EXIT_UNPARSEABLE);
            }
        };
        let script = load_script(args.script.as_deref(), "default")?;
        let recorder = Arc::new(gpsr_core::llm::Recorder::new(config.backend.clone()));
        let config = config.with_backend(recorder.clone());
        let trace = executor::execute(&plan, &ctx.world, &script, &config, &options);
        if let Some(path) = record {
            write_transcript(&path, &recorder.take()).map_err(io_err)?;
        }
        writeln!(stdout, "{}", executor::compile(&plan, &ctx.world).map(|m| m.outline()).unwrap_or_else(|e| e.to_string()))
            .map_err(io_err)?;
        writeln!(stdout, "{trace}").map_err(io_err)?;
        if let Some(path) = trace_out {
            let json = serde_json::to_string_pretty(&trace).expect("trace serializes");
            std::fs::write(&path, json + "\n").map_err(io_err)?;
        }
        return Ok(if trace.succeeded() { 0 } else { EXIT_EXECUTION });
    }

    let Some(command) = &args.command else {
        return Err(CliError::Usage("run needs --plan, --plan-text or --command".into()));
    };
    let fallback = ctx
        .bank
        .examples
        .iter()
        .find(|e| gpsr_core::world::normalize(&e.command_text) == gpsr_core::world::normalize(command))
        .and_then(|e| e.script.clone())
        .unwrap_or_else(|| "default".to_string());
    let script = load_script(args.script.as_deref(), &fallback)?;
    let episode = run_episode(command, &ctx.world, &config, &script, &options);
    if let Some(path) = record {
        write_transcript(&path, &episode.exchanges).map_err(io_err)?;
    }
    if let Some(path) = trace_out {
        let json = serde_json::to_string_pretty(&episode).expect("episode serializes");
        std::fs::write(&path, json + "\n").map_err(io_err)?;
    }
    if let Some(e) = &episode.error {
        return Err(CliError::Backend(e.clone()));
    }
    let result = episode.planning.as_ref().expect("planning ran");
    match (&result.plan(), &episode.execution) {
        (Some(plan), Some(trace)) => {
            writeln!(stdout, "{plan}").map_err(io_err)?;
            writeln!(stdout, "{trace}").map_err(io_err)?;
            Ok(if trace.succeeded() { 0 } else { EXIT_EXECUTION })
        }
        _ => {
            writeln!(stdout, "UNPARSEABLE after {} attempts", result.attempts).map_err(io_err)?;
            print_attempts(result, &mut stdout).map_err(io_err)?;
            Ok(EXIT_UNPARSEABLE)
        }
    }
}

fn cmd_eval(ctx: &Context, args: &EvalArgs) -> Result<u8, CliError> {
    let record_dir = args.record.as_ref().map(|p| ctx.out.resolve(p)).transpose()?;
    let report_path = args.report.as_ref().map(|p| ctx.out.resolve(p)).transpose()?;
    let records_path = args.records.as_ref().map(|p| ctx.out.resolve(p)).transpose()?;
    let (suite, seed) = match (&args.suite, args.seed) {
        (Some(p), _) => (ctx.load_suite(p)?, None),
        (None, Some(seed)) => (
            generate_suite(seed, &default_counts(), &ctx.world, &ctx.templates()?)
                .map_err(|e| CliError::Input(e.to_string()))?,
            Some(seed),
        ),
        (None, None) => return Err(CliError::Usage("eval needs --suite or --seed".into())),
    };

    let backends: Vec<BackendHandle> = match &args.replay {
        Some(dir) => {
            let names = (!args.backends.is_empty()).then_some(args.backends.as_slice());
            backends::replay_dir(dir, names)?
        }
        None => {
            if args.backends.is_empty() {
                return Err(CliError::Usage("eval needs --backends".into()));
            }
            let gold = gold_table(&suite, &ctx.bank);
            args.backends
                .iter()
                .map(|n| backends::resolve(n, &ctx.backends, &gold))
                .collect::<Result<_, _>>()?
        }
    };
    let config = ctx.planning_config(backends[0].clone(), args.parse_only, args.max_attempts);
    let options = EvalOptions {
        suite_seed: seed,
        run: RunOptions::default(),
    };
    let outcome = evaluate_suite(&suite, &backends, &ctx.world, &config, &options)
        .map_err(|e| CliError::Usage(e.to_string()))?;

    if let Some(dir) = record_dir {
        std::fs::create_dir_all(&dir).map_err(io_err)?;
        let mut manifest = String::new();
        for row in &outcome.report.rows {
            let exchanges = &outcome.transcripts[&row.backend_id];
            write_transcript(&dir.join(backends::transcript_file(&row.backend_id)), exchanges).map_err(io_err)?;
            manifest.push_str(&row.backend_id);
            manifest.push('\n');
        }
        std::fs::write(dir.join(backends::MANIFEST), manifest).map_err(io_err)?;
    }
    if let Some(path) = report_path {
        std::fs::write(&path, outcome.report.to_json()).map_err(io_err)?;
    }
    if let Some(path) = records_path {
        let mut text = String::new();
        for r in &outcome.records {
            text.push_str(&serde_json::to_string(r).expect("record serializes"));
            text.push('\n');
        }
        std::fs::write(&path, text).map_err(io_err)?;
    }
    print!("{}", outcome.report.render_table());
    if args.check {
        let failures = outcome.report.check();
        if !failures.is_empty() {
            for f in &failures {
                println!("CHECK FAILED: {f}");
            }
            return Ok(EXIT_CHECK);
        }
        println!("checks passed");
    }
    Ok(0)
}

fn cmd_replay(ctx: &Context, args: &ReplayArgs) -> Result<u8, CliError> {
    let exchanges = read_transcript(&args.transcript)
        .map_err(|e| CliError::Input(format!("cannot read transcript {}: {e}", args.transcript.display())))?;
    let Some(first) = exchanges.first() else {
        return Err(CliError::Input("transcript is empty".into()));
    };
    let command = first
        .request
        .prompt()
        .lines()
        .rev()
        .find_map(|l| l.strip_prefix("Command:"))
        .map(str::trim)
        .ok_or_else(|| CliError::Input("first request is not a planning prompt".into()))?
        .to_string();
    let backend = Arc::new(ReplayBackend::new("replay", exchanges.clone()));
    let config = ctx.planning_config(backend, args.parse_only, 5);
    let result = gpsr_core::plan(&command, &ctx.world, &config)?;
    println!("command: {command}");
    match result.plan() {
        Some(plan) => {
            println!("{plan}");
            Ok(0)
        }
        None => {
            println!("UNPARSEABLE after {} attempts", result.attempts);
            print_attempts(&result, &mut std::io::stdout()).map_err(io_err)?;
            Ok(EXIT_UNPARSEABLE)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<u8, CliError> {
    let ctx = Context::load(cli)?;
    match &cli.command {
        Sub::Generate(a) => cmd_generate(&ctx, a),
        Sub::Prompt(a) => cmd_prompt(&ctx, a),
        Sub::Plan(a) => cmd_plan(&ctx, a),
        Sub::Parse(a) => cmd_parse(&ctx, a),
        Sub::Run(a) => cmd_run(&ctx, a),
        Sub::Eval(a) => cmd_eval(&ctx, a),
        Sub::Replay(a) => cmd_replay(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level)),
        )
        .with_writer(std::io::stderr)
        .init();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
