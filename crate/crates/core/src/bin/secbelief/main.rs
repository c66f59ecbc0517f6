//! `secbelief` command-line driver.
//!
//! Without `--server` every command works on the event log in `--data-dir`
//! (embedded mode). With `--server URL` the same commands go over HTTP.

mod remote;

use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use secbelief::ingest::RawReport;
use secbelief::kb::AssessmentOutcome;
use secbelief::model::ReportFormat;
use secbelief::rules::{builtin_catalog, install_builtin, RulesConfig};
use secbelief::service::{self, AppState, ServiceConfig, DEFAULT_LISTEN, DEFAULT_RUN_ID};
use secbelief::store::log::{read_events, write_events};
use secbelief::views::{IssueFilter, IssueView};
use secbelief::{AssessmentRequest, BeliefId, KbError, KnowledgeBase, SubjectRef};

use remote::Remote;

#[derive(Parser, Debug)]
#[command(name = "secbelief", version, about = "Security findings as revisable beliefs")]
struct Cli {
    /// Directory holding the event log (embedded mode).
    #[arg(long, global = true, env = "SECBELIEF_DATA_DIR", default_value = "./secbelief-data")]
    data_dir: PathBuf,

    /// Base URL of a running service; switches to remote mode.
    #[arg(long, global = true, env = "SECBELIEF_SERVER")]
    server: Option<String>,

    /// JSON file with rule configuration (dedup threshold, priority weights).
    #[arg(long, global = true, env = "SECBELIEF_RULES")]
    rules: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ingest report files.
    Ingest(IngestArgs),
    /// List issues in priority order.
    Issues(IssuesArgs),
    /// Record a human assessment of an issue or finding.
    Assess(AssessArgs),
    /// Show why a belief is held.
    Explain {
        /// Belief id.
        belief_id: String,
    },
    /// Write the event log as JSON lines.
    Export(ExportArgs),
    /// Load an exported event log into an empty data directory.
    Replay {
        /// JSON-lines file produced by `export`.
        input: PathBuf,
    },
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// Report files.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Report format: sarif, generic or dependency. Detected when absent.
    #[arg(long, env = "SECBELIEF_FORMAT")]
    format: Option<String>,
    /// Pipeline run the reports belong to.
    #[arg(long, env = "SECBELIEF_RUN_ID", default_value = DEFAULT_RUN_ID)]
    run_id: String,
    /// Tool name used when the report does not carry one.
    #[arg(long, env = "SECBELIEF_TOOL_HINT")]
    tool_hint: Option<String>,
}

#[derive(Args, Debug)]
struct IssuesArgs {
    #[arg(long, env = "SECBELIEF_STATUS")]
    status: Option<String>,
    #[arg(long, env = "SECBELIEF_MIN_SEVERITY")]
    min_severity: Option<String>,
    /// Print the same JSON as `GET /issues`.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct AssessArgs {
    /// Issue key, or a finding key.
    subject: String,
    /// confirmed, false_positive, mitigated, severity=LEVEL or not_duplicate=A,B
    verdict: String,
    #[arg(long, env = "SECBELIEF_RATIONALE", default_value = "")]
    rationale: String,
    #[arg(long, env = "SECBELIEF_AUTHOR", default_value = "cli")]
    author: String,
}

#[derive(Args, Debug)]
struct ExportArgs {
    /// Only events with a larger sequence number.
    #[arg(long, default_value_t = 0)]
    since_seq: u64,
    /// Output file; `-` for stdout.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, env = "SECBELIEF_LISTEN", default_value = DEFAULT_LISTEN)]
    listen: String,
    /// Allowed CORS origin; repeat for several, `*` for any.
    #[arg(long, env = "SECBELIEF_CORS", value_delimiter = ',')]
    cors: Vec<String>,
    #[arg(long, env = "SECBELIEF_MAX_BODY_BYTES", default_value_t = ServiceConfig::default().max_body_bytes)]
    max_body_bytes: usize,
}

/// A failure the user should see, with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn domain(message: impl ToString) -> Self {
        Failure { code: 1, message: message.to_string() }
    }

    fn usage(message: impl ToString) -> Self {
        Failure { code: 2, message: message.to_string() }
    }
}

impl From<KbError> for Failure {
    fn from(e: KbError) -> Self {
        Failure::domain(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::domain(e)
    }
}

type CliResult = Result<ExitCode, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let rules = match &cli.rules {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            RulesConfig::from_json(&text).map_err(Failure::usage)?
        }
        None => RulesConfig::default(),
    };
    if let Some(url) = cli.server.clone() {
        let remote = Remote::new(&url);
        return match cli.command {
            Command::Ingest(a) => ingest_remote(&remote, a),
            Command::Issues(a) => issues_remote(&remote, a),
            Command::Assess(a) => assess_remote(&remote, a),
            Command::Explain { belief_id } => explain_remote(&remote, &belief_id),
            Command::Export(a) => export_remote(&remote, a),
            Command::Replay { .. } | Command::Serve(_) => {
                Err(Failure::usage("replay and serve operate on a data directory; drop --server"))
            }
        };
    }
    match cli.command {
        Command::Replay { input } => replay(&cli.data_dir, &input),
        command => {
            let mut kb = open(&cli.data_dir, &rules)?;
            match command {
                Command::Ingest(a) => ingest_local(&mut kb, a),
                Command::Issues(a) => issues_local(&kb, a),
                Command::Assess(a) => assess_local(&mut kb, a),
                Command::Explain { belief_id } => explain_local(&kb, &belief_id),
                Command::Export(a) => export_local(&kb, a),
                Command::Serve(a) => serve(kb, a),
                Command::Replay { .. } => unreachable!(),
            }
        }
    }
}

fn now() -> i64 {
    (service::system_clock())()
}

fn open(dir: &Path, rules: &RulesConfig) -> Result<KnowledgeBase, Failure> {
    let mut kb = KnowledgeBase::open(dir, builtin_catalog())?;
    install_builtin(&mut kb, rules, now())?;
    Ok(kb)
}

fn parse_format(format: Option<&str>) -> Result<Option<ReportFormat>, Failure> {
    match format {
        None => Ok(None),
        Some(f) => ReportFormat::parse(f)
            .map(Some)
            .ok_or_else(|| Failure::usage(format!("unknown format '{f}'"))),
    }
}

fn print_ingest_line(file: &Path, findings: usize, skipped: usize, issues: usize) {
    println!("{}: {findings} findings, {skipped} skipped, {issues} issues", file.display());
}

fn ingest_local(kb: &mut KnowledgeBase, args: IngestArgs) -> CliResult {
    let format = parse_format(args.format.as_deref())?;
    let mut failed = false;
    for file in &args.files {
        let bytes = match fs::read(file) {
            Ok(b) => b,
            Err(e) => {
                failed = true;
                println!("{}: failed: {e}", file.display());
                continue;
            }
        };
        let mut raw = RawReport::new(bytes, args.run_id.clone(), now());
        raw.declared_format = format;
        raw.tool_hint = args.tool_hint.clone();
        match kb.ingest(&raw) {
            Ok(r) => {
                let issues = kb.issues(&IssueFilter::default()).len();
                print_ingest_line(file, r.findings, r.skipped, issues);
            }
            Err(e) => {
                failed = true;
                println!("{}: failed: {e}", file.display());
            }
        }
    }
    Ok(exit(failed))
}

fn ingest_remote(remote: &Remote, args: IngestArgs) -> CliResult {
    parse_format(args.format.as_deref())?;
    let mut failed = false;
    for file in &args.files {
        let bytes = match fs::read(file) {
            Ok(b) => b,
            Err(e) => {
                failed = true;
                println!("{}: failed: {e}", file.display());
                continue;
            }
        };
        let mut headers = vec![("x-pipeline-run-id", args.run_id.as_str())];
        if let Some(f) = &args.format {
            headers.push(("x-report-format", f));
        }
        if let Some(t) = &args.tool_hint {
            headers.push(("x-tool-hint", t));
        }
        match remote.post("/reports", &headers, bytes).and_then(Remote::json::<serde_json::Value>) {
            Ok(r) => {
                let issues: Vec<IssueView> = remote.get("/issues").and_then(Remote::json)?;
                let count = |k: &str| r[k].as_u64().unwrap_or(0) as usize;
                print_ingest_line(file, count("findings"), count("skipped"), issues.len());
            }
            Err(f) if f.code == 1 => {
                failed = true;
                println!("{}: failed: {}", file.display(), f.message);
            }
            Err(f) => return Err(f),
        }
    }
    Ok(exit(failed))
}

fn exit(failed: bool) -> ExitCode {
    if failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn issue_filter(args: &IssuesArgs) -> Result<IssueFilter, Failure> {
    IssueFilter::parse(args.status.as_deref(), args.min_severity.as_deref(), None).map_err(Failure::usage)
}

fn issues_local(kb: &KnowledgeBase, args: IssuesArgs) -> CliResult {
    let views = kb.issues(&issue_filter(&args)?);
    if args.json {
        let body = serde_json::to_vec(&views).expect("issue views serialize");
        write_line(&body)?;
    } else {
        print_table(&views);
    }
    Ok(ExitCode::SUCCESS)
}

fn issues_remote(remote: &Remote, args: IssuesArgs) -> CliResult {
    issue_filter(&args)?;
    let mut query = Vec::new();
    if let Some(s) = &args.status {
        query.push(("status", s.as_str()));
    }
    if let Some(s) = &args.min_severity {
        query.push(("min_severity", s.as_str()));
    }
    let body = remote.get_query("/issues", &query)?;
    if args.json {
        write_line(&body)?;
    } else {
        let views: Vec<IssueView> = Remote::json(body)?;
        print_table(&views);
    }
    Ok(ExitCode::SUCCESS)
}

fn write_line(body: &[u8]) -> io::Result<()> {
    let mut out = io::stdout().lock();
    out.write_all(body)?;
    out.write_all(b"\n")
}

fn print_table(views: &[IssueView]) {
    println!("{:>4}  {:>8}  {:<8}  {:<14}  {:>7}  {:<32}  TITLE", "RANK", "SCORE", "SEVERITY", "STATUS", "MEMBERS", "ISSUE");
    for v in views {
        let rank = v.rank.map(|r| r.to_string()).unwrap_or_else(|| "-".into());
        let score = v.score.map(|s| format!("{s:.3}")).unwrap_or_else(|| "-".into());
        println!(
            "{rank:>4}  {score:>8}  {:<8}  {:<14}  {:>7}  {:<32}  {}",
            v.max_severity.as_str(),
            v.status.as_str(),
            v.members.len(),
            v.issue_key.to_string(),
            v.title
        );
    }
}

fn subject(raw: &str) -> SubjectRef {
    match raw.parse::<BeliefId>() {
        Ok(id) => SubjectRef::Issue(id),
        Err(_) => SubjectRef::Finding(raw.to_string()),
    }
}

fn assessment_body(args: &AssessArgs) -> Vec<u8> {
    serde_json::to_vec(&json!({
        "subject": subject(&args.subject),
        "verdict": args.verdict,
        "rationale": args.rationale,
        "author": args.author,
    }))
    .expect("assessment serializes")
}

fn print_outcome(outcome: &AssessmentOutcome) {
    let r = &outcome.revision;
    println!(
        "assessment {}: {} retracted, {} re-derived",
        outcome.assessment_belief,
        r.retracted.len(),
        r.rederived.len()
    );
    for entry in &r.retracted {
        println!("  retracted {} (depth {})", entry.id, entry.depth);
    }
}

fn assess_local(kb: &mut KnowledgeBase, args: AssessArgs) -> CliResult {
    let request = AssessmentRequest::from_json(&assessment_body(&args)).map_err(Failure::usage)?;
    let outcome = kb.submit_assessment(&request, now())?;
    print_outcome(&outcome);
    Ok(ExitCode::SUCCESS)
}

fn assess_remote(remote: &Remote, args: AssessArgs) -> CliResult {
    let body = assessment_body(&args);
    AssessmentRequest::from_json(&body).map_err(Failure::usage)?;
    let outcome: AssessmentOutcome = remote.post("/assessments", &[], body).and_then(Remote::json)?;
    print_outcome(&outcome);
    Ok(ExitCode::SUCCESS)
}

fn explain_local(kb: &KnowledgeBase, id: &str) -> CliResult {
    let id: BeliefId = id.parse().map_err(|_| Failure::domain(format!("unknown belief {id}")))?;
    print!("{}", kb.explain(&id)?.render());
    Ok(ExitCode::SUCCESS)
}

fn explain_remote(remote: &Remote, id: &str) -> CliResult {
    let tree: secbelief::views::JustificationTree =
        remote.get(&format!("/beliefs/{id}/justification")).and_then(Remote::json)?;
    print!("{}", tree.render());
    Ok(ExitCode::SUCCESS)
}

fn output(path: &Path) -> io::Result<Box<dyn Write>> {
    if path == Path::new("-") {
        Ok(Box::new(io::stdout().lock()))
    } else {
        Ok(Box::new(io::BufWriter::new(fs::File::create(path)?)))
    }
}

fn export_local(kb: &KnowledgeBase, args: ExportArgs) -> CliResult {
    let events = kb.events_since(args.since_seq, usize::MAX);
    write_events(output(&args.output)?, events)?;
    Ok(ExitCode::SUCCESS)
}

fn export_remote(remote: &Remote, args: ExportArgs) -> CliResult {
    let mut out = output(&args.output)?;
    let mut since = args.since_seq;
    loop {
        let page: serde_json::Value = remote
            .get_query("/events", &[("since_seq", &since.to_string())])
            .and_then(Remote::json)?;
        let events: Vec<secbelief::store::KbEvent> =
            serde_json::from_value(page["events"].clone()).map_err(Failure::domain)?;
        if events.is_empty() {
            break;
        }
        write_events(&mut out, &events)?;
        since = events.last().map(|e| e.seq).unwrap_or(since);
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn replay(dir: &Path, input: &Path) -> CliResult {
    let file = fs::File::open(input).map_err(|e| Failure::domain(format!("{}: {e}", input.display())))?;
    let events = read_events(BufReader::new(file))?;
    let kb = KnowledgeBase::import_into(dir, &events, builtin_catalog())?;
    println!("replayed {} events into {}", kb.state().seq(), dir.display());
    Ok(ExitCode::SUCCESS)
}

fn serve(kb: KnowledgeBase, args: ServeArgs) -> CliResult {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(io::stderr)
        .init();
    let config = ServiceConfig {
        max_body_bytes: args.max_body_bytes,
        cors_origins: args.cors,
        ..ServiceConfig::default()
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&args.listen)
            .await
            .map_err(|e| Failure::usage(format!("cannot listen on {}: {e}", args.listen)))?;
        tracing::info!(addr = %listener.local_addr()?, "listening");
        let router = service::router(AppState::new(kb, config, service::system_clock()));
        service::serve(listener, router).await?;
        Ok(ExitCode::SUCCESS)
    })
}
