//! The `ctrlbot` command line: knowledge base validation, index building,
//! one-shot questions, corpus evaluation, an interactive REPL and the HTTP
//! service.
//!
//! Exit codes: 0 success, 1 a check failed (load errors, failing eval
//! cases), 2 usage error or unusable input.

mod repl;

use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ctrlbot_core::control::{control_level, ControlConfig, ConversationState, Engine, RoutingTrace};
use ctrlbot_core::eval::{load_cases, run_eval};
use ctrlbot_core::knowledge::KnowledgeBase;
use ctrlbot_service::{build_engine, resolve_kb_dir, AppState, ServiceConfig};

pub use repl::{run_chat, Repl, ReplReply};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "ctrlbot", version, about = "Controllable hybrid chatbot engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a knowledge base and report counts or every load error.
    Validate { kb_dir: PathBuf },
    /// Build the retrieval index and write it to a file.
    Index {
        kb_dir: PathBuf,
        #[arg(short, long, default_value = "ctrlbot.index")]
        out: PathBuf,
    },
    /// Answer one question and print the routing summary.
    Ask {
        kb_dir: PathBuf,
        question: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Print the full trace as JSON instead of the one-line summary.
        #[arg(long)]
        json: bool,
    },
    /// Run a QA corpus and report path distribution, hedging and grounding.
    Eval {
        kb_dir: PathBuf,
        qa_file: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Interactive session. Meta commands: /config [file], /trace, /reset, /quit.
    Chat {
        kb_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        #[arg(long)]
        kb: Option<PathBuf>,
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

/// Failure carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    fn failed(message: impl Into<String>) -> Self {
        Self { code: EXIT_FAILED, message: message.into() }
    }
}

pub fn load_config(path: Option<&Path>) -> Result<ControlConfig, Failure> {
    let Some(path) = path else {
        return Ok(ControlConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    ControlConfig::parse(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn load_kb(dir: &Path) -> Result<KnowledgeBase, Failure> {
    KnowledgeBase::load_all_errors(dir).map_err(|errors| {
        let lines: Vec<String> = errors.iter().map(|e| format!("  {e}")).collect();
        Failure::usage(format!("cannot load {}:\n{}", dir.display(), lines.join("\n")))
    })
}

/// Engine over the knowledge base in `dir`, picking up `dir/templates` when
/// present.
pub fn engine_at(dir: &Path) -> Result<Engine, Failure> {
    engine_with_templates(dir, dir)
}

/// Like [`engine_at`], with templates taken from `template_root/templates`.
pub fn engine_with_templates(dir: &Path, template_root: &Path) -> Result<Engine, Failure> {
    let engine = build_engine(load_kb(dir)?);
    let templates = template_root.join("templates");
    if templates.is_dir() {
        return engine
            .with_template_dir(&templates)
            .map_err(|e| Failure::usage(format!("{}: {e}", templates.display())));
    }
    Ok(engine)
}

/// The one-line routing summary printed by `ask` and the REPL.
pub fn trace_line(trace: &RoutingTrace) -> String {
    let strength = format!("{:?}", trace.match_result.strength);
    let docs: Vec<String> = trace.retrieved.iter().map(|d| d.id.to_string()).collect();
    let docs = if docs.is_empty() { "-".to_string() } else { docs.join(",") };
    let mut line = format!("[path={} strength={strength} docs={docs}", trace.path);
    if trace.hedged {
        line.push_str(" hedged");
    }
    if let Some(e) = &trace.error {
        line.push_str(&format!(" error={e}"));
    }
    line.push(']');
    line
}

fn io(e: std::io::Error) -> Failure {
    Failure::failed(e.to_string())
}

pub fn validate(kb_dir: &Path, out: &mut dyn Write) -> Result<(), Failure> {
    match KnowledgeBase::load_all_errors(kb_dir) {
        Ok(kb) => {
            let c = kb.counts();
            writeln!(
                out,
                "ok: {} documents, {} fact sheets, {} concepts, {} lexicon entries",
                c.documents, c.factsheets, c.concepts, c.lexicon_entries
            )
            .map_err(io)
        }
        Err(errors) => {
            let lines: Vec<String> = errors.iter().map(|e| format!("  {e}")).collect();
            Err(Failure::failed(format!("{} error(s):\n{}", errors.len(), lines.join("\n"))))
        }
    }
}

pub fn index(kb_dir: &Path, out_path: &Path, out: &mut dyn Write) -> Result<(), Failure> {
    let engine = Engine::new(load_kb(kb_dir)?);
    let file = std::fs::File::create(out_path)
        .map_err(|e| Failure::usage(format!("{}: {e}", out_path.display())))?;
    let mut w = std::io::BufWriter::new(file);
    engine.index().write_to(&mut w).map_err(io)?;
    w.flush().map_err(io)?;
    writeln!(
        out,
        "indexed {} documents, {} terms -> {}",
        engine.index().doc_count,
        engine.index().vocabulary.len(),
        out_path.display()
    )
    .map_err(io)
}

pub fn ask(engine: &Engine, question: &str, config: &ControlConfig, json: bool, out: &mut dyn Write) -> Result<(), Failure> {
    let mut state = ConversationState::new("cli", chrono::Utc::now());
    let outcome = engine.handle_turn(&mut state, question, config);
    writeln!(out, "{}", outcome.answer).map_err(io)?;
    if json {
        let trace = serde_json::to_string_pretty(&outcome.trace).expect("trace serializes");
        writeln!(out, "{trace}").map_err(io)
    } else {
        writeln!(out, "{}", trace_line(&outcome.trace)).map_err(io)
    }
}

pub fn eval(
    engine: &Engine,
    qa_file: &Path,
    config: &ControlConfig,
    report: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let cases = load_cases(qa_file).map_err(|e| Failure::usage(e.to_string()))?;
    let result = run_eval(engine, &cases, config);
    write!(out, "{}", result.to_table()).map_err(io)?;
    if let Some(path) = report {
        std::fs::write(path, result.to_json())
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    }
    if result.all_passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = result.cases.iter().filter(|c| !c.passed).map(|c| c.id.as_str()).collect();
        Err(Failure::failed(format!("failing cases: {}", failed.join(", "))))
    }
}

fn serve(listen: SocketAddr, data_dir: PathBuf, kb: Option<PathBuf>, static_dir: Option<PathBuf>) -> Result<(), Failure> {
    let _ = tracing_subscriber::fmt().with_writer(std::io::stderr).try_init();
    // The engine may create a blocking HTTP client, which must not happen
    // inside the async runtime.
    let engine = match resolve_kb_dir(&data_dir, kb.as_deref()) {
        // the edited snapshot holds no templates, those stay with --kb
        Some(dir) => Some(engine_with_templates(&dir, kb.as_deref().unwrap_or(&dir))?),
        None => {
            eprintln!("no knowledge base given, chat answers 503 until one is loaded");
            None
        }
    };
    let mut config = ServiceConfig::new(data_dir);
    config.static_dir = static_dir;
    let state = AppState::new(config, engine).map_err(|e| Failure::usage(e.to_string()))?;
    let runtime = tokio::runtime::Runtime::new().map_err(io)?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(listen)
            .await
            .map_err(|e| Failure::usage(format!("{listen}: {e}")))?;
        eprintln!("listening on http://{listen}");
        ctrlbot_service::serve(listener, state).await.map_err(io)
    })
}

/// Runs a parsed command. `input` feeds the chat REPL.
pub fn execute(cli: Cli, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { kb_dir } => validate(&kb_dir, out),
        Command::Index { kb_dir, out: path } => index(&kb_dir, &path, out),
        Command::Ask { kb_dir, question, config, json } => {
            let config = load_config(config.as_deref())?;
            let engine = engine_at(&kb_dir)?;
            ask(&engine, &question, &config, json, out)
        }
        Command::Eval { kb_dir, qa_file, config, report } => {
            let config = load_config(config.as_deref())?;
            let engine = engine_at(&kb_dir)?;
            eval(&engine, &qa_file, &config, report.as_deref(), out)
        }
        Command::Chat { kb_dir, config } => {
            let config = load_config(config.as_deref())?;
            let engine = engine_at(&kb_dir)?;
            writeln!(out, "control level: {}", control_level(&config).label).map_err(io)?;
            run_chat(&engine, config, input, out).map_err(io)
        }
        Command::Serve { listen, data_dir, kb, static_dir } => serve(listen, data_dir, kb, static_dir),
    }
}

/// Parses `args` and runs the command, writing diagnostics to `err`.
pub fn run<I, T>(args: I, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    match execute(cli, input, out) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

pub fn main_exit() -> ExitCode {
    let stdin = std::io::stdin();
    let code = run(
        std::env::args_os(),
        &mut stdin.lock(),
        &mut std::io::stdout().lock(),
        &mut std::io::stderr().lock(),
    );
    ExitCode::from(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_config_file_is_a_usage_error() {
        let f = load_config(Some(Path::new("/no/such/config.toml"))).unwrap_err();
        assert_eq!(f.code, EXIT_USAGE);
        assert!(f.message.contains("config.toml"));
        assert_eq!(load_config(None).unwrap(), ControlConfig::default());
    }

    #[test]
    fn trace_line_lists_docs_and_flags() {
        let engine = Engine::new(KnowledgeBase::default());
        let mut state = ConversationState::new("t", chrono::Utc::now());
        let mut trace = engine.handle_turn(&mut state, "hello", &ControlConfig::default()).trace;
        assert_eq!(trace_line(&trace), "[path=Refusal strength=None docs=-]");
        trace.hedged = true;
        trace.error = Some("timeout".into());
        assert_eq!(trace_line(&trace), "[path=Refusal strength=None docs=- hedged error=timeout]");
    }
}
