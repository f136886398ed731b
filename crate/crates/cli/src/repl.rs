use std::io::{BufRead, Write};
use std::path::Path;

use ctrlbot_core::control::{control_level, ControlConfig, ConversationState, Engine, RoutingTrace};

use crate::{load_config, trace_line};

const HELP: &str = "meta commands: /config [file]  /trace  /reset  /help  /quit";

/// What one REPL line produced.
#[derive(Debug, Clone, PartialEq)]
pub enum ReplReply {
    /// An answered turn.
    Answer { answer: String, trace: Box<RoutingTrace> },
    /// Output of a meta command.
    Info(String),
    Quit,
}

/// A single chat session over an engine, with the meta commands of
/// `ctrlbot chat`.
pub struct Repl<'e> {
    engine: &'e Engine,
    config: ControlConfig,
    state: ConversationState,
    last: Option<RoutingTrace>,
}

impl<'e> Repl<'e> {
    pub fn new(engine: &'e Engine, config: ControlConfig) -> Self {
        Self {
            engine,
            config,
            state: ConversationState::new("repl", chrono::Utc::now()),
            last: None,
        }
    }

    pub fn config(&self) -> &ControlConfig {
        &self.config
    }

    pub fn state(&self) -> &ConversationState {
        &self.state
    }

    pub fn line(&mut self, line: &str) -> ReplReply {
        let line = line.trim();
        let Some(meta) = line.strip_prefix('/') else {
            let outcome = self.engine.handle_turn(&mut self.state, line, &self.config);
            self.last = Some(outcome.trace.clone());
            return ReplReply::Answer { answer: outcome.answer, trace: Box::new(outcome.trace) };
        };
        let (cmd, arg) = meta.split_once(char::is_whitespace).unwrap_or((meta, ""));
        let arg = arg.trim();
        ReplReply::Info(match cmd {
            "quit" | "exit" => return ReplReply::Quit,
            "help" => HELP.to_string(),
            "reset" => {
                self.state.reset();
                "session reset".to_string()
            }
            "trace" => match &self.last {
                Some(t) => serde_json::to_string_pretty(t).expect("trace serializes"),
                None => "no turn yet".to_string(),
            },
            "config" if arg.is_empty() => format!(
                "{}\ncontrol level: {}",
                serde_json::to_string_pretty(&self.config).expect("config serializes"),
                control_level(&self.config).label
            ),
            "config" => match load_config(Some(Path::new(arg))) {
                Ok(cfg) => {
                    self.config = cfg;
                    format!("control level: {}", control_level(&self.config).label)
                }
                Err(f) => format!("config not changed: {}", f.message),
            },
            other => format!("unknown command /{other}; {HELP}"),
        })
    }
}

/// Reads lines from `input` until EOF or `/quit`, printing answers with
/// their trace summary.
pub fn run_chat(engine: &Engine, config: ControlConfig, input: &mut dyn BufRead, out: &mut dyn Write) -> std::io::Result<()> {
    let mut repl = Repl::new(engine, config);
    let mut buf = String::new();
    loop {
        write!(out, "> ")?;
        out.flush()?;
        buf.clear();
        if input.read_line(&mut buf)? == 0 {
            writeln!(out)?;
            return Ok(());
        }
        if buf.trim().is_empty() {
            continue;
        }
        match repl.line(&buf) {
            ReplReply::Answer { answer, trace } => {
                writeln!(out, "{answer}")?;
                writeln!(out, "{}", trace_line(&trace))?;
            }
            ReplReply::Info(text) => writeln!(out, "{text}")?,
            ReplReply::Quit => return Ok(()),
        }
    }
}
