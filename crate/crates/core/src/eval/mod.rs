//! Corpus evaluation: runs question/expected-path records through the engine
//! and reports path distribution, hedging, grounding and retrieval hits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{ControlConfig, ConversationState, Engine, RoutePath};

/// One line of a QA corpus file (JSON Lines).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaCase {
    pub id: String,
    pub question: String,
    pub expected_path: RoutePath,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_substring: Option<String>,
    /// Document retrieval should return, for the hit-rate statistic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_document: Option<String>,
    /// Utterances sent in the same session before `question`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prior_turns: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("{path} line {line}: {reason}")]
    Malformed { path: String, line: usize, reason: String },
}

pub fn parse_cases(text: &str, path: &str) -> Result<Vec<QaCase>, EvalError> {
    let mut cases = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let case: QaCase = serde_json::from_str(line).map_err(|e| EvalError::Malformed {
            path: path.to_string(),
            line: n + 1,
            reason: e.to_string(),
        })?;
        if cases.iter().any(|c: &QaCase| c.id == case.id) {
            return Err(EvalError::Malformed {
                path: path.to_string(),
                line: n + 1,
                reason: format!("duplicate case id `{}`", case.id),
            });
        }
        cases.push(case);
    }
    Ok(cases)
}

pub fn load_cases(path: &Path) -> Result<Vec<QaCase>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_cases(&text, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub id: String,
    pub question: String,
    pub expected_path: RoutePath,
    pub actual_path: RoutePath,
    pub answer: String,
    pub passed: bool,
    pub failures: Vec<String>,
    pub hedged: bool,
    pub grounded: Option<bool>,
    pub retrieved: Vec<String>,
    pub retrieval_hit: Option<bool>,
    pub retrieval_called: bool,
    pub backend_called: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub path_distribution: BTreeMap<RoutePath, usize>,
    pub hedged: usize,
    pub hedge_rate: f64,
    pub generated: usize,
    pub grounding_violations: usize,
    pub retrieval_cases: usize,
    pub retrieval_hits: usize,
    pub retrieval_hit_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ControlConfig,
    pub summary: EvalSummary,
    pub cases: Vec<CaseResult>,
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

/// Runs every case in its own session. Prior turns share that session.
pub fn run_eval(engine: &Engine, cases: &[QaCase], config: &ControlConfig) -> EvalReport {
    let epoch = chrono::DateTime::<chrono::Utc>::UNIX_EPOCH;
    let mut results = Vec::with_capacity(cases.len());
    for case in cases {
        let mut state = ConversationState::new(format!("eval-{}", case.id), epoch);
        for prior in &case.prior_turns {
            engine.handle_turn_at(&mut state, prior, config, epoch);
        }
        let outcome = engine.handle_turn_at(&mut state, &case.question, config, epoch);
        let trace = outcome.trace;
        let retrieved: Vec<String> = trace.retrieved.iter().map(|d| d.id.to_string()).collect();
        let mut failures = Vec::new();
        if trace.path != case.expected_path {
            failures.push(format!("expected path {}, got {}", case.expected_path, trace.path));
        }
        if let Some(s) = &case.expected_substring {
            if !outcome.answer.contains(s.as_str()) {
                failures.push(format!("answer lacks `{s}`"));
            }
        }
        results.push(CaseResult {
            id: case.id.clone(),
            question: case.question.clone(),
            expected_path: case.expected_path,
            actual_path: trace.path,
            answer: outcome.answer,
            passed: failures.is_empty(),
            failures,
            hedged: trace.hedged,
            grounded: trace.grounding.as_ref().map(|g| g.grounded),
            retrieval_hit: case
                .expected_document
                .as_ref()
                .map(|d| retrieved.iter().any(|r| r == d)),
            retrieved,
            retrieval_called: trace.retrieval_called,
            backend_called: trace.backend_called,
        });
    }
    summarize(config, results)
}

fn summarize(config: &ControlConfig, cases: Vec<CaseResult>) -> EvalReport {
    let mut path_distribution: BTreeMap<RoutePath, usize> = RoutePath::ALL.iter().map(|p| (*p, 0)).collect();
    for c in &cases {
        *path_distribution.entry(c.actual_path).or_default() += 1;
    }
    let total = cases.len();
    let passed = cases.iter().filter(|c| c.passed).count();
    let hedged = cases.iter().filter(|c| c.hedged).count();
    let generated = cases.iter().filter(|c| c.grounded.is_some()).count();
    let grounding_violations = cases.iter().filter(|c| c.grounded == Some(false)).count();
    let retrieval_cases = cases.iter().filter(|c| c.retrieval_hit.is_some()).count();
    let retrieval_hits = cases.iter().filter(|c| c.retrieval_hit == Some(true)).count();
    EvalReport {
        config: config.clone(),
        summary: EvalSummary {
            total,
            passed,
            failed: total - passed,
            path_distribution,
            hedged,
            hedge_rate: ratio(hedged, total),
            generated,
            grounding_violations,
            retrieval_cases,
            retrieval_hits,
            retrieval_hit_rate: (retrieval_cases > 0).then(|| ratio(retrieval_hits, retrieval_cases)),
        },
        cases,
    }
}

impl EvalReport {
    pub fn all_passed(&self) -> bool {
        self.summary.failed == 0
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_table(&self) -> String {
        let s = &self.summary;
        let mut out = String::new();
        let _ = writeln!(out, "{:<6} {:<22} {:<22} question", "result", "expected", "actual");
        for c in &self.cases {
            let mark = if c.passed { "pass" } else { "FAIL" };
            let _ = writeln!(
                out,
                "{:<6} {:<22} {:<22} [{}] {}",
                mark,
                c.expected_path.to_string(),
                c.actual_path.to_string(),
                c.id,
                c.question
            );
            for f in &c.failures {
                let _ = writeln!(out, "       {f}");
            }
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "cases: {} passed, {} failed, {} total", s.passed, s.failed, s.total);
        for (path, n) in &s.path_distribution {
            let _ = writeln!(out, "  {:<22} {n}", path.to_string());
        }
        let _ = writeln!(out, "hedge rate: {:.3} ({} of {})", s.hedge_rate, s.hedged, s.total);
        let _ = writeln!(out, "grounding violations: {} of {} generated", s.grounding_violations, s.generated);
        match s.retrieval_hit_rate {
            Some(r) => {
                let _ = writeln!(out, "retrieval hit rate: {r:.3} ({} of {})", s.retrieval_hits, s.retrieval_cases);
            }
            None => {
                let _ = writeln!(out, "retrieval hit rate: n/a");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_jsonl_and_rejects_duplicates() {
        let text = r#"{"id":"a","question":"q","expected_path":"Refusal"}

{"id":"b","question":"q2","expected_path":"RuleConclusive","expected_substring":"5 euro","prior_turns":["hi"]}"#;
        let cases = parse_cases(text, "qa.jsonl").unwrap();
        assert_eq!(cases.len(), 2);
        assert_eq!(cases[1].prior_turns, vec!["hi".to_string()]);
        let dup = format!("{}\n{}", text.lines().next().unwrap(), text.lines().next().unwrap());
        assert!(matches!(parse_cases(&dup, "qa.jsonl"), Err(EvalError::Malformed { line: 2, .. })));
        assert!(matches!(
            parse_cases("{\"id\":\"x\",\"question\":\"q\",\"expected_path\":\"Nowhere\"}", "qa.jsonl"),
            Err(EvalError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn empty_corpus_gives_empty_passing_report() {
        let engine = Engine::new(Default::default());
        let report = run_eval(&engine, &[], &ControlConfig::default());
        assert!(report.all_passed());
        assert_eq!(report.summary.total, 0);
        assert_eq!(report.summary.hedge_rate, 0.0);
        assert!(report.to_table().contains("0 total"));
    }
}
