//! Parser for planner responses.
//!
//! Grammar (whitespace-insensitive between tokens):
//!
//! ```text
//! Plan       := '[' ']' | '[' Step (',' Step)* ']'
//! Step       := '[' ActionName ',' Argument ']'
//! ActionName := one of the eight primitive surface names
//! Argument   := text with balanced brackets, optionally quoted
//! ```
//!
//! Unquoted commas delimit step elements, so an argument containing a
//! comma must be quoted. Quoted elements accept `\"` and `\\` escapes.
//!
//! Failures fall into two classes: the response does not follow the
//! grammar ([`FailureKind::FormatDeviation`]), or it follows the grammar but
//! names an action outside the registry ([`FailureKind::UnknownAction`]).
//! A response that fails the grammar never reports an unknown action.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::primitives::{brackets_balanced, lookup, ActionStep, Plan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    FormatDeviation,
    UnknownAction,
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureKind::FormatDeviation => "format_deviation",
            FailureKind::UnknownAction => "unknown_action",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseFailure {
    pub kind: FailureKind,
    pub detail: String,
    /// Byte range in the raw response the failure refers to.
    pub span: Option<Range<usize>>,
}

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.detail)
    }
}

impl std::error::Error for ParseFailure {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ParseOutcome {
    Parsed { plan: Plan },
    Failed(ParseFailure),
}

impl ParseOutcome {
    pub fn plan(&self) -> Option<&Plan> {
        match self {
            ParseOutcome::Parsed { plan } => Some(plan),
            ParseOutcome::Failed(_) => None,
        }
    }

    pub fn failure_kind(&self) -> Option<FailureKind> {
        match self {
            ParseOutcome::Parsed { .. } => None,
            ParseOutcome::Failed(f) => Some(f.kind),
        }
    }

    pub fn into_result(self) -> Result<Plan, ParseFailure> {
        match self {
            ParseOutcome::Parsed { plan } => Ok(plan),
            ParseOutcome::Failed(f) => Err(f),
        }
    }
}

/// Byte range of the longest balanced bracket region that opens a nested
/// list (`[[`, whitespace allowed between) or is an empty list `[]`. Ties
/// go to the earliest region.
pub fn candidate_span(raw: &str) -> Option<Range<usize>> {
    let bytes = raw.as_bytes();
    let mut closing = vec![None; bytes.len()];
    let mut open = Vec::new();
    for (i, &b) in bytes.iter().enumerate() {
        match b {
            b'[' => open.push(i),
            b']' => {
                if let Some(start) = open.pop() {
                    closing[start] = Some(i);
                }
            }
            _ => {}
        }
    }

    let mut best: Option<Range<usize>> = None;
    for (start, end) in closing.iter().enumerate().filter_map(|(s, e)| e.map(|e| (s, e))) {
        let first = bytes[start + 1..end].iter().position(|b| !b.is_ascii_whitespace());
        let starts_nested = first.is_some_and(|k| bytes[start + 1 + k] == b'[');
        let is_empty_list = first.is_none();
        if !(starts_nested || is_empty_list) {
            continue;
        }
        let len = end + 1 - start;
        if best.as_ref().is_none_or(|b| len > b.len()) {
            best = Some(start..end + 1);
        }
    }
    best
}

/// The candidate plan text embedded in a response, if any.
pub fn extract_candidate(raw: &str) -> Option<&str> {
    candidate_span(raw).map(|r| &raw[r])
}

/// Parses a raw response into a plan or a classified failure. Total: never
/// panics on any input.
pub fn parse(raw: &str) -> ParseOutcome {
    let Some(span) = candidate_span(raw) else {
        let detail = if raw.trim().is_empty() {
            "empty response".to_string()
        } else {
            "no nested [[action, parameter], ...] list found".to_string()
        };
        return ParseOutcome::Failed(ParseFailure {
            kind: FailureKind::FormatDeviation,
            detail,
            span: None,
        });
    };

    let offset = span.start;
    let raw_steps = match Cursor::new(&raw[span.clone()]).plan() {
        Ok(steps) => steps,
        Err(e) => {
            return ParseOutcome::Failed(ParseFailure {
                kind: FailureKind::FormatDeviation,
                detail: e.message,
                span: Some(offset + e.at..span.end),
            })
        }
    };

    let step_span = |s: &RawStep| Some(offset + s.span.start..offset + s.span.end);

    // Grammar checks finish before any vocabulary check.
    for (i, raw_step) in raw_steps.iter().enumerate() {
        if !brackets_balanced(&raw_step.argument) {
            return ParseOutcome::Failed(ParseFailure {
                kind: FailureKind::FormatDeviation,
                detail: format!("step {i}: parameter has unbalanced brackets"),
                span: step_span(raw_step),
            });
        }
    }

    let mut steps = Vec::with_capacity(raw_steps.len());
    for (i, raw_step) in raw_steps.iter().enumerate() {
        let Some(sig) = lookup(&raw_step.name) else {
            return ParseOutcome::Failed(ParseFailure {
                kind: FailureKind::UnknownAction,
                detail: format!("step {i} uses unknown action {:?}", raw_step.name),
                span: step_span(raw_step),
            });
        };
        match ActionStep::new(sig.kind, raw_step.argument.as_str()) {
            Ok(step) => steps.push(step),
            Err(e) => {
                return ParseOutcome::Failed(ParseFailure {
                    kind: FailureKind::FormatDeviation,
                    detail: format!("step {i}: {e}"),
                    span: step_span(raw_step),
                })
            }
        }
    }
    ParseOutcome::Parsed {
        plan: Plan::new(steps),
    }
}

/// Canonical text of a plan: `[[move to, sink], [speak, hello]]`.
pub fn render(plan: &Plan) -> String {
    let steps: Vec<String> = plan
        .steps
        .iter()
        .map(|s| format!("[{}, {}]", s.kind().surface_name(), render_argument(s.argument())))
        .collect();
    format!("[{}]", steps.join(", "))
}

fn render_argument(arg: &str) -> String {
    let needs_quotes = arg.contains(',')
        || arg.starts_with(['"', '\''])
        || arg.ends_with(['"', '\'']);
    if !needs_quotes {
        return arg.to_string();
    }
    let mut out = String::with_capacity(arg.len() + 2);
    out.push('"');
    for c in arg.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

struct RawStep {
    name: String,
    argument: String,
    span: Range<usize>,
}

struct SyntaxError {
    at: usize,
    message: String,
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Cursor { text, pos: 0 }
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError {
            at: self.pos,
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn expect(&mut self, want: char) -> Result<(), SyntaxError> {
        self.skip_ws();
        match self.peek() {
            Some(c) if c == want => {
                self.bump();
                Ok(())
            }
            Some(c) => self.error(format!("expected {want:?}, found {c:?}")),
            None => self.error(format!("expected {want:?}, found end of input")),
        }
    }

    fn plan(&mut self) -> Result<Vec<RawStep>, SyntaxError> {
        self.expect('[')?;
        self.skip_ws();
        let mut steps = Vec::new();
        if self.peek() == Some(']') {
            self.bump();
        } else {
            loop {
                steps.push(self.step()?);
                self.skip_ws();
                match self.bump() {
                    Some(',') => continue,
                    Some(']') => break,
                    Some(c) => {
                        self.pos -= c.len_utf8();
                        return self.error(format!("expected ',' or ']' between steps, found {c:?}"));
                    }
                    None => return self.error("unterminated plan list"),
                }
            }
        }
        self.skip_ws();
        if self.pos != self.text.len() {
            return self.error("trailing text after plan list");
        }
        Ok(steps)
    }

    fn step(&mut self) -> Result<RawStep, SyntaxError> {
        self.skip_ws();
        let start = self.pos;
        self.expect('[')?;
        let mut elements = Vec::new();
        loop {
            elements.push(self.element()?);
            match self.bump() {
                Some(',') => continue,
                Some(']') => break,
                _ => return self.error("unterminated step"),
            }
        }
        if elements.len() != 2 {
            return Err(SyntaxError {
                at: start,
                message: format!(
                    "a step must be [action, parameter] but has {} element(s)",
                    elements.len()
                ),
            });
        }
        let argument = elements.pop().unwrap_or_default();
        let name = elements.pop().unwrap_or_default();
        if name.is_empty() {
            return Err(SyntaxError {
                at: start,
                message: "step has an empty action name".into(),
            });
        }
        if argument.trim().is_empty() {
            return Err(SyntaxError {
                at: start,
                message: format!("step {name:?} has no parameter"),
            });
        }
        Ok(RawStep {
            name,
            argument,
            span: start..self.pos,
        })
    }

    /// One step element, leaving the cursor on the delimiting ',' or ']'.
    fn element(&mut self) -> Result<String, SyntaxError> {
        self.skip_ws();
        match self.peek() {
            Some(q @ ('"' | '\'')) => {
                if let Some(value) = self.try_quoted(q) {
                    return Ok(value);
                }
                self.unquoted()
            }
            _ => self.unquoted(),
        }
    }

    /// A quoted element followed only by whitespace before its delimiter.
    /// Falls back (returning `None`, cursor untouched) when the quote does
    /// not enclose the whole element, e.g. `'twas`.
    fn try_quoted(&mut self, quote: char) -> Option<String> {
        let saved = self.pos;
        self.bump();
        let mut value = String::new();
        loop {
            match self.bump() {
                Some('\\') => match self.bump() {
                    Some(c @ ('"' | '\'' | '\\')) => value.push(c),
                    Some(c) => {
                        value.push('\\');
                        value.push(c);
                    }
                    None => break,
                },
                Some(c) if c == quote => {
                    self.skip_ws();
                    if matches!(self.peek(), Some(',' | ']')) {
                        return Some(value);
                    }
                    break;
                }
                Some(c) => value.push(c),
                None => break,
            }
        }
        self.pos = saved;
        None
    }

    fn unquoted(&mut self) -> Result<String, SyntaxError> {
        let start = self.pos;
        let mut depth = 0usize;
        while let Some(c) = self.peek() {
            match c {
                '[' => depth += 1,
                ']' if depth == 0 => break,
                ']' => depth -= 1,
                ',' if depth == 0 => break,
                _ => {}
            }
            self.bump();
        }
        if self.peek().is_none() {
            return self.error("unterminated step");
        }
        Ok(self.text[start..self.pos].trim().to_string())
    }
}
