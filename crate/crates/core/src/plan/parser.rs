//! Line-oriented parser for program-style plan text.
//!
//! Grammar, one statement per line:
//!
//! ```text
//! def task_name():                      header, ignored
//! # free text                           comment, ignored (also trailing)
//! find('salmon')                        action call, one or two arguments
//! putin('salmon', 'microwave')
//! assert('fridge' is 'opened') else: open('fridge')
//! assert('salmon' in 'hands')           condition discarded ...
//! else: grab('salmon')                  ... recovery calls kept, in order
//! 1. find(salmon)                       enumerators are stripped
//! ```
//!
//! Arguments may be quoted or bare. Several calls on one line may be separated
//! by `;` or `,`. Corpus documents hold many samples separated by
//! `--- sample k ---` lines.

use serde::{Deserialize, Serialize};

use super::{normalize_command, Command, Plan, PlanOrigin};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    NoCommandsFound,
    Unparseable,
    EmptyAction,
    EmptyArgument,
    BadArity,
    UnknownAction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// 1-based source line, when the diagnostic belongs to one.
    pub line: Option<usize>,
    pub kind: DiagnosticKind,
    pub message: String,
}

impl Diagnostic {
    pub fn new(kind: DiagnosticKind, message: impl Into<String>) -> Self {
        Diagnostic { line: None, kind, message: message.into() }
    }

    fn at(mut self, line: usize) -> Self {
        self.line = Some(line);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedPlan {
    pub plan: Plan,
    pub diagnostics: Vec<Diagnostic>,
}

/// Canonical serialization: one `action(arg[,arg])` per line.
pub fn render_plan(commands: &[Command]) -> String {
    commands.iter().map(|c| format!("{c}\n")).collect()
}

fn strip_comment(line: &str) -> &str {
    let mut quote = None;
    for (i, ch) in line.char_indices() {
        match (quote, ch) {
            (None, '\'' | '"') => quote = Some(ch),
            (Some(q), c) if c == q => quote = None,
            (None, '#') => return &line[..i],
            _ => {}
        }
    }
    line
}

fn sample_separator(line: &str) -> Option<usize> {
    let inner = line.trim().strip_prefix("---")?.strip_suffix("---")?.trim();
    inner.strip_prefix("sample")?.trim().parse().ok()
}

fn strip_enumerator(line: &str) -> &str {
    let mut rest = line;
    let lower = rest.to_ascii_lowercase();
    if lower.starts_with("step") {
        rest = rest[4..].trim_start();
    }
    let digits = rest.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let after = &rest[digits..];
        if let Some(stripped) = after.strip_prefix(['.', ')', ':']) {
            return stripped.trim_start();
        }
        return line;
    }
    if let Some(stripped) = rest.strip_prefix(['-', '*']) {
        if stripped.starts_with(' ') {
            return stripped.trim_start();
        }
    }
    line
}

/// Index just past the parenthesis closing the one at `open`.
fn matching_paren(s: &str, open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut quote = None;
    for (i, ch) in s[open..].char_indices() {
        match (quote, ch) {
            (Some(q), c) if c == q => quote = None,
            (Some(_), _) => {}
            (None, '\'' | '"') => quote = Some(ch),
            (None, '(') => depth += 1,
            (None, ')') => {
                depth -= 1;
                if depth == 0 {
                    return Some(open + i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Drops an `assert(...)` condition and an `else:` marker, leaving the recovery calls.
fn strip_assertion(line: &str) -> Option<&str> {
    let mut rest = line;
    if let Some(after) = rest.strip_prefix("assert") {
        let after_trim = after.trim_start();
        rest = if after_trim.starts_with('(') {
            let offset = line.len() - after_trim.len();
            let end = matching_paren(line, offset)?;
            &line[end..]
        } else {
            // `assert cond else: ...` without parentheses
            match after.find("else") {
                Some(i) => &after[i..],
                None => "",
            }
        };
    }
    let rest = rest.trim_start().trim_start_matches(',').trim_start();
    let rest = match rest.strip_prefix("else") {
        Some(r) => r.trim_start().strip_prefix(':').unwrap_or(r),
        None => rest,
    };
    Some(rest.trim())
}

/// Parses a run of `name(args)` calls; `None` if anything else is on the line.
pub(crate) fn parse_calls(s: &str) -> Option<Vec<(String, Vec<String>)>> {
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    let mut calls = Vec::new();
    let skip = |i: &mut usize, extra: &[char]| {
        while *i < chars.len() && (chars[*i].is_whitespace() || extra.contains(&chars[*i])) {
            *i += 1;
        }
    };
    loop {
        skip(&mut i, &[';', ',']);
        if i == chars.len() {
            break;
        }
        let start = i;
        if !(chars[i].is_alphabetic() || chars[i] == '_') {
            return None;
        }
        while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
            i += 1;
        }
        let name: String = chars[start..i].iter().collect();
        skip(&mut i, &[]);
        if chars.get(i) != Some(&'(') {
            return None;
        }
        i += 1;
        let mut args = Vec::new();
        skip(&mut i, &[]);
        if chars.get(i) == Some(&')') {
            i += 1;
        } else {
            loop {
                skip(&mut i, &[]);
                let arg = match chars.get(i)? {
                    q @ ('\'' | '"') => {
                        let q = *q;
                        let begin = i + 1;
                        let end = begin + chars[begin..].iter().position(|c| *c == q)?;
                        i = end + 1;
                        chars[begin..end].iter().collect::<String>()
                    }
                    _ => {
                        let begin = i;
                        while i < chars.len() && !matches!(chars[i], ',' | ')' | '(' | '\'' | '"') {
                            i += 1;
                        }
                        chars[begin..i].iter().collect::<String>()
                    }
                };
                args.push(arg);
                skip(&mut i, &[]);
                match chars.get(i)? {
                    ',' => i += 1,
                    ')' => {
                        i += 1;
                        break;
                    }
                    _ => return None,
                }
            }
        }
        calls.push((name, args));
    }
    (!calls.is_empty()).then_some(calls)
}

/// Extracts the action calls of a generated plan. Never fails: anything it
/// cannot read becomes a diagnostic.
pub fn parse_plan_text(text: &str, origin: PlanOrigin) -> ParsedPlan {
    let mut commands = Vec::new();
    let mut diagnostics = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() || sample_separator(line).is_some() {
            continue;
        }
        if (line.starts_with("def ") && line.ends_with(':'))
            || line.starts_with("from ")
            || line.starts_with("import ")
            || line == "pass"
            || line.starts_with("return")
        {
            continue;
        }
        let body = strip_enumerator(line);
        let Some(body) = strip_assertion(body) else {
            diagnostics
                .push(Diagnostic::new(DiagnosticKind::Unparseable, format!("unbalanced assertion: {line}")).at(lineno));
            continue;
        };
        if body.is_empty() {
            continue;
        }
        let Some(calls) = parse_calls(body) else {
            diagnostics.push(Diagnostic::new(DiagnosticKind::Unparseable, line.to_string()).at(lineno));
            continue;
        };
        for (action, args) in calls {
            let args: Vec<&str> = args.iter().map(String::as_str).collect();
            match normalize_command(&action, &args) {
                Ok(n) => {
                    if n.unknown_action {
                        diagnostics.push(
                            Diagnostic::new(
                                DiagnosticKind::UnknownAction,
                                format!("unknown action `{}`", n.command.action()),
                            )
                            .at(lineno),
                        );
                    }
                    commands.push(n.command);
                }
                Err(d) => diagnostics.push(d.at(lineno)),
            }
        }
    }
    if commands.is_empty() {
        diagnostics.push(Diagnostic::new(DiagnosticKind::NoCommandsFound, "no_commands_found"));
    }
    ParsedPlan { plan: Plan { commands, origin }, diagnostics }
}

/// Splits a multi-sample document on `--- sample k ---` lines. A document
/// without separators is a single sample with index 0.
pub fn parse_corpus(text: &str) -> Vec<(usize, String)> {
    let mut samples: Vec<(usize, String)> = Vec::new();
    let mut current: Option<(usize, String)> = None;
    for line in text.lines() {
        if let Some(k) = sample_separator(line) {
            samples.extend(current.take());
            current = Some((k, String::new()));
            continue;
        }
        let entry = current.get_or_insert_with(|| (0, String::new()));
        entry.1.push_str(line);
        entry.1.push('\n');
    }
    samples.extend(current);
    samples
}
