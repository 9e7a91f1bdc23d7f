//! Python traceback parsing and error classification.

use std::sync::OnceLock;

use regex::Regex;

use super::ErrorType;
use crate::corpus::ErrorMessage;

pub const NO_DIAGNOSTIC: &str = "no diagnostic output";

/// Lines kept from the end of unparseable output.
const RAW_TAIL_LINES: usize = 5;

fn frame_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"^\s*File "([^"]*)", line (\d+)"#).unwrap())
}

fn diagnostic_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^([A-Za-z_][\w.]*(?:Error|Exception|Exit|Interrupt|Warning|Iteration))(?::\s?(.*))?$").unwrap()
    })
}

/// Maps an exception class name to the taxonomy. Names match exactly (a
/// dotted module prefix is ignored); subclasses of known errors are not
/// resolved, so `ZeroDivisionError` is `Other`.
pub fn classify_error(diagnostic_head: &str) -> ErrorType {
    let head = diagnostic_head.split(':').next().unwrap_or("").trim();
    let name = head.rsplit('.').next().unwrap_or(head);
    match name {
        "AssertionError" => ErrorType::AssertionError,
        "NameError" => ErrorType::NameError,
        "TypeError" => ErrorType::TypeError,
        "IndexError" => ErrorType::IndexError,
        "ValueError" => ErrorType::ValueError,
        "SyntaxError" => ErrorType::SyntaxError,
        "AttributeError" => ErrorType::AttributeError,
        "RecursionError" => ErrorType::RecursionError,
        _ => ErrorType::Other,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Frame {
    file: String,
    line: usize,
    source: Option<String>,
}

/// Extracts the final diagnostic line and the deepest offending source line.
pub fn parse_traceback(stderr: &str) -> ErrorMessage {
    parse_traceback_in(stderr, None)
}

/// Like [`parse_traceback`], but when `script` is given the deepest frame in
/// that file wins over deeper frames inside library code.
pub fn parse_traceback_in(stderr: &str, script: Option<&str>) -> ErrorMessage {
    let lines: Vec<&str> = stderr.lines().collect();
    if lines.iter().all(|l| l.trim().is_empty()) {
        return ErrorMessage::new(ErrorType::Other, NO_DIAGNOSTIC);
    }

    let diag = lines
        .iter()
        .enumerate()
        .rev()
        .find(|(_, l)| diagnostic_re().is_match(l));
    let Some((diag_idx, diag_line)) = diag else {
        let tail: Vec<&str> = lines
            .iter()
            .rev()
            .filter(|l| !l.trim().is_empty())
            .take(RAW_TAIL_LINES)
            .copied()
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        return ErrorMessage::new(ErrorType::Other, tail.join("\n"));
    };

    let frames = frames(&lines[..diag_idx]);
    let frame = script
        .and_then(|s| frames.iter().rev().find(|f| f.file == s || f.file.ends_with(&format!("/{s}"))))
        .or_else(|| frames.last());

    let head = diag_line.split(':').next().unwrap_or(diag_line);
    let error_type = classify_error(head);
    let mut description = diag_line.trim_end().to_string();
    if let Some(f) = frame {
        match &f.source {
            Some(src) => description.push_str(&format!("\nline {}: {}", f.line, src)),
            None => description.push_str(&format!("\nline {}", f.line)),
        }
    }
    ErrorMessage::new(error_type, description)
}

fn frames(lines: &[&str]) -> Vec<Frame> {
    let mut out = Vec::new();
    for (i, l) in lines.iter().enumerate() {
        let Some(c) = frame_re().captures(l) else { continue };
        let frame_indent = l.len() - l.trim_start().len();
        // the next line, when more indented and not another frame, is the source
        let source = lines.get(i + 1).and_then(|next| {
            let ind = next.len() - next.trim_start().len();
            let text = next.trim();
            if ind > frame_indent && !text.is_empty() && !frame_re().is_match(next) && !is_marker(text) {
                Some(text.to_string())
            } else {
                None
            }
        });
        out.push(Frame {
            file: c[1].to_string(),
            line: c[2].parse().unwrap_or(0),
            source,
        });
    }
    out
}

fn is_marker(text: &str) -> bool {
    text.chars().all(|c| matches!(c, '^' | '~' | ' '))
}
