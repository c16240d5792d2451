//! Strict prompt templates.
//!
//! A template is plain text with single-brace named placeholders (`{dialogue}`).
//! Double-brace runs such as `{{insight}}` are copied to the output verbatim,
//! braces included, because the prompts show them to the model as fill-in
//! slots. Any other `{` is a syntax error, and rendering fails when a
//! placeholder has no value.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("malformed template at byte {offset}: {reason}")]
    Syntax { offset: usize, reason: &'static str },
    #[error("no value supplied for placeholder {{{0}}}")]
    MissingValue(String),
    #[error("template uses unknown placeholder {{{0}}}")]
    UnknownPlaceholder(String),
    #[error("value for {{{0}}} is empty")]
    EmptyValue(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pieces: Vec<Piece>,
}

fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_'
}

impl Template {
    pub fn parse(src: &str) -> Result<Self, TemplateError> {
        let bytes = src.as_bytes();
        let mut pieces = Vec::new();
        let mut text = String::new();
        let mut i = 0;
        let mut run_start = 0;
        while i < bytes.len() {
            if bytes[i] != b'{' {
                i += 1;
                continue;
            }
            text.push_str(&src[run_start..i]);
            if bytes.get(i + 1) == Some(&b'{') {
                let Some(close) = src[i + 2..].find("}}") else {
                    return Err(TemplateError::Syntax {
                        offset: i,
                        reason: "unterminated '{{' literal",
                    });
                };
                let end = i + 2 + close + 2;
                text.push_str(&src[i..end]);
                i = end;
                run_start = i;
                continue;
            }
            let mut j = i + 1;
            while j < bytes.len() && is_ident_byte(bytes[j]) {
                j += 1;
            }
            if j == i + 1 || bytes.get(j) != Some(&b'}') {
                return Err(TemplateError::Syntax {
                    offset: i,
                    reason: "'{' must open a {name} placeholder or a '{{' literal",
                });
            }
            if !text.is_empty() {
                pieces.push(Piece::Text(std::mem::take(&mut text)));
            }
            pieces.push(Piece::Slot(src[i + 1..j].to_string()));
            i = j + 1;
            run_start = i;
        }
        text.push_str(&src[run_start..]);
        if !text.is_empty() {
            pieces.push(Piece::Text(text));
        }
        Ok(Self { pieces })
    }

    /// Parses and checks that every placeholder is in `allowed`.
    pub fn parse_with(src: &str, allowed: &[&str]) -> Result<Self, TemplateError> {
        let t = Self::parse(src)?;
        for name in t.placeholders() {
            if !allowed.contains(&name.as_str()) {
                return Err(TemplateError::UnknownPlaceholder(name));
            }
        }
        Ok(t)
    }

    pub fn placeholders(&self) -> BTreeSet<String> {
        self.pieces
            .iter()
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s.clone()),
                Piece::Text(_) => None,
            })
            .collect()
    }

    pub fn render(&self, values: &BTreeMap<&str, &str>) -> Result<String, TemplateError> {
        let mut out = String::new();
        for piece in &self.pieces {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => {
                    let v = values
                        .get(name.as_str())
                        .ok_or_else(|| TemplateError::MissingValue(name.clone()))?;
                    out.push_str(v);
                }
            }
        }
        Ok(out)
    }
}

/// Convenience for building the value map inline.
pub fn vars<'a, const N: usize>(pairs: [(&'a str, &'a str); N]) -> BTreeMap<&'a str, &'a str> {
    pairs.into_iter().collect()
}
