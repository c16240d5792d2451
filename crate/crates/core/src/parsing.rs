//! Shared pieces for reading structured model output and re-asking on
//! malformed responses.

use std::fmt;

use crate::llm::{ChatRequest, GatewayError, LlmClient, Message};

/// Removes list bullets, heading hashes and bold markers from the front of a line.
fn strip_line_markers(line: &str) -> &str {
    let mut s = line.trim_start();
    loop {
        let before = s.len();
        s = s.trim_start_matches(['-', '*', '#', '•', '>']).trim_start();
        if s.len() == before {
            return s;
        }
    }
}

/// If `line` opens slot `label` (`- Label: rest`, `#### Label:`,
/// `**Label**: rest`, case-insensitive), returns the rest of the line.
fn match_label<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let s = strip_line_markers(line);
    let head = s.get(..label.len())?;
    if !head.eq_ignore_ascii_case(label) {
        return None;
    }
    let rest = s[label.len()..].trim_start_matches('*').trim_start();
    let rest = rest.strip_prefix(':')?;
    Some(rest.trim_start_matches('*').trim())
}

/// Splits `text` into the values of the given slots. A slot value runs from
/// its label to the next line that opens any of the labels. The first
/// occurrence of each label wins; missing labels map to `None`.
pub fn extract_slots(text: &str, labels: &[&str]) -> Vec<Option<String>> {
    let mut values: Vec<Option<Vec<String>>> = vec![None; labels.len()];
    let mut current: Option<usize> = None;
    for line in text.lines() {
        let opened = labels
            .iter()
            .enumerate()
            .find_map(|(i, l)| match_label(line, l).map(|rest| (i, rest)));
        match opened {
            Some((i, rest)) => {
                if values[i].is_none() {
                    values[i] = Some(vec![rest.to_string()]);
                    current = Some(i);
                } else {
                    current = None;
                }
            }
            None => {
                if let Some(lines) = current.and_then(|i| values[i].as_mut()) {
                    lines.push(line.to_string());
                }
            }
        }
    }
    values
        .into_iter()
        .map(|v| v.map(|lines| lines.join("\n").trim().to_string()))
        .collect()
}

/// Strips decoration models put around short slot values:
/// `{{Happy}}`, `[Happy]`, `**Defect.**`, `"cooperate"`.
pub fn clean_token(s: &str) -> String {
    s.trim()
        .trim_matches(|c: char| matches!(c, '{' | '}' | '[' | ']' | '*' | '"' | '\'' | '`' | '<' | '>' | '.' | '!' | ',' | ';'))
        .trim()
        .to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub enum AskError<E> {
    Gateway(GatewayError),
    /// Still malformed after every re-ask; carries the last parse failure.
    Parse { error: E, attempts: u32 },
}

/// Sends `base`, parsing the reply with `parse`. On a parse failure the
/// request is re-sent up to `retries` times with the bad reply and a
/// corrective instruction appended.
pub fn ask<T, E, F>(
    client: &LlmClient,
    base: &ChatRequest,
    retries: u32,
    parse: F,
) -> Result<(T, String), AskError<E>>
where
    E: fmt::Display,
    F: Fn(&str) -> Result<T, E>,
{
    let mut req = base.clone();
    let mut attempt = 0;
    loop {
        attempt += 1;
        let raw = client.complete(&req).map_err(AskError::Gateway)?;
        match parse(&raw) {
            Ok(v) => return Ok((v, raw)),
            Err(error) if attempt > retries => return Err(AskError::Parse { error, attempts: attempt }),
            Err(error) => {
                req = base.clone();
                req.messages.push(Message::assistant(raw));
                req.messages.push(Message::user(format!(
                    "Your previous response could not be used: {error}. Respond again and follow the required response template exactly."
                )));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{MockBackend, PurposeTag};

    #[test]
    fn slots_accept_common_decorations() {
        let text = "intro\n- Observed Behavior: calm\nmore detail\n**Inferred Personality Traits**: Trust\n### Reason:\nbecause\nof this";
        let v = extract_slots(text, &["Observed Behavior", "Inferred Personality Traits", "Reason"]);
        assert_eq!(v[0].as_deref(), Some("calm\nmore detail"));
        assert_eq!(v[1].as_deref(), Some("Trust"));
        assert_eq!(v[2].as_deref(), Some("because\nof this"));
    }

    #[test]
    fn missing_slot_is_none() {
        let v = extract_slots("- Answer: B", &["Reason", "Answer"]);
        assert_eq!(v, vec![None, Some("B".to_string())]);
    }

    #[test]
    fn label_prefix_must_end_in_colon() {
        let v = extract_slots("Reasoning is hard\n- Reason: ok", &["Reason"]);
        assert_eq!(v[0].as_deref(), Some("ok"));
    }

    #[test]
    fn clean_token_strips_wrappers() {
        assert_eq!(clean_token(" {{Happy}} "), "Happy");
        assert_eq!(clean_token("**Defect.**"), "Defect");
        assert_eq!(clean_token("\"cooperate\""), "cooperate");
    }

    #[test]
    fn ask_retries_then_gives_up() {
        let client = LlmClient::from_backend(MockBackend::scripted(["bad", "bad", "ok"]));
        let base = ChatRequest::new("m", PurposeTag::Memory, 0.0).system("s").user("u");
        let parse = |s: &str| if s == "ok" { Ok(1) } else { Err("nope") };
        let (v, raw) = ask(&client, &base, 3, parse).unwrap();
        assert_eq!((v, raw.as_str()), (1, "ok"));
        let records = client.records();
        assert_eq!(records.len(), 3);
        assert_eq!(records[2].request.messages.len(), 4);

        let client = LlmClient::from_backend(MockBackend::scripted(["bad"; 4]));
        let err = ask(&client, &base, 3, parse).unwrap_err();
        assert_eq!(err, AskError::Parse { error: "nope", attempts: 4 });
    }
}
