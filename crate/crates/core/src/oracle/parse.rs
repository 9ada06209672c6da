//! Reply parsing. Prompts request machine-readable formats; anything else is
//! a protocol error carrying the raw reply.

use std::sync::LazyLock;

use regex::Regex;

use super::{OracleError, Verdict};

/// Case-insensitive match on the first word of the reply.
pub fn parse_verdict(reply: &str) -> Result<Verdict, OracleError> {
    let token: String = reply
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .chars()
        .take_while(|c| c.is_alphanumeric())
        .collect::<String>()
        .to_lowercase();
    match token.as_str() {
        "yes" => Ok(Verdict::Yes),
        "no" => Ok(Verdict::No),
        _ => Err(OracleError::Protocol {
            message: "expected a reply starting with Yes or No".into(),
            raw_reply: reply.to_string(),
        }),
    }
}

static LINE_MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^[ \t]*(\d{1,3})[.)]").unwrap());
static INLINE_MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?:^|\s)(\d{1,3})[.)]").unwrap());

/// Spans of the markers `1.`, `2.`, ... in order, skipping any candidate
/// that is out of sequence or rejected by `accept(rest_of_reply)`.
fn sequential_markers(reply: &str, marker: &Regex, accept: impl Fn(&str) -> bool) -> Vec<(usize, usize)> {
    let mut bounds = Vec::new();
    let mut expected = 1usize;
    for caps in marker.captures_iter(reply) {
        let n: usize = caps[1].parse().expect("digits");
        let m = caps.get(0).expect("whole match");
        if n == expected && accept(&reply[m.end()..]) {
            bounds.push((m.start(), m.end()));
            expected += 1;
        }
    }
    bounds
}

/// Parses `1. first 2. second ...`, inline or one item per line. Markers
/// must count up from 1; text before the first marker is ignored.
///
/// Markers at line starts win when there are at least as many of them as
/// inline ones, so a sentence ending in "of 2." on its own line is not
/// split. An inline marker must be followed by a space and more text.
pub fn parse_numbered_list(reply: &str) -> Result<Vec<String>, OracleError> {
    let line = sequential_markers(reply, &LINE_MARKER, |rest| rest.chars().next().is_none_or(char::is_whitespace));
    let inline = sequential_markers(reply, &INLINE_MARKER, |rest| {
        rest.starts_with([' ', '\t']) && rest.trim_start_matches([' ', '\t']).chars().next().is_some_and(|c| c != '\n' && c != '\r')
    });
    let bounds = if inline.len() > line.len() { inline } else { line };
    if bounds.is_empty() {
        return Err(OracleError::Protocol { message: "expected a numbered list".into(), raw_reply: reply.to_string() });
    }
    let mut items = Vec::with_capacity(bounds.len());
    for (i, &(_, body_start)) in bounds.iter().enumerate() {
        let end = bounds.get(i + 1).map_or(reply.len(), |b| b.0);
        let item = reply[body_start..end].split_whitespace().collect::<Vec<_>>().join(" ");
        if item.is_empty() {
            return Err(OracleError::Protocol {
                message: format!("numbered list item {} is empty", i + 1),
                raw_reply: reply.to_string(),
            });
        }
        items.push(item);
    }
    Ok(items)
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// First `cap` whitespace-separated words joined by single spaces.
pub fn truncate_words(text: &str, cap: usize) -> String {
    text.split_whitespace().take(cap).collect::<Vec<_>>().join(" ")
}
