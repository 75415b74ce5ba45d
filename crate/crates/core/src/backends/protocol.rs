//! Sectioned prompt text shared by the request builders and the rule engine.
//!
//! A section starts with a `### Name` line and runs to the next header.

use std::collections::BTreeMap;

pub fn render_sections(sections: &[(&str, &str)]) -> String {
    let mut out = String::new();
    for (name, body) in sections {
        out.push_str("### ");
        out.push_str(name);
        out.push('\n');
        let body = body.trim_end_matches('\n');
        if !body.is_empty() {
            out.push_str(body);
            out.push('\n');
        }
    }
    out
}

/// Section bodies keyed by name, trailing newlines trimmed.
pub fn parse_sections(text: &str) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut current: Option<(String, Vec<&str>)> = None;
    for line in text.lines() {
        if let Some(name) = line.strip_prefix("### ") {
            if let Some((n, body)) = current.take() {
                out.insert(n, body.join("\n"));
            }
            current = Some((name.trim().to_string(), Vec::new()));
        } else if let Some((_, body)) = current.as_mut() {
            body.push(line);
        }
    }
    if let Some((n, body)) = current {
        out.insert(n, body.join("\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_round_trip() {
        let text = render_sections(&[("Goal", "Pour water into beaker."), ("Empty", ""), ("Plan", "1. a\n2. b\n")]);
        let s = parse_sections(&text);
        assert_eq!(s["Goal"], "Pour water into beaker.");
        assert_eq!(s["Empty"], "");
        assert_eq!(s["Plan"], "1. a\n2. b");
    }
}
