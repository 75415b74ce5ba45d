//! The action-primitive language: `move to <id>`, `grasp 1`, `grasp 0`,
//! `pour`, `stir`. Primitives are separated by newlines or the word `and`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Primitive {
    Move { target: String },
    Grasp { engage: bool },
    Pour,
    Stir,
}

impl Primitive {
    pub fn move_to(target: impl Into<String>) -> Self {
        Primitive::Move { target: target.into() }
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Primitive::Move { target } => write!(f, "move to {target}"),
            Primitive::Grasp { engage } => write!(f, "grasp {}", u8::from(*engage)),
            Primitive::Pour => f.write_str("pour"),
            Primitive::Stir => f.write_str("stir"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimitiveSeq {
    pub primitives: Vec<Primitive>,
    /// Text of the subtask that produced the sequence.
    #[serde(default)]
    pub provenance: String,
}

impl PrimitiveSeq {
    pub fn new(primitives: Vec<Primitive>) -> Self {
        PrimitiveSeq { primitives, provenance: String::new() }
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DslError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("static check failed at primitive {index}: {message}")]
    StaticCheck { index: usize, message: String },
}

/// Parses primitive text. Keywords are case-insensitive; target ids are kept verbatim.
pub fn parse_primitives(text: &str) -> Result<PrimitiveSeq, DslError> {
    let mut out = Vec::new();
    for (li, line) in text.lines().enumerate() {
        let tokens: Vec<(usize, &str)> = tokenize(line);
        let mut i = 0;
        while i < tokens.len() {
            let (col, tok) = tokens[i];
            let err = |column: usize, message: String| DslError::Syntax {
                line: li + 1,
                column: column + 1,
                message,
            };
            match tok.to_ascii_lowercase().as_str() {
                "and" => {
                    if out.is_empty() || i + 1 == tokens.len() {
                        return Err(err(col, "dangling 'and'".into()));
                    }
                    i += 1;
                }
                "move" => {
                    match tokens.get(i + 1) {
                        Some((_, t)) if t.eq_ignore_ascii_case("to") => {}
                        Some((c, t)) => return Err(err(*c, format!("expected 'to', found '{t}'"))),
                        None => return Err(err(col + tok.len(), "expected 'to'".into())),
                    }
                    let start = i + 2;
                    let mut end = start;
                    while end < tokens.len() && !tokens[end].1.eq_ignore_ascii_case("and") {
                        end += 1;
                    }
                    if start == end {
                        return Err(err(col, "move needs a target".into()));
                    }
                    let target = tokens[start..end].iter().map(|t| t.1).collect::<Vec<_>>().join(" ");
                    out.push(Primitive::Move { target });
                    i = end;
                }
                "grasp" => {
                    let engage = match tokens.get(i + 1).map(|t| t.1) {
                        Some("1") => true,
                        Some("0") => false,
                        Some(other) => {
                            return Err(err(tokens[i + 1].0, format!("grasp takes 0 or 1, found '{other}'")))
                        }
                        None => return Err(err(col + tok.len(), "grasp takes 0 or 1".into())),
                    };
                    out.push(Primitive::Grasp { engage });
                    i += 2;
                }
                "pour" => {
                    out.push(Primitive::Pour);
                    i += 1;
                }
                "stir" => {
                    out.push(Primitive::Stir);
                    i += 1;
                }
                other => return Err(err(col, format!("unknown primitive '{other}'"))),
            }
        }
    }
    let seq = PrimitiveSeq::new(out);
    static_check(&seq, None)?;
    Ok(seq)
}

fn tokenize(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s, &line[s..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s, &line[s..]));
    }
    out
}

/// Canonical one-primitive-per-line text.
pub fn render_primitives(seq: &PrimitiveSeq) -> String {
    seq.primitives.iter().map(|p| p.to_string()).collect::<Vec<_>>().join("\n")
}

/// Checks grasp alternation and that pour/stir happen with the gripper engaged.
/// `engaged` is the gripper state before the sequence; `None` means unknown, in
/// which case only facts established inside the sequence are checked.
pub fn static_check(seq: &PrimitiveSeq, engaged: Option<bool>) -> Result<(), DslError> {
    let mut state = engaged;
    for (index, p) in seq.primitives.iter().enumerate() {
        match p {
            Primitive::Grasp { engage } => {
                if state == Some(*engage) {
                    let message = format!("gripper already {}", if *engage { "closed" } else { "open" });
                    return Err(DslError::StaticCheck { index, message });
                }
                state = Some(*engage);
            }
            Primitive::Pour | Primitive::Stir if state == Some(false) => {
                return Err(DslError::StaticCheck { index, message: format!("{p} with open gripper") });
            }
            Primitive::Move { target } if target.trim().is_empty() => {
                return Err(DslError::StaticCheck { index, message: "empty move target".into() });
            }
            _ => {}
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn move_and_grasp() {
        let s = parse_primitives("move to cuboid and grasp 1").unwrap();
        assert_eq!(s.primitives, vec![Primitive::move_to("cuboid"), Primitive::Grasp { engage: true }]);
        let s = parse_primitives("grasp 0").unwrap();
        assert_eq!(s.primitives, vec![Primitive::Grasp { engage: false }]);
    }

    #[test]
    fn keywords_are_case_insensitive() {
        let s = parse_primitives("MOVE TO petri_dish\nPour").unwrap();
        assert_eq!(s.primitives, vec![Primitive::move_to("petri_dish"), Primitive::Pour]);
    }

    #[test]
    fn render_is_one_per_line() {
        let s = PrimitiveSeq::new(vec![Primitive::move_to("beaker"), Primitive::Pour]);
        assert_eq!(render_primitives(&s), "move to beaker\npour");
        assert_eq!(render_primitives(&PrimitiveSeq::default()), "");
    }

    #[test]
    fn syntax_errors_carry_position() {
        assert_eq!(
            parse_primitives("move to beaker\n  jump"),
            Err(DslError::Syntax { line: 2, column: 3, message: "unknown primitive 'jump'".into() })
        );
        assert!(matches!(parse_primitives("grasp 2"), Err(DslError::Syntax { line: 1, column: 7, .. })));
        assert!(matches!(parse_primitives("move beaker"), Err(DslError::Syntax { .. })));
    }

    #[test]
    fn static_checks() {
        assert!(matches!(
            parse_primitives("grasp 1\ngrasp 1"),
            Err(DslError::StaticCheck { index: 1, .. })
        ));
        assert!(matches!(parse_primitives("grasp 0\npour"), Err(DslError::StaticCheck { index: 1, .. })));
        let s = PrimitiveSeq::new(vec![Primitive::Stir]);
        assert!(static_check(&s, None).is_ok());
        assert!(static_check(&s, Some(false)).is_err());
    }
}
