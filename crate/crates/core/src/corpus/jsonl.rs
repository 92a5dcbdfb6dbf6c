use std::path::Path;

use serde::{Deserialize, Serialize};

use super::text::{clean_transcript, tokenize};
use super::{Label, Session, Speaker, Turn};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParseOptions {
    pub require_labels: bool,
    /// PHQ-8 score at or above which a record without an explicit label is
    /// considered depressed.
    pub phq8_threshold: i64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            require_labels: true,
            phq8_threshold: 10,
        }
    }
}

#[derive(Deserialize)]
struct RawSession {
    id: String,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    phq8: Option<i64>,
    #[serde(default)]
    summary: Option<String>,
    turns: Vec<RawTurn>,
}

#[derive(Deserialize)]
struct RawTurn {
    speaker: String,
    text: String,
}

const CONTEXT: &str = "session jsonl";

/// Parses one session per line. Blank lines are skipped; turns whose text
/// cleans to nothing are dropped.
pub fn parse_session_jsonl(bytes: &[u8], options: ParseOptions) -> Result<Vec<Session>> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::parse(CONTEXT, 0, format!("invalid UTF-8: {e}")))?;
    let mut sessions = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawSession =
            serde_json::from_str(line).map_err(|e| Error::parse(CONTEXT, line_no, e.to_string()))?;
        sessions.push(convert(raw, options, line_no)?);
    }
    Ok(sessions)
}

pub fn read_session_jsonl(path: &Path, options: ParseOptions) -> Result<Vec<Session>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_session_jsonl(&bytes, options)
}

fn convert(raw: RawSession, options: ParseOptions, line: usize) -> Result<Session> {
    let label = match (raw.label.as_deref(), raw.phq8) {
        (Some("depressed"), _) => Some(Label::Depressed),
        (Some("not_depressed"), _) => Some(Label::NotDepressed),
        (Some(other), _) => {
            return Err(Error::parse(CONTEXT, line, format!("unknown label `{other}`")));
        }
        (None, Some(score)) if score >= options.phq8_threshold => Some(Label::Depressed),
        (None, Some(_)) => Some(Label::NotDepressed),
        (None, None) => None,
    };
    if label.is_none() && options.require_labels {
        return Err(Error::parse(CONTEXT, line, format!("session `{}` has no label", raw.id)));
    }

    let mut turns = Vec::with_capacity(raw.turns.len());
    for turn in raw.turns {
        let speaker = match turn.speaker.as_str() {
            "therapist" => Speaker::Therapist,
            "client" => Speaker::Client,
            other => {
                return Err(Error::parse(CONTEXT, line, format!("unknown speaker `{other}`")));
            }
        };
        let tokens = tokenize(&clean_transcript(&turn.text));
        if !tokens.is_empty() {
            turns.push(Turn { speaker, tokens });
        }
    }
    if turns.is_empty() {
        return Err(Error::parse(
            CONTEXT,
            line,
            format!("session `{}` has no non-empty turns", raw.id),
        ));
    }

    let summary = raw
        .summary
        .map(|s| tokenize(&clean_transcript(&s)))
        .filter(|t| !t.is_empty());

    Ok(Session {
        id: raw.id,
        turns,
        summary,
        label,
    })
}

#[derive(Serialize)]
struct OutSession<'a> {
    id: &'a str,
    label: Option<&'static str>,
    phq8: Option<i64>,
    summary: Option<String>,
    turns: Vec<OutTurn<'a>>,
}

#[derive(Serialize)]
struct OutTurn<'a> {
    speaker: &'a Speaker,
    text: String,
}

/// Serialises sessions back to the JSONL schema with space-joined tokens.
pub fn write_session_jsonl(sessions: &[Session]) -> Result<String> {
    let mut out = String::new();
    for s in sessions {
        let record = OutSession {
            id: &s.id,
            label: s.label.map(Label::as_str),
            phq8: None,
            summary: s.summary.as_ref().map(|t| t.join(" ")),
            turns: s
                .turns
                .iter()
                .map(|t| OutTurn {
                    speaker: &t.speaker,
                    text: t.tokens.join(" "),
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&record)?);
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = concat!(
        r#"{"id":"a","label":"depressed","phq8":null,"summary":"Grief and loss","turns":[{"speaker":"therapist","text":"THERAPIST: How are you?"},{"speaker":"client","text":"CLIENT: Tired [sighs]."}]}"#,
        "\n",
        r#"{"id":"b","label":"not_depressed","extra":42,"turns":[{"speaker":"client","text":"fine"}]}"#,
        "\n"
    );

    #[test]
    fn parses_in_order() {
        let sessions = parse_session_jsonl(TWO.as_bytes(), ParseOptions::default()).unwrap();
        assert_eq!(sessions.len(), 2);
        assert_eq!(sessions[0].id, "a");
        assert_eq!(sessions[1].id, "b");
        assert_eq!(sessions[0].turns[1].tokens, ["tired", "."]);
        assert_eq!(
            sessions[0].summary.as_deref(),
            Some(&["grief".to_string(), "and".into(), "loss".into()][..])
        );
        assert_eq!(sessions[1].summary, None);
    }

    #[test]
    fn unknown_speaker_reports_line() {
        let bad = format!(
            "{}\n{}\n",
            r#"{"id":"a","label":"depressed","turns":[{"speaker":"client","text":"hi"}]}"#,
            r#"{"id":"b","label":"depressed","turns":[{"speaker":"X","text":"hi"}]}"#
        );
        match parse_session_jsonl(bad.as_bytes(), ParseOptions::default()) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("speaker"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line() {
        let bad = "\n{not json}\n";
        assert!(matches!(
            parse_session_jsonl(bad.as_bytes(), ParseOptions::default()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn empty_turn_is_dropped() {
        let line = r#"{"id":"a","label":"depressed","turns":[{"speaker":"client","text":"CLIENT: [inaudible]"},{"speaker":"therapist","text":"ok"}]}"#;
        let s = parse_session_jsonl(line.as_bytes(), ParseOptions::default()).unwrap();
        assert_eq!(s[0].turns.len(), 1);
        assert_eq!(s[0].turns[0].speaker, Speaker::Therapist);
    }

    #[test]
    fn labels_from_phq8_and_missing_labels() {
        let line = |phq: &str| {
            format!(r#"{{"id":"a","label":null,"phq8":{phq},"turns":[{{"speaker":"client","text":"x"}}]}}"#)
        };
        let opts = ParseOptions::default();
        let s = parse_session_jsonl(line("10").as_bytes(), opts).unwrap();
        assert_eq!(s[0].label, Some(Label::Depressed));
        let s = parse_session_jsonl(line("9").as_bytes(), opts).unwrap();
        assert_eq!(s[0].label, Some(Label::NotDepressed));
        assert!(parse_session_jsonl(line("null").as_bytes(), opts).is_err());
        let lenient = ParseOptions {
            require_labels: false,
            ..opts
        };
        let s = parse_session_jsonl(line("null").as_bytes(), lenient).unwrap();
        assert_eq!(s[0].label, None);
    }

    #[test]
    fn ingestion_is_deterministic_and_round_trips() {
        let a = parse_session_jsonl(TWO.as_bytes(), ParseOptions::default()).unwrap();
        let b = parse_session_jsonl(TWO.as_bytes(), ParseOptions::default()).unwrap();
        assert_eq!(a, b);
        let written = write_session_jsonl(&a).unwrap();
        let back = parse_session_jsonl(written.as_bytes(), ParseOptions::default()).unwrap();
        assert_eq!(a, back);
    }
}
