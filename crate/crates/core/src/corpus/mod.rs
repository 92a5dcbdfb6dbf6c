//! Sessions, transcript ingestion, vocabulary and embeddings.

mod embedding;
mod jsonl;
mod text;
mod vocab;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use embedding::{load_embeddings, EmbeddingCoverage, EmbeddingTable, PretrainedVectors, DEFAULT_EMBEDDING_DIM};
pub use jsonl::{parse_session_jsonl, read_session_jsonl, write_session_jsonl, ParseOptions};
pub use text::{clean_transcript, tokenize};
pub use vocab::{build_vocabulary, Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Therapist,
    Client,
}

/// Binary session label. The class index doubles as the classifier output
/// index, with `NotDepressed` first so that ties resolve to it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    NotDepressed,
    Depressed,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::NotDepressed, Label::Depressed];

    pub fn index(self) -> usize {
        match self {
            Label::NotDepressed => 0,
            Label::Depressed => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Label> {
        match index {
            0 => Some(Label::NotDepressed),
            1 => Some(Label::Depressed),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::NotDepressed => "not_depressed",
            Label::Depressed => "depressed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub tokens: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub turns: Vec<Turn>,
    pub summary: Option<Vec<String>>,
    pub label: Option<Label>,
}

impl Session {
    pub fn require_label(&self) -> Result<Label> {
        self.label
            .ok_or_else(|| Error::InvalidArgument(format!("session `{}` has no label", self.id)))
    }

    pub fn token_count(&self) -> usize {
        self.turns.iter().map(|t| t.tokens.len()).sum()
    }
}

/// Which speaker's turns a model or statistic sees.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    #[default]
    Client,
    Therapist,
    Both,
}

impl View {
    pub fn as_str(self) -> &'static str {
        match self {
            View::Client => "client",
            View::Therapist => "therapist",
            View::Both => "both",
        }
    }

    pub fn includes(self, speaker: Speaker) -> bool {
        match self {
            View::Both => true,
            View::Client => speaker == Speaker::Client,
            View::Therapist => speaker == Speaker::Therapist,
        }
    }
}

impl std::str::FromStr for View {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "client" => Ok(View::Client),
            "therapist" => Ok(View::Therapist),
            "both" | "client+therapist" => Ok(View::Both),
            other => Err(Error::InvalidArgument(format!("unknown view `{other}`"))),
        }
    }
}

/// Keeps only the turns of the selected speaker(s), in their original order.
pub fn select_view(session: &Session, view: View) -> Result<Session> {
    if view == View::Both {
        return Ok(session.clone());
    }
    let turns: Vec<Turn> = session
        .turns
        .iter()
        .filter(|t| view.includes(t.speaker))
        .cloned()
        .collect();
    if turns.is_empty() {
        return Err(Error::EmptyView(session.id.clone()));
    }
    Ok(Session {
        id: session.id.clone(),
        turns,
        summary: session.summary.clone(),
        label: session.label,
    })
}
