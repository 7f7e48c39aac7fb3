//! Ingestion, normalization, labeling, and splitting of dyadic sessions.
//!
//! A session is one conversation between the rated speaker (the target) and
//! their partner. After normalization the turns strictly alternate and the
//! target both opens and closes the conversation, so a session with `M`
//! target turns carries exactly `M - 1` partner turns.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Target,
    Partner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    C0,
    C1,
}

impl std::fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClassLabel::C0 => write!(f, "C0"),
            ClassLabel::C1 => write!(f, "C1"),
        }
    }
}

impl std::str::FromStr for ClassLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "C0" => Ok(ClassLabel::C0),
            "C1" => Ok(ClassLabel::C1),
            other => Err(Error::invalid(format!("unknown class label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    #[serde(skip)]
    pub tokens: Vec<String>,
}

impl Turn {
    pub fn new(speaker: Speaker, text: impl Into<String>) -> Self {
        Turn {
            speaker,
            text: text.into(),
            tokens: Vec::new(),
        }
    }
}

/// One rated conversation. The JSON Lines writer emits the fields in
/// declaration order; `class` is present only on labeled corpora.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub couple_id: String,
    pub session_id: String,
    pub rated_role: String,
    pub rating: f64,
    pub outcome: Option<i32>,
    #[serde(rename = "class", default, skip_serializing_if = "Option::is_none")]
    pub class_label: Option<ClassLabel>,
    pub turns: Vec<Turn>,
}

impl Session {
    pub fn target_turns(&self) -> impl Iterator<Item = &Turn> {
        self.turns.iter().filter(|t| t.speaker == Speaker::Target)
    }

    pub fn partner_turns(&self) -> impl Iterator<Item = &Turn> {
        self.turns.iter().filter(|t| t.speaker == Speaker::Partner)
    }

    /// Number of target turns (`M`).
    pub fn target_count(&self) -> usize {
        self.target_turns().count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Couple {
    pub couple_id: String,
    pub sessions: Vec<Session>,
    pub outcome: Option<i32>,
}

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub couples: Vec<Couple>,
    pub percentile: f64,
}

impl LabeledDataset {
    pub fn sessions(&self) -> impl Iterator<Item = &Session> {
        self.couples.iter().flat_map(|c| c.sessions.iter())
    }

    pub fn couple_ids(&self) -> Vec<String> {
        self.couples.iter().map(|c| c.couple_id.clone()).collect()
    }

    /// Dataset restricted to the given couples, preserving order.
    pub fn subset(&self, keep: &[String]) -> LabeledDataset {
        LabeledDataset {
            couples: self
                .couples
                .iter()
                .filter(|c| keep.iter().any(|k| *k == c.couple_id))
                .cloned()
                .collect(),
            percentile: self.percentile,
        }
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let mut c0 = 0;
        let mut c1 = 0;
        for s in self.sessions() {
            match s.class_label {
                Some(ClassLabel::C0) => c0 += 1,
                Some(ClassLabel::C1) => c1 += 1,
                None => {}
            }
        }
        (c0, c1)
    }
}

/// Parse a JSON Lines session file. Keeps turn order; performs no
/// normalization. Errors name the offending line.
pub fn load_sessions(path: &Path) -> Result<Vec<Session>> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut sessions = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let session: Session = serde_json::from_str(&line).map_err(|e| {
            let msg = e.to_string();
            // Surface schema violations as "missing field: <name>".
            if let Some(rest) = msg.strip_prefix("missing field `") {
                if let Some(field) = rest.split('`').next() {
                    return Error::MissingField {
                        line: lineno,
                        field: field.to_string(),
                    };
                }
            }
            Error::parse(lineno, msg)
        })?;
        if !(1.0..=9.0).contains(&session.rating) {
            return Err(Error::parse(
                lineno,
                format!("rating {} outside [1, 9]", session.rating),
            ));
        }
        sessions.push(session);
    }
    Ok(sessions)
}

/// Write sessions as JSON Lines, one object per line, keys in schema order.
pub fn write_sessions(path: &Path, sessions: &[Session]) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    for s in sessions {
        let line = serde_json::to_string(s)
            .map_err(|e| Error::Computation(format!("serialize session: {e}")))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Lowercase, strip everything but alphanumerics and apostrophes, split on
/// whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '\'' { c } else { ' ' })
        .collect();
    cleaned.split_whitespace().map(str::to_string).collect()
}

/// Normalize a session: tokenize every turn, drop turns left without
/// tokens, merge consecutive same-speaker turns (texts joined with a
/// space), and trim leading/trailing partner turns so the target both opens
/// and closes the conversation.
pub fn normalize_session(session: &Session) -> Result<Session> {
    let mut turns: Vec<Turn> = Vec::new();
    for raw in &session.turns {
        let tokens = tokenize(&raw.text);
        if tokens.is_empty() {
            continue;
        }
        match turns.last_mut() {
            Some(prev) if prev.speaker == raw.speaker => {
                prev.text.push(' ');
                prev.text.push_str(raw.text.trim());
                prev.tokens.extend(tokens);
            }
            _ => turns.push(Turn {
                speaker: raw.speaker,
                text: raw.text.trim().to_string(),
                tokens,
            }),
        }
    }
    while turns.first().map(|t| t.speaker) == Some(Speaker::Partner) {
        turns.remove(0);
    }
    while turns.last().map(|t| t.speaker) == Some(Speaker::Partner) {
        turns.pop();
    }
    if turns.is_empty() {
        return Err(Error::invalid(format!(
            "session {}: no rated-speaker content",
            session.session_id
        )));
    }
    // Canonical text is the tokenized form, so normalization is idempotent.
    for t in &mut turns {
        t.text = t.tokens.join(" ");
    }
    Ok(Session {
        turns,
        ..session.clone()
    })
}

/// Label sessions by a symmetric percentile cut over all ratings.
///
/// With `k = ceil(pct/100 * n)`, sessions rated at or below the k-th
/// smallest rating become C0 and sessions at or above the k-th largest
/// become C1; ties at either cut are included, everything between is
/// discarded. Couples are assembled in order of first appearance.
pub fn binarize_by_percentile(sessions: &[Session], pct: f64) -> Result<LabeledDataset> {
    if !(pct > 0.0 && pct < 50.0) {
        return Err(Error::invalid(format!(
            "percentile must be in (0, 50), got {pct}"
        )));
    }
    if sessions.is_empty() {
        return Err(Error::invalid("no sessions to binarize"));
    }
    let mut ratings: Vec<f64> = sessions.iter().map(|s| s.rating).collect();
    ratings.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = ratings.len();
    let k = ((pct / 100.0 * n as f64).ceil() as usize).max(1);
    let low_cut = ratings[k - 1];
    let high_cut = ratings[n - k];
    if low_cut >= high_cut {
        return Err(Error::invalid(format!(
            "degenerate percentile cut: low cut {low_cut} >= high cut {high_cut}"
        )));
    }

    let mut order: Vec<String> = Vec::new();
    let mut grouped: HashMap<String, (Vec<Session>, Option<i32>)> = HashMap::new();
    let mut c0 = 0usize;
    let mut c1 = 0usize;
    for s in sessions {
        let label = if s.rating <= low_cut {
            ClassLabel::C0
        } else if s.rating >= high_cut {
            ClassLabel::C1
        } else {
            continue;
        };
        match label {
            ClassLabel::C0 => c0 += 1,
            ClassLabel::C1 => c1 += 1,
        }
        let mut labeled = s.clone();
        labeled.class_label = Some(label);
        let entry = grouped.entry(s.couple_id.clone()).or_insert_with(|| {
            order.push(s.couple_id.clone());
            (Vec::new(), None)
        });
        if let Some(o) = labeled.outcome {
            match entry.1 {
                None => entry.1 = Some(o),
                Some(existing) if existing != o => {
                    return Err(Error::invalid(format!(
                        "couple {}: conflicting outcomes {existing} and {o}",
                        s.couple_id
                    )));
                }
                _ => {}
            }
        }
        entry.0.push(labeled);
    }
    if c0 < 2 || c1 < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 sessions per class after the cut, got {c0} C0 / {c1} C1"
        )));
    }
    let couples = order
        .into_iter()
        .map(|id| {
            let (sessions, outcome) = grouped.remove(&id).unwrap();
            Couple {
                couple_id: id,
                sessions,
                outcome,
            }
        })
        .collect();
    Ok(LabeledDataset {
        couples,
        percentile: pct,
    })
}

/// Group sessions into couples by id, in order of first appearance.
/// Conflicting non-null outcomes within a couple are rejected.
pub fn group_couples(sessions: &[Session]) -> Result<Vec<Couple>> {
    let mut order: Vec<String> = Vec::new();
    let mut grouped: HashMap<String, (Vec<Session>, Option<i32>)> = HashMap::new();
    for s in sessions {
        let entry = grouped.entry(s.couple_id.clone()).or_insert_with(|| {
            order.push(s.couple_id.clone());
            (Vec::new(), None)
        });
        if let Some(o) = s.outcome {
            match entry.1 {
                None => entry.1 = Some(o),
                Some(existing) if existing != o => {
                    return Err(Error::invalid(format!(
                        "couple {}: conflicting outcomes {existing} and {o}",
                        s.couple_id
                    )));
                }
                _ => {}
            }
        }
        entry.0.push(s.clone());
    }
    Ok(order
        .into_iter()
        .map(|id| {
            let (sessions, outcome) = grouped.remove(&id).unwrap();
            Couple {
                couple_id: id,
                sessions,
                outcome,
            }
        })
        .collect())
}

/// Leave-one-couple-out splits: one `(test, train)` pair per couple.
pub fn loco_splits(ds: &LabeledDataset) -> Result<Vec<(String, Vec<String>)>> {
    if ds.couples.len() < 3 {
        return Err(Error::invalid(format!(
            "leave-one-couple-out needs at least 3 couples, got {}",
            ds.couples.len()
        )));
    }
    Ok(ds
        .couples
        .iter()
        .map(|test| {
            let train = ds
                .couples
                .iter()
                .filter(|c| c.couple_id != test.couple_id)
                .map(|c| c.couple_id.clone())
                .collect();
            (test.couple_id.clone(), train)
        })
        .collect())
}
