use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::annotation::PhoneSegment;
use crate::error::{Error, Result};

/// Label reserved for silence; always present in a vocabulary.
pub const SILENCE: &str = "sil";

/// Lexicographically sorted phoneme inventory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct PhonemeVocab {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl PhonemeVocab {
    /// Builds a vocabulary from arbitrary labels. Duplicates are merged and the
    /// silence label is added when missing.
    pub fn from_labels<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set: BTreeSet<String> = labels.into_iter().map(Into::into).collect();
        set.insert(SILENCE.to_string());
        let labels: Vec<String> = set.into_iter().collect();
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        Self { labels, index }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: usize) -> Option<&str> {
        self.labels.get(id).map(String::as_str)
    }

    pub fn silence_id(&self) -> usize {
        self.index[SILENCE]
    }
}

impl From<Vec<String>> for PhonemeVocab {
    fn from(labels: Vec<String>) -> Self {
        Self::from_labels(labels)
    }
}

impl From<PhonemeVocab> for Vec<String> {
    fn from(v: PhonemeVocab) -> Self {
        v.labels
    }
}

/// Collects every label across all recordings. The result does not depend on
/// the order of recordings or segments.
pub fn build_phoneme_vocab(all_segments: &[Vec<PhoneSegment>]) -> Result<PhonemeVocab> {
    if all_segments.iter().all(Vec::is_empty) {
        return Err(Error::Validation(
            "cannot build a phoneme vocabulary from zero segments".into(),
        ));
    }
    Ok(PhonemeVocab::from_labels(
        all_segments.iter().flatten().map(|s| s.label.clone()),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    Unknown,
}

impl std::str::FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f" | "female" => Ok(Gender::Female),
            "m" | "male" => Ok(Gender::Male),
            "" | "?" | "unknown" => Ok(Gender::Unknown),
            other => Err(Error::Validation(format!("unknown gender tag `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Singer {
    pub id: String,
    pub gender: Gender,
}

/// Ordered singer identities; the position is the one-hot index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct SingerTable {
    pub singers: Vec<Singer>,
}

impl SingerTable {
    pub fn new(singers: Vec<Singer>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for s in &singers {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Validation(format!("duplicate singer id `{}`", s.id)));
            }
        }
        Ok(Self { singers })
    }

    pub fn len(&self) -> usize {
        self.singers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.singers.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.singers.iter().position(|s| s.id == id)
    }

    pub fn gender(&self, idx: usize) -> Option<Gender> {
        self.singers.get(idx).map(|s| s.gender)
    }
}

/// Assigns frame `t` the phoneme whose half-open segment contains the frame
/// centre `(t + 0.5) * hop`. Frames in gaps or past the last segment are
/// silence.
pub fn frame_align(
    segments: &[PhoneSegment],
    vocab: &PhonemeVocab,
    hop: f64,
    n_frames: usize,
) -> Result<Vec<usize>> {
    if !(hop > 0.0) {
        return Err(Error::config(format!("frame hop must be positive, got {hop}")));
    }
    let ids = segments
        .iter()
        .map(|s| {
            vocab.id(&s.label).ok_or_else(|| {
                Error::Validation(format!("phoneme `{}` missing from vocabulary", s.label))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sil = vocab.silence_id();
    let mut out = Vec::with_capacity(n_frames);
    let mut cursor = 0;
    for t in 0..n_frames {
        let centre = (t as f64 + 0.5) * hop;
        while cursor < segments.len() && segments[cursor].end <= centre {
            cursor += 1;
        }
        let id = match segments.get(cursor) {
            Some(seg) if seg.contains(centre) => ids[cursor],
            _ => sil,
        };
        out.push(id);
    }
    Ok(out)
}
