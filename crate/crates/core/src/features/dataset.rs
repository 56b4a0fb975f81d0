//! In-memory dataset and its on-disk layout: a `manifest.json` plus, per song,
//! a feature container, an f0 container and an annotation file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::annotation::{parse_phone_annotations, serialize_phone_annotations, PhoneSegment};
use super::container::{read_container, write_container};
use super::matrix::FeatureMatrix;
use super::norm::{compute_norm_stats, NormStats};
use super::vocab::{frame_align, PhonemeVocab, SingerTable};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    HeldOut,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "held-out" | "heldout" | "test" => Ok(Split::HeldOut),
            other => Err(Error::config(format!("unknown split `{other}`"))),
        }
    }
}

/// One recording with everything the model needs: target features, the f0
/// contour (Hz, 0 when unvoiced) and frame-level phoneme ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Song {
    pub id: String,
    pub singer: usize,
    pub split: Split,
    pub features: FeatureMatrix,
    pub f0: Vec<f64>,
    pub segments: Vec<PhoneSegment>,
    pub phonemes: Vec<usize>,
}

impl Song {
    pub fn n_frames(&self) -> usize {
        self.features.n_frames()
    }

    /// Per-frame voicing as 0/1, derived from the f0 contour.
    pub fn vuv(&self) -> Vec<f64> {
        self.f0.iter().map(|&f| if f > 0.0 { 1.0 } else { 0.0 }).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub hop_s: f64,
    pub dim_labels: Vec<String>,
    pub vocab: PhonemeVocab,
    pub singers: SingerTable,
    pub songs: Vec<Song>,
    pub norm_stats: NormStats,
    pub source: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct SongEntry {
    id: String,
    singer: String,
    split: Split,
    frames: usize,
    features: String,
    f0: String,
    annotation: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    source: String,
    hop_s: f64,
    dim_labels: Vec<String>,
    vocab: PhonemeVocab,
    singers: SingerTable,
    norm_stats: NormStats,
    songs: Vec<SongEntry>,
}

impl Dataset {
    /// Assembles a dataset, computing norm stats over the training split.
    pub fn new(
        source: impl Into<String>,
        hop_s: f64,
        vocab: PhonemeVocab,
        singers: SingerTable,
        songs: Vec<Song>,
    ) -> Result<Self> {
        let first = songs
            .first()
            .ok_or_else(|| Error::Validation("dataset has no songs".into()))?;
        let dim_labels = first.features.dim_labels.clone();
        for s in &songs {
            if s.singer >= singers.len() {
                return Err(Error::Validation(format!(
                    "song `{}` references singer {} of {}",
                    s.id,
                    s.singer,
                    singers.len()
                )));
            }
            if s.f0.len() != s.n_frames() || s.phonemes.len() != s.n_frames() {
                return Err(Error::shape(format!(
                    "song `{}`: {} frames, {} f0 values, {} phoneme ids",
                    s.id,
                    s.n_frames(),
                    s.f0.len(),
                    s.phonemes.len()
                )));
            }
            if s.features.dim_labels != dim_labels {
                return Err(Error::shape(format!("song `{}` has a different feature layout", s.id)));
            }
        }
        let train: Vec<FeatureMatrix> = songs
            .iter()
            .filter(|s| s.split == Split::Train)
            .map(|s| s.features.clone())
            .collect();
        let norm_stats = compute_norm_stats(&train)?;
        Ok(Self {
            hop_s,
            dim_labels,
            vocab,
            singers,
            songs,
            norm_stats,
            source: source.into(),
        })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Song> {
        self.songs.iter().filter(move |s| s.split == split)
    }

    pub fn song(&self, id: &str) -> Option<&Song> {
        self.songs.iter().find(|s| s.id == id)
    }

    pub fn n_phonemes(&self) -> usize {
        self.vocab.len()
    }

    pub fn n_singers(&self) -> usize {
        self.singers.len()
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir.join("songs"))?;
        let mut entries = Vec::with_capacity(self.songs.len());
        for s in &self.songs {
            let features = format!("songs/{}.gsf", s.id);
            let f0 = format!("songs/{}.f0.gsf", s.id);
            let annotation = format!("songs/{}.txt", s.id);
            write_container(&s.features, dir.join(&features))?;
            let f0m = FeatureMatrix::new(
                s.f0.len(),
                1,
                s.f0.iter().map(|&v| v as f32).collect(),
                self.hop_s,
                vec!["f0_hz".into()],
            )?
            .with_ids(&s.id, &s.features.singer_id);
            write_container(&f0m, dir.join(&f0))?;
            fs::write(dir.join(&annotation), serialize_phone_annotations(&s.segments))?;
            entries.push(SongEntry {
                id: s.id.clone(),
                singer: self.singers.singers[s.singer].id.clone(),
                split: s.split,
                frames: s.n_frames(),
                features,
                f0,
                annotation,
            });
        }
        let manifest = Manifest {
            source: self.source.clone(),
            hop_s: self.hop_s,
            dim_labels: self.dim_labels.clone(),
            vocab: self.vocab.clone(),
            singers: self.singers.clone(),
            norm_stats: self.norm_stats.clone(),
            songs: entries,
        };
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir: PathBuf = dir.as_ref().to_path_buf();
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::format(format!("{}: {e}", dir.join(MANIFEST_FILE).display())))?;
        let mut songs = Vec::with_capacity(m.songs.len());
        for e in &m.songs {
            let features = read_container(dir.join(&e.features))?;
            let f0m = read_container(dir.join(&e.f0))?;
            if features.n_frames() != e.frames || f0m.n_frames() != e.frames || f0m.dim() != 1 {
                return Err(Error::format(format!(
                    "song `{}`: containers disagree with manifest frame count {}",
                    e.id, e.frames
                )));
            }
            let segments = parse_phone_annotations(&fs::read_to_string(dir.join(&e.annotation))?)?;
            let phonemes = frame_align(&segments, &m.vocab, m.hop_s, e.frames)?;
            let singer = m
                .singers
                .index_of(&e.singer)
                .ok_or_else(|| Error::format(format!("unknown singer `{}`", e.singer)))?;
            songs.push(Song {
                id: e.id.clone(),
                singer,
                split: e.split,
                features,
                f0: f0m.as_slice().iter().map(|&v| v as f64).collect(),
                segments,
                phonemes,
            });
        }
        Ok(Self {
            hop_s: m.hop_s,
            dim_labels: m.dim_labels,
            vocab: m.vocab,
            singers: m.singers,
            songs,
            norm_stats: m.norm_stats,
            source: m.source,
        })
    }
}
