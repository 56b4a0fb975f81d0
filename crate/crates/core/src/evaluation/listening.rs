//! Listening-test stimuli: per gender, one song without voice change, one
//! changed to another singer of the same gender and one changed to the
//! opposite gender, rendered for every model under blinded file names.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{Dataset, Gender, Song, Split};
use crate::inference::{synthesize_song, SongConditions, SynthOptions};
use crate::model::{ModelConfig, ModelParams};
use crate::vocoder::{write_wav, AnalysisConfig};

pub const LISTENING_HEADER: &str = "file,song,model,source_singer,target_singer,condition";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ListeningCondition {
    FemaleOriginal,
    MaleOriginal,
    FemaleToFemale,
    MaleToMale,
    FemaleToMale,
    MaleToFemale,
}

impl ListeningCondition {
    pub const ALL: [ListeningCondition; 6] = [
        ListeningCondition::FemaleOriginal,
        ListeningCondition::MaleOriginal,
        ListeningCondition::FemaleToFemale,
        ListeningCondition::MaleToMale,
        ListeningCondition::FemaleToMale,
        ListeningCondition::MaleToFemale,
    ];

    /// Source and target genders.
    pub fn genders(self) -> (Gender, Gender) {
        use ListeningCondition::*;
        match self {
            FemaleOriginal | FemaleToFemale => (Gender::Female, Gender::Female),
            MaleOriginal | MaleToMale => (Gender::Male, Gender::Male),
            FemaleToMale => (Gender::Female, Gender::Male),
            MaleToFemale => (Gender::Male, Gender::Female),
        }
    }

    pub fn is_voice_change(self) -> bool {
        !matches!(self, ListeningCondition::FemaleOriginal | ListeningCondition::MaleOriginal)
    }
}

impl fmt::Display for ListeningCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().expect("string"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListeningRow {
    pub file: String,
    pub song: String,
    pub model: String,
    pub source_singer: String,
    pub target_singer: String,
    pub condition: ListeningCondition,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl ListeningRow {
    fn to_csv(&self) -> String {
        [
            self.file.as_str(),
            &self.song,
            &self.model,
            &self.source_singer,
            &self.target_singer,
            &self.condition.to_string(),
        ]
        .map(csv_field)
        .join(",")
    }
}

struct Plan<'a> {
    song: &'a Song,
    target: usize,
    condition: ListeningCondition,
}

fn plan(data: &Dataset) -> Result<Vec<Plan<'_>>> {
    let singers_of = |g: Gender| -> Vec<usize> {
        (0..data.singers.len()).filter(|&i| data.singers.gender(i) == Some(g)).collect()
    };
    // Held-out songs are preferred as stimuli; training songs fill in.
    let songs_of = |g: Gender| -> Vec<&Song> {
        let mut v: Vec<&Song> = data
            .songs
            .iter()
            .filter(|s| data.singers.gender(s.singer) == Some(g))
            .collect();
        v.sort_by_key(|s| s.split != Split::HeldOut);
        v
    };
    for g in [Gender::Female, Gender::Male] {
        if songs_of(g).is_empty() {
            return Err(Error::Validation(format!("listening test needs a {g:?} singer with a song")));
        }
    }
    let mut out = Vec::new();
    for (k, condition) in ListeningCondition::ALL.into_iter().enumerate() {
        let (src, dst) = condition.genders();
        let songs = songs_of(src);
        let song = songs[k % songs.len()];
        let target = if !condition.is_voice_change() {
            song.singer
        } else {
            *singers_of(dst).iter().find(|&&s| s != song.singer).ok_or_else(|| {
                Error::Validation(format!(
                    "condition {condition} needs a second {dst:?} singer besides `{}`",
                    data.singers.singers[song.singer].id
                ))
            })?
        };
        out.push(Plan { song, target, condition });
    }
    Ok(out)
}

/// A trained model to render stimuli with.
pub struct ListeningModel<'a> {
    pub name: String,
    pub params: &'a ModelParams,
    pub config: &'a ModelConfig,
}

/// Renders the six conditions for every model into `out_dir` and writes
/// `manifest.csv`, the only link from blinded file names to conditions.
pub fn export_listening_test(
    models: &[ListeningModel<'_>],
    data: &Dataset,
    vocoder: &AnalysisConfig,
    out_dir: impl AsRef<Path>,
    seed: u64,
) -> Result<Vec<ListeningRow>> {
    if models.is_empty() {
        return Err(Error::config("listening export needs at least one model"));
    }
    let out_dir = out_dir.as_ref();
    let plans = plan(data)?;
    fs::create_dir_all(out_dir)?;
    let mut rows = Vec::new();
    for m in models {
        for p in &plans {
            let conds = SongConditions::from_song(p.song).with_singer(p.target);
            let mut opts = SynthOptions::new(m.config, seed);
            opts.pad_phoneme = data.vocab.silence_id();
            let (_, wave) = synthesize_song(m.params, m.config, Some(&data.norm_stats), &conds, &opts, vocoder)?;
            let src = &data.singers.singers[p.song.singer].id;
            let dst = &data.singers.singers[p.target].id;
            let mut h = Sha256::new();
            for part in [m.name.as_str(), &p.song.id, src, dst, &p.condition.to_string()] {
                h.update(part.as_bytes());
                h.update([0]);
            }
            h.update(seed.to_le_bytes());
            let file = format!("{}.wav", &hex::encode(h.finalize())[..16]);
            write_wav(out_dir.join(&file), &wave)?;
            rows.push(ListeningRow {
                file,
                song: p.song.id.clone(),
                model: m.name.clone(),
                source_singer: src.clone(),
                target_singer: dst.clone(),
                condition: p.condition,
            });
        }
    }
    let mut csv = String::from(LISTENING_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.to_csv());
        csv.push('\n');
    }
    fs::write(out_dir.join("manifest.csv"), csv)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_labels() {
        assert_eq!(ListeningCondition::FemaleToMale.to_string(), "female_to_male");
        assert!(!ListeningCondition::MaleOriginal.is_voice_change());
        assert_eq!(csv_field("a,b"), "\"a,b\"");
    }
}
