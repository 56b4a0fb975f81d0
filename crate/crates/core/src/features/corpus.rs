//! Ingestion of a recorded corpus laid out as
//! `<root>/<singer>/[sing/]<song>.wav` with a `<song>.txt` phone annotation
//! next to each recording. An optional `<root>/singers.txt` lists
//! `<singer> <gender>` pairs; singers missing from it are untagged.

use std::fs;
use std::path::{Path, PathBuf};

use super::annotation::parse_phone_annotations;
use super::dataset::{Dataset, Song, Split};
use super::vocab::{build_phoneme_vocab, frame_align, Gender, Singer, SingerTable};
use crate::error::{Error, Result};
use crate::vocoder::{read_wav, AnalysisConfig, Analyzer};

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    v.sort();
    Ok(v)
}

fn read_genders(root: &Path) -> Result<Vec<(String, Gender)>> {
    let path = root.join("singers.txt");
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for (i, line) in fs::read_to_string(&path)?.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        match f.as_slice() {
            [] => {}
            [id, g] => out.push((id.to_string(), g.parse()?)),
            _ => {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("{}: expected `<singer> <gender>`", path.display()),
                })
            }
        }
    }
    Ok(out)
}

/// Analyzes every recording and builds a dataset. The last
/// `held_out_per_singer` songs of each singer (by file name) form the
/// held-out split when the singer has more songs than that.
pub fn prepare_corpus(root: impl AsRef<Path>, cfg: &AnalysisConfig, held_out_per_singer: usize) -> Result<Dataset> {
    let root = root.as_ref();
    let genders = read_genders(root)?;
    let analyzer = Analyzer::new(cfg)?;
    let mut singers = Vec::new();
    let mut raw = Vec::new();
    for dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let id = dir.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let song_dir = if dir.join("sing").is_dir() { dir.join("sing") } else { dir.clone() };
        let wavs: Vec<PathBuf> = sorted_entries(&song_dir)?
            .into_iter()
            .filter(|p| p.extension().is_some_and(|e| e == "wav"))
            .collect();
        if wavs.is_empty() {
            continue;
        }
        let singer = singers.len();
        let gender = genders.iter().find(|(s, _)| *s == id).map_or(Gender::Unknown, |(_, g)| *g);
        singers.push(Singer { id: id.clone(), gender });
        let n = wavs.len();
        for (k, wav) in wavs.into_iter().enumerate() {
            let txt = wav.with_extension("txt");
            let text = fs::read_to_string(&txt)
                .map_err(|e| Error::Validation(format!("{}: {e}", txt.display())))?;
            let segments = parse_phone_annotations(&text)?;
            let wave = read_wav(&wav)?;
            let stem = wav.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let song_id = format!("{id}_{stem}");
            let (features, f0) = analyzer.analyze_centered(&wave)?;
            let split = if n > held_out_per_singer && k >= n - held_out_per_singer {
                Split::HeldOut
            } else {
                Split::Train
            };
            raw.push((song_id.clone(), singer, split, features.with_ids(song_id, id.clone()), f0, segments));
        }
    }
    if raw.is_empty() {
        return Err(Error::Validation(format!("no recordings found under {}", root.display())));
    }
    let all: Vec<_> = raw.iter().map(|r| r.5.clone()).collect();
    let vocab = build_phoneme_vocab(&all)?;
    let mut songs = Vec::with_capacity(raw.len());
    for (id, singer, split, features, f0, segments) in raw {
        let phonemes = frame_align(&segments, &vocab, cfg.frame_hop_s, features.n_frames())?;
        songs.push(Song {
            id,
            singer,
            split,
            features,
            f0,
            segments,
            phonemes,
        });
    }
    Dataset::new(root.display().to_string(), cfg.frame_hop_s, vocab, SingerTable::new(singers)?, songs)
}
