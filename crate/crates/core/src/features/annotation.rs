//! Phone-level annotation files: one `start end label` record per line, times
//! in seconds.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhoneSegment {
    pub start: f64,
    pub end: f64,
    pub label: String,
}

impl PhoneSegment {
    pub fn new(start: f64, end: f64, label: impl Into<String>) -> Self {
        Self {
            start,
            end,
            label: label.into(),
        }
    }

    /// Half-open containment: `start <= t < end`.
    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t < self.end
    }
}

/// Parses annotation text. Blank lines are skipped; any other line must hold
/// exactly three whitespace-separated fields.
pub fn parse_phone_annotations(text: &str) -> Result<Vec<PhoneSegment>> {
    let mut segments = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 3 {
            return Err(Error::Parse {
                line,
                msg: format!("expected `start end label`, found {} fields", fields.len()),
            });
        }
        let time = |s: &str, what: &str| -> Result<f64> {
            let v: f64 = s.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("{what} time `{s}` is not a number"),
            })?;
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Parse {
                    line,
                    msg: format!("{what} time `{s}` must be finite and non-negative"),
                });
            }
            Ok(v)
        };
        let start = time(fields[0], "start")?;
        let end = time(fields[1], "end")?;
        segments.push(PhoneSegment::new(start, end, fields[2]));
    }
    validate_segments(&segments)?;
    Ok(segments)
}

/// Checks `start < end` per segment and that segments are sorted and
/// non-overlapping.
pub fn validate_segments(segments: &[PhoneSegment]) -> Result<()> {
    for (i, seg) in segments.iter().enumerate() {
        if seg.start >= seg.end {
            return Err(Error::Validation(format!(
                "segment {} ({}) has start {} >= end {}",
                i + 1,
                seg.label,
                seg.start,
                seg.end
            )));
        }
        if i > 0 {
            let prev = &segments[i - 1];
            if seg.start < prev.end {
                return Err(Error::Validation(format!(
                    "segment {} ({}) starts at {} before previous segment ends at {}",
                    i + 1,
                    seg.label,
                    seg.start,
                    prev.end
                )));
            }
        }
    }
    Ok(())
}

/// Canonical text form: shortest round-trip decimal for each time.
pub fn serialize_phone_annotations(segments: &[PhoneSegment]) -> String {
    let mut out = String::new();
    for seg in segments {
        let _ = writeln!(out, "{} {} {}", seg.start, seg.end, seg.label);
    }
    out
}
