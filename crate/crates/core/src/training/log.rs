use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Step {
        epoch: usize,
        step: usize,
        critic_loss: f64,
        generator_loss: f64,
        /// Largest critic weight magnitude seen after any critic update of
        /// this step.
        critic_max_abs: f64,
        wall_s: f64,
    },
    Epoch {
        epoch: usize,
        train_mcd_db: f64,
        wall_s: f64,
    },
}

impl LogRecord {
    fn without_wall_time(&self) -> Self {
        let mut r = self.clone();
        match &mut r {
            LogRecord::Step { wall_s, .. } | LogRecord::Epoch { wall_s, .. } => *wall_s = 0.0,
        }
        r
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    pub fn push(&mut self, r: LogRecord) {
        self.records.push(r);
    }

    /// `(critic, generator)` losses of every step in order.
    pub fn step_losses(&self) -> Vec<(f64, f64)> {
        self.records
            .iter()
            .filter_map(|r| match r {
                LogRecord::Step {
                    critic_loss,
                    generator_loss,
                    ..
                } => Some((*critic_loss, *generator_loss)),
                _ => None,
            })
            .collect()
    }

    /// Training-set MCD after each epoch.
    pub fn epoch_mcd(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| match r {
                LogRecord::Epoch { train_mcd_db, .. } => Some(*train_mcd_db),
                _ => None,
            })
            .collect()
    }

    /// The log with wall-clock fields zeroed, for run-to-run comparison.
    pub fn without_wall_time(&self) -> Self {
        Self {
            records: self.records.iter().map(LogRecord::without_wall_time).collect(),
        }
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r)?);
            s.push('\n');
        }
        Ok(s)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::format(format!("log line {}: {e}", i + 1))))
            .collect::<Result<_>>()?;
        Ok(Self { records })
    }

    pub fn append_to(path: impl AsRef<Path>, r: &LogRecord) -> Result<()> {
        let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
        writeln!(f, "{}", serde_json::to_string(r)?)?;
        Ok(())
    }
}
