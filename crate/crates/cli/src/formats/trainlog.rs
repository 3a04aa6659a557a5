//! JSONL training logs: one line per optimizer step with the learning
//! rate, the loss decomposition, the pre-clip gradient norm and wall time.
//! Line-oriented JSON keeps the file greppable mid-run and trivially
//! parseable afterwards.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use keydet_core::trainer::{StepRecord, TrainObserver};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// One log line. Field names are the file format; keep them stable.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LogLine {
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    pub cov_tran: f64,
    pub cov_aff: f64,
    pub pairwise_cov: f64,
    pub identity: f64,
    pub total: f64,
    pub grad_norm: f64,
    /// Milliseconds since training started.
    pub wall_ms: u64,
}

impl LogLine {
    pub fn from_record(record: &StepRecord, wall_ms: u64) -> Self {
        LogLine {
            epoch: record.epoch,
            step: record.step,
            lr: record.lr,
            cov_tran: record.components.cov_tran,
            cov_aff: record.components.cov_aff,
            pairwise_cov: record.components.pairwise_cov,
            identity: record.components.identity,
            total: record.total,
            grad_norm: record.grad_norm,
            wall_ms,
        }
    }
}

/// A [`TrainObserver`] that appends one JSON line per step. Write errors
/// are remembered and surfaced by [`JsonlLogger::finish`] — the training
/// loop itself has no fallible observer channel, and a full disk should
/// fail the command, not poison the loss math.
pub struct JsonlLogger {
    out: BufWriter<File>,
    path: std::path::PathBuf,
    started: Instant,
    error: Option<std::io::Error>,
}

impl JsonlLogger {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        Ok(JsonlLogger {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
            started: Instant::now(),
            error: None,
        })
    }

    fn write_line(&mut self, line: &LogLine) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, line)?;
        self.out.write_all(b"\n")
    }

    /// Flushes and reports any write error seen along the way.
    pub fn finish(mut self) -> Result<()> {
        if let Err(e) = self.out.flush() {
            self.error.get_or_insert(e);
        }
        match self.error {
            Some(e) => Err(CliError::io(&self.path, e)),
            None => Ok(()),
        }
    }
}

impl TrainObserver<f32> for JsonlLogger {
    fn on_step(&mut self, record: &StepRecord) {
        if self.error.is_some() {
            return;
        }
        let wall_ms = self.started.elapsed().as_millis() as u64;
        let line = LogLine::from_record(record, wall_ms);
        if let Err(e) = self.write_line(&line) {
            self.error = Some(e);
        }
    }
}

/// Parses a training log back into records, for tests and tooling.
pub fn load(path: &Path) -> Result<Vec<LogLine>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line)
                .map_err(|e| CliError::input(path, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use keydet_core::losses::LossComponents;
    use tempfile::tempdir;

    #[test]
    fn log_round_trips_and_orders_steps() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("train.jsonl");
        let mut logger = JsonlLogger::create(&path).unwrap();
        for step in 0..3 {
            let record = StepRecord {
                epoch: 0,
                step,
                lr: 0.1,
                total: 10.0 - step as f64,
                components: LossComponents {
                    cov_tran: 8.0,
                    cov_aff: 0.0,
                    pairwise_cov: 0.0,
                    identity: 0.0,
                },
                grad_norm: 2.5,
            };
            logger.on_step(&record);
        }
        logger.finish().unwrap();
        let lines = load(&path).unwrap();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[2].step, 2);
        assert_eq!(lines[0].total, 10.0);
        assert_eq!(lines[0].cov_aff, 0.0);
    }

    #[test]
    fn malformed_line_is_an_input_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("train.jsonl");
        std::fs::write(&path, "{\"epoch\":0}\n").unwrap();
        let err = load(&path).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
