//! Line-delimited metrics records.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::objective::LossKind;

/// Identifies one cell of the train-labels × test-labels × loss × pretraining
/// grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub train_labels: usize,
    /// Absent for records measured on the training distribution.
    pub test_labels: Option<usize>,
    pub loss: LossKind,
    pub pretrain: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    #[serde(flatten)]
    pub cell: Cell,
    pub seed: u64,
    pub epoch: usize,
    /// `train`, `valid`, `test` or `pretrain`.
    pub split: String,
    pub utterances: usize,
    pub intent_acc: Option<f64>,
    pub slot_acc: Option<f64>,
    pub joint_acc: Option<f64>,
    pub mean_loss: Option<f64>,
    /// Seconds since the run started; omitted in deterministic mode.
    pub wall_time: Option<f64>,
}

/// Exact-match counts over a set of utterances.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Accuracy {
    pub total: usize,
    pub intent: usize,
    pub slot: usize,
    pub joint: usize,
}

impl Accuracy {
    pub fn add(&mut self, intent_ok: bool, slot_ok: bool) {
        self.total += 1;
        self.intent += usize::from(intent_ok);
        self.slot += usize::from(slot_ok);
        self.joint += usize::from(intent_ok && slot_ok);
    }

    fn frac(&self, n: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            n as f64 / self.total as f64
        }
    }

    pub fn intent_rate(&self) -> f64 {
        self.frac(self.intent)
    }

    pub fn slot_rate(&self) -> f64 {
        self.frac(self.slot)
    }

    pub fn joint_rate(&self) -> f64 {
        self.frac(self.joint)
    }
}

/// Appends records to a JSON-lines file, flushing after each one so a
/// partial run stays readable.
pub struct MetricsWriter {
    file: File,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self { file: File::create(path)? })
    }

    pub fn append(path: &Path) -> Result<Self> {
        Ok(Self {
            file: OpenOptions::new().create(true).append(true).open(path)?,
        })
    }

    pub fn write(&mut self, rec: &MetricsRecord) -> Result<()> {
        let mut line = serde_json::to_vec(rec)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()?;
        Ok(())
    }
}

/// Reads every complete record; a truncated last line is ignored.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(r) => out.push(r),
            Err(e) if e.is_eof() => break,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(epoch: usize) -> MetricsRecord {
        MetricsRecord {
            cell: Cell {
                train_labels: 2,
                test_labels: Some(1),
                loss: LossKind::CtlMil,
                pretrain: true,
            },
            seed: 3,
            epoch,
            split: "test".into(),
            utterances: 4,
            intent_acc: Some(0.75),
            slot_acc: Some(0.5),
            joint_acc: Some(0.5),
            mean_loss: None,
            wall_time: None,
        }
    }

    #[test]
    fn record_is_flat_json() {
        let v: serde_json::Value = serde_json::to_value(rec(1)).unwrap();
        assert_eq!(v["loss"], "ctl+mil");
        assert_eq!(v["train_labels"], 2);
        assert_eq!(v["test_labels"], 1);
        assert_eq!(v["pretrain"], true);
    }

    #[test]
    fn partial_files_stay_readable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let mut w = MetricsWriter::create(&path).unwrap();
        w.write(&rec(1)).unwrap();
        w.write(&rec(2)).unwrap();
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"train_labels\":1,\"te").unwrap();
        let back = read_metrics(&path).unwrap();
        assert_eq!(back, vec![rec(1), rec(2)]);
    }

    #[test]
    fn accuracy_joint_is_bounded() {
        let mut a = Accuracy::default();
        a.add(true, false);
        a.add(false, true);
        a.add(true, true);
        assert_eq!((a.intent, a.slot, a.joint), (2, 2, 1));
        assert!(a.joint_rate() <= a.intent_rate().min(a.slot_rate()));
    }
}
