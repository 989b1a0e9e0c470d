use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Train,
    Eval,
}

/// One JSON line of metrics.jsonl.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    /// Agent decisions taken so far.
    pub step: u64,
    /// Simulator frames stepped so far (intro and skipped frames included).
    pub frames: u64,
    pub kind: MetricKind,
    pub name: String,
    pub value: f64,
    pub seed: u64,
}

pub trait MetricSink {
    fn record(&mut self, record: MetricRecord) -> Result<()>;
    fn flush(&mut self) -> Result<()> {
        Ok(())
    }
}

/// Collects records in memory.
#[derive(Debug, Default, Clone)]
pub struct MemorySink {
    pub records: Vec<MetricRecord>,
}

impl MemorySink {
    pub fn values(&self, name: &str) -> Vec<f64> {
        self.records.iter().filter(|r| r.name == name).map(|r| r.value).collect()
    }
}

impl MetricSink for MemorySink {
    fn record(&mut self, record: MetricRecord) -> Result<()> {
        if !record.value.is_finite() {
            return Err(Error::Divergence(format!("non-finite metric {}", record.name)));
        }
        self.records.push(record);
        Ok(())
    }
}

/// Appends JSON lines to a file.
pub struct JsonlSink {
    out: BufWriter<File>,
}

impl JsonlSink {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn append(path: &Path) -> Result<Self> {
        Ok(Self {
            out: BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?),
        })
    }
}

impl MetricSink for JsonlSink {
    fn record(&mut self, record: MetricRecord) -> Result<()> {
        if !record.value.is_finite() {
            return Err(Error::Divergence(format!("non-finite metric {}", record.name)));
        }
        let line = serde_json::to_string(&record).map_err(|e| Error::Config(e.to_string()))?;
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

impl Drop for JsonlSink {
    fn drop(&mut self) {
        let _ = self.out.flush();
    }
}

/// Fans one record out to two sinks.
pub struct Tee<'a, A: MetricSink + ?Sized, B: MetricSink + ?Sized>(pub &'a mut A, pub &'a mut B);

impl<A: MetricSink + ?Sized, B: MetricSink + ?Sized> MetricSink for Tee<'_, A, B> {
    fn record(&mut self, record: MetricRecord) -> Result<()> {
        self.0.record(record.clone())?;
        self.1.record(record)
    }

    fn flush(&mut self) -> Result<()> {
        self.0.flush()?;
        self.1.flush()
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Config(format!("bad metrics line: {e}"))))
        .collect()
}
