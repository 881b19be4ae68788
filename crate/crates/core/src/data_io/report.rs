//! Line-delimited JSON report records.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::ExperimentConfig;

/// One metric of one run. `seq` orders records within a stream; it stands
/// in for a wall-clock timestamp so that reruns are byte-identical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub experiment: String,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
    pub config: BTreeMap<String, String>,
    pub seq: u64,
}

/// Append-only record sink.
pub struct ReportWriter<W: Write> {
    out: W,
    seq: u64,
}

impl<W: Write> ReportWriter<W> {
    pub fn new(out: W) -> Self {
        ReportWriter { out, seq: 0 }
    }

    pub fn write(
        &mut self,
        experiment: &str,
        seed: u64,
        metric: &str,
        value: f64,
        config: Option<&ExperimentConfig>,
    ) -> Result<ReportRecord> {
        if !value.is_finite() {
            return Err(Error::invalid(format!("metric `{metric}` is not finite: {value}")));
        }
        let record = ReportRecord {
            experiment: experiment.to_string(),
            seed,
            metric: metric.to_string(),
            value,
            config: config.map(|c| c.to_pairs().into_iter().collect()).unwrap_or_default(),
            seq: self.seq,
        };
        self.seq += 1;
        let line = serde_json::to_string(&record)?;
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io("<report>", e))?;
        Ok(record)
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Parses a JSON-lines stream; blank lines are skipped.
pub fn read_reports(text: &str) -> Result<Vec<ReportRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_round_trip() {
        let mut w = ReportWriter::new(Vec::new());
        let cfg = ExperimentConfig::default();
        let a = w.write("train", 3, "test_accuracy", 0.9375, Some(&cfg)).unwrap();
        let b = w.write("train", 3, "best_epoch", 12.0, None).unwrap();
        let text = String::from_utf8(w.into_inner()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(read_reports(&text).unwrap(), vec![a, b]);
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            for key in ["experiment", "seed", "metric", "value"] {
                assert!(v.get(key).is_some());
            }
        }
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let mut w = ReportWriter::new(Vec::new());
        assert!(w.write("x", 0, "m", f64::NAN, None).is_err());
    }
}
