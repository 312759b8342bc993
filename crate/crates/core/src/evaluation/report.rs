use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores of one system on one utterance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub sisdr_db: f64,
    pub stoi: f64,
    pub lsd_db: f64,
}

impl Scores {
    pub fn is_finite(&self) -> bool {
        self.sisdr_db.is_finite() && self.stoi.is_finite() && self.lsd_db.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub partition: String,
    pub noise_kind: String,
    pub snr_db: f64,
    pub system: String,
    pub scores: Scores,
}

/// Mean scores of one system over a group of utterances. Aggregate rows use
/// `noise_kind = "all"` and no SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub partition: String,
    pub noise_kind: String,
    pub snr_db: Option<f64>,
    pub system: String,
    pub n: usize,
    pub sisdr_db: f64,
    pub stoi: f64,
    pub lsd_db: f64,
    /// Filled by external tools only.
    pub pesq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    pub aggregates: Vec<MetricRow>,
}

fn mean_row(partition: &str, noise_kind: &str, snr_db: Option<f64>, system: &str, group: &[&CaseResult]) -> MetricRow {
    let n = group.len();
    let mean = |f: fn(&Scores) -> f64| group.iter().map(|c| f(&c.scores)).sum::<f64>() / n as f64;
    MetricRow {
        partition: partition.to_string(),
        noise_kind: noise_kind.to_string(),
        snr_db,
        system: system.to_string(),
        n,
        sisdr_db: mean(|s| s.sisdr_db),
        stoi: mean(|s| s.stoi),
        lsd_db: mean(|s| s.lsd_db),
        pesq: None,
    }
}

/// Distinct keys in first-seen order.
fn distinct<K: PartialEq + Clone>(items: impl Iterator<Item = K>) -> Vec<K> {
    let mut out: Vec<K> = Vec::new();
    for k in items {
        if !out.contains(&k) {
            out.push(k);
        }
    }
    out
}

impl MetricReport {
    /// Groups per-utterance results by (partition, noise, SNR, system) and
    /// adds per-(partition, system) and overall per-system means.
    pub fn from_cases(cases: &[CaseResult]) -> Result<Self> {
        if cases.is_empty() {
            return Err(Error::Empty("evaluation results"));
        }
        let keys = distinct(cases.iter().map(|c| {
            (
                c.partition.clone(),
                c.noise_kind.clone(),
                c.snr_db.to_bits(),
                c.system.clone(),
            )
        }));
        let rows = keys
            .iter()
            .map(|(p, k, s, sys)| {
                let group: Vec<&CaseResult> = cases
                    .iter()
                    .filter(|c| &c.partition == p && &c.noise_kind == k && c.snr_db.to_bits() == *s && &c.system == sys)
                    .collect();
                mean_row(p, k, Some(f64::from_bits(*s)), sys, &group)
            })
            .collect();
        let mut aggregates = Vec::new();
        let partitions = distinct(cases.iter().map(|c| c.partition.clone()));
        let systems = distinct(cases.iter().map(|c| c.system.clone()));
        for p in &partitions {
            for sys in &systems {
                let group: Vec<&CaseResult> = cases.iter().filter(|c| &c.partition == p && &c.system == sys).collect();
                if !group.is_empty() {
                    aggregates.push(mean_row(p, "all", None, sys, &group));
                }
            }
        }
        if partitions.len() > 1 {
            for sys in &systems {
                let group: Vec<&CaseResult> = cases.iter().filter(|c| &c.system == sys).collect();
                aggregates.push(mean_row("all", "all", None, sys, &group));
            }
        }
        Ok(Self { rows, aggregates })
    }

    pub fn has_nan(&self) -> bool {
        self.rows
            .iter()
            .chain(&self.aggregates)
            .any(|r| !(r.sisdr_db.is_finite() && r.stoi.is_finite() && r.lsd_db.is_finite()))
    }

    pub fn find(&self, noise_kind: &str, snr_db: f64, system: &str) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.noise_kind == noise_kind && r.snr_db == Some(snr_db) && r.system == system)
    }

    /// Condition rows followed by aggregate rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
        for r in self.rows.iter().chain(&self.aggregates) {
            w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<MetricRow>> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
        r.deserialize()
            .map(|row| row.map_err(|e| Error::Format(e.to_string())))
            .collect()
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
