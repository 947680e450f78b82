//! Evaluation reports (TOML) and per-sample score tables (CSV).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{ClassScore, F2Score, FScore};
use crate::error::{Error, Result};

pub const REPORT_VERSION: u32 = 1;

/// Resolved settings of the run that produced a report. No filesystem
/// paths go in here so identical runs produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub report_version: u32,
    pub tool_version: String,
    pub command: String,
    /// Kept as a string: TOML integers are signed 64-bit.
    pub seed: String,
    pub threshold: f64,
    pub evidence_weight: f64,
    pub base_rates: Vec<f64>,
    /// Any further resolved options, sorted by key.
    #[serde(default)]
    pub settings: BTreeMap<String, String>,
}

impl RunInfo {
    pub fn new(command: &str, seed: u64, threshold: f64, evidence_weight: f64, base_rates: Vec<f64>) -> Self {
        Self {
            report_version: REPORT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            command: command.to_owned(),
            seed: seed.to_string(),
            threshold,
            evidence_weight,
            base_rates,
            settings: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.settings.insert(key.to_owned(), value.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub weight: f64,
    pub precision: f64,
    pub recall: f64,
    pub f2: f64,
    pub support: usize,
}

impl From<&ClassScore> for ClassMetrics {
    fn from(s: &ClassScore) -> Self {
        Self {
            class: s.class.clone(),
            weight: s.weight,
            precision: s.precision,
            recall: s.recall,
            f2: s.f2,
            support: s.support,
        }
    }
}

/// Multi-label classification over known samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsdcMetrics {
    pub f2_ciw: f64,
    pub f1_normal: f64,
    pub f1_normal_undefined: bool,
    pub known_samples: usize,
    pub per_class: Vec<ClassMetrics>,
}

impl MsdcMetrics {
    pub fn new(f1: FScore, f2: &F2Score, known_samples: usize) -> Self {
        Self {
            f2_ciw: f2.value,
            f1_normal: f1.value,
            f1_normal_undefined: f1.undefined,
            known_samples,
            per_class: f2.per_class.iter().map(ClassMetrics::from).collect(),
        }
    }
}

/// Unknown-vs-known detection, unknown being the positive class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodMetrics {
    pub aggregation: String,
    pub auroc: f64,
    pub aupr: f64,
    pub fpr95: f64,
    pub known_samples: usize,
    pub unknown_samples: usize,
    pub mean_uncertainty_known: f64,
    pub mean_uncertainty_unknown: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineMetrics {
    pub method: String,
    pub auroc: f64,
    pub aupr: f64,
    pub fpr95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub run: RunInfo,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msdc: Option<MsdcMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ood: Option<OodMetrics>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub baselines: Vec<BaselineMetrics>,
}

impl MetricsReport {
    pub fn new(run: RunInfo) -> Self {
        Self {
            run,
            msdc: None,
            ood: None,
            baselines: Vec::new(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("cannot serialize report: {e}")))
    }

    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let report: Self = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse {
                path: path.to_path_buf(),
                line,
                message: e.message().to_owned(),
            }
        })?;
        if report.run.report_version != REPORT_VERSION {
            return Err(Error::Version {
                found: report.run.report_version.to_string(),
                expected: REPORT_VERSION.to_string(),
            });
        }
        Ok(report)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    /// Short human-readable digest.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        if let Some(m) = &self.msdc {
            let _ = writeln!(out, "known samples   {}", m.known_samples);
            let flag = if m.f1_normal_undefined { " (undefined)" } else { "" };
            let _ = writeln!(out, "F1_Normal       {:.4}{flag}", m.f1_normal);
            let _ = writeln!(out, "F2_CIW          {:.4}", m.f2_ciw);
            for c in &m.per_class {
                let _ = writeln!(
                    out,
                    "  {:<12} w={:.3} P={:.4} R={:.4} F2={:.4} n={}",
                    c.class, c.weight, c.precision, c.recall, c.f2, c.support
                );
            }
        }
        if let Some(o) = &self.ood {
            let _ = writeln!(
                out,
                "OOD [{}] known={} unknown={}",
                o.aggregation, o.known_samples, o.unknown_samples
            );
            let _ = writeln!(
                out,
                "  AUROC {:.4}  AUPR {:.4}  FPR95 {:.4}",
                o.auroc, o.aupr, o.fpr95
            );
            let _ = writeln!(
                out,
                "  mean u known {:.4}  unknown {:.4}",
                o.mean_uncertainty_known, o.mean_uncertainty_unknown
            );
        }
        for b in &self.baselines {
            let _ = writeln!(
                out,
                "baseline {:<12} AUROC {:.4}  AUPR {:.4}  FPR95 {:.4}",
                b.method, b.auroc, b.aupr, b.fpr95
            );
        }
        out
    }
}

/// Writes `sample_id,u,is_unknown` rows in input order.
pub fn write_score_csv<W: io::Write>(out: W, ids: &[String], scores: &[f64], unknown: &[bool]) -> Result<()> {
    if ids.len() != scores.len() || ids.len() != unknown.len() {
        return Err(Error::invalid("score table columns differ in length"));
    }
    let to_err = |e: csv::Error| Error::invalid(format!("writing score table: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sample_id", "u", "is_unknown"]).map_err(to_err)?;
    for ((id, s), u) in ids.iter().zip(scores).zip(unknown) {
        w.write_record([id.as_str(), &s.to_string(), if *u { "1" } else { "0" }])
            .map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::invalid(format!("writing score table: {e}")))
}
