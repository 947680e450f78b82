//! Inference, uncertainty aggregation and evaluation metrics.

mod metrics;
mod ood;
mod report;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::ebra::{BaseRateSet, CiwTable};
use crate::error::{Error, Result};
use crate::loss::MultiLabel;
use crate::net::Model;
use crate::opinion::{dirichlet_from_evidence, expected_probability, EvidencePair, EvidenceWeight};

pub use metrics::{f1_normal, f2_ciw, ClassScore, F2Score, FScore};
pub use ood::{
    aupr, auroc, auroc_trapezoid, baseline_ood_scores, fpr_at_95_tpr, roc_curve, BaselineMethod,
};
pub use report::{
    write_score_csv, BaselineMetrics, ClassMetrics, MetricsReport, MsdcMetrics, OodMetrics,
    RunInfo,
};

/// Decision threshold on the defective probability.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// How per-class uncertainties combine into one score per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationMode {
    Max,
    Sum,
    /// Sum of the `m` largest.
    TopM(usize),
}

impl fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AggregationMode::Max => f.write_str("max"),
            AggregationMode::Sum => f.write_str("sum"),
            AggregationMode::TopM(m) => write!(f, "top{m}"),
        }
    }
}

impl FromStr for AggregationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Self::Max),
            "sum" => Ok(Self::Sum),
            _ => match s.strip_prefix("top").map(str::parse::<usize>) {
                Some(Ok(m)) if m >= 1 => Ok(Self::TopM(m)),
                _ => Err(Error::config(format!(
                    "unknown aggregation `{s}` (expected max, sum or topN)"
                ))),
            },
        }
    }
}

pub fn aggregate_uncertainty(u: &[f64], mode: AggregationMode) -> Result<f64> {
    if u.is_empty() {
        return Err(Error::invalid("cannot aggregate an empty uncertainty vector"));
    }
    Ok(match mode {
        AggregationMode::Max => u.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        AggregationMode::Sum => u.iter().sum(),
        AggregationMode::TopM(m) => {
            if m == 0 {
                return Err(Error::config("top-m aggregation needs m >= 1"));
            }
            let mut sorted = u.to_vec();
            sorted.sort_by(|a, b| b.total_cmp(a));
            sorted.iter().take(m).sum()
        }
    })
}

/// Per-sample output of the evidential model.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Expected defective probability per class.
    pub probabilities: Vec<f64>,
    /// Vacuity `W / S` per class.
    pub uncertainties: Vec<f64>,
    pub uncertainty: f64,
    pub labels: Vec<bool>,
}

impl Prediction {
    pub fn is_normal(&self) -> bool {
        !self.labels.iter().any(|&b| b)
    }
}

pub fn predict(
    evidences: &[EvidencePair],
    base: &BaseRateSet,
    w: EvidenceWeight,
    threshold: f64,
    mode: AggregationMode,
) -> Result<Prediction> {
    if evidences.len() != base.len() {
        return Err(Error::invalid(format!(
            "{} evidence pairs for {} base rates",
            evidences.len(),
            base.len()
        )));
    }
    let mut probabilities = Vec::with_capacity(evidences.len());
    let mut uncertainties = Vec::with_capacity(evidences.len());
    for (e, a) in evidences.iter().zip(base.pairs()) {
        let d = dirichlet_from_evidence(*e, *a, w);
        probabilities.push(expected_probability(&d)?.0);
        uncertainties.push(w.get() / (w.get() + e.total()));
    }
    let labels = probabilities.iter().map(|&p| p > threshold).collect();
    Ok(Prediction {
        uncertainty: aggregate_uncertainty(&uncertainties, mode)?,
        probabilities,
        uncertainties,
        labels,
    })
}

/// Runs the model on every input. Inputs are processed in parallel; the
/// output order matches the input order.
pub fn predict_batch(
    model: &Model,
    inputs: &[&[f64]],
    base: &BaseRateSet,
    w: EvidenceWeight,
    threshold: f64,
    mode: AggregationMode,
) -> Result<Vec<Prediction>> {
    inputs
        .par_iter()
        .map(|x| predict(&model.evidence(x)?, base, w, threshold, mode))
        .collect()
}

/// Classification scores over the known-class samples of a prediction set.
pub fn evaluate_msdc(predicted: &[Vec<bool>], truth: &[MultiLabel], ciw: &CiwTable) -> Result<MsdcMetrics> {
    let f1 = f1_normal(predicted, truth)?;
    let f2 = f2_ciw(predicted, truth, ciw)?;
    Ok(MsdcMetrics::new(f1, &f2, predicted.len()))
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

/// Unknown-vs-known detection from per-sample scores (higher = more likely
/// unknown).
pub fn evaluate_ood(scores: &[f64], unknown: &[bool], label: &str) -> Result<OodMetrics> {
    let auroc = auroc(scores, unknown)?;
    let pick = |want: bool| scores.iter().zip(unknown).filter(move |(_, &u)| u == want).map(|(s, _)| *s);
    Ok(OodMetrics {
        aggregation: label.to_owned(),
        auroc,
        aupr: aupr(scores, unknown)?,
        fpr95: fpr_at_95_tpr(scores, unknown)?,
        known_samples: pick(false).count(),
        unknown_samples: pick(true).count(),
        mean_uncertainty_known: mean(pick(false)),
        mean_uncertainty_unknown: mean(pick(true)),
    })
}

pub fn evaluate_baseline(logits: &[Vec<f64>], unknown: &[bool], method: BaselineMethod) -> Result<BaselineMetrics> {
    let scores = baseline_ood_scores(logits, method);
    Ok(BaselineMetrics {
        method: method.to_string(),
        auroc: auroc(&scores, unknown)?,
        aupr: aupr(&scores, unknown)?,
        fpr95: fpr_at_95_tpr(&scores, unknown)?,
    })
}
