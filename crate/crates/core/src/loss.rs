//! Evidential negative log-likelihood.
//!
//! For one head with Beta parameters `alpha` and one-hot label `y`,
//! integrating the Bernoulli likelihood against the Beta density gives
//!
//! ```text
//! L = sum_i y_i (ln S - ln alpha_i),    alpha_i = e_i + a_i W
//! dL/de_j = 1/S - y_j/alpha_j
//! ```
//!
//! The multi-label objective is the sum of `L` over the K heads.

use crate::ebra::BaseRateSet;
use crate::error::{Error, Result};
use crate::opinion::{dirichlet_from_evidence, BaseRatePair, EvidencePair, EvidenceWeight};

/// One-hot label of a binary head: defective or non-defective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryLabel {
    Defective,
    NonDefective,
}

impl BinaryLabel {
    /// `(y_pos, y_neg)`.
    pub fn one_hot(self) -> (f64, f64) {
        match self {
            BinaryLabel::Defective => (1.0, 0.0),
            BinaryLabel::NonDefective => (0.0, 1.0),
        }
    }
}

/// Multi-hot label vector over K classes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiLabel(Vec<bool>);

impl MultiLabel {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn from_indices(k: usize, indices: &[usize]) -> Result<Self> {
        let mut bits = vec![false; k];
        for &i in indices {
            *bits.get_mut(i).ok_or_else(|| {
                Error::invalid(format!("label index {i} out of range for {k} classes"))
            })? = true;
        }
        Ok(Self(bits))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    /// No defect present.
    pub fn is_normal(&self) -> bool {
        !self.0.iter().any(|&b| b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub per_class: Vec<f64>,
}

pub fn binarize_labels(y: &MultiLabel) -> Vec<BinaryLabel> {
    y.0.iter()
        .map(|&b| {
            if b {
                BinaryLabel::Defective
            } else {
                BinaryLabel::NonDefective
            }
        })
        .collect()
}

pub fn edl_loss_head(e: EvidencePair, y: BinaryLabel, a: BaseRatePair, w: EvidenceWeight) -> f64 {
    let d = dirichlet_from_evidence(e, a, w);
    let (labeled, other) = match y {
        BinaryLabel::Defective => (d.alpha_pos, d.alpha_neg),
        BinaryLabel::NonDefective => (d.alpha_neg, d.alpha_pos),
    };
    // ln(S / alpha) = ln(1 + alpha_other / alpha_labeled)
    (other / labeled).ln_1p()
}

pub fn edl_loss_total(
    evidences: &[EvidencePair],
    y: &MultiLabel,
    base: &BaseRateSet,
    w: EvidenceWeight,
) -> Result<LossValue> {
    if evidences.len() != y.len() || evidences.len() != base.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} evidence pairs, {} labels, {} base rates",
            evidences.len(),
            y.len(),
            base.len()
        )));
    }
    let per_class: Vec<f64> = evidences
        .iter()
        .zip(binarize_labels(y))
        .zip(base.pairs())
        .map(|((e, label), a)| edl_loss_head(*e, label, *a, w))
        .collect();
    Ok(LossValue {
        total: per_class.iter().sum(),
        per_class,
    })
}

/// `(dL/de_pos, dL/de_neg)`.
pub fn edl_loss_grad(
    e: EvidencePair,
    y: BinaryLabel,
    a: BaseRatePair,
    w: EvidenceWeight,
) -> (f64, f64) {
    let d = dirichlet_from_evidence(e, a, w);
    let inv_s = 1.0 / d.strength;
    match y {
        BinaryLabel::Defective => (inv_s - 1.0 / d.alpha_pos, inv_s),
        BinaryLabel::NonDefective => (inv_s, inv_s - 1.0 / d.alpha_neg),
    }
}
