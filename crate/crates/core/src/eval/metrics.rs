//! Multi-label classification scores over known classes.

use crate::ebra::CiwTable;
use crate::error::{Error, Result};
use crate::loss::MultiLabel;

/// An F-score together with a flag set when its denominator was zero (the
/// value is then reported as 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FScore {
    pub value: f64,
    pub undefined: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassScore {
    pub class: String,
    pub weight: f64,
    pub precision: f64,
    pub recall: f64,
    pub f2: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct F2Score {
    pub value: f64,
    pub per_class: Vec<ClassScore>,
}

fn check_lengths(predicted: &[Vec<bool>], truth: &[MultiLabel]) -> Result<()> {
    if predicted.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    if predicted.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} ground-truth rows",
            predicted.len(),
            truth.len()
        )));
    }
    Ok(())
}

/// F1 of the "no defect" decision: predicted normal iff no label is set.
pub fn f1_normal(predicted: &[Vec<bool>], truth: &[MultiLabel]) -> Result<FScore> {
    check_lengths(predicted, truth)?;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (p, t) in predicted.iter().zip(truth) {
        let p_normal = !p.iter().any(|&b| b);
        match (p_normal, t.is_normal()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    Ok(if denom == 0 {
        FScore {
            value: 0.0,
            undefined: true,
        }
    } else {
        FScore {
            value: 2.0 * tp as f64 / denom as f64,
            undefined: false,
        }
    })
}

/// CIW-weighted mean of the per-class F2 scores.
///
/// A class that is neither present nor predicted anywhere in the set scores
/// 1: there was nothing to get wrong.
pub fn f2_ciw(predicted: &[Vec<bool>], truth: &[MultiLabel], ciw: &CiwTable) -> Result<F2Score> {
    check_lengths(predicted, truth)?;
    let k = ciw.len();
    if let Some(bad) = predicted
        .iter()
        .map(Vec::len)
        .chain(truth.iter().map(MultiLabel::len))
        .find(|&l| l != k)
    {
        return Err(Error::invalid(format!(
            "label vectors have {bad} entries, CIW table covers {k} classes"
        )));
    }
    let weight_sum: f64 = ciw.weights().sum();
    if weight_sum == 0.0 || !weight_sum.is_finite() {
        return Err(Error::config("CIW weights sum to zero"));
    }

    let mut per_class = Vec::with_capacity(k);
    for (c, (name, weight)) in ciw.entries().iter().enumerate() {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (p, t) in predicted.iter().zip(truth) {
            match (p[c], t.bits()[c]) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        // (1 + b^2) tp / ((1 + b^2) tp + b^2 fn + fp) with b = 2
        let denom = 5 * tp + 4 * fn_ + fp;
        let f2 = if denom == 0 { 1.0 } else { 5.0 * tp as f64 / denom as f64 };
        per_class.push(ClassScore {
            class: name.clone(),
            weight: *weight,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            f2,
            support: tp + fn_,
        });
    }
    let value = per_class.iter().map(|s| s.weight * s.f2).sum::<f64>() / weight_sum;
    Ok(F2Score { value, per_class })
}
