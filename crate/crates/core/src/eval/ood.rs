//! Out-of-distribution detection metrics. Unknown samples are the positive
//! class and every score is oriented so that higher means "more likely
//! unknown".

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

fn counts(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    Ok((pos, labels.len() - pos))
}

fn require_both(pos: usize, neg: usize, metric: &str) -> Result<()> {
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "{metric} needs unknown and known samples, got {pos} and {neg}"
        )));
    }
    Ok(())
}

/// Cumulative (tp, fp) after each group of tied scores, highest score first.
fn descending_sweep(scores: &[f64], labels: &[bool]) -> Vec<(usize, usize)> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (n, &i) in idx.iter().enumerate() {
        if labels[i] {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_group = idx.get(n + 1).is_none_or(|&j| scores[j] != scores[i]);
        if last_of_group {
            out.push((tp, fp));
        }
    }
    out
}

/// Mann-Whitney form: the probability that a random positive outscores a
/// random negative, ties counting one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = counts(scores, labels)?;
    require_both(pos, neg, "AUROC")?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of (mid)ranks of the positives, 1-based.
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        let mid_rank = (start + 1 + end) as f64 / 2.0;
        let group_pos = idx[start..end].iter().filter(|&&i| labels[i]).count();
        rank_sum += mid_rank * group_pos as f64;
        start = end;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// ROC curve as `(fpr, tpr)` points from `(0, 0)` to `(1, 1)`, one point
/// per distinct score.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = counts(scores, labels)?;
    require_both(pos, neg, "ROC")?;
    let mut pts = vec![(0.0, 0.0)];
    pts.extend(
        descending_sweep(scores, labels)
            .into_iter()
            .map(|(tp, fp)| (fp as f64 / neg as f64, tp as f64 / pos as f64)),
    );
    Ok(pts)
}

/// Trapezoidal area under [`roc_curve`].
pub fn auroc_trapezoid(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let pts = roc_curve(scores, labels)?;
    Ok(pts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum())
}

/// Average precision: precision at each recall level, held constant back
/// to the previous level.
pub fn aupr(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, _) = counts(scores, labels)?;
    if pos == 0 {
        return Err(Error::UndefinedMetric("AUPR needs at least one unknown sample".into()));
    }
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for (tp, fp) in descending_sweep(scores, labels) {
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(area)
}

/// Lowest false-positive rate over thresholds that flag at least 95 % of
/// the positives. Thresholds sit between distinct scores, plus the two
/// infinite sentinels.
pub fn fpr_at_95_tpr(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = counts(scores, labels)?;
    require_both(pos, neg, "FPR95")?;
    // fp only grows along the sweep, so the first qualifying point wins.
    let (_, fp) = descending_sweep(scores, labels)
        .into_iter()
        .find(|&(tp, _)| 100 * tp >= 95 * pos)
        .expect("the final sweep point flags every positive");
    Ok(fp as f64 / neg as f64)
}

/// OOD scorers for a conventional (non-evidential) logit head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    /// `-max_k logit_k`
    MaxLogit,
    /// `-sum_k ln(1 + exp(logit_k))`
    JointEnergy,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 2] = [BaselineMethod::MaxLogit, BaselineMethod::JointEnergy];
}

impl fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineMethod::MaxLogit => "maxlogit",
            BaselineMethod::JointEnergy => "jointenergy",
        })
    }
}

impl FromStr for BaselineMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "maxlogit" => Ok(Self::MaxLogit),
            "jointenergy" => Ok(Self::JointEnergy),
            _ => Err(Error::config(format!("unknown baseline `{s}`"))),
        }
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn baseline_ood_scores(logits: &[Vec<f64>], method: BaselineMethod) -> Vec<f64> {
    logits
        .iter()
        .map(|row| match method {
            BaselineMethod::MaxLogit => -row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            BaselineMethod::JointEnergy => -row.iter().map(|&z| softplus(z)).sum::<f64>(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// O(n^2) pair count.
    fn auroc_pairs(scores: &[f64], labels: &[bool]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    /// Every candidate threshold evaluated from scratch.
    fn fpr95_sweep(scores: &[f64], labels: &[bool]) -> f64 {
        let mut distinct: Vec<f64> = scores.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let mut thresholds = vec![f64::NEG_INFINITY, f64::INFINITY];
        thresholds.extend(distinct.windows(2).map(|w| (w[0] + w[1]) / 2.0));
        let pos = labels.iter().filter(|&&l| l).count() as f64;
        let neg = labels.len() as f64 - pos;
        let mut best = f64::INFINITY;
        for t in thresholds {
            let flagged = |want: bool| {
                scores.iter().zip(labels).filter(|(s, l)| **l == want && **s > t).count() as f64
            };
            if flagged(true) / pos >= 0.95 {
                best = best.min(flagged(false) / neg);
            }
        }
        best
    }

    #[test]
    fn auroc_examples() {
        let labels = [true, true, false, false];
        assert_eq!(auroc(&[0.9, 0.8, 0.2, 0.1], &labels).unwrap(), 1.0);
        assert_eq!(auroc(&[0.5; 4], &labels).unwrap(), 0.5);
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap(), 0.0);
        assert!(matches!(auroc(&[0.1, 0.2], &[true, true]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn rank_trapezoid_and_pairs_agree_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let labels: Vec<bool> = (0..200).map(|_| rng.random_bool(0.3)).collect();
            let scores: Vec<f64> = labels
                .iter()
                .map(|&l| (rng.random_range(0..20) + if l { 5 } else { 0 }) as f64 / 4.0)
                .collect();
            let rank = auroc(&scores, &labels).unwrap();
            assert!((rank - auroc_trapezoid(&scores, &labels).unwrap()).abs() < 1e-12);
            assert!((rank - auroc_pairs(&scores, &labels)).abs() < 1e-12);
        }
    }

    #[test]
    fn aupr_examples() {
        assert_eq!(aupr(&[0.9, 0.8, 0.2], &[true, true, false]).unwrap(), 1.0);
        let mut scores = vec![0.0; 10];
        scores[0] = 1.0;
        let mut labels = vec![false; 10];
        labels[0] = true;
        assert_eq!(aupr(&scores, &labels).unwrap(), 1.0);
        // Ranked second of three: precision 1/2 at recall 1.
        assert_eq!(aupr(&[0.5, 0.9, 0.1], &[true, false, false]).unwrap(), 0.5);
        assert!(aupr(&[0.5], &[false]).is_err());
    }

    #[test]
    fn aupr_of_random_scores_tracks_prevalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for prevalence in [0.1, 0.25, 0.5] {
            let labels: Vec<bool> = (0..10_000).map(|_| rng.random_bool(prevalence)).collect();
            let scores: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
            let ap = aupr(&scores, &labels).unwrap();
            assert!((ap - prevalence).abs() < 0.05, "prevalence {prevalence}: {ap}");
        }
    }

    #[test]
    fn fpr95_examples() {
        let labels = [true, true, false, false];
        assert_eq!(fpr_at_95_tpr(&[0.9, 0.8, 0.2, 0.1], &labels).unwrap(), 0.0);
        assert_eq!(fpr_at_95_tpr(&[0.3; 4], &labels).unwrap(), 1.0);
        assert!(fpr_at_95_tpr(&[0.3; 2], &[false, false]).is_err());
    }

    #[test]
    fn fpr95_matches_exhaustive_sweep() {
        // 100 positives and 100 negatives interleaved with a shift.
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for i in 0..100 {
            scores.push(i as f64 + 30.0);
            labels.push(true);
            scores.push(i as f64);
            labels.push(false);
        }
        let fast = fpr_at_95_tpr(&scores, &labels).unwrap();
        assert_eq!(fast, fpr95_sweep(&scores, &labels));
        assert_eq!(fast, 0.65);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let labels: Vec<bool> = (0..150).map(|_| rng.random_bool(0.4)).collect();
            let scores: Vec<f64> = labels
                .iter()
                .map(|&l| rng.random_range(0..30) as f64 + if l { 6.0 } else { 0.0 })
                .collect();
            assert_eq!(fpr_at_95_tpr(&scores, &labels).unwrap(), fpr95_sweep(&scores, &labels));
        }
    }

    #[test]
    fn fpr95_improves_with_separation() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let base: Vec<(f64, bool)> = (0..2000)
            .map(|_| (rng.random::<f64>(), rng.random_bool(0.5)))
            .collect();
        let mut prev = f64::INFINITY;
        for shift in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2] {
            let scores: Vec<f64> = base.iter().map(|&(s, l)| s + if l { shift } else { 0.0 }).collect();
            let labels: Vec<bool> = base.iter().map(|&(_, l)| l).collect();
            let fpr = fpr_at_95_tpr(&scores, &labels).unwrap();
            assert!((0.0..=1.0).contains(&fpr));
            assert!(fpr <= prev);
            prev = fpr;
        }
        assert_eq!(prev, 0.0);
    }

    #[test]
    fn baselines() {
        let logits = vec![vec![f64::NEG_INFINITY; 3], vec![0.0, 8.0, -1.0], vec![0.5, 0.2, 0.1]];
        let ml = baseline_ood_scores(&logits, BaselineMethod::MaxLogit);
        let je = baseline_ood_scores(&logits, BaselineMethod::JointEnergy);
        assert_eq!(ml[0], f64::INFINITY);
        assert_eq!(je[0], 0.0);
        assert!(ml[0] > ml[2] && ml[2] > ml[1]);
        assert!(je[0] > je[2] && je[2] > je[1]);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let logits: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..5).map(|_| rng.random_range(-20.0..20.0)).collect())
            .collect();
        let je = baseline_ood_scores(&logits, BaselineMethod::JointEnergy);
        for (row, s) in logits.iter().zip(je) {
            let direct: f64 = -row.iter().map(|z: &f64| z.exp().ln_1p()).sum::<f64>();
            assert!((s - direct).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn auroc_invariant_to_monotone_transform(
            rows in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 2..60),
        ) {
            let labels: Vec<bool> = rows.iter().map(|r| r.1).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let scores: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let warped: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp() + 3.0).collect();
            prop_assert!((auroc(&scores, &labels).unwrap() - auroc(&warped, &labels).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn ood_metrics_ignore_order(
            rows in prop::collection::vec((0u8..10, any::<bool>()), 2..60), seed: u64,
        ) {
            use rand::seq::SliceRandom;
            let labels: Vec<bool> = rows.iter().map(|r| r.1).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let unpack = |r: &[(u8, bool)]| -> (Vec<f64>, Vec<bool>) {
                (r.iter().map(|x| x.0 as f64).collect(), r.iter().map(|x| x.1).collect())
            };
            let (s1, l1) = unpack(&rows);
            let (s2, l2) = unpack(&shuffled);
            prop_assert!((auroc(&s1, &l1).unwrap() - auroc(&s2, &l2).unwrap()).abs() < 1e-12);
            prop_assert!((aupr(&s1, &l1).unwrap() - aupr(&s2, &l2).unwrap()).abs() < 1e-12);
            prop_assert_eq!(fpr_at_95_tpr(&s1, &l1).unwrap(), fpr_at_95_tpr(&s2, &l2).unwrap());
        }
    }
}
