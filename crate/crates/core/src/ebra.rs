//! Expert base-rate assignment.
//!
//! Each defect class carries a class-importance weight (CIW). The defective
//! base rate of class `k` is shifted by `sigmoid(ciw_k) - 1/2` and the
//! non-defective one by the same amount in the opposite direction, so severe
//! classes start from a prior that leans towards "defective".

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::opinion::BaseRatePair;

/// Class-importance weights in class order.
#[derive(Debug, Clone, PartialEq)]
pub struct CiwTable {
    entries: Vec<(String, f64)>,
}

impl CiwTable {
    pub fn new(entries: Vec<(String, f64)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (name, w) in &entries {
            if !seen.insert(name.as_str()) {
                return Err(Error::config(format!("duplicate class `{name}` in CIW table")));
            }
            if !w.is_finite() {
                return Err(Error::config(format!("CIW for `{name}` is not finite: {w}")));
            }
        }
        Ok(Self { entries })
    }

    /// Every class weighted 1.
    pub fn uniform<S: AsRef<str>>(classes: &[S]) -> Result<Self> {
        Self::new(classes.iter().map(|c| (c.as_ref().to_owned(), 1.0)).collect())
    }

    /// Every class weighted 0, which leaves the base rates untouched.
    pub fn zeros<S: AsRef<str>>(classes: &[S]) -> Result<Self> {
        Self::new(classes.iter().map(|c| (c.as_ref().to_owned(), 0.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|(_, w)| *w)
    }

    pub fn get(&self, class: &str) -> Option<f64> {
        self.entries.iter().find(|(n, _)| n == class).map(|(_, w)| *w)
    }

    /// Sub-table for `classes`, in that order. Missing classes are an error.
    pub fn select<S: AsRef<str>>(&self, classes: &[S]) -> Result<Self> {
        let entries = classes
            .iter()
            .map(|c| {
                let c = c.as_ref();
                self.get(c)
                    .map(|w| (c.to_owned(), w))
                    .ok_or_else(|| Error::config(format!("CIW table has no entry for class `{c}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }
}

/// Per-class base rates, one pair per head.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseRateSet(Vec<BaseRatePair>);

impl BaseRateSet {
    pub fn new(pairs: Vec<BaseRatePair>) -> Result<Self> {
        for (k, p) in pairs.iter().enumerate() {
            let open = |x: f64| x > 0.0 && x < 1.0;
            if !open(p.pos()) || !open(p.neg()) {
                return Err(Error::config(format!(
                    "base rate of class {k} leaves (0, 1): ({}, {})",
                    p.pos(),
                    p.neg()
                )));
            }
        }
        Ok(Self(pairs))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![BaseRatePair::uniform(); k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn pairs(&self) -> &[BaseRatePair] {
        &self.0
    }
}

impl std::ops::Index<usize> for BaseRateSet {
    type Output = BaseRatePair;

    fn index(&self, k: usize) -> &BaseRatePair {
        &self.0[k]
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let z = x.exp();
        z / (1.0 + z)
    }
}

pub fn adjust_base_rates(ciw: &CiwTable, a0: BaseRatePair) -> Result<BaseRateSet> {
    let pairs = ciw
        .entries
        .iter()
        .map(|(name, w)| {
            let shift = sigmoid(*w) - 0.5;
            BaseRatePair::new(a0.pos() + shift, a0.neg() - shift).map_err(|_| {
                Error::config(format!(
                    "CIW {w} for `{name}` pushes base rates ({}, {}) outside [0, 1]",
                    a0.pos() + shift,
                    a0.neg() - shift
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    BaseRateSet::new(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(ws: &[f64]) -> CiwTable {
        CiwTable::new(
            ws.iter()
                .enumerate()
                .map(|(i, w)| (format!("c{i}"), *w))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(1.0) - 0.73106).abs() < 5e-6);
        for x in [-40.0, -3.0, -0.1, 0.7, 12.0] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
    }

    #[test]
    fn zero_weight_is_identity() {
        let set = adjust_base_rates(&table(&[0.0, 0.0]), BaseRatePair::uniform()).unwrap();
        assert_eq!(set.pairs(), &[BaseRatePair::uniform(); 2]);
    }

    #[test]
    fn unit_weight_shifts_towards_defective() {
        let set = adjust_base_rates(&table(&[1.0]), BaseRatePair::uniform()).unwrap();
        assert!((set[0].pos() - 0.7311).abs() < 1e-4);
        assert!((set[0].neg() - 0.2689).abs() < 1e-4);
    }

    #[test]
    fn large_weight_approaches_certainty() {
        let set = adjust_base_rates(&table(&[30.0]), BaseRatePair::uniform()).unwrap();
        assert!(set[0].pos() > 1.0 - 1e-12);
        assert!(set[0].neg() < 1e-12);
        // Fully saturated: the non-defective rate hits 0 exactly.
        assert!(matches!(
            adjust_base_rates(&table(&[50.0]), BaseRatePair::uniform()),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn skewed_prior_can_overflow() {
        let a0 = BaseRatePair::new(0.9, 0.1).unwrap();
        assert!(adjust_base_rates(&table(&[2.5]), a0).is_err());
        assert!(adjust_base_rates(&table(&[-2.5]), a0).is_ok());
    }

    #[test]
    fn table_rejects_duplicates_and_selects() {
        let dup = CiwTable::new(vec![("a".into(), 1.0), ("a".into(), 2.0)]);
        assert!(dup.is_err());
        assert!(CiwTable::new(vec![("a".into(), f64::NAN)]).is_err());

        let t = CiwTable::new(vec![("a".into(), 1.0), ("b".into(), 2.0), ("c".into(), 3.0)])
            .unwrap();
        let sel = t.select(&["c", "a"]).unwrap();
        assert_eq!(sel.entries(), &[("c".to_owned(), 3.0), ("a".to_owned(), 1.0)]);
        assert!(t.select(&["z"]).is_err());
    }

    proptest! {
        #[test]
        fn pairs_sum_to_one_and_track_sigmoid(ws in prop::collection::vec(-5.0f64..5.0, 1..20)) {
            let set = adjust_base_rates(&table(&ws), BaseRatePair::uniform()).unwrap();
            for (p, w) in set.pairs().iter().zip(&ws) {
                prop_assert!((p.pos() + p.neg() - 1.0).abs() < 1e-12);
                prop_assert!((p.pos() - sigmoid(*w)).abs() < 1e-12);
            }
        }

        #[test]
        fn monotone_in_weight(a in -5.0f64..5.0, d in 1e-6f64..5.0) {
            let set = adjust_base_rates(&table(&[a, a + d]), BaseRatePair::uniform()).unwrap();
            prop_assert!(set[1].pos() > set[0].pos());
        }
    }
}
