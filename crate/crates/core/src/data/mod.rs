//! Samples, known/unknown splits, synthetic data and file formats.

mod ciw;
mod format;
mod sewer;
mod synth;

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::loss::MultiLabel;
use crate::net::Example;

pub use ciw::{load_ciw_config, parse_ciw_config, save_ciw_config, write_ciw_config};
pub use format::{
    load_dataset, load_split, parse_dataset, save_dataset, save_split, write_dataset, DatasetFile,
    DATASET_VERSION, TRAIN_FILE, VAL_FILE,
};
pub use sewer::load_sewer_annotations;
pub use synth::{generate_synthetic, GenConfig, SyntheticSet};

/// One record. `labels` index into the known-then-unknown class list.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub is_unknown: bool,
}

impl Sample {
    pub fn is_normal(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Train and validation samples over a shared class list. Classes
/// `0..known.len()` are the known ones; the rest never appear in training.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub dim: usize,
    pub known_classes: Vec<String>,
    pub unknown_classes: Vec<String>,
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
}

impl DatasetSplit {
    pub fn all_classes(&self) -> Vec<String> {
        self.known_classes
            .iter()
            .chain(&self.unknown_classes)
            .cloned()
            .collect()
    }

    pub fn known_count(&self) -> usize {
        self.known_classes.len()
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for c in self.known_classes.iter().chain(&self.unknown_classes) {
            if !names.insert(c) {
                return Err(Error::invalid(format!(
                    "class `{c}` listed more than once"
                )));
            }
        }
        let known = self.known_count();
        let total = known + self.unknown_classes.len();
        for s in &self.train {
            check_sample(s, self.dim, known, total)?;
            if s.is_unknown {
                return Err(Error::invalid(format!(
                    "training sample `{}` carries an unknown class",
                    s.id
                )));
            }
        }
        for s in &self.validation {
            check_sample(s, self.dim, known, total)?;
        }
        Ok(())
    }

    /// Known validation samples.
    pub fn known_validation(&self) -> impl Iterator<Item = &Sample> {
        self.validation.iter().filter(|s| !s.is_unknown)
    }

    pub fn has_unknown_validation(&self) -> bool {
        self.validation.iter().any(|s| s.is_unknown)
    }
}

pub(crate) fn check_sample(s: &Sample, dim: usize, known: usize, total: usize) -> Result<()> {
    if s.features.len() != dim {
        return Err(Error::invalid(format!(
            "sample `{}` has {} features, expected {dim}",
            s.id,
            s.features.len()
        )));
    }
    if s.features.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("sample `{}` has non-finite features", s.id)));
    }
    if let Some(&bad) = s.labels.iter().find(|&&l| l >= total) {
        return Err(Error::invalid(format!(
            "sample `{}` references class {bad}, only {total} exist",
            s.id
        )));
    }
    let has_unknown = s.labels.iter().any(|&l| l >= known);
    if has_unknown != s.is_unknown {
        return Err(Error::invalid(format!(
            "sample `{}`: unknown flag {} disagrees with its labels",
            s.id, s.is_unknown as u8
        )));
    }
    Ok(())
}

/// Converts known samples to training examples over the `known` heads.
pub fn known_examples<'a, I>(samples: I, known: usize) -> Result<Vec<Example>>
where
    I: IntoIterator<Item = &'a Sample>,
{
    samples
        .into_iter()
        .map(|s| {
            if s.is_unknown {
                return Err(Error::invalid(format!(
                    "sample `{}` is unknown and cannot be used as a known example",
                    s.id
                )));
            }
            Ok(Example {
                features: s.features.clone(),
                labels: MultiLabel::from_indices(known, &s.labels)?,
            })
        })
        .collect()
}
