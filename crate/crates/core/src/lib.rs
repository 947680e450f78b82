//! Evidential multi-label classification.
//!
//! Each class is treated as a binary defective / non-defective head whose
//! probability follows a Beta distribution parameterized by non-negative
//! evidence. Uncertainty is the vacuity mass of the corresponding
//! subjective-logic opinion, and the maximum over heads flags samples from
//! classes never seen in training.

pub mod data;
pub mod ebra;
pub mod error;
pub mod eval;
pub mod loss;
pub mod net;
pub mod opinion;

pub use ebra::{adjust_base_rates, sigmoid, BaseRateSet, CiwTable};
pub use error::{Error, Result};
pub use loss::{
    binarize_labels, edl_loss_grad, edl_loss_head, edl_loss_total, BinaryLabel, LossValue,
    MultiLabel,
};
pub use opinion::{
    beta_log_density, dirichlet_from_evidence, expected_probability, opinion_from_evidence,
    probability_from_opinion, BaseRatePair, DirichletPair, EvidencePair, EvidenceWeight, Opinion,
};
