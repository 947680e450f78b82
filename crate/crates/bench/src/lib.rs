//! Shared fixtures for the benchmarks.

use edl_core::data::{generate_synthetic, known_examples, GenConfig, SyntheticSet};
use edl_core::net::Example;

/// The default synthetic split and its known-class training examples.
pub fn canonical() -> (SyntheticSet, Vec<Example>) {
    let set = generate_synthetic(&GenConfig::default()).expect("default config is valid");
    let examples = known_examples(&set.split.train, set.split.known_count()).expect("train split holds known samples");
    (set, examples)
}
