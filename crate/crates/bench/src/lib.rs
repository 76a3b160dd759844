//! Fixtures shared by the benchmarks.

use ijip_core::dataset::{QuerySet, RetrievalDatabase};
use ijip_core::synthetic::SyntheticSpec;

/// `labels * per_label` database rows of width `dim`, plus `labels` queries.
pub fn fixture(labels: usize, per_label: usize, dim: usize) -> (RetrievalDatabase, QuerySet) {
    SyntheticSpec {
        labels,
        per_label,
        test_per_label: 1,
        dim,
        noise: 0.5,
        aux: true,
        seed: 1,
    }
    .generate()
    .into_parts()
}
