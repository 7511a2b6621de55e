//! Synthetic labelled feature sets for exercising the training stack
//! without the original corpora.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::Label;
use crate::dataset::FeatureDataset;
use crate::error::Result;
use crate::scorers::{FeatureRegistry, TRIGGER_FEATURE};

/// Full default registry; the trigger column is drawn around 0.75 for
/// hateful rows and 0.25 otherwise (sd `spread`, clamped to [0, 1]), every
/// other column is uniform noise over its range.
pub fn trigger_signal(n: usize, positive_rate: f64, spread: f64, seed: u64) -> Result<FeatureDataset> {
    let registry = Arc::new(FeatureRegistry::default());
    let trigger = registry
        .index_of(TRIGGER_FEATURE)
        .expect("default registry has the trigger");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hi = Normal::new(0.75, spread).map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
    let lo = Normal::new(0.25, spread).map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = Label::from_positive(rng.random::<f64>() < positive_rate);
        let row: Vec<f64> = (0..registry.len())
            .map(|c| {
                if c == trigger {
                    let d = if label.is_positive() { &hi } else { &lo };
                    d.sample(&mut rng).clamp(0.0, 1.0)
                } else {
                    let (a, b) = FeatureRegistry::range_of(&registry.names()[c]);
                    rng.random_range(a..=b)
                }
            })
            .collect();
        rows.push(row);
        labels.push(label);
    }
    FeatureDataset::from_rows(registry, &rows, labels)
}

/// Same feature distribution as [`trigger_signal`] but labels drawn
/// independently of every feature.
pub fn null_labels(n: usize, positive_rate: f64, seed: u64) -> Result<FeatureDataset> {
    let ds = trigger_signal(n, 0.5, 0.12, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let labels = (0..n)
        .map(|_| Label::from_positive(rng.random::<f64>() < positive_rate))
        .collect();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| ds.row(i).to_vec()).collect();
    FeatureDataset::from_rows(ds.registry().clone(), &rows, labels)
}
