use serde::{Deserialize, Serialize};

use crate::dataset::FeatureDataset;
use crate::error::{Error, Result};
use crate::gbdt::TrainParams;

use super::cv::{kfold_cv, CvConfig, CvReport, GbdtLearner};

const NUM_TREES: [usize; 3] = [50, 100, 200];
const LEARNING_RATES: [f64; 3] = [0.05, 0.1, 0.2];
const MAX_LEAVES: [usize; 2] = [15, 31];

/// The fixed 18-point grid; other parameters come from `base`.
pub fn sweep_grid(base: &TrainParams) -> Vec<TrainParams> {
    let mut grid = Vec::new();
    for num_trees in NUM_TREES {
        for learning_rate in LEARNING_RATES {
            for max_leaves in MAX_LEAVES {
                grid.push(TrainParams {
                    num_trees,
                    learning_rate,
                    max_leaves,
                    ..*base
                });
            }
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub best: TrainParams,
    pub reports: Vec<(TrainParams, CvReport)>,
}

/// Cross-validate every grid point on the same folds and keep the highest
/// mean AUC, earliest grid point winning ties.
pub fn sweep(ds: &FeatureDataset, grid: &[TrainParams], config: &CvConfig) -> Result<SweepOutcome> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty hyperparameter grid".into()));
    }
    let mut reports = Vec::with_capacity(grid.len());
    for params in grid {
        let report = kfold_cv(ds, config, &GbdtLearner { params: *params }, "all")?;
        reports.push((*params, report));
    }
    let best = reports
        .iter()
        .fold(None::<&(TrainParams, CvReport)>, |acc, r| match acc {
            Some(a) if a.1.mean >= r.1.mean => Some(a),
            _ => Some(r),
        })
        .map(|r| r.0)
        .expect("non-empty grid");
    Ok(SweepOutcome { best, reports })
}
