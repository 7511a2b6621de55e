use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::FeatureDataset;
use crate::error::{Error, Result};
use crate::gbdt::TrainParams;
use crate::par;
use crate::scorers::Family;

use super::cv::{cv_on_folds, stratified_folds, CvConfig, CvReport, GbdtLearner, StratifiedRandomLearner};

/// A column subset to cross-validate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    All,
    Only(Family),
    RandomBaseline,
}

impl FeatureGroup {
    /// The five rows of the standard ablation.
    pub fn standard() -> Vec<FeatureGroup> {
        vec![
            FeatureGroup::All,
            FeatureGroup::Only(Family::Toxicity),
            FeatureGroup::Only(Family::Sentiment),
            FeatureGroup::Only(Family::Hate),
            FeatureGroup::RandomBaseline,
        ]
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureGroup::All => "all",
            FeatureGroup::Only(f) => f.as_str(),
            FeatureGroup::RandomBaseline => "random",
        }
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One CV report per group, all on the same folds. A random-baseline row is
/// appended if `groups` lacks one.
pub fn ablation(
    ds: &FeatureDataset,
    groups: &[FeatureGroup],
    config: &CvConfig,
    params: &TrainParams,
) -> Result<Vec<CvReport>> {
    let mut groups = groups.to_vec();
    if !groups.contains(&FeatureGroup::RandomBaseline) {
        groups.push(FeatureGroup::RandomBaseline);
    }
    let mut views = Vec::with_capacity(groups.len());
    for g in &groups {
        views.push(match g {
            FeatureGroup::Only(family) => {
                let cols = ds.registry().family_columns(*family);
                if cols.is_empty() {
                    return Err(Error::InvalidArgument(format!(
                        "feature group `{g}` has no columns in the registry"
                    )));
                }
                Some(ds.select_columns(&cols)?)
            }
            _ => None,
        });
    }

    let folds = stratified_folds(ds.labels(), config.k, config.seed)?;
    let gbdt = GbdtLearner { params: *params };
    let jobs: Vec<(FeatureGroup, Option<FeatureDataset>)> = groups.into_iter().zip(views).collect();
    par::map_slice(config.mode, &jobs, |(group, view)| match group {
        FeatureGroup::RandomBaseline => cv_on_folds(ds, &folds, config, &StratifiedRandomLearner, group.name()),
        _ => cv_on_folds(view.as_ref().unwrap_or(ds), &folds, config, &gbdt, group.name()),
    })
    .into_iter()
    .collect()
}
