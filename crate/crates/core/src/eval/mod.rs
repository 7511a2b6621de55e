//! Validation toolkit: ROC AUC, stratified k-fold cross validation with
//! in-fold resampling, the feature-family ablation, the fixed
//! hyperparameter grid and the per-class score density report.

mod ablation;
mod auc;
mod cv;
mod kde;
mod sweep;

pub use ablation::{ablation, FeatureGroup};
pub use auc::auc;
pub use cv::{
    cv_on_folds, kfold_cv, stratified_folds, write_fold_csv, write_summary_csv, CvConfig, CvReport, Folds, GbdtLearner,
    Learner, StratifiedRandomLearner, FOLD_CSV_HEADER, SUMMARY_CSV_HEADER,
};
pub use kde::{
    kde_report, scott_bandwidth, trapezoid, ClassCurve, KdeCurves, DENSITY_CSV_HEADER, GRID_POINTS, HISTOGRAM_BINS,
    HISTOGRAM_CSV_HEADER,
};
pub use sweep::{sweep, sweep_grid, SweepOutcome};
