//! Model evaluation: threshold metrics, rank-based AUROC with bootstrap
//! confidence intervals, stratified cross-validation, and the train/test
//! cohort comparison table.

pub mod auroc;
pub mod bootstrap;
pub mod cv;
pub mod metrics;
pub mod ttest;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use auroc::{auroc, roc_points};
pub use bootstrap::{bootstrap_auroc_ci, BootstrapCi};
pub use cv::{cross_validate, stratified_folds, CvResult, FoldMetrics};
pub use metrics::{confusion_and_metrics, ConfusionCounts, Metrics};
pub use ttest::{
    cohort_table, incomplete_beta, t_test, t_test_from_summary, two_sided_p, TTestResult,
    TTestRow, TTestVariant,
};

/// Everything measured for one model on the held-out test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEval {
    pub accuracy: f64,
    pub confusion: ConfusionCounts,
    /// metrics with deceased as the positive class
    pub positive_deceased: Metrics,
    /// metrics with survival as the positive class
    pub positive_survived: Metrics,
    pub auroc: f64,
    pub auroc_ci: (f64, f64),
    pub bootstrap_skipped: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvResult>,
    #[serde(skip)]
    pub roc_points: Vec<(f64, f64)>,
    #[serde(skip)]
    pub bootstrap_samples: Vec<f64>,
}

/// The full evaluation report emitted by the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EvalReport {
    pub models: BTreeMap<String, ModelEval>,
    pub ttest_rows: Vec<TTestRow>,
}
