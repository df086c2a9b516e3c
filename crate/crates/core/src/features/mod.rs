//! Feature engineering: event aggregation/pivot and the leakage-safe
//! preprocessing chain (sparse filter, split, impute, encode, scale,
//! SMOTE, top-k selection).

mod matrix;
mod pipeline;
mod smote;

pub use matrix::FeatureMatrix;
pub use pipeline::{
    aggregate_and_pivot, apply_preprocess, drop_sparse, encode_categoricals, fit_apply_impute,
    fit_apply_scale, fit_preprocess, select_top_k, stratified_split, top_k_order,
    PreprocessParams, ScaleEntry, STAT_SUFFIXES,
};
pub use smote::smote_balance;
