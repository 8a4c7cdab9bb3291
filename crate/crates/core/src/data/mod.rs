//! Cohort ingestion, cleaning and merging.

pub mod pipeline;
pub mod table;

pub use pipeline::{
    clean_cohort, drop_constant_features, impute_column_mean, intersect_and_merge, merge,
    preprocess, LabeledDataset, MergedDataset, PreprocessSummary,
};
pub use table::{parse_table, read_table, ExpressionTable, ParseOptions, ValueFormat};
