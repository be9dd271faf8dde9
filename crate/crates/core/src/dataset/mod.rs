//! Survey tables: schema, ingestion, quintiles, folds, group summaries and a
//! synthetic generator.

mod folds;
mod quintiles;
mod schema;
mod summary;
mod synth;
mod table;

pub use folds::{stratified_undersampled_folds, undersample_balanced, Fold, FoldAssignment};
pub use quintiles::{assign_ntiles, assign_quintiles};
pub use schema::{FeatureKind, FeatureSpec, Schema};
pub use summary::{summarize_groups, welch_t_test, CovariateSummary, GroupSummary, Significance, WelchTest};
pub use synth::{synth_generate, LatentRecord, SynthConfig, SynthOutput};
pub use table::{load_table, write_table_csv, FeatureTable, LoadOptions};
