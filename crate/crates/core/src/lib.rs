//! Importance of groups of correlated variables for tabular prediction
//! models, globally (block permutation) and for single predictions (a linear
//! surrogate over aspect replacements), plus triplots combining both with
//! the variables' correlation tree.

pub mod aspect;
pub mod cluster;
pub mod corr;
pub mod data;
pub mod error;
pub mod global;
pub mod linalg;
pub mod model;
pub mod numfmt;
pub mod render;
pub mod rng;
pub mod triplot;

pub use aspect::{
    build_design, delta_predictions, fit_lasso, fit_ols, predict_aspects, AspectContribution,
    AspectExplanation, AspectOptions, DeltaPredictions, Grouping, LassoFit, SampleDesign,
    SurrogateFit,
};
pub use cluster::{agglomerative, cut_tree, group_variables, Linkage, Merge, MergeTree};
pub use corr::{cor_distance, correlation_matrix, CorrelationMatrix, CorrelationMethod, DistanceMatrix};
pub use data::{
    load_table, save_table, sample_rows, validate_partition, Aspect, AspectPartition, NumericTable,
    Observation,
};
pub use error::{Error, Result};
pub use global::{
    group_importance, permute_group, single_variable_importance, GlobalImportance, GroupImportance,
    PermutationConfig, PermutationRun,
};
pub use model::{
    fit_knn, fit_linear, predict, FnModel, KnnModel, LinearModel, LossFn, ModelAdapter,
    SubprocessModel, MODEL_CMD_ENV,
};
pub use render::{render_aspects, render_triplot, RenderSpec};
pub use rng::RngStream;
pub use triplot::{model_triplot, predict_triplot, TriplotConfig, TriplotMode, TriplotResult};
