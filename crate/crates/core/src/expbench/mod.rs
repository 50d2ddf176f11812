//! Experiment drivers: dataset generation, the variant comparison, the
//! context-dimensionality study, and report rendering.

mod comparison;
mod dataset;
pub mod io;
mod report;
mod store;
mod study;
mod svg;

pub use comparison::{
    build_samples, evaluate_on_material, graph_for_run, run_comparison, split_materials,
    ComparisonConfig, ComparisonOutcome, ExperimentReport, LossCurve, MaterialMetric,
    TrainedModel, TrajectoryRecord, VariantSummary,
};
pub use dataset::{
    generate_dataset, Dataset, DatasetConfig, FamilyKind, MaterialRun, SkippedMaterial, TaskScene,
    A_MAX, ONSET_HEADROOM, ONSET_THRESHOLD, TASK_STEPS,
};
pub use report::render_report;
pub use store::{load_dataset, save_dataset};
pub use study::{run_ec_dim_study, StudyConfig, StudyTable};
