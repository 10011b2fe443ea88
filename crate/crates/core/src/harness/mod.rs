//! Experiment harness: datasets, configuration, training pipelines,
//! checkpoints and reports.

mod checkpoint;
mod continuous;
mod dataset;
mod experiment;
mod report;
mod visualize;

pub use checkpoint::{
    count_parameters, load_checkpoint, load_checkpoint_of, read_manifest, save_checkpoint,
    Checkpoint, Dims, FrozenRef, Manifest, ModelKind, TensorEntry, TrainedModel, FORMAT_VERSION,
    MANIFEST_FILE,
};
pub use continuous::ContinuousHmmLm;
pub use dataset::{
    data_dir, dataset_label, fetch_dataset, known_dataset, load_dataset, read_dataset_text,
    resolve_dataset, sha256_hex, verify_download, FetchedFile, KnownDataset, DATA_DIR_ENV,
    DEFAULT_DATA_DIR, DEFAULT_VALID_FRACTION, KNOWN_DATASETS, SAMPLE_NAME, SAMPLE_TEXT,
};
pub use experiment::{
    evaluate_model, run_experiment, run_experiment_on, ExperimentConfig, ExperimentOutcome, Method,
    ResultsRow, DEFAULT_CONTINUOUS_ITERS, DEFAULT_DISCRETE_ITERS,
};
pub use report::{
    append_results, emit_results_table, parse_results_csv, read_results_csv, sort_rows,
    write_table, ResultsTable,
};
pub use visualize::{
    fit_hidden_tree, hidden_dimension_tree, visualize_corpus, visualize_report, VisualizeConfig,
    VisualizeReport,
};
