//! Experiment pipeline, horizon sweeps, figures and the command-line front end.

pub mod cli;
pub mod config;
mod experiment;
mod sweep;
pub mod timeline;

pub use config::{DataConfig, DataSource, EvalConfig, ExperimentConfig, SweepConfig, SCHEMA_VERSION};
pub use experiment::{
    build_report, compare, encoder_probabilities, fit_hmm, load_dataset, model_config, pretrain_windows,
    pretrain_windows_test, run_experiment, score_model, stage_evaluate, stage_pretrain, stage_train,
    train_config, train_variant, write_timelines, evaluation_windows, prepare, OutputDir, Pretrained, Trained,
    GAN_FILE, HMM_FILE, NO_DIS_FILE, PRETRAINED_FILE,
    EvalWindows, ExperimentOutcome, FailureRecord, Predictor, CONSTANT_MODEL, GAN_MODEL, HMM_MODEL,
    MODEL_COLUMNS, NO_DIS_MODEL,
};
pub use sweep::{sweep_csv, sweep_horizons, SweepRow, SWEEP_HEADER};
pub use timeline::{emit_timeline, timeline_svg};
