//! Benchmark driver for spectral-risk learners: data loading, settings,
//! seeded experiments and their CSV outputs.

pub mod experiment;
pub mod formats;
pub mod keyvalue;
pub mod settings;

pub use experiment::{run_experiment, summarize, write_outputs, ExperimentOutput, TrajectoryRecord};
pub use settings::Settings;
