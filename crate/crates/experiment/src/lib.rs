//! Experiment harness: configs, sweeps, parallel runs, summaries and plot
//! data on top of `ampgrad_core`.

pub mod config;
pub mod data;
pub mod plot;
pub mod runner;
pub mod summary;
pub mod sweep;

pub use config::ExperimentConfig;
pub use plot::emit_plot_data;
pub use runner::run;
pub use summary::Summary;
