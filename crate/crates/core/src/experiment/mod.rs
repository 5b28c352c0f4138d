//! Config files, datasets by name, output tables and the `ex2l` commands.

pub mod commands;
pub mod config;
pub mod data;
pub mod output;

pub use commands::{
    export_heatmaps, gradcam, mmd, screen, search, time_epochs, timeit, train, worker,
    HeatmapIndexRow, MmdRow, RunSummary, ScreenReport, TimeitRow, Workers,
};
pub use config::{parse_config_text, parse_overrides, DataConfig, ExperimentConfig, RawEntry};
pub use data::{build_splits, SplitData};
