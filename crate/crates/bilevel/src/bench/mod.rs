//! Experiment harness: config files, CSV logs, summaries, and the CLI.

pub mod cli;
pub mod config;
pub mod csv;
pub mod summary;

pub use cli::{acceleration_race, cli_run, convergence_table, hyperclean_smoke};
pub use config::{ExperimentConfig, InitSpec, ProblemSpec, RawConfig};
pub use csv::{format_float, read_csv, render_csv, rows_from_run, write_csv, CsvRow, CSV_HEADER};
pub use summary::{summarize, Summary, SummaryRow};
