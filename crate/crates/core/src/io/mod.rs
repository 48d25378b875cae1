//! Configuration, count-table files and run dispatch.

pub mod config;
pub mod counts;
pub mod run;

pub use config::{load_config, parse_config, Mode, RunConfig};
pub use counts::{load_count_table, parse_count_table, write_count_table};
pub use run::{run, RunOutput};
