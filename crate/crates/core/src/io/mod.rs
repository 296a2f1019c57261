//! Run configuration, tabular output and figure data.

pub mod config;
pub mod figures;
pub mod suite;
pub mod table;

pub use config::{ConfigOverrides, DriveKind, Format, RunConfig};
pub use figures::{emit_figure_data, FigureId};
pub use table::{read_table, write_table, DataTable};
pub use suite::{run_invariant_suite, CheckResult, SuiteReport};
