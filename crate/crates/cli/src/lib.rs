//! Front end for `rdo-core`: JSON instance files, bound tables, 2-D plot
//! data and digraph-walk instances.

pub mod commands;
pub mod error;
pub mod hard;
pub mod instance_file;
pub mod plot;
pub mod report;

pub use error::{CliError, CliResult, Location};
pub use hard::{gen_hard_instance, HardInstance};
pub use instance_file::{fmt_g17, parse_instance, InstanceFile};
pub use plot::{plot_data, Layer, LayerKind, PlotData};
