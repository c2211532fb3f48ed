//! File formats and the workflows behind the command-line tool.

mod bundle;
mod config;
mod dataset;
mod pipeline;

pub use bundle::{format_number, BundleFile, Manifest, ResultBundle};
pub use config::{
    ConvergenceSection, EstimateSection, ModelSection, PolicySection, RunConfig, SimulateSection,
    Workflow,
};
pub use dataset::{read_dataset, read_dataset_from, write_dataset, write_dataset_to, CSV_COLUMNS};
pub use pipeline::run_workflow;
