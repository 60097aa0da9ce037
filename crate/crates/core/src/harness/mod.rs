//! Experiment driver: sweeps over ε and mesh size, extrapolation in h,
//! rate fits and report files.

mod config;
mod export;
mod fit;
mod plot;
mod report;
mod runs;

pub use config::{ExperimentConfig, StructureConfig};
pub use export::export_meshes;
pub use fit::{fit_rate, observed_order, richardson, richardson_ratio, RateFit};
pub use plot::{LinePlot, Series};
pub use report::{
    defect_plot, spectrum_plot, write_converge_csv, write_convergence_outputs, write_defect_outputs,
    write_fattened_csv, write_fattened_outputs, write_limit_csv, write_limit_outputs, CONVERGE_CSV_HEADER,
};
pub use runs::{
    combined_defect, run_convergence, run_fattened, run_limit, run_transfer_defects, ConvergenceReport,
    ConvergenceRow, FattenedReport, FattenedRun, FattenedSummary, LimitReport, LimitRun, ModeFit, RunFailure,
    RunMetadata, SandwichRow,
};
