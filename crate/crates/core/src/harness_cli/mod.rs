//! Experiment plumbing: configs, run manifests, the five ablation
//! experiments, SVG plots and the subcommands of the `synclab` binary.

mod commands;
mod config;
mod experiments;
mod lab;
mod manifest;
mod plot;

pub use commands::{
    cmd_eval, cmd_experiment, cmd_report, cmd_sample, cmd_synth, cmd_train, exit_code, resolve_config, CommandReport,
    Overrides, SampleOptions, EXIT_ACCEPTANCE, EXIT_OK, EXIT_STAGE, EXIT_USAGE,
};
pub use config::{digest, ExperimentConfig, MetricParams, CONFIG_SCHEMA};
pub use experiments::{run_experiment, ArmSummary, Check, ExperimentOutcome, EXPERIMENTS};
pub use lab::{onset_mae, seed_mean, ClipScore, Lab, SampleMode, TrainedModel, Variant};
pub use manifest::{RunManifest, StageState, StageStatus, MANIFEST_NAME, TOOL_VERSION};
pub use plot::{bar_chart_svg, emit_bar_chart, emit_line_chart, line_chart_svg, Bar, BarChart, LineChart, Series};

pub const THREADS_ENV: &str = "SYNCLAB_THREADS";

/// Caps the global thread pool at `SYNCLAB_THREADS` when set. Returns the
/// cap, or a usage error for a value that is not a positive integer.
pub fn configure_threads() -> crate::Result<Option<usize>> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(None) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| crate::Error::Usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
    // a pool built earlier in the process keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(Some(n))
}
