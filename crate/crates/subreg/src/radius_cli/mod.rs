//! Experiment orchestration: TOML configs, task dispatch, the radius
//! verification pipeline, cached reports.

mod cache;
mod config;
mod pipeline;
mod report;

pub use cache::{write_outputs, Cache};
pub use config::{
    BaseConfig, ConfigError, EckartYoungConfig, ExperimentConfig, Format, LadderConfig, OutputConfig,
    PerturbationConfig, Task,
};
pub use pipeline::{list_catalog, run, verify_radius_pipeline, KNOWN_TOL, POSITIVE};
pub use report::{BuildOutcome, BuilderEntry, CheckLine, RunReport, RunStatus, StageTiming};

/// Exit status for configuration errors.
pub const EXIT_CONFIG: i32 = 2;

/// Runs `cfg`, reusing a cached report with the same config hash when a
/// cache is given. Returns the report and whether it came from the cache.
pub fn run_cached(cfg: &ExperimentConfig, cache: Option<&Cache>) -> Result<(RunReport, bool), ConfigError> {
    cfg.validate()?;
    if let Some(hit) = cache.and_then(|c| c.load(&cfg.hash())) {
        return Ok((hit, true));
    }
    let report = run(cfg)?;
    if let Some(c) = cache {
        // A failed cache write only costs a recomputation next time.
        let _ = c.store(&report);
    }
    Ok((report, false))
}
