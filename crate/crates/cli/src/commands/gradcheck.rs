//! `gradcheck`: the oracle suite as a JSON report.

use rbse::oracle::{run_suite, SuiteConfig, SuiteReport};

use crate::error::{CliError, CliResult};

/// Runs the suite and returns the report with its JSON rendering. A failed
/// check is reported through the returned flag so the caller can still emit
/// the report before exiting.
pub fn run(cfg: &SuiteConfig) -> CliResult<(SuiteReport, String)> {
    if cfg.trials == 0 || cfg.max_visible == 0 || cfg.max_hidden == 0 {
        return Err(CliError::Validation(
            "trials, max_visible and max_hidden must be at least 1".to_string(),
        ));
    }
    let report = run_suite(cfg)?;
    let mut json = serde_json::to_string_pretty(&report).map_err(rbse::Error::from)?;
    json.push('\n');
    Ok((report, json))
}

pub fn failure(report: &SuiteReport) -> CliError {
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    CliError::Check(format!("oracle checks failed: {}", failed.join(", ")))
}
