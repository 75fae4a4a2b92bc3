use clap::Args;
use sed_tensor::gradsuite::{op_suites, run as run_suite, Suite, SuiteResult};
use tfd_sed::gradsuite::model_suites;

use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Suite name, or `ops` / `model` for a whole family.
    #[arg(long)]
    pub module: Option<String>,
    /// Random instances per suite.
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
}

/// Suites selected by `module`; all of them when `None`.
pub fn select(module: Option<&str>) -> CliResult<Vec<Suite>> {
    let ops = op_suites();
    let model = model_suites();
    let chosen: Vec<Suite> = match module {
        None => ops.into_iter().chain(model).collect(),
        Some("ops") => ops,
        Some("model") => model,
        Some(name) => ops.into_iter().chain(model).filter(|s| s.name == name).collect(),
    };
    if chosen.is_empty() {
        return Err(CliError::Usage(format!("no gradient suite named `{}`", module.unwrap_or(""))));
    }
    Ok(chosen)
}

pub fn line(r: &SuiteResult) -> String {
    format!(
        "{}\t{}\tworst {:.3e}\ttol {:.0e}\tseeds {}\tkink redraws {}",
        if r.passed() { "PASS" } else { "FAIL" },
        r.name,
        r.worst,
        r.tol,
        r.seeds,
        r.redrawn
    )
}

pub fn run(a: &GradcheckArgs) -> CliResult<()> {
    if a.seeds == 0 {
        return Err(CliError::Usage("--seeds must be positive".into()));
    }
    let mut failed = Vec::new();
    for s in select(a.module.as_deref())? {
        let r = run_suite(&s, a.seeds).map_err(tfd_sed::SedError::from)?;
        println!("{}", line(&r));
        if !r.passed() {
            failed.push(r.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(format!("gradient suites failed: {}", failed.join(", "))))
    }
}
