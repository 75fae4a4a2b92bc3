use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use tfd_sed::config::{ModelConfig, BASE_CHANNELS};
use tfd_sed::model::{count_params, param_breakdown, param_kinds, SedNet};

use crate::cmd::load_config;
use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct ParamsArgs {
    /// Run config file.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Named architecture, e.g. `tfd`, `pfd:1/8`, `tap+mdfd:5/4:(1)x3+(2,3,3)`.
    #[arg(long)]
    pub preset: Option<String>,
    /// Per-layer base widths for `--preset`.
    #[arg(long, value_delimiter = ',')]
    pub base: Option<Vec<usize>>,
    /// Basis kernels for `--preset`.
    #[arg(long, default_value_t = 4)]
    pub kernels: usize,
    /// Expected count in millions.
    #[arg(long)]
    pub expect: Option<f64>,
    /// Tolerance of `--expect` in percent.
    #[arg(long, default_value_t = 1.0)]
    pub tol: f64,
}

#[derive(Clone, Debug)]
pub struct ParamsReport {
    pub total: usize,
    pub kinds: BTreeMap<&'static str, usize>,
    pub layers: BTreeMap<String, usize>,
}

impl ParamsReport {
    pub fn millions(&self) -> f64 {
        self.total as f64 / 1e6
    }

    pub fn render(&self) -> String {
        let mut s = format!("total\t{}\t{:.3} M\n", self.total, self.millions());
        for (k, n) in &self.kinds {
            s.push_str(&format!("kind.{}\t{}\n", k, n));
        }
        for (k, n) in &self.layers {
            s.push_str(&format!("module.{}\t{}\n", k, n));
        }
        s
    }
}

pub fn report(model: &ModelConfig) -> CliResult<ParamsReport> {
    let (_, store) = SedNet::build(model, 0)?;
    Ok(ParamsReport {
        total: count_params(&store),
        kinds: param_kinds(&store),
        layers: param_breakdown(&store, 1),
    })
}

/// `Ok(rel)` when `got` is within `tol_pct` percent of `expect_m` millions.
pub fn within(got: usize, expect_m: f64, tol_pct: f64) -> std::result::Result<f64, f64> {
    let rel = (got as f64 / 1e6 - expect_m) / expect_m;
    if rel.abs() * 100.0 <= tol_pct {
        Ok(rel)
    } else {
        Err(rel)
    }
}

fn model_of(a: &ParamsArgs) -> CliResult<ModelConfig> {
    if let Some(path) = &a.config {
        return Ok(load_config(path)?.model);
    }
    let base = a.base.clone().unwrap_or_else(|| BASE_CHANNELS.to_vec());
    Ok(ModelConfig::preset(a.preset.as_deref().unwrap_or("baseline"), &base, a.kernels)?)
}

pub fn run(a: &ParamsArgs) -> CliResult<()> {
    if a.tol < 0.0 {
        return Err(CliError::Usage("--tol must be non-negative".into()));
    }
    let r = report(&model_of(a)?)?;
    print!("{}", r.render());
    if let Some(m) = a.expect {
        match within(r.total, m, a.tol) {
            Ok(rel) => println!("expect\t{:.3} M ± {}%\tPASS\t{:+.3}%", m, a.tol, rel * 100.0),
            Err(rel) => {
                println!("expect\t{:.3} M ± {}%\tFAIL\t{:+.3}%", m, a.tol, rel * 100.0);
                return Err(CliError::Check(format!(
                    "{:.3} M is {:+.3}% from {:.3} M",
                    r.millions(),
                    rel * 100.0,
                    m
                )));
            }
        }
    }
    Ok(())
}
