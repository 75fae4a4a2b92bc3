use std::path::PathBuf;

use clap::Args;
use tfd_sed::synth::{synth, SynthSpec};

use crate::cmd::read_text;
use crate::error::CliResult;

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Dataset spec (`key = value` lines); defaults apply when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the spec seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run(a: &SynthArgs) -> CliResult<()> {
    let mut spec = match &a.spec {
        Some(p) => SynthSpec::parse(&read_text(p)?)?,
        None => SynthSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    synth(&spec, &a.out)?;
    let total: usize = spec.clips.iter().sum();
    println!("wrote {} clips to {}", total, a.out.display());
    Ok(())
}
