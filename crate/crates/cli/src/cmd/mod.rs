pub mod eval;
pub mod gradcheck;
pub mod params;
pub mod synth;
pub mod train;

use std::fs;
use std::path::Path;

use tfd_sed::config::RunConfig;

use crate::error::{io_err, CliResult};

pub(crate) fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub(crate) fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    Ok(RunConfig::parse(&read_text(path)?)?)
}
