use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::{Cli, Failure};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: &'static str,
    command: &'a str,
    config: &'a Cli,
    result: T,
}

/// One named property with its outcome.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub tag: String,
    pub what: String,
    pub passed: bool,
    pub detail: serde_json::Value,
}

impl Check {
    pub fn new(tag: &str, what: &str, passed: bool, detail: serde_json::Value) -> Self {
        Check { tag: tag.into(), what: what.into(), passed, detail }
    }
}

pub fn out_path(cli: &Cli, name: &str) -> Result<PathBuf, Failure> {
    std::fs::create_dir_all(&cli.out)?;
    Ok(cli.out.join(name))
}

/// Writes `{schema_version, command, config, result}` as pretty JSON.
pub fn write_report<T: Serialize>(cli: &Cli, command: &str, name: &str, result: T) -> Result<PathBuf, Failure> {
    let path = out_path(cli, name)?;
    let env = Envelope { schema_version: SCHEMA_VERSION, command, config: cli, result };
    let mut w = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(&mut w, &env).map_err(friedrichs::Error::from)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(path)
}

pub fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(path)?))
}
