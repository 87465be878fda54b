use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

pub type CmdResult = Result<usize, Box<dyn std::error::Error>>;

pub fn writer(out: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Top-level JSON document: schema version, command, effective config, then the body fields.
#[derive(Serialize)]
pub struct Envelope<'a, C: Serialize, B: Serialize> {
    pub schema_version: u32,
    pub command: &'a str,
    pub config: &'a C,
    #[serde(flatten)]
    pub body: B,
}

pub fn write_json<C: Serialize, B: Serialize>(
    out: Option<&Path>,
    command: &str,
    config: &C,
    body: B,
) -> Result<(), Box<dyn std::error::Error>> {
    let mut w = writer(out)?;
    let doc = Envelope { schema_version: SCHEMA_VERSION, command, config, body };
    serde_json::to_writer_pretty(&mut w, &doc)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// `#`-prefixed header lines carrying the schema version and config, for CSV outputs.
pub fn csv_preamble<C: Serialize>(w: &mut dyn Write, command: &str, config: &C) -> io::Result<()> {
    writeln!(w, "# schema_version: {SCHEMA_VERSION}")?;
    writeln!(w, "# command: {command}")?;
    writeln!(w, "# config: {}", serde_json::to_string(config).map_err(io::Error::other)?)
}

/// A per-item failure reported alongside successful results.
#[derive(Debug, Clone, Serialize)]
pub struct ItemError {
    pub item: String,
    pub error: String,
}

impl ItemError {
    pub fn new(item: impl Into<String>, error: impl ToString) -> Self {
        let e = Self { item: item.into(), error: error.to_string() };
        log::error!("{}: {}", e.item, e.error);
        e
    }
}
