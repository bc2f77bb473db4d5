use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use ecc_core::metrics::write_csv;
use serde::Serialize;

use crate::{Format, OutputArgs};

pub fn open(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

/// Writes `rows` in the requested format. JSON is an array of objects with the
/// same field names as the CSV header.
pub fn emit<R: Serialize>(out: &OutputArgs, rows: &[R]) -> Result<()> {
    write_rows(out.format, out.output.as_deref(), rows)
}

pub fn write_rows<R: Serialize>(format: Format, path: Option<&Path>, rows: &[R]) -> Result<()> {
    let mut w = open(path)?;
    match format {
        Format::Csv => write_csv(&mut w, rows)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, rows)?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_lines<I: IntoIterator<Item = String>>(path: &Path, lines: I) -> Result<()> {
    let mut w = open(Some(path))?;
    for l in lines {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}
