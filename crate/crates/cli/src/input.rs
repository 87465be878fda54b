use std::io::{BufRead, BufReader};
use std::path::Path;

use wfbws::corpus::VariantCounts;
use wfbws::{Error, TimeSeries};

/// A series file or a per-year counts file, told apart by the header.
pub enum Input {
    Series(TimeSeries),
    Counts(VariantCounts),
}

pub fn load(path: &Path) -> Result<Input, Error> {
    let io_err = |source| Error::Io { path: path.to_owned(), source };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut header = String::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err)?;
        if !line.trim_start().starts_with('#') && !line.trim().is_empty() {
            header = line;
            break;
        }
    }
    if header.split(',').any(|c| c.trim() == "count_focal") {
        Ok(Input::Counts(VariantCounts::read_csv(path)?))
    } else {
        Ok(Input::Series(TimeSeries::read_csv(path)?))
    }
}
