use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observation: variant frequency at a time, with the token count it was estimated from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub time: f64,
    pub frequency: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<u64>,
}

impl Observation {
    pub fn new(time: f64, frequency: f64) -> Self {
        Self { time, frequency, tokens: None }
    }

    pub fn with_tokens(time: f64, frequency: f64, tokens: u64) -> Self {
        Self { time, frequency, tokens: Some(tokens) }
    }
}

/// Frequency time series with strictly increasing times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub label: String,
    pub points: Vec<Observation>,
}

impl TimeSeries {
    pub fn new(label: impl Into<String>, points: Vec<Observation>) -> Result<Self> {
        let series = Self { label: label.into(), points };
        series.validate()?;
        Ok(series)
    }

    /// Build from parallel `(time, frequency)` pairs.
    pub fn from_pairs(label: impl Into<String>, pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            label,
            pairs.iter().map(|&(t, x)| Observation::new(t, x)).collect(),
        )
    }

    fn invalid(&self, reason: impl Into<String>) -> Error {
        Error::InvalidSeries { label: self.label.clone(), reason: reason.into() }
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.points {
            if !p.time.is_finite() {
                return Err(self.invalid(format!("non-finite time {}", p.time)));
            }
            if !(0.0..=1.0).contains(&p.frequency) {
                return Err(self.invalid(format!(
                    "frequency {} at t={} is outside [0, 1]",
                    p.frequency, p.time
                )));
            }
        }
        if let Some(w) = self.points.windows(2).find(|w| w[1].time <= w[0].time) {
            return Err(self.invalid(format!(
                "times must be strictly increasing ({} then {})",
                w[0].time, w[1].time
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.time)
    }

    pub fn frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.frequency)
    }

    pub fn require_len(&self, required: usize) -> Result<()> {
        if self.len() < required {
            Err(Error::TooShort { label: self.label.clone(), len: self.len(), required })
        } else {
            Ok(())
        }
    }

    /// Points `start..=end` as a new series.
    pub fn slice(&self, start: usize, end: usize, label: impl Into<String>) -> Self {
        Self { label: label.into(), points: self.points[start..=end].to_vec() }
    }

    /// Time-reversed copy, mapped to `t -> t_first + t_last - t`.
    pub fn reversed(&self) -> Self {
        let (Some(first), Some(last)) = (self.points.first(), self.points.last()) else {
            return self.clone();
        };
        let span = first.time + last.time;
        let points = self
            .points
            .iter()
            .rev()
            .map(|p| Observation { time: span - p.time, ..*p })
            .collect();
        Self { label: format!("{} (reversed)", self.label), points }
    }

    /// Read CSV with columns `time,frequency[,tokens]`; lines starting with `#` are ignored.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::from_csv_reader(file, label).map_err(|e| match e {
            Error::Csv { source, .. } => Error::Csv { path: path.to_owned(), source },
            other => other,
        })
    }

    pub fn from_csv_reader(reader: impl Read, label: impl Into<String>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let points = rdr
            .deserialize::<Observation>()
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|source| Error::Csv { path: Default::default(), source })?;
        Self::new(label, points)
    }

    /// Write CSV `time,frequency,tokens` (tokens left empty when unknown).
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let csv_err = |source| Error::Csv { path: Default::default(), source };
        wtr.write_record(["time", "frequency", "tokens"]).map_err(csv_err)?;
        for p in &self.points {
            wtr.write_record([
                p.time.to_string(),
                p.frequency.to_string(),
                p.tokens.map(|t| t.to_string()).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        wtr.flush().map_err(|source| Error::Io { path: Default::default(), source })?;
        Ok(())
    }
}
