//! Per-year variant counts, fixed-width binning, word-set aggregation and
//! sampling-error equalization.

use std::collections::{BTreeMap, HashSet};
use std::io::Read;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_distr::{Distribution, Hypergeometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::WfRng;
use crate::series::{Observation, TimeSeries};

/// Bins below this many tokens are dropped unless told otherwise.
pub const DEFAULT_MIN_TOKENS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearCount {
    pub year: i64,
    pub count_focal: u64,
    pub count_other: u64,
}

impl YearCount {
    pub fn total(&self) -> u64 {
        self.count_focal + self.count_other
    }
}

/// Annual token counts of the focal variant and its competitor for one word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantCounts {
    pub word: String,
    pub rows: Vec<YearCount>,
}

impl VariantCounts {
    /// Rows may come in any order; they are stored sorted by year.
    pub fn new(word: impl Into<String>, mut rows: Vec<YearCount>) -> Result<Self> {
        let word = word.into();
        rows.sort_by_key(|r| r.year);
        if let Some(w) = rows.windows(2).find(|w| w[0].year == w[1].year) {
            return Err(Error::InvalidSeries {
                label: word,
                reason: format!("year {} appears more than once", w[0].year),
            });
        }
        Ok(Self { word, rows })
    }

    /// Read `year,count_focal,count_other`; the word is the file stem.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        let word = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::from_csv_reader(file, word).map_err(|e| match e {
            Error::Csv { source, .. } => Error::Csv { path: path.to_owned(), source },
            other => other,
        })
    }

    pub fn from_csv_reader(reader: impl Read, word: impl Into<String>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let rows = rdr
            .deserialize::<YearCount>()
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|source| Error::Csv { path: PathBuf::new(), source })?;
        Self::new(word, rows)
    }

    pub fn first_year(&self) -> Option<i64> {
        self.rows.first().map(|r| r.year)
    }

    pub fn total_tokens(&self) -> u64 {
        self.rows.iter().map(YearCount::total).sum()
    }
}

/// Fixed-width bins `[origin + k·width, origin + (k+1)·width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinSpec {
    pub width_years: u32,
    pub origin_year: i64,
}

impl BinSpec {
    pub fn new(width_years: u32, origin_year: i64) -> Result<Self> {
        if width_years == 0 {
            return Err(Error::InvalidParameter("bin width must be at least one year".into()));
        }
        Ok(Self { width_years, origin_year })
    }

    /// Bins aligned on the earliest year present in `counts`.
    pub fn aligned(width_years: u32, counts: &VariantCounts) -> Result<Self> {
        Self::new(width_years, counts.first_year().unwrap_or(0))
    }

    pub fn index(&self, year: i64) -> i64 {
        (year - self.origin_year).div_euclid(self.width_years as i64)
    }

    /// Midpoint of bin `index`; years 1800–1809 at width 10 give 1804.5.
    pub fn midpoint(&self, index: i64) -> f64 {
        let w = self.width_years as i64;
        (self.origin_year + index * w) as f64 + (w - 1) as f64 / 2.0
    }
}

/// Sum counts per bin; bins with fewer than `min_tokens` tokens are left out.
pub fn bin_counts(counts: &VariantCounts, spec: &BinSpec, min_tokens: u64) -> Result<TimeSeries> {
    let mut bins: BTreeMap<i64, (u64, u64)> = BTreeMap::new();
    for r in &counts.rows {
        let b = bins.entry(spec.index(r.year)).or_default();
        b.0 += r.count_focal;
        b.1 += r.total();
    }
    let points: Vec<Observation> = bins
        .into_iter()
        .filter(|&(_, (_, total))| total > 0 && total >= min_tokens)
        .map(|(k, (focal, total))| {
            Observation::with_tokens(spec.midpoint(k), focal as f64 / total as f64, total)
        })
        .collect();
    if points.is_empty() {
        return Err(Error::EmptyBinning { label: counts.word.clone(), min_tokens });
    }
    TimeSeries::new(counts.word.clone(), points)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Unweighted,
    TokenWeighted,
}

/// Average several per-word series bin by bin.
///
/// A word contributes to a bin only if it has a point there. The aggregated
/// token count is the sum over contributors, or absent if any contributor
/// lacks one.
pub fn aggregate_word_set(
    label: impl Into<String>,
    series_list: &[TimeSeries],
    weighting: Weighting,
) -> Result<TimeSeries> {
    let label = label.into();
    let mut by_time: BTreeMap<u64, (f64, Vec<Observation>)> = BTreeMap::new();
    for s in series_list {
        for p in &s.points {
            if weighting == Weighting::TokenWeighted && p.tokens.is_none() {
                return Err(Error::MissingTokens(p.time));
            }
            // Order-preserving key for finite floats.
            let bits = p.time.to_bits();
            let key = if p.time.is_sign_negative() { !bits } else { bits | (1 << 63) };
            by_time.entry(key).or_insert_with(|| (p.time, Vec::new())).1.push(*p);
        }
    }
    let points: Vec<Observation> = by_time
        .into_values()
        .map(|(time, mut members)| {
            // Sorting makes the floating-point sums independent of word order.
            members.sort_by(|a, b| {
                a.frequency.total_cmp(&b.frequency).then(a.tokens.cmp(&b.tokens))
            });
            let tokens: Option<u64> = members.iter().map(|p| p.tokens).sum();
            let frequency = match weighting {
                Weighting::Unweighted => {
                    members.iter().map(|p| p.frequency).sum::<f64>() / members.len() as f64
                }
                Weighting::TokenWeighted => {
                    let n = tokens.unwrap_or(0);
                    if n == 0 {
                        members.iter().map(|p| p.frequency).sum::<f64>() / members.len() as f64
                    } else {
                        members
                            .iter()
                            .map(|p| p.frequency * p.tokens.unwrap_or(0) as f64)
                            .sum::<f64>()
                            / n as f64
                    }
                }
            };
            Observation { time, frequency: frequency.clamp(0.0, 1.0), tokens }
        })
        .collect();
    if points.is_empty() {
        return Err(Error::InvalidSeries { label, reason: "no word has any retained bin".into() });
    }
    TimeSeries::new(label, points)
}

/// Downsample every point to the smallest token count in the series.
pub fn equalize_sampling(series: &TimeSeries, seed: u64) -> Result<TimeSeries> {
    let counts = series
        .points
        .iter()
        .map(|p| p.tokens.ok_or(Error::MissingTokens(p.time)))
        .collect::<Result<Vec<u64>>>()?;
    let Some(&n_min) = counts.iter().min() else {
        return Ok(series.clone());
    };
    let mut rng = WfRng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(series.len());
    for (p, &n) in series.points.iter().zip(&counts) {
        if n == n_min {
            points.push(*p);
            continue;
        }
        let successes = ((p.frequency * n as f64).round() as u64).min(n);
        let hyper = Hypergeometric::new(n, successes, n_min)
            .map_err(|e| Error::InvalidParameter(format!("hypergeometric draw at t={}: {e}", p.time)))?;
        let drawn = hyper.sample(&mut rng);
        points.push(Observation::with_tokens(p.time, drawn as f64 / n_min as f64, n_min));
    }
    TimeSeries::new(series.label.clone(), points)
}

/// Outcome of the minimum-usage screen for one word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageScreen {
    pub word: String,
    pub max_focal: f64,
    pub max_other: f64,
    pub passes: bool,
}

/// Both variants must exceed `threshold` relative frequency in at least one
/// bin of the given width (bins with no tokens are ignored).
pub fn usage_screen(counts: &VariantCounts, width_years: u32, threshold: f64) -> Result<UsageScreen> {
    let spec = BinSpec::aligned(width_years, counts)?;
    let (max_focal, max_other) = match bin_counts(counts, &spec, 1) {
        Ok(series) => series
            .frequencies()
            .fold((0.0f64, 0.0f64), |(a, b), x| (a.max(x), b.max(1.0 - x))),
        Err(Error::EmptyBinning { .. }) => (0.0, 0.0),
        Err(e) => return Err(e),
    };
    Ok(UsageScreen {
        word: counts.word.clone(),
        max_focal,
        max_other,
        passes: max_focal > threshold && max_other > threshold,
    })
}

/// One named word set in a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordSet {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Directory holding `<word>.csv`, relative to the manifest.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub words: Vec<String>,
    /// Explicit count files, relative to the manifest.
    #[serde(default)]
    pub paths: Vec<PathBuf>,
}

impl WordSet {
    /// Count-file locations, resolved against `base`.
    pub fn files(&self, base: &Path) -> Vec<PathBuf> {
        let dir = base.join(self.dir.as_deref().unwrap_or(Path::new("")));
        self.words
            .iter()
            .map(|w| dir.join(format!("{w}.csv")))
            .chain(self.paths.iter().map(|p| base.join(p)))
            .collect()
    }
}

/// TOML file listing word sets:
///
/// ```toml
/// [[set]]
/// name = "A"
/// dir = "counts/A"
/// words = ["assegurar", "essa"]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(rename = "set", default)]
    pub sets: Vec<WordSet>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut manifest = Self::parse(&text).map_err(|e| match e {
            Error::Manifest { message, .. } => Error::Manifest { path: path.to_owned(), message },
            other => other,
        })?;
        manifest.base_dir = path.parent().map(Path::to_owned).unwrap_or_default();
        Ok(manifest)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let manifest: Self = toml::from_str(text).map_err(|e| Error::Manifest {
            path: PathBuf::new(),
            message: e.to_string(),
        })?;
        let mut seen = HashSet::new();
        for set in &manifest.sets {
            if !seen.insert(set.name.as_str()) {
                return Err(Error::Manifest {
                    path: PathBuf::new(),
                    message: format!("set '{}' is defined twice", set.name),
                });
            }
        }
        Ok(manifest)
    }

    pub fn set(&self, name: &str) -> Option<&WordSet> {
        self.sets.iter().find(|s| s.name == name)
    }

    pub fn files(&self, set: &WordSet) -> Vec<PathBuf> {
        set.files(&self.base_dir)
    }
}
