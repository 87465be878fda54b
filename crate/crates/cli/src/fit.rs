use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use wfbws::corpus::{bin_counts, equalize_sampling, BinSpec, VariantCounts, DEFAULT_MIN_TOKENS};
use wfbws::inference::{default_generation_time, drift_p_value, BootstrapConfig, FitResult};
use wfbws::TimeSeries;

use crate::input::{load, Input};
use crate::output::{csv_preamble, write_json, writer, CmdResult, ItemError};
use crate::{Common, Format, InitArg};

#[derive(Args, Debug, Clone, Serialize)]
pub struct FitArgs {
    /// Series files (`time,frequency[,tokens]`) or count files (`year,count_focal,count_other`).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Bin widths in years applied to count files.
    #[arg(long, default_value = "10", value_delimiter = ',')]
    bin_widths: Vec<u32>,
    /// First year of the bin grid (defaults to each word's earliest year).
    #[arg(long, allow_negative_numbers = true)]
    origin_year: Option<i64>,
    /// Bins with fewer tokens are dropped.
    #[arg(long, default_value_t = DEFAULT_MIN_TOKENS)]
    min_tokens: u64,
    /// Downsample every point to the smallest token count first.
    #[arg(long)]
    equalize: bool,
    /// Time units per generation (defaults to the smallest gap of each series).
    #[arg(long)]
    generation_time: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    replicates: usize,
    /// Starting frequency of bootstrap replicates.
    #[arg(long, value_enum, default_value_t = InitArg::Observed)]
    bootstrap_init: InitArg,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

/// One fitted series in the JSON report.
#[derive(Debug, Serialize)]
pub struct FitItem {
    source: PathBuf,
    bin_width: Option<u32>,
    #[serde(flatten)]
    fit: FitResult,
}

/// One row of the CSV report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub label: String,
    pub bin_width: Option<u32>,
    pub n_drift: f64,
    pub n_selection: f64,
    pub s: f64,
    pub p_value: Option<f64>,
    pub p_value_raw: Option<f64>,
    pub lambda: f64,
    pub loglik_selection: f64,
    pub loglik_drift: f64,
    pub exceed_count: usize,
    pub replicates: usize,
    pub failed_replicates: usize,
    pub generation_time: f64,
    pub seed: u64,
    pub converged: bool,
}

impl From<&FitItem> for FitRow {
    fn from(item: &FitItem) -> Self {
        let f = &item.fit;
        Self {
            label: f.label.clone(),
            bin_width: item.bin_width,
            n_drift: f.drift_fit.popsize,
            n_selection: f.sel_fit.popsize,
            s: f.sel_fit.selstrength,
            p_value: f.p_value,
            p_value_raw: f.p_value_raw,
            lambda: f.lambda,
            loglik_selection: f.loglik_sel,
            loglik_drift: f.loglik_drift,
            exceed_count: f.exceed_count,
            replicates: f.replicates,
            failed_replicates: f.failed_replicates,
            generation_time: f.generation_time,
            seed: f.seed,
            converged: f.converged,
        }
    }
}

fn fit_one(args: &FitArgs, series: &TimeSeries) -> wfbws::Result<FitResult> {
    let series = if args.equalize { equalize_sampling(series, args.common.seed)? } else { series.clone() };
    let gt = match args.generation_time {
        Some(g) => g,
        None => default_generation_time(&series)?,
    };
    let config = BootstrapConfig {
        replicates: args.replicates,
        seed: args.common.seed,
        init: args.bootstrap_init.into(),
    };
    log::info!("{}: fitting {} points, generation time {gt}", series.label, series.len());
    drift_p_value(&series, gt, &config)
}

fn binned(args: &FitArgs, counts: &VariantCounts, width: u32) -> wfbws::Result<TimeSeries> {
    let spec = match args.origin_year {
        Some(origin) => BinSpec::new(width, origin)?,
        None => BinSpec::aligned(width, counts)?,
    };
    let mut series = bin_counts(counts, &spec, args.min_tokens)?;
    series.label = counts.word.clone();
    Ok(series)
}

fn item_name(path: &Path, width: Option<u32>) -> String {
    match width {
        Some(w) => format!("{} ({w}-year bins)", path.display()),
        None => path.display().to_string(),
    }
}

pub fn run(args: &FitArgs) -> CmdResult {
    let mut args = args.clone();
    let format = args.common.resolve(Format::Json);
    let args = &args;
    let mut items = Vec::new();
    let mut errors = Vec::new();
    for path in &args.inputs {
        match load(path) {
            Err(e) => errors.push(ItemError::new(path.display().to_string(), e)),
            Ok(Input::Series(series)) => match fit_one(args, &series) {
                Ok(fit) => items.push(FitItem { source: path.clone(), bin_width: None, fit }),
                Err(e) => errors.push(ItemError::new(item_name(path, None), e)),
            },
            Ok(Input::Counts(counts)) => {
                for &width in &args.bin_widths {
                    match binned(args, &counts, width).and_then(|s| fit_one(args, &s)) {
                        Ok(fit) => items.push(FitItem { source: path.clone(), bin_width: Some(width), fit }),
                        Err(e) => errors.push(ItemError::new(item_name(path, Some(width)), e)),
                    }
                }
            }
        }
    }

    match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Body<'a> {
                results: &'a [FitItem],
                errors: &'a [ItemError],
            }
            write_json(args.common.out.as_deref(), "fit", args, Body { results: &items, errors: &errors })?;
        }
        Format::Csv => {
            let mut w = writer(args.common.out.as_deref())?;
            csv_preamble(&mut w, "fit", args)?;
            for e in &errors {
                writeln!(w, "# error: {}: {}", e.item, e.error)?;
            }
            let mut csv = csv::Writer::from_writer(&mut w);
            for item in &items {
                csv.serialize(FitRow::from(item))?;
            }
            if items.is_empty() {
                csv.write_record(FIT_COLUMNS)?;
            }
            csv.flush()?;
            drop(csv);
            w.flush()?;
        }
    }
    Ok(errors.len())
}

const FIT_COLUMNS: [&str; 16] = [
    "label",
    "bin_width",
    "n_drift",
    "n_selection",
    "s",
    "p_value",
    "p_value_raw",
    "lambda",
    "loglik_selection",
    "loglik_drift",
    "exceed_count",
    "replicates",
    "failed_replicates",
    "generation_time",
    "seed",
    "converged",
];
