use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;
use wfbws::changepoint::{recursive_detect, ChangePointNode, DetectConfig};
use wfbws::corpus::{
    aggregate_word_set, bin_counts, equalize_sampling, BinSpec, Manifest, VariantCounts, Weighting,
    DEFAULT_MIN_TOKENS,
};
use wfbws::inference::default_generation_time;
use wfbws::{Error, TimeSeries};

use crate::input::{load, Input};
use crate::output::{csv_preamble, write_json, writer, CmdResult, ItemError};
use crate::{Common, Format, InitArg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingArg {
    Unweighted,
    Tokens,
}

impl From<WeightingArg> for Weighting {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::Unweighted => Weighting::Unweighted,
            WeightingArg::Tokens => Weighting::TokenWeighted,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ChangepointArgs {
    /// Series files or per-word count files.
    inputs: Vec<PathBuf>,
    /// Word-set manifest; every listed set is aggregated and analysed.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Restrict the manifest to these sets.
    #[arg(long = "set")]
    sets: Vec<String>,
    /// Bin widths in years applied to count files.
    #[arg(long, default_value = "5", value_delimiter = ',')]
    bin_widths: Vec<u32>,
    /// First year of the bin grid (defaults to the earliest year present).
    #[arg(long, allow_negative_numbers = true)]
    origin_year: Option<i64>,
    #[arg(long, default_value_t = DEFAULT_MIN_TOKENS)]
    min_tokens: u64,
    /// Downsample every point to the smallest token count before detection.
    #[arg(long)]
    equalize: bool,
    /// How word frequencies are averaged within a set.
    #[arg(long, value_enum, default_value_t = WeightingArg::Unweighted)]
    weighting: WeightingArg,
    /// Time units per generation (defaults to the smallest gap of each series).
    #[arg(long)]
    generation_time: Option<f64>,
    #[arg(long, default_value_t = 500)]
    replicates: usize,
    /// Splits with a p-value below this are accepted.
    #[arg(long, default_value_t = 0.05)]
    p_threshold: f64,
    /// Tree levels to test; 1 tests only the full series.
    #[arg(long, default_value_t = 3)]
    max_depth: usize,
    #[arg(long, value_enum, default_value_t = InitArg::Observed)]
    bootstrap_init: InitArg,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

/// One detected change point, in the layout of the published tables.
#[derive(Debug, Clone, Serialize)]
pub struct SplitRow {
    label: String,
    bin_width: Option<u32>,
    #[serde(rename = "T")]
    split_time: f64,
    n_before: f64,
    s_before: f64,
    n_after: f64,
    s_after: f64,
    p_value: Option<f64>,
    p_value_raw: Option<f64>,
    depth: usize,
}

#[derive(Debug, Serialize)]
pub struct DetectItem {
    source: String,
    label: String,
    bin_width: Option<u32>,
    generation_time: f64,
    n_points: usize,
    change_points: Vec<f64>,
    table: Vec<SplitRow>,
    tree: ChangePointNode,
}

fn detect(args: &ChangepointArgs, source: String, bin_width: Option<u32>, series: TimeSeries) -> wfbws::Result<DetectItem> {
    let series = if args.equalize { equalize_sampling(&series, args.common.seed)? } else { series };
    let gt = match args.generation_time {
        Some(g) => g,
        None => default_generation_time(&series)?,
    };
    let config = DetectConfig {
        threshold: args.p_threshold,
        replicates: args.replicates,
        max_depth: args.max_depth,
        seed: args.common.seed,
        init: args.bootstrap_init.into(),
    };
    log::info!("{}: change-point scan over {} points", series.label, series.len());
    let tree = recursive_detect(&series, gt, &config)?;
    let table = tree
        .significant_nodes()
        .into_iter()
        .map(|n| SplitRow {
            label: series.label.clone(),
            bin_width,
            split_time: n.split_time,
            n_before: n.before.popsize,
            s_before: n.before.selstrength,
            n_after: n.after.popsize,
            s_after: n.after.selstrength,
            p_value: n.p_value,
            p_value_raw: n.p_value_raw,
            depth: n.depth,
        })
        .collect();
    Ok(DetectItem {
        source,
        label: series.label.clone(),
        bin_width,
        generation_time: gt,
        n_points: series.len(),
        change_points: tree.change_points(),
        table,
        tree,
    })
}

fn spec_for(args: &ChangepointArgs, width: u32, first_year: i64) -> wfbws::Result<BinSpec> {
    BinSpec::new(width, args.origin_year.unwrap_or(first_year))
}

/// Bin every word of a set on a common grid and average them.
fn aggregate_set(
    args: &ChangepointArgs,
    name: &str,
    words: &[VariantCounts],
    width: u32,
) -> wfbws::Result<TimeSeries> {
    let first = words.iter().filter_map(VariantCounts::first_year).min().unwrap_or(0);
    let spec = spec_for(args, width, first)?;
    let mut binned = Vec::new();
    for w in words {
        match bin_counts(w, &spec, args.min_tokens) {
            Ok(s) => binned.push(s),
            Err(Error::EmptyBinning { .. }) => {
                log::warn!("{name}: '{}' has no bin with {} tokens at width {width}", w.word, args.min_tokens)
            }
            Err(e) => return Err(e),
        }
    }
    aggregate_word_set(name, &binned, args.weighting.into())
}

fn manifest_items(args: &ChangepointArgs, path: &Path, items: &mut Vec<DetectItem>, errors: &mut Vec<ItemError>) {
    let manifest = match Manifest::load(path) {
        Ok(m) => m,
        Err(e) => {
            errors.push(ItemError::new(path.display().to_string(), e));
            return;
        }
    };
    for name in &args.sets {
        if manifest.set(name).is_none() {
            errors.push(ItemError::new(name.clone(), format!("no set '{name}' in {}", path.display())));
        }
    }
    for set in &manifest.sets {
        if !args.sets.is_empty() && !args.sets.contains(&set.name) {
            continue;
        }
        let mut words = Vec::new();
        for file in manifest.files(set) {
            match VariantCounts::read_csv(&file) {
                Ok(c) => words.push(c),
                Err(e) => errors.push(ItemError::new(format!("set {}", set.name), e)),
            }
        }
        if words.is_empty() {
            continue;
        }
        for &width in &args.bin_widths {
            let source = format!("{}#{}", path.display(), set.name);
            match aggregate_set(args, &set.name, &words, width)
                .and_then(|s| detect(args, source.clone(), Some(width), s))
            {
                Ok(item) => items.push(item),
                Err(e) => errors.push(ItemError::new(format!("{source} ({width}-year bins)"), e)),
            }
        }
    }
}

pub fn run(args: &ChangepointArgs) -> CmdResult {
    let mut args = args.clone();
    let format = args.common.resolve(Format::Json);
    let args = &args;
    if args.inputs.is_empty() && args.manifest.is_none() {
        return Err("give input files or --manifest".into());
    }
    let mut items = Vec::new();
    let mut errors = Vec::new();
    for path in &args.inputs {
        let source = path.display().to_string();
        match load(path) {
            Err(e) => errors.push(ItemError::new(source, e)),
            Ok(Input::Series(series)) => match detect(args, source.clone(), None, series) {
                Ok(item) => items.push(item),
                Err(e) => errors.push(ItemError::new(source, e)),
            },
            Ok(Input::Counts(counts)) => {
                for &width in &args.bin_widths {
                    let result = spec_for(args, width, counts.first_year().unwrap_or(0))
                        .and_then(|spec| bin_counts(&counts, &spec, args.min_tokens))
                        .and_then(|s| detect(args, source.clone(), Some(width), s));
                    match result {
                        Ok(item) => items.push(item),
                        Err(e) => errors.push(ItemError::new(format!("{source} ({width}-year bins)"), e)),
                    }
                }
            }
        }
    }
    if let Some(path) = &args.manifest {
        manifest_items(args, path, &mut items, &mut errors);
    }

    match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Body<'a> {
                results: &'a [DetectItem],
                errors: &'a [ItemError],
            }
            write_json(args.common.out.as_deref(), "changepoint", args, Body { results: &items, errors: &errors })?;
        }
        Format::Csv => {
            let mut w = writer(args.common.out.as_deref())?;
            csv_preamble(&mut w, "changepoint", args)?;
            for e in &errors {
                writeln!(w, "# error: {}: {}", e.item, e.error)?;
            }
            let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(&mut w);
            csv.write_record([
                "label", "bin_width", "T", "n_before", "s_before", "n_after", "s_after", "p_value",
                "p_value_raw", "depth",
            ])?;
            for row in items.iter().flat_map(|i| &i.table) {
                csv.serialize(row)?;
            }
            csv.flush()?;
            drop(csv);
            w.flush()?;
        }
    }
    Ok(errors.len())
}
