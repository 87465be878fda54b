use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;
use wfbws::analysis::{
    classify_region, distance_sweep, ellipse_from_fits, g_test, g_test_independence, unit_grid,
    write_ellipses_csv, write_sweep_csv, Containment, ContingencyTable, EllipseSummary, GTest,
    RegionClass, SweepRow,
};

use crate::output::{csv_preamble, write_json, writer, CmdResult, ItemError};
use crate::{Common, Format};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ContainmentArg {
    Box,
    Exact,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct AnalyzeArgs {
    /// JSON reports written by `wfbws fit`, one binning or several per file.
    fits: Vec<PathBuf>,
    /// Threshold separating likely selection from the rest.
    #[arg(long, default_value_t = 0.05)]
    p_threshold: f64,
    /// How an ellipse is compared with the selection region.
    #[arg(long, value_enum, default_value_t = ContainmentArg::Box)]
    containment: ContainmentArg,
    /// Accept labels that are missing from some binnings.
    #[arg(long)]
    allow_missing: bool,
    /// Named group of labels, `name=a,b,c`; two groups give a contingency table.
    #[arg(long = "group")]
    groups: Vec<String>,
    /// Contingency counts, rows separated by `;`, e.g. "9,2,8;7,4,23".
    #[arg(long)]
    table: Option<String>,
    /// Compute approximation distances over a grid of starting frequencies.
    #[arg(long)]
    sweep: bool,
    #[arg(long, default_value_t = 50)]
    popsize: usize,
    /// Selection strengths for the sweep.
    #[arg(long, default_value = "0,0.5", value_delimiter = ',', allow_negative_numbers = true)]
    selection: Vec<f64>,
    /// Generations per transition in the sweep.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Number of evenly spaced starting frequencies in [0, 1].
    #[arg(long, default_value_t = 21)]
    grid_points: usize,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Debug, Serialize)]
struct EllipseItem {
    #[serde(flatten)]
    summary: EllipseSummary,
    class: RegionClass,
}

#[derive(Debug, Serialize)]
struct GTestReport {
    source: String,
    table: Vec<Vec<u64>>,
    goodness_of_fit: Option<GTest>,
    independence: Option<GTest>,
}

/// `(label -> binning -> (s, p))` collected from fit reports.
type FitsByLabel = BTreeMap<String, BTreeMap<String, (f64, f64)>>;

fn collect_fits(args: &AnalyzeArgs, errors: &mut Vec<ItemError>) -> (FitsByLabel, Vec<String>) {
    let mut by_label: FitsByLabel = BTreeMap::new();
    let mut binnings: Vec<String> = Vec::new();
    for path in &args.fits {
        let name = path.display().to_string();
        let doc: serde_json::Value = match std::fs::read_to_string(path)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
        {
            Ok(v) => v,
            Err(e) => {
                errors.push(ItemError::new(name, e));
                continue;
            }
        };
        let Some(results) = doc.get("results").and_then(|r| r.as_array()) else {
            errors.push(ItemError::new(name, "no 'results' array; expected a fit report"));
            continue;
        };
        for r in results {
            let label = r.get("label").and_then(|v| v.as_str()).unwrap_or_default().to_string();
            let binning = match r.get("bin_width").and_then(|v| v.as_u64()) {
                Some(w) => format!("{w}"),
                None => name.clone(),
            };
            let s = r.pointer("/sel_fit/selstrength").and_then(|v| v.as_f64());
            let p = r.get("p_value").and_then(|v| v.as_f64());
            let (Some(s), Some(p)) = (s, p) else {
                errors.push(ItemError::new(format!("{label} [{binning}]"), "fit has no selection strength or p-value"));
                continue;
            };
            if !binnings.contains(&binning) {
                binnings.push(binning.clone());
            }
            let entry = by_label.entry(label.clone()).or_default();
            match entry.entry(binning) {
                Entry::Occupied(e) => {
                    errors.push(ItemError::new(format!("{label} [{}]", e.key()), "duplicate fit for this binning"));
                }
                Entry::Vacant(e) => {
                    e.insert((s, p));
                }
            }
        }
    }
    (by_label, binnings)
}

fn ellipses(args: &AnalyzeArgs, errors: &mut Vec<ItemError>) -> Vec<EllipseItem> {
    let (by_label, binnings) = collect_fits(args, errors);
    let containment = match args.containment {
        ContainmentArg::Box => Containment::BoundingBox,
        ContainmentArg::Exact => Containment::Exact,
    };
    let mut out = Vec::new();
    for (label, fits) in by_label {
        if fits.len() < binnings.len() && !args.allow_missing {
            let missing: Vec<&str> =
                binnings.iter().filter(|b| !fits.contains_key(*b)).map(String::as_str).collect();
            errors.push(ItemError::new(label.clone(), format!("missing from binnings {missing:?}")));
        }
        let pairs: Vec<(f64, f64)> = fits.into_values().collect();
        match ellipse_from_fits(label.clone(), &pairs) {
            Ok(summary) => {
                let class = classify_region(&summary, args.p_threshold, containment);
                out.push(EllipseItem { summary, class });
            }
            Err(e) => errors.push(ItemError::new(label, e)),
        }
    }
    out
}

fn run_g_tests(source: &str, table: &ContingencyTable, errors: &mut Vec<ItemError>) -> GTestReport {
    let goodness_of_fit = g_test(table).map_err(|e| errors.push(ItemError::new(source, e))).ok();
    let independence = g_test_independence(table)
        .map_err(|e| errors.push(ItemError::new(format!("{source} (independence)"), e)))
        .ok();
    if let Some(g) = &goodness_of_fit {
        log::info!("{source}: G = {:.4}, dof = {}, p = {:.4}", g.g, g.dof, g.p_value);
    }
    GTestReport { source: source.into(), table: table.counts.clone(), goodness_of_fit, independence }
}

fn group_table(
    groups: &[String],
    items: &[EllipseItem],
    errors: &mut Vec<ItemError>,
) -> Option<(Vec<String>, ContingencyTable)> {
    let mut names = Vec::new();
    let mut classes: Vec<Vec<RegionClass>> = Vec::new();
    for g in groups {
        let Some((name, members)) = g.split_once('=') else {
            errors.push(ItemError::new(g.clone(), "group must look like name=a,b,c"));
            return None;
        };
        let mut cls = Vec::new();
        for m in members.split(',').map(str::trim).filter(|m| !m.is_empty()) {
            match items.iter().find(|e| e.summary.label == m) {
                Some(e) => cls.push(e.class),
                None => errors.push(ItemError::new(format!("group {name}"), format!("no ellipse for '{m}'"))),
            }
        }
        names.push(name.trim().to_string());
        classes.push(cls);
    }
    let refs: Vec<&[RegionClass]> = classes.iter().map(Vec::as_slice).collect();
    match ContingencyTable::from_classes(&refs) {
        Ok(t) => Some((names, t)),
        Err(e) => {
            errors.push(ItemError::new("groups", e));
            None
        }
    }
}

pub fn run(args: &AnalyzeArgs) -> CmdResult {
    let mut args = args.clone();
    let format = args.common.resolve(Format::Json);
    let args = &args;
    if args.fits.is_empty() && args.table.is_none() && !args.sweep {
        return Err("nothing to do: give fit reports, --table, or --sweep".into());
    }
    let mut errors = Vec::new();
    let items = ellipses(args, &mut errors);

    let mut g_tests = Vec::new();
    let mut group_names = Vec::new();
    if !args.groups.is_empty() {
        if let Some((names, table)) = group_table(&args.groups, &items, &mut errors) {
            g_tests.push(run_g_tests("groups", &table, &mut errors));
            group_names = names;
        }
    }
    if let Some(text) = &args.table {
        match ContingencyTable::parse(text) {
            Ok(table) => g_tests.push(run_g_tests("table", &table, &mut errors)),
            Err(e) => errors.push(ItemError::new("table", e)),
        }
    }
    let sweep: Vec<SweepRow> = if args.sweep {
        distance_sweep(args.popsize, &args.selection, args.k, &unit_grid(args.grid_points))?
    } else {
        Vec::new()
    };

    match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Body<'a> {
                ellipses: &'a [EllipseItem],
                groups: &'a [String],
                g_tests: &'a [GTestReport],
                sweep: &'a [SweepRow],
                errors: &'a [ItemError],
            }
            let body = Body { ellipses: &items, groups: &group_names, g_tests: &g_tests, sweep: &sweep, errors: &errors };
            write_json(args.common.out.as_deref(), "analyze", args, body)?;
        }
        Format::Csv => {
            if args.sweep && !items.is_empty() {
                return Err("CSV output holds one table; run the sweep and the ellipses separately".into());
            }
            let mut w = writer(args.common.out.as_deref())?;
            csv_preamble(&mut w, "analyze", args)?;
            for e in &errors {
                writeln!(w, "# error: {}: {}", e.item, e.error)?;
            }
            if args.sweep {
                write_sweep_csv(&sweep, &mut w)?;
            } else {
                let rows: Vec<_> = items.into_iter().map(|e| (e.summary, e.class)).collect();
                write_ellipses_csv(&rows, &mut w)?;
            }
        }
    }
    Ok(errors.len())
}
