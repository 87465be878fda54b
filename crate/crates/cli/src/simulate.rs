use std::io::Write;

use clap::Args;
use serde::Serialize;
use wfbws::wf::{simulate_with, SelectionSchedule};
use wfbws::{rng, Observation, TimeSeries, WfParams};

use crate::output::{csv_preamble, write_json, writer, CmdResult};
use crate::{Common, Format};

#[derive(Args, Debug, Clone, Serialize)]
pub struct SimulateArgs {
    /// Population size N (a positive integer).
    #[arg(long)]
    popsize: f64,
    /// Constant selection strength s.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true, conflicts_with = "schedule")]
    selection: f64,
    /// Piecewise selection, `generation:s` pairs such as "0:+0.2,100:-0.2".
    #[arg(long)]
    schedule: Option<String>,
    /// Initial frequency.
    #[arg(long, default_value_t = 0.5)]
    x0: f64,
    /// Number of generations to simulate.
    #[arg(long)]
    generations: u64,
    /// Record every this many generations.
    #[arg(long, default_value_t = 1)]
    observe_every: u64,
    /// Time units per generation in the output.
    #[arg(long, default_value_t = 1.0)]
    generation_time: f64,
    /// Time of generation 0.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    time_origin: f64,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

pub fn parse_schedule(text: &str) -> Result<SelectionSchedule, String> {
    let segments = text
        .replace('\u{2212}', "-")
        .split(',')
        .map(|seg| {
            let (g, s) = seg
                .split_once(':')
                .ok_or_else(|| format!("segment '{seg}' is not of the form generation:s"))?;
            let g = g.trim().parse::<u64>().map_err(|e| format!("generation '{}': {e}", g.trim()))?;
            let s = s.trim().parse::<f64>().map_err(|e| format!("selection '{}': {e}", s.trim()))?;
            Ok((g, s))
        })
        .collect::<Result<Vec<_>, String>>()?;
    SelectionSchedule::new(segments).map_err(|e| e.to_string())
}

pub fn run(args: &SimulateArgs) -> CmdResult {
    let mut args = args.clone();
    let format = args.common.resolve(Format::Csv);
    let args = &args;
    if args.observe_every == 0 {
        return Err("--observe-every must be at least 1".into());
    }
    if args.generation_time.is_nan() || args.generation_time <= 0.0 {
        return Err("--generation-time must be positive".into());
    }
    let params = WfParams::new(args.popsize, args.selection)?;
    let popsize = params.integer_popsize()?;
    let schedule = match &args.schedule {
        Some(text) => parse_schedule(text)?,
        None => SelectionSchedule::constant(params.selstrength),
    };
    let mut rng = rng::replicate_rng(args.common.seed, 0);
    let traj = simulate_with(args.x0, popsize, &schedule, args.generations, &mut rng)?;
    let points: Vec<Observation> = traj
        .iter()
        .enumerate()
        .step_by(args.observe_every as usize)
        .map(|(g, &x)| Observation::new(args.time_origin + g as f64 * args.generation_time, x))
        .collect();
    let series = TimeSeries::new("simulated", points)?;

    match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Body<'a> {
                schedule: &'a SelectionSchedule,
                series: &'a TimeSeries,
            }
            write_json(args.common.out.as_deref(), "simulate", args, Body { schedule: &schedule, series: &series })?;
        }
        Format::Csv => {
            let mut w = writer(args.common.out.as_deref())?;
            csv_preamble(&mut w, "simulate", args)?;
            let mut csv = csv::Writer::from_writer(&mut w);
            csv.write_record(["time", "frequency"])?;
            for p in &series.points {
                csv.write_record([p.time.to_string(), p.frequency.to_string()])?;
            }
            csv.flush()?;
            drop(csv);
            w.flush()?;
        }
    }
    Ok(0)
}
