//! Time-series likelihood, maximum-likelihood fits of `(N, s)`, and the
//! parametric-bootstrap test of selection against pure drift.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bws::{bws_k_step, bws_log_density};
use crate::error::{Error, Result};
use crate::optimize::{golden_section_max, CoordinateAscent};
use crate::rng::replicate_rng;
use crate::series::{Observation, TimeSeries};
use crate::wf::{simulate_with, SelectionSchedule, WfParams, SELECTION_LIMIT};

/// Search range for `log10 N`.
pub const LOG10_POPSIZE_BOUNDS: (f64, f64) = (0.0, 7.0);
pub const SELECTION_BOUNDS: (f64, f64) = (-SELECTION_LIMIT, SELECTION_LIMIT);
/// Per-sweep movement below which coordinate ascent stops.
pub const STEP_TOL: f64 = 1e-4;
pub const LINE_TOL: f64 = 2e-5;
pub const MAX_SWEEPS: usize = 50;
/// Relative tolerance for a gap to count as an integer number of generations.
pub const GAP_TOL: f64 = 1e-6;

const OPTIMIZER: CoordinateAscent = CoordinateAscent {
    bounds: [LOG10_POPSIZE_BOUNDS, SELECTION_BOUNDS],
    step_tol: STEP_TOL,
    line_tol: LINE_TOL,
    max_sweeps: MAX_SWEEPS,
};

/// One observed transition `from -> to` spanning `generations` WF generations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub from: f64,
    pub to: f64,
    pub generations: usize,
}

/// Smallest gap between consecutive observations.
pub fn default_generation_time(series: &TimeSeries) -> Result<f64> {
    series.require_len(2)?;
    Ok(series
        .points
        .windows(2)
        .map(|w| w[1].time - w[0].time)
        .fold(f64::INFINITY, f64::min))
}

/// Generation index of each observation relative to the first.
pub fn generation_offsets(series: &TimeSeries, generation_time: f64) -> Result<Vec<u64>> {
    if !(generation_time.is_finite() && generation_time > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "generation time must be positive, got {generation_time}"
        )));
    }
    let t0 = series.points.first().map_or(0.0, |p| p.time);
    let mut offsets = Vec::with_capacity(series.len());
    let mut prev: Option<&Observation> = None;
    for p in &series.points {
        if let Some(q) = prev {
            let gap = p.time - q.time;
            let k = gap / generation_time;
            if k.round() < 1.0 || (k - k.round()).abs() > GAP_TOL * k.max(1.0) {
                return Err(Error::GapAlignment { gap, time: p.time, generation_time });
            }
        }
        offsets.push(((p.time - t0) / generation_time).round() as u64);
        prev = Some(p);
    }
    Ok(offsets)
}

/// The transitions of a series, ready for repeated likelihood evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Likelihood {
    steps: Vec<Transition>,
}

impl Likelihood {
    pub fn new(series: &TimeSeries, generation_time: f64) -> Result<Self> {
        series.require_len(2)?;
        let offsets = generation_offsets(series, generation_time)?;
        let steps = series
            .points
            .windows(2)
            .zip(offsets.windows(2))
            .map(|(p, o)| Transition {
                from: p[0].frequency,
                to: p[1].frequency,
                generations: (o[1] - o[0]) as usize,
            })
            .collect();
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[Transition] {
        &self.steps
    }

    pub fn evaluate(&self, params: &WfParams) -> f64 {
        self.steps
            .iter()
            .map(|t| {
                let trans = bws_k_step(t.from, params, t.generations)
                    .expect("transition endpoints were validated");
                bws_log_density(&trans, t.to).expect("frequency validated")
            })
            .sum()
    }

    fn at(&self, log10_popsize: f64, selstrength: f64) -> f64 {
        self.evaluate(&WfParams {
            popsize: 10f64.powf(log10_popsize),
            selstrength,
        })
    }
}

/// Log-likelihood of a series as the sum of BwS log transition densities.
pub fn log_likelihood(series: &TimeSeries, params: &WfParams, generation_time: f64) -> Result<f64> {
    Ok(Likelihood::new(series, generation_time)?.evaluate(params))
}

/// A maximum-likelihood point estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub params: WfParams,
    pub loglik: f64,
    /// False when coordinate ascent hit the sweep limit; the best point found is still reported.
    pub converged: bool,
}

impl Likelihood {
    /// Coordinate ascent over `(log10 N, s)` from `start`.
    pub fn fit_from(&self, start: &WfParams) -> Estimate {
        let r = OPTIMIZER.maximize(
            |p| self.at(p[0], p[1]),
            [start.popsize.log10(), start.selstrength],
        );
        if !r.converged {
            log::warn!("coordinate ascent stopped after {} sweeps without converging", r.sweeps);
        }
        Estimate {
            params: WfParams { popsize: 10f64.powf(r.point[0]), selstrength: r.point[1] },
            loglik: r.value,
            converged: r.converged,
        }
    }

    pub fn fit(&self) -> Estimate {
        self.fit_from(&WfParams { popsize: 1e3, selstrength: 0.0 })
    }

    pub fn fit_drift(&self) -> Estimate {
        let (lo, hi) = LOG10_POPSIZE_BOUNDS;
        let r = golden_section_max(|v| self.at(v, 0.0), lo, hi, LINE_TOL);
        Estimate {
            params: WfParams { popsize: 10f64.powf(r.x), selstrength: 0.0 },
            loglik: r.value,
            converged: true,
        }
    }

    /// Selection and drift fits; the selection fit never scores below the drift fit.
    pub fn fit_nested(&self) -> (Estimate, Estimate) {
        let drift = self.fit_drift();
        let mut sel = self.fit();
        if drift.loglik > sel.loglik {
            sel = Estimate { converged: sel.converged, ..drift };
        }
        (sel, drift)
    }
}

/// Maximum-likelihood `(N*, s*)`.
pub fn fit(series: &TimeSeries, generation_time: f64) -> Result<Estimate> {
    Ok(Likelihood::new(series, generation_time)?.fit())
}

/// Maximum-likelihood `N0*` with `s` pinned to zero.
pub fn fit_drift(series: &TimeSeries, generation_time: f64) -> Result<Estimate> {
    Ok(Likelihood::new(series, generation_time)?.fit_drift())
}

/// Initial frequency of bootstrap replicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapInit {
    /// Start at the first observed frequency.
    #[default]
    ObservedStart,
    /// Draw the starting frequency uniformly from (0, 1).
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    pub init: BootstrapInit,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { replicates: 1000, seed: 0, init: BootstrapInit::ObservedStart }
    }
}

/// Simulate a series observed at the same times as `template`.
pub fn simulate_at_times<R: Rng + ?Sized>(
    template: &TimeSeries,
    generation_time: f64,
    popsize: usize,
    schedule: &SelectionSchedule,
    x_0: f64,
    rng: &mut R,
) -> Result<TimeSeries> {
    let offsets = generation_offsets(template, generation_time)?;
    let last = offsets.last().copied().unwrap_or(0);
    let traj = simulate_with(x_0, popsize, schedule, last, rng)?;
    let points = template
        .points
        .iter()
        .zip(&offsets)
        .map(|(p, &g)| Observation::new(p.time, traj[g as usize]))
        .collect();
    Ok(TimeSeries { label: template.label.clone(), points })
}

pub(crate) fn replicate_start<R: Rng + ?Sized>(
    series: &TimeSeries,
    init: BootstrapInit,
    rng: &mut R,
) -> f64 {
    match init {
        BootstrapInit::ObservedStart => series.points[0].frequency,
        BootstrapInit::Uniform => rng.random::<f64>(),
    }
}

/// Fits under both models, the likelihood ratio, and its bootstrap p-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub label: String,
    pub sel_fit: WfParams,
    pub drift_fit: WfParams,
    pub loglik_sel: f64,
    pub loglik_drift: f64,
    pub lambda: f64,
    /// `(1 + exceed_count) / (replicates_used + 1)`; absent without replicates.
    pub p_value: Option<f64>,
    /// `exceed_count / replicates_used`, the zero-count form.
    pub p_value_raw: Option<f64>,
    pub exceed_count: usize,
    pub replicates: usize,
    pub failed_replicates: usize,
    pub generation_time: f64,
    pub seed: u64,
    pub bootstrap_init: BootstrapInit,
    pub converged: bool,
}

pub(crate) fn empirical_p(exceed: usize, used: usize) -> (Option<f64>, Option<f64>) {
    if used == 0 {
        (None, None)
    } else {
        (
            Some((1 + exceed) as f64 / (used + 1) as f64),
            Some(exceed as f64 / used as f64),
        )
    }
}

pub(crate) fn progress_logger(label: &str, total: usize) -> impl Fn() + Sync + '_ {
    let done = AtomicUsize::new(0);
    let step = (total / 10).max(1);
    move || {
        let n = done.fetch_add(1, Ordering::Relaxed) + 1;
        if n.is_multiple_of(step) || n == total {
            log::info!("{label}: {n}/{total} bootstrap replicates");
        }
    }
}

/// Likelihood-ratio test of selection against drift with a parametric bootstrap.
pub fn drift_p_value(
    series: &TimeSeries,
    generation_time: f64,
    config: &BootstrapConfig,
) -> Result<FitResult> {
    let lik = Likelihood::new(series, generation_time)?;
    let (sel, drift) = lik.fit_nested();
    let lambda = 2.0 * (sel.loglik - drift.loglik);
    let null_popsize = drift.params.rounded().popsize as usize;
    let null = SelectionSchedule::constant(0.0);

    let tick = progress_logger(&series.label, config.replicates);
    let outcomes: Vec<Result<f64>> = (0..config.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(config.seed, r);
            let x_0 = replicate_start(series, config.init, &mut rng);
            let rep = simulate_at_times(series, generation_time, null_popsize, &null, x_0, &mut rng)?;
            let (s, d) = Likelihood::new(&rep, generation_time)?.fit_nested();
            tick();
            Ok(2.0 * (s.loglik - d.loglik))
        })
        .collect();

    let mut exceed = 0;
    let mut failed = 0;
    for outcome in &outcomes {
        match outcome {
            Ok(l) if *l >= lambda => exceed += 1,
            Ok(_) => {}
            Err(e) => {
                log::warn!("{}: bootstrap replicate failed: {e}", series.label);
                failed += 1;
            }
        }
    }
    let (p_value, p_value_raw) = empirical_p(exceed, config.replicates - failed);
    Ok(FitResult {
        label: series.label.clone(),
        sel_fit: sel.params,
        drift_fit: drift.params,
        loglik_sel: sel.loglik,
        loglik_drift: drift.loglik,
        lambda,
        p_value,
        p_value_raw,
        exceed_count: exceed,
        replicates: config.replicates,
        failed_replicates: failed,
        generation_time,
        seed: config.seed,
        bootstrap_init: config.init,
        converged: sel.converged,
    })
}
