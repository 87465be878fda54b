//! Change points in `(N, s)`: a split model with independent parameters on
//! each side of a time `T`, a bootstrap against the constant model, and
//! recursive subdivision of significant segments.
//!
//! A split at `T` between observations `j` and `j + 1` divides the series
//! into points `0..=j` and `j..=n-1`. Observation `j` ends the left chain and
//! starts the right one, so the transition that straddles `T` is scored
//! under the right-hand parameters.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{
    empirical_p, progress_logger, replicate_start, simulate_at_times, BootstrapInit, Estimate,
    Likelihood,
};
use crate::rng::{mix_seed, replicate_rng};
use crate::series::TimeSeries;
use crate::wf::{SelectionSchedule, WfParams};

/// Observations required on each side of a split.
pub const MIN_SEGMENT_POINTS: usize = 3;
/// Shortest series that admits a split.
pub const MIN_SCAN_POINTS: usize = 2 * MIN_SEGMENT_POINTS;

pub const DEFAULT_REPLICATES: usize = 500;
pub const DEFAULT_THRESHOLD: f64 = 0.05;
pub const DEFAULT_MAX_DEPTH: usize = 3;

/// Maximum-likelihood fit of the split model at one candidate time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFit {
    pub split_time: f64,
    /// Index of the last observation before `split_time`.
    pub boundary: usize,
    pub before: Estimate,
    pub after: Estimate,
    pub loglik: f64,
}

/// Index `j` such that `t_j < T < t_{j+1}`, with enough points on each side.
fn boundary_index(series: &TimeSeries, split_time: f64) -> Result<usize> {
    let invalid = |reason: String| Error::InvalidSplit { time: split_time, reason };
    let n = series.len();
    let before = series.points.iter().take_while(|p| p.time < split_time).count();
    if before == 0 || before == n {
        return Err(invalid("outside the observed time range".into()));
    }
    if series.points[before].time == split_time {
        return Err(invalid("coincides with an observation".into()));
    }
    if before < MIN_SEGMENT_POINTS || n - before < MIN_SEGMENT_POINTS {
        return Err(invalid(format!(
            "needs {MIN_SEGMENT_POINTS} observations on each side, has {before} before and {} after",
            n - before
        )));
    }
    Ok(before - 1)
}

fn left_segment(series: &TimeSeries, j: usize) -> TimeSeries {
    series.slice(0, j, format!("{} [..{}]", series.label, series.points[j].time))
}

fn right_segment(series: &TimeSeries, j: usize) -> TimeSeries {
    series.slice(j, series.len() - 1, format!("{} [{}..]", series.label, series.points[j].time))
}

/// Fit one segment, starting from and never scoring below the constant-model parameters.
fn fit_segment(lik: &Likelihood, constant: &WfParams) -> Estimate {
    let fitted = lik.fit_from(constant);
    let at_constant = lik.evaluate(constant);
    if at_constant > fitted.loglik {
        Estimate { params: *constant, loglik: at_constant, converged: fitted.converged }
    } else {
        fitted
    }
}

fn fit_split_with(
    series: &TimeSeries,
    j: usize,
    split_time: f64,
    generation_time: f64,
    constant: &WfParams,
) -> Result<SplitFit> {
    let left = Likelihood::new(&left_segment(series, j), generation_time)?;
    let right = Likelihood::new(&right_segment(series, j), generation_time)?;
    let before = fit_segment(&left, constant);
    let after = fit_segment(&right, constant);
    Ok(SplitFit { split_time, boundary: j, before, after, loglik: before.loglik + after.loglik })
}

/// Fit independent `(N, s)` on each side of `split_time`.
pub fn fit_split(series: &TimeSeries, split_time: f64, generation_time: f64) -> Result<SplitFit> {
    let j = boundary_index(series, split_time)?;
    let constant = Likelihood::new(series, generation_time)?.fit();
    fit_split_with(series, j, split_time, generation_time, &constant.params)
}

/// Admissible split times: midpoints between consecutive observations.
pub fn candidate_times(series: &TimeSeries) -> Vec<f64> {
    let n = series.len();
    if n < MIN_SCAN_POINTS {
        return Vec::new();
    }
    (MIN_SEGMENT_POINTS - 1..=n - MIN_SEGMENT_POINTS - 1)
        .map(|j| 0.5 * (series.points[j].time + series.points[j + 1].time))
        .collect()
}

/// Best split of a series together with the constant fit it is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scan {
    pub constant: Estimate,
    pub best: SplitFit,
}

impl Scan {
    /// `2 (loglik_split - loglik_const)`.
    pub fn lambda(&self) -> f64 {
        2.0 * (self.best.loglik - self.constant.loglik)
    }
}

fn scan(series: &TimeSeries, generation_time: f64) -> Result<Scan> {
    series.require_len(MIN_SCAN_POINTS)?;
    let constant = Likelihood::new(series, generation_time)?.fit();
    let fits = candidate_times(series)
        .into_par_iter()
        .map(|t| {
            let j = boundary_index(series, t)?;
            fit_split_with(series, j, t, generation_time, &constant.params)
        })
        .collect::<Result<Vec<_>>>()?;
    let best = fits
        .into_iter()
        .reduce(|a, b| if b.loglik > a.loglik { b } else { a })
        .expect("a series of admissible length has a candidate");
    Ok(Scan { constant, best })
}

/// One node of the change-point tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangePointNode {
    pub label: String,
    pub start_time: f64,
    pub end_time: f64,
    pub n_points: usize,
    pub depth: usize,
    pub split_time: f64,
    pub before: WfParams,
    pub after: WfParams,
    pub constant: WfParams,
    pub loglik_split: f64,
    pub loglik_const: f64,
    pub lambda: f64,
    /// `(1 + exceed_count) / (replicates_used + 1)`; absent without replicates.
    pub p_value: Option<f64>,
    /// `exceed_count / replicates_used`.
    pub p_value_raw: Option<f64>,
    pub exceed_count: usize,
    pub replicates: usize,
    pub failed_replicates: usize,
    pub seed: u64,
    pub significant: bool,
    pub children: Vec<ChangePointNode>,
}

impl ChangePointNode {
    fn from_scan(series: &TimeSeries, scan: &Scan, depth: usize) -> Self {
        Self {
            label: series.label.clone(),
            start_time: series.points[0].time,
            end_time: series.points[series.len() - 1].time,
            n_points: series.len(),
            depth,
            split_time: scan.best.split_time,
            before: scan.best.before.params,
            after: scan.best.after.params,
            constant: scan.constant.params,
            loglik_split: scan.best.loglik,
            loglik_const: scan.constant.loglik,
            lambda: scan.lambda(),
            p_value: None,
            p_value_raw: None,
            exceed_count: 0,
            replicates: 0,
            failed_replicates: 0,
            seed: 0,
            significant: false,
            children: Vec::new(),
        }
    }

    /// Significant split times of the whole tree, in time order.
    pub fn change_points(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect_significant(&mut out);
        out.sort_by(f64::total_cmp);
        out
    }

    fn collect_significant(&self, out: &mut Vec<f64>) {
        if self.significant {
            out.push(self.split_time);
        }
        for c in &self.children {
            c.collect_significant(out);
        }
    }

    /// Significant nodes in time order of their split.
    pub fn significant_nodes(&self) -> Vec<&ChangePointNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            if n.significant {
                out.push(n);
            }
            stack.extend(n.children.iter());
        }
        out.sort_by(|a, b| a.split_time.total_cmp(&b.split_time));
        out
    }
}

/// Best split at every admissible midpoint, without a p-value.
pub fn scan_split(series: &TimeSeries, generation_time: f64) -> Result<ChangePointNode> {
    let s = scan(series, generation_time)?;
    Ok(ChangePointNode::from_scan(series, &s, 1))
}

/// Bootstrap settings for the split test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitTestConfig {
    pub replicates: usize,
    pub seed: u64,
    pub init: BootstrapInit,
}

impl Default for SplitTestConfig {
    fn default() -> Self {
        Self { replicates: DEFAULT_REPLICATES, seed: 0, init: BootstrapInit::ObservedStart }
    }
}

fn test_split(
    series: &TimeSeries,
    generation_time: f64,
    config: &SplitTestConfig,
    depth: usize,
) -> Result<ChangePointNode> {
    let observed = scan(series, generation_time)?;
    let mut node = ChangePointNode::from_scan(series, &observed, depth);
    let lambda = node.lambda;
    let null_popsize = observed.constant.params.rounded().popsize as usize;
    let null = SelectionSchedule::constant(observed.constant.params.selstrength);

    let tick = progress_logger(&series.label, config.replicates);
    let outcomes: Vec<Result<f64>> = (0..config.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(config.seed, r);
            let x_0 = replicate_start(series, config.init, &mut rng);
            let rep = simulate_at_times(series, generation_time, null_popsize, &null, x_0, &mut rng)?;
            let l = scan(&rep, generation_time)?.lambda();
            tick();
            Ok(l)
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
    node.p_value = p_value;
    node.p_value_raw = p_value_raw;
    node.exceed_count = exceed;
    node.replicates = config.replicates;
    node.failed_replicates = failed;
    node.seed = config.seed;
    Ok(node)
}

/// Best split with a bootstrap p-value against the constant model.
pub fn changepoint_p_value(
    series: &TimeSeries,
    generation_time: f64,
    config: &SplitTestConfig,
) -> Result<ChangePointNode> {
    test_split(series, generation_time, config, 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    pub threshold: f64,
    pub replicates: usize,
    /// Levels of the tree that are tested; 1 means only the full series.
    pub max_depth: usize,
    pub seed: u64,
    pub init: BootstrapInit,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            replicates: DEFAULT_REPLICATES,
            max_depth: DEFAULT_MAX_DEPTH,
            seed: 0,
            init: BootstrapInit::ObservedStart,
        }
    }
}

/// Test for a split and recurse into both sides of each significant one.
///
/// Sub-series too short to scan are not represented in the tree.
pub fn recursive_detect(
    series: &TimeSeries,
    generation_time: f64,
    config: &DetectConfig,
) -> Result<ChangePointNode> {
    if config.max_depth == 0 {
        return Err(Error::InvalidParameter("max_depth must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&config.threshold) {
        return Err(Error::InvalidParameter(format!(
            "threshold {} is not a probability",
            config.threshold
        )));
    }
    detect_at(series, generation_time, config, config.seed, 1)
}

fn detect_at(
    series: &TimeSeries,
    generation_time: f64,
    config: &DetectConfig,
    seed: u64,
    depth: usize,
) -> Result<ChangePointNode> {
    let test = SplitTestConfig { replicates: config.replicates, seed, init: config.init };
    let mut node = test_split(series, generation_time, &test, depth)?;
    node.significant = node.p_value.is_some_and(|p| p < config.threshold);
    log::info!(
        "{}: split at {} (depth {depth}), p = {:?}",
        series.label,
        node.split_time,
        node.p_value
    );
    if node.significant && depth < config.max_depth {
        let j = boundary_index(series, node.split_time)?;
        let sides = [(left_segment(series, j), 1), (right_segment(series, j), 2)];
        for (side, salt) in sides {
            if side.len() >= MIN_SCAN_POINTS {
                node.children
                    .push(detect_at(&side, generation_time, config, mix_seed(seed, salt), depth + 1)?);
            }
        }
    }
    Ok(node)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::simulate_at_times;
    use crate::series::Observation;

    fn grid_series(xs: &[f64], spacing: f64) -> TimeSeries {
        TimeSeries::new(
            "c",
            xs.iter().enumerate().map(|(i, &x)| Observation::new(i as f64 * spacing, x)).collect(),
        )
        .unwrap()
    }

    fn step_series(seed: u64, x0: f64) -> TimeSeries {
        let template = grid_series(&vec![0.5; 41], 5.0);
        let schedule = SelectionSchedule::new(vec![(0, 0.2), (20, -0.2)]).unwrap();
        let mut rng = replicate_rng(seed, 0);
        simulate_at_times(&template, 5.0, 1000, &schedule, x0, &mut rng).unwrap()
    }

    #[test]
    fn split_outside_range_or_too_close_to_edges() {
        let s = grid_series(&[0.2, 0.25, 0.3, 0.32, 0.4, 0.45, 0.5], 1.0);
        assert!(matches!(fit_split(&s, -1.0, 1.0), Err(Error::InvalidSplit { .. })));
        assert!(matches!(fit_split(&s, 7.5, 1.0), Err(Error::InvalidSplit { .. })));
        assert!(fit_split(&s, 1.5, 1.0).is_err());
        assert!(fit_split(&s, 3.0, 1.0).is_err());
        assert!(fit_split(&s, 5.5, 1.0).is_err());
        let f = fit_split(&s, 2.5, 1.0).unwrap();
        assert_eq!(f.boundary, 2);
    }

    #[test]
    fn candidate_counts() {
        assert!(candidate_times(&grid_series(&[0.5; 5], 1.0)).is_empty());
        assert_eq!(candidate_times(&grid_series(&[0.5; 6], 1.0)), vec![2.5]);
        assert_eq!(candidate_times(&grid_series(&[0.5; 9], 2.0)).len(), 4);
        assert!(matches!(
            scan_split(&grid_series(&[0.5; 5], 1.0), 1.0),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn split_loglik_is_sum_of_segments() {
        let s = step_series(4, 0.3);
        let f = fit_split(&s, 102.5, 5.0).unwrap();
        let left = crate::inference::log_likelihood(&s.slice(0, 20, "l"), &f.before.params, 5.0).unwrap();
        let right = crate::inference::log_likelihood(&s.slice(20, 40, "r"), &f.after.params, 5.0).unwrap();
        assert!((f.loglik - left - right).abs() < 1e-9);
    }

    #[test]
    fn step_in_selection_is_located() {
        let s = step_series(11, 0.2);
        let node = scan_split(&s, 5.0).unwrap();
        assert!(node.loglik_split >= node.loglik_const - 1e-9);
        assert!((node.split_time - 100.0).abs() <= 10.0, "{}", node.split_time);
        assert!(node.before.selstrength > 0.0 && node.after.selstrength < 0.0);
    }

    #[test]
    fn split_never_scores_below_constant() {
        for seed in 0..5 {
            let template = grid_series(&[0.5; 12], 1.0);
            let mut rng = replicate_rng(seed, 0);
            let s = simulate_at_times(&template, 1.0, 200, &SelectionSchedule::constant(0.0), 0.5, &mut rng)
                .unwrap();
            let node = scan_split(&s, 1.0).unwrap();
            assert!(node.loglik_split >= node.loglik_const - 1e-9);
            assert!(node.lambda >= -2e-9);
        }
    }

    #[test]
    fn reversed_hump_splits_at_mirrored_time() {
        let xs = [0.2, 0.26, 0.33, 0.41, 0.5, 0.58, 0.62, 0.58, 0.5, 0.41, 0.33, 0.26, 0.2];
        let s = grid_series(&xs, 1.0);
        let forward = scan_split(&s, 1.0).unwrap();
        let backward = scan_split(&s.reversed(), 1.0).unwrap();
        let mirrored = 12.0 - backward.split_time;
        assert!((forward.split_time - mirrored).abs() <= 1.0 + 1e-12);
        assert!(forward.before.selstrength > 0.0 && forward.after.selstrength < 0.0);
        assert!(backward.before.selstrength > 0.0 && backward.after.selstrength < 0.0);
    }

    #[test]
    fn zero_replicates_gives_no_p_value() {
        let s = step_series(2, 0.2);
        let cfg = SplitTestConfig { replicates: 0, ..Default::default() };
        let node = changepoint_p_value(&s, 5.0, &cfg).unwrap();
        assert_eq!(node.p_value, None);
        assert_eq!(node.p_value_raw, None);
    }

    #[test]
    fn detection_is_deterministic_and_recurses() {
        let s = step_series(5, 0.2);
        let cfg = DetectConfig { replicates: 39, max_depth: 2, seed: 3, ..Default::default() };
        let a = recursive_detect(&s, 5.0, &cfg).unwrap();
        let b = recursive_detect(&s, 5.0, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.significant);
        assert_eq!(a.p_value, Some(0.025));
        assert_eq!(a.children.len(), 2);
        assert!(a.children.iter().all(|c| c.depth == 2 && c.children.is_empty()));
        assert!(a.change_points().contains(&a.split_time));
        assert!(recursive_detect(&s, 5.0, &DetectConfig { max_depth: 0, ..cfg }).is_err());
    }
}
