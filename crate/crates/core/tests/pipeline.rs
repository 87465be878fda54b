//! Counts to change points, end to end through the library.

use rand_distr::{Binomial, Distribution};
use wfbws::changepoint::{recursive_detect, DetectConfig};
use wfbws::corpus::{aggregate_word_set, bin_counts, BinSpec, VariantCounts, Weighting, YearCount};
use wfbws::inference::{default_generation_time, drift_p_value, BootstrapConfig};
use wfbws::rng::replicate_rng;
use wfbws::wf::{simulate_with, SelectionSchedule};
use wfbws::TimeSeries;

const ORIGIN: i64 = 1800;
const YEARS_PER_GEN: i64 = 5;

/// Yearly counts of a word whose focal share follows a WF trajectory with one generation per 5 years.
fn word_counts(word: &str, schedule: &SelectionSchedule, seed: u64) -> VariantCounts {
    let mut rng = replicate_rng(seed, 0);
    let traj = simulate_with(0.2, 1000, schedule, 40, &mut rng).unwrap();
    let rows = (0..40 * YEARS_PER_GEN)
        .map(|offset| {
            let x = traj[(offset / YEARS_PER_GEN) as usize];
            let focal = Binomial::new(400, x).unwrap().sample(&mut rng);
            YearCount { year: ORIGIN + offset, count_focal: focal, count_other: 400 - focal }
        })
        .collect();
    VariantCounts::new(word, rows).unwrap()
}

#[test]
fn reform_year_is_recovered_from_word_counts() {
    let schedule = SelectionSchedule::new(vec![(0, 0.2), (20, -0.2)]).unwrap();
    let spec = BinSpec::new(5, ORIGIN).unwrap();
    let binned: Vec<TimeSeries> = ["alpha", "beta", "gamma"]
        .iter()
        .enumerate()
        .map(|(i, w)| bin_counts(&word_counts(w, &schedule, 11 + i as u64), &spec, 100).unwrap())
        .collect();
    let set = aggregate_word_set("set", &binned, Weighting::Unweighted).unwrap();
    assert_eq!(set.len(), 40);
    assert_eq!(set.points[0].tokens, Some(6000));
    assert_eq!(default_generation_time(&set).unwrap(), 5.0);

    let cfg = DetectConfig { replicates: 99, max_depth: 1, seed: 3, ..DetectConfig::default() };
    let tree = recursive_detect(&set, 5.0, &cfg).unwrap();
    let reform = (ORIGIN + 20 * YEARS_PER_GEN) as f64;
    assert!(tree.significant, "p = {:?}", tree.p_value);
    assert!((tree.split_time - reform).abs() <= 10.0, "split at {}", tree.split_time);
    assert!(tree.before.selstrength > 0.0 && tree.after.selstrength < 0.0);
    assert!(tree.loglik_split >= tree.loglik_const - 1e-9);
}

#[test]
fn strong_selection_is_distinguished_from_drift() {
    let mut rng = replicate_rng(5, 0);
    let traj = simulate_with(0.1, 1000, &SelectionSchedule::constant(0.3), 20, &mut rng).unwrap();
    let pairs: Vec<(f64, f64)> = traj.iter().enumerate().map(|(t, &x)| (t as f64, x)).collect();
    let series = TimeSeries::from_pairs("sweep", &pairs).unwrap();

    let cfg = BootstrapConfig { replicates: 99, seed: 9, ..BootstrapConfig::default() };
    let r = drift_p_value(&series, 1.0, &cfg).unwrap();
    assert!(r.sel_fit.selstrength > 0.1, "s* = {}", r.sel_fit.selstrength);
    assert_eq!(r.p_value, Some(0.01));
    assert!(r.lambda >= 0.0);
}
