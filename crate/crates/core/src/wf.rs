//! Exact two-variant Wright-Fisher model with selection.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::replicate_rng;
use crate::special::ln_choose;

/// Selection strengths are clamped to this range at every public entry point.
pub const SELECTION_LIMIT: f64 = 5.0;

/// Largest population size for which the dense transition matrix is built.
pub const EXACT_POPSIZE_LIMIT: usize = 2000;

/// Effective population size `N` and selection strength `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WfParams {
    pub popsize: f64,
    pub selstrength: f64,
}

impl WfParams {
    pub fn new(popsize: f64, selstrength: f64) -> Result<Self> {
        if !(popsize.is_finite() && popsize > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "population size must be positive and finite, got {popsize}"
            )));
        }
        if !selstrength.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "selection strength must be finite, got {selstrength}"
            )));
        }
        Ok(Self {
            popsize,
            selstrength: selstrength.clamp(-SELECTION_LIMIT, SELECTION_LIMIT),
        })
    }

    pub fn drift(popsize: f64) -> Result<Self> {
        Self::new(popsize, 0.0)
    }

    /// Population size as an integer, for the exact model and simulation.
    pub fn integer_popsize(&self) -> Result<usize> {
        let rounded = self.popsize.round();
        if (self.popsize - rounded).abs() > 1e-9 || rounded < 1.0 {
            return Err(Error::NonIntegerPopsize(self.popsize));
        }
        Ok(rounded as usize)
    }

    /// Nearest integer population size (at least 1), used when simulating from fitted values.
    pub fn rounded(&self) -> Self {
        Self {
            popsize: self.popsize.round().max(1.0),
            selstrength: self.selstrength,
        }
    }
}

fn check_frequency(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::FrequencyDomain(x))
    }
}

/// Probability that an offspring copies the focal variant, `x / (x + (1-x) e^{-s})`.
pub fn selection_kernel(x: f64, s: f64) -> Result<f64> {
    check_frequency(x)?;
    if !s.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "selection strength must be finite, got {s}"
        )));
    }
    let s = s.clamp(-SELECTION_LIMIT, SELECTION_LIMIT);
    Ok(kernel(x, (-s).exp()))
}

/// Unchecked kernel taking `e^{-s}` precomputed.
#[inline]
pub(crate) fn kernel(x: f64, exp_neg_s: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        x / (x + (1.0 - x) * exp_neg_s)
    }
}

/// The N+1 frequencies `i/N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    popsize: usize,
}

impl FrequencyGrid {
    pub fn new(popsize: usize) -> Result<Self> {
        if popsize == 0 {
            return Err(Error::InvalidParameter("grid population size must be >= 1".into()));
        }
        Ok(Self { popsize })
    }

    pub fn popsize(&self) -> usize {
        self.popsize
    }

    pub fn len(&self) -> usize {
        self.popsize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn frequency(&self, i: usize) -> f64 {
        i as f64 / self.popsize as f64
    }

    pub fn support(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.popsize).map(|i| self.frequency(i))
    }

    /// Index of the grid point nearest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        ((x * self.popsize as f64).round() as usize).min(self.popsize)
    }
}

/// Probability masses over a [`FrequencyGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    pub grid: FrequencyGrid,
    pub mass: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn point(grid: FrequencyGrid, index: usize) -> Self {
        let mut mass = vec![0.0; grid.len()];
        mass[index] = 1.0;
        Self { grid, mass }
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.grid
            .support()
            .zip(&self.mass)
            .map(|(x, p)| x * p)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.grid
            .support()
            .zip(&self.mass)
            .map(|(x, p)| (x - m) * (x - m) * p)
            .sum()
    }

    /// Mass at the grid point nearest `x`.
    pub fn prob_at(&self, x: f64) -> f64 {
        self.mass[self.grid.nearest(x)]
    }
}

/// Binomial(N, g) masses on the N-grid, built from log coefficients.
fn binomial_row(popsize: usize, g: f64, out: &mut [f64]) {
    debug_assert_eq!(out.len(), popsize + 1);
    if g <= 0.0 || g >= 1.0 {
        out.iter_mut().for_each(|m| *m = 0.0);
        out[if g <= 0.0 { 0 } else { popsize }] = 1.0;
        return;
    }
    let n = popsize as u64;
    let (lg, lq) = (g.ln(), (-g).ln_1p());
    for (j, m) in out.iter_mut().enumerate() {
        let j = j as u64;
        *m = (ln_choose(n, j) + j as f64 * lg + (n - j) as f64 * lq).exp();
    }
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|m| *m /= total);
}

fn check_size(popsize: usize) -> Result<()> {
    if popsize > EXACT_POPSIZE_LIMIT {
        Err(Error::PopsizeTooLarge {
            popsize,
            limit: EXACT_POPSIZE_LIMIT,
        })
    } else {
        Ok(())
    }
}

/// One generation: `N x'` is Binomial(N, g(x, s)).
///
/// `x_t` may be any frequency in [0, 1]; grid points are the usual case.
pub fn one_step_transition(x_t: f64, params: &WfParams) -> Result<DiscreteDistribution> {
    check_frequency(x_t)?;
    let popsize = params.integer_popsize()?;
    let grid = FrequencyGrid::new(popsize)?;
    let mut mass = vec![0.0; grid.len()];
    binomial_row(popsize, kernel(x_t, (-params.selstrength).exp()), &mut mass);
    Ok(DiscreteDistribution { grid, mass })
}

/// Dense one-generation transition matrix, row-major, rows indexed by the current state.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    grid: FrequencyGrid,
    rows: Vec<f64>,
}

impl TransitionMatrix {
    pub fn new(params: &WfParams) -> Result<Self> {
        let popsize = params.integer_popsize()?;
        check_size(popsize)?;
        let grid = FrequencyGrid::new(popsize)?;
        let n1 = grid.len();
        let e = (-params.selstrength).exp();
        let mut rows = vec![0.0; n1 * n1];
        for (i, row) in rows.chunks_mut(n1).enumerate() {
            binomial_row(popsize, kernel(grid.frequency(i), e), row);
        }
        Ok(Self { grid, rows })
    }

    pub fn grid(&self) -> FrequencyGrid {
        self.grid
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n1 = self.grid.len();
        &self.rows[i * n1..(i + 1) * n1]
    }

    /// `dist · P`, one generation forward.
    pub fn advance(&self, dist: &DiscreteDistribution) -> DiscreteDistribution {
        let n1 = self.grid.len();
        let mut out = vec![0.0; n1];
        for (i, &p) in dist.mass.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (o, &t) in out.iter_mut().zip(self.row(i)) {
                *o += p * t;
            }
        }
        DiscreteDistribution {
            grid: self.grid,
            mass: out,
        }
    }

    /// Distribution after `k` generations from `x_0` (first step is exact for off-grid starts).
    pub fn k_step(&self, x_0: f64, selstrength: f64, k: usize) -> Result<DiscreteDistribution> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        check_frequency(x_0)?;
        let mut mass = vec![0.0; self.grid.len()];
        binomial_row(self.grid.popsize(), kernel(x_0, (-selstrength).exp()), &mut mass);
        let mut dist = DiscreteDistribution {
            grid: self.grid,
            mass,
        };
        for _ in 1..k {
            dist = self.advance(&dist);
        }
        Ok(dist)
    }
}

/// Exact distribution after `k` generations starting from `x_0`.
pub fn exact_k_step_transition(
    x_0: f64,
    params: &WfParams,
    k: usize,
) -> Result<DiscreteDistribution> {
    TransitionMatrix::new(params)?.k_step(x_0, params.selstrength, k)
}

/// Piecewise-constant selection strength indexed by generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSchedule {
    /// `(first generation, s)`, sorted by generation; the first entry starts at 0.
    pub segments: Vec<(u64, f64)>,
}

impl SelectionSchedule {
    pub fn constant(s: f64) -> Self {
        Self {
            segments: vec![(0, s)],
        }
    }

    pub fn new(mut segments: Vec<(u64, f64)>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidParameter("empty selection schedule".into()));
        }
        segments.sort_by_key(|&(g, _)| g);
        if segments[0].0 != 0 {
            return Err(Error::InvalidParameter(
                "selection schedule must start at generation 0".into(),
            ));
        }
        if segments.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidParameter(
                "selection schedule has duplicate start generations".into(),
            ));
        }
        for &(_, s) in &segments {
            if !s.is_finite() {
                return Err(Error::InvalidParameter(format!("non-finite selection strength {s}")));
            }
        }
        let segments = segments
            .into_iter()
            .map(|(g, s)| (g, s.clamp(-SELECTION_LIMIT, SELECTION_LIMIT)))
            .collect();
        Ok(Self { segments })
    }

    /// Selection strength acting on the step from generation `gen` to `gen + 1`.
    pub fn at(&self, gen: u64) -> f64 {
        let idx = self.segments.partition_point(|&(g, _)| g <= gen);
        self.segments[idx.saturating_sub(1)].1
    }
}

/// Simulate a trajectory of `generations` steps with an explicit RNG.
pub fn simulate_with<R: Rng + ?Sized>(
    x_0: f64,
    popsize: usize,
    schedule: &SelectionSchedule,
    generations: u64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_frequency(x_0)?;
    if popsize == 0 {
        return Err(Error::InvalidParameter("population size must be >= 1".into()));
    }
    let n = popsize as u64;
    let mut traj = Vec::with_capacity(generations as usize + 1);
    let mut x = x_0;
    traj.push(x);
    for gen in 0..generations {
        let g = kernel(x, (-schedule.at(gen)).exp());
        x = if g <= 0.0 {
            0.0
        } else if g >= 1.0 {
            1.0
        } else {
            let draw = Binomial::new(n, g)
                .expect("kernel output lies in (0, 1)")
                .sample(rng);
            draw as f64 / popsize as f64
        };
        traj.push(x);
    }
    Ok(traj)
}

/// Simulate `generations` Wright-Fisher steps from `x_0`; deterministic in `seed`.
pub fn simulate_trajectory(
    x_0: f64,
    params: &WfParams,
    generations: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    if generations == 0 {
        return Err(Error::InvalidParameter("generations must be at least 1".into()));
    }
    let popsize = params.integer_popsize()?;
    let mut rng = replicate_rng(seed, 0);
    simulate_with(
        x_0,
        popsize,
        &SelectionSchedule::constant(params.selstrength),
        generations,
        &mut rng,
    )
}
