//! Beta-with-Spikes approximation of the k-generation Wright-Fisher transition.
//!
//! The approximation carries four numbers per elapsed generation: the
//! probabilities that the focal variant is lost (`p0`) or fixed (`p1`), and
//! the mean and variance of the frequency conditioned on neither having
//! happened. Each generation is propagated through the binomial step with
//! expectations taken under the Beta law matched to the incoming conditional
//! mean and variance. The first step from a point mass is exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::BetaRule;
use crate::special::{inc_beta, ln_beta, normal_cdf};
use crate::wf::{kernel, DiscreteDistribution, FrequencyGrid, WfParams};

/// Observations this close to 0 or 1 are scored against the spikes.
pub const BOUNDARY_EPS: f64 = 1e-9;
/// Interior weight below which the distribution counts as fully absorbed.
pub const ABSORBED_EPS: f64 = 1e-12;
/// Probability or density reported in place of an exact zero.
pub const DENSITY_FLOOR: f64 = 1e-300;
/// Cap on `alpha + beta` when the propagated variance collapses.
pub const MAX_CONCENTRATION: f64 = 1e8;

pub fn ln_floor() -> f64 {
    DENSITY_FLOOR.ln()
}

/// Absorption probabilities plus conditional moments of the interior part.
///
/// `variance == 0` encodes a point mass at `mean`, which is how a
/// propagation starts from an observed frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentState {
    pub p0: f64,
    pub p1: f64,
    pub mean: f64,
    pub variance: f64,
}

impl MomentState {
    pub fn point(x_0: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&x_0) {
            return Err(Error::FrequencyDomain(x_0));
        }
        let state = if x_0 <= BOUNDARY_EPS {
            Self { p0: 1.0, p1: 0.0, mean: 0.0, variance: 0.0 }
        } else if x_0 >= 1.0 - BOUNDARY_EPS {
            Self { p0: 0.0, p1: 1.0, mean: 1.0, variance: 0.0 }
        } else {
            Self { p0: 0.0, p1: 0.0, mean: x_0, variance: 0.0 }
        };
        Ok(state)
    }

    pub fn interior_weight(&self) -> f64 {
        (1.0 - self.p0 - self.p1).max(0.0)
    }

    pub fn is_absorbed(&self) -> bool {
        self.interior_weight() < ABSORBED_EPS
    }

    /// Beta shape parameters matched to the conditional mean and variance.
    pub fn beta_shape(&self) -> (f64, f64) {
        let m = self.mean;
        let spread = m * (1.0 - m);
        let conc = if self.variance > 0.0 {
            (spread / self.variance - 1.0).min(MAX_CONCENTRATION)
        } else {
            MAX_CONCENTRATION
        };
        (m * conc, (1.0 - m) * conc)
    }

    fn advance(&self, params: &WfParams) -> Self {
        let n = params.popsize;
        let e = (-params.selstrength).exp();
        let w = self.interior_weight();

        // E[(1-g)^N], E[g^N], E[g], E[g^2 + g(1-g)/N]
        let moments = |x: f64| -> [f64; 4] {
            let g = kernel(x, e);
            let lose = if g < 1.0 { (n * (-g).ln_1p()).exp() } else { 0.0 };
            let fix = if g > 0.0 { (n * g.ln()).exp() } else { 0.0 };
            [lose, fix, g, g * g + g * (1.0 - g) / n]
        };
        let [a0, a1, eg, eg2] = if self.variance == 0.0 {
            moments(self.mean)
        } else {
            let (alpha, beta) = self.beta_shape();
            let rule = BetaRule::new(alpha, beta);
            let mut acc = [0.0; 4];
            for (&x, &wt) in rule.nodes.iter().zip(&rule.weights) {
                let v = moments(x);
                for (a, vi) in acc.iter_mut().zip(v) {
                    *a += wt * vi;
                }
            }
            acc
        };

        let p0 = (self.p0 + w * a0).min(1.0);
        let p1 = (self.p1 + w * a1).min(1.0 - p0);
        let q = 1.0 - a0 - a1;
        if q * w < ABSORBED_EPS || q <= 0.0 {
            return Self { p0, p1, mean: self.mean, variance: 0.0 };
        }
        let mean = ((eg - a1) / q).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
        let spread = mean * (1.0 - mean);
        let variance = ((eg2 - a1) / q - mean * mean)
            .max(spread / (MAX_CONCENTRATION + 1.0))
            .min(spread * (1.0 - 1e-12));
        Self { p0, p1, mean, variance }
    }
}

/// Propagate the moment state through one Wright-Fisher generation.
///
/// Fails with [`Error::FullyAbsorbed`] (carrying the unchanged spikes) when
/// the incoming state has no interior mass left.
pub fn propagate_one_generation(state: &MomentState, params: &WfParams) -> Result<MomentState> {
    if state.is_absorbed() {
        return Err(Error::FullyAbsorbed { p0: state.p0, p1: state.p1 });
    }
    Ok(state.advance(params))
}

/// Propagate `k` generations from a point mass at `x_0`.
pub fn propagate(x_0: f64, params: &WfParams, k: usize) -> Result<MomentState> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let mut state = MomentState::point(x_0)?;
    for _ in 0..k {
        match propagate_one_generation(&state, params) {
            Ok(next) => state = next,
            Err(Error::FullyAbsorbed { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(state)
}

/// `P0 δ(x) + P1 δ(1-x) + (1 - P0 - P1) Beta(x; alpha, beta)` after `k` generations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BwsTransition {
    pub p0: f64,
    pub p1: f64,
    pub alpha: f64,
    pub beta_param: f64,
    pub k: usize,
    /// Conditional mean and variance the Beta part was matched to.
    pub mean: f64,
    pub variance: f64,
}

impl BwsTransition {
    pub fn from_state(state: &MomentState, k: usize) -> Self {
        let (alpha, beta_param) = if state.is_absorbed() {
            (1.0, 1.0)
        } else {
            state.beta_shape()
        };
        Self {
            p0: state.p0,
            p1: state.p1,
            alpha,
            beta_param,
            k,
            mean: state.mean,
            variance: state.variance,
        }
    }

    pub fn interior_weight(&self) -> f64 {
        (1.0 - self.p0 - self.p1).max(0.0)
    }

    /// Mean of the full distribution, spikes included.
    pub fn total_mean(&self) -> f64 {
        self.p1 + self.interior_weight() * self.mean
    }

    /// Variance of the full distribution, spikes included.
    pub fn total_variance(&self) -> f64 {
        let w = self.interior_weight();
        let m = self.total_mean();
        (self.p1 + w * (self.variance + self.mean * self.mean) - m * m).max(0.0)
    }
}

pub fn bws_k_step(x_0: f64, params: &WfParams, k: usize) -> Result<BwsTransition> {
    Ok(BwsTransition::from_state(&propagate(x_0, params, k)?, k))
}

fn ln_or_floor(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        ln_floor()
    }
}

/// Log of the BwS probability (at the boundaries) or density (inside).
pub fn bws_log_density(trans: &BwsTransition, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::FrequencyDomain(x));
    }
    Ok(if x <= BOUNDARY_EPS {
        ln_or_floor(trans.p0)
    } else if x >= 1.0 - BOUNDARY_EPS {
        ln_or_floor(trans.p1)
    } else {
        let w = trans.interior_weight();
        if w <= 0.0 {
            ln_floor()
        } else {
            let (a, b) = (trans.alpha, trans.beta_param);
            w.ln() + (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(a, b)
        }
    })
}

/// Gaussian with the propagated mean and total variance of the k-step transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalApprox {
    pub mean: f64,
    pub variance: f64,
}

impl NormalApprox {
    pub fn from_transition(trans: &BwsTransition) -> Self {
        Self {
            mean: trans.total_mean(),
            variance: trans.total_variance(),
        }
    }

    pub fn log_density(&self, x: f64) -> f64 {
        if self.variance <= 0.0 {
            return if (x - self.mean).abs() <= BOUNDARY_EPS { 0.0 } else { ln_floor() };
        }
        let d = x - self.mean;
        -0.5 * (2.0 * std::f64::consts::PI * self.variance).ln() - d * d / (2.0 * self.variance)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if self.variance <= 0.0 {
            return if x >= self.mean { 1.0 } else { 0.0 };
        }
        normal_cdf((x - self.mean) / self.variance.sqrt())
    }
}

pub fn normal_log_density(x_0: f64, params: &WfParams, k: usize, x: f64) -> Result<f64> {
    let trans = bws_k_step(x_0, params, k)?;
    Ok(NormalApprox::from_transition(&trans).log_density(x))
}

/// Cell edges `0, 1/2N, 3/2N, ..., 1`; cell `i` is centred on `i/N`.
fn cell_edges(grid: &FrequencyGrid) -> Vec<f64> {
    let n = grid.popsize() as f64;
    let mut edges = Vec::with_capacity(grid.len() + 1);
    edges.push(0.0);
    edges.extend((0..grid.popsize()).map(|i| (i as f64 + 0.5) / n));
    edges.push(1.0);
    edges
}

/// Masses of the BwS distribution on the grid cells; spikes go to the end cells.
pub fn discretize_bws(trans: &BwsTransition, grid: &FrequencyGrid) -> Vec<f64> {
    let w = trans.interior_weight();
    let edges = cell_edges(grid);
    let mut mass: Vec<f64> = if w > 0.0 {
        let cdf: Vec<f64> = edges
            .iter()
            .map(|&e| inc_beta(trans.alpha, trans.beta_param, e))
            .collect();
        cdf.windows(2).map(|c| w * (c[1] - c[0]).max(0.0)).collect()
    } else {
        vec![0.0; grid.len()]
    };
    mass[0] += trans.p0;
    *mass.last_mut().expect("grid is non-empty") += trans.p1;
    mass
}

/// Masses of the normal approximation on the grid cells; both tails go to the end cells.
pub fn discretize_normal(approx: &NormalApprox, grid: &FrequencyGrid) -> Vec<f64> {
    let mut edges = cell_edges(grid);
    edges[0] = f64::NEG_INFINITY;
    *edges.last_mut().expect("non-empty") = f64::INFINITY;
    let cdf: Vec<f64> = edges.iter().map(|&e| approx.cdf(e)).collect();
    cdf.windows(2).map(|c| (c[1] - c[0]).max(0.0)).collect()
}

/// Total-variation distance `½ Σ |p_i - q_i|` between grid masses and the exact distribution.
pub fn statistical_distance(approx: &[f64], exact: &DiscreteDistribution) -> Result<f64> {
    if approx.len() != exact.mass.len() {
        return Err(Error::GridMismatch {
            approx: approx.len(),
            exact: exact.mass.len(),
        });
    }
    let tv = 0.5
        * approx
            .iter()
            .zip(&exact.mass)
            .map(|(p, q)| (p - q).abs())
            .sum::<f64>();
    Ok(tv.clamp(0.0, 1.0))
}
