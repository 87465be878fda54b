//! Fixed-order Gauss–Legendre rules and a Beta-weighted rule built on them.

use std::sync::OnceLock;

/// Points per half of the Beta rule; the full rule has twice as many nodes.
pub const HALF_ORDER: usize = 32;
pub const BETA_RULE_ORDER: usize = 2 * HALF_ORDER;

/// Gauss–Legendre nodes and weights on [0, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-15 {
                    break;
                }
            }
            let (_, d) = legendre(n, z);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            // map [-1, 1] -> [0, 1]
            nodes[i] = 0.5 * (1.0 - z);
            nodes[n - 1 - i] = 0.5 * (1.0 + z);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        Self { nodes, weights }
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let h = b - a;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&u, &w)| w * f(a + h * u))
            .sum::<f64>()
            * h
    }
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * z * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    (p1, nf * (z * p1 - p0) / (z * z - 1.0))
}

pub fn half_rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(HALF_ORDER))
}

/// Quadrature rule for expectations under a Beta(alpha, beta) law.
///
/// The support is cut to `mean ± 12 sd` and split at the mean; each half gets
/// a Gauss–Legendre rule. A half that touches an endpoint where the density
/// is singular or has a fractional-power cusp (shape < 2) is integrated after
/// the substitution `x = m u^(1/alpha)` (or its mirror), which absorbs the
/// power factor. Weights are normalized to sum to one.
#[derive(Debug, Clone)]
pub struct BetaRule {
    pub nodes: [f64; BETA_RULE_ORDER],
    pub weights: [f64; BETA_RULE_ORDER],
}

impl BetaRule {
    pub fn new(alpha: f64, beta: f64) -> Self {
        let gl = half_rule();
        let sum = alpha + beta;
        let mean = alpha / sum;
        let sd = (alpha * beta / (sum * sum * (sum + 1.0))).sqrt();
        let lo = (mean - 12.0 * sd).max(0.0);
        let hi = (mean + 12.0 * sd).min(1.0);

        let mut nodes = [0.0; BETA_RULE_ORDER];
        let mut logw = [0.0; BETA_RULE_ORDER];

        for (i, (&u, &w)) in gl.nodes.iter().zip(&gl.weights).enumerate() {
            // left half: [lo, mean]
            let (x, lw) = if lo == 0.0 && alpha < 2.0 {
                let x = mean * u.powf(1.0 / alpha);
                (x, w.ln() + (beta - 1.0) * (-x).ln_1p())
            } else {
                let x = lo + (mean - lo) * u;
                (
                    x,
                    w.ln() + (mean - lo).ln() + (alpha - 1.0) * x.ln() + (beta - 1.0) * (-x).ln_1p(),
                )
            };
            nodes[i] = x;
            logw[i] = lw;
        }
        // constant factors dropped by the substitution on the left half
        if lo == 0.0 && alpha < 2.0 {
            let c = alpha * mean.ln() - alpha.ln();
            logw[..HALF_ORDER].iter_mut().for_each(|l| *l += c);
        }

        for (i, (&u, &w)) in gl.nodes.iter().zip(&gl.weights).enumerate() {
            // right half: [mean, hi]
            let j = HALF_ORDER + i;
            if hi == 1.0 && beta < 2.0 {
                let y = (1.0 - mean) * u.powf(1.0 / beta);
                let x = 1.0 - y;
                nodes[j] = x;
                logw[j] = w.ln() + (alpha - 1.0) * x.ln() + beta * (1.0 - mean).ln() - beta.ln();
            } else {
                let x = mean + (hi - mean) * u;
                nodes[j] = x;
                logw[j] =
                    w.ln() + (hi - mean).ln() + (alpha - 1.0) * x.ln() + (beta - 1.0) * (-x).ln_1p();
            }
        }

        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut weights = [0.0; BETA_RULE_ORDER];
        let mut total = 0.0;
        for (w, &l) in weights.iter_mut().zip(&logw) {
            *w = if l.is_finite() { (l - max).exp() } else { 0.0 };
            total += *w;
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Self { nodes, weights }
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_is_exact_for_polynomials() {
        let gl = GaussLegendre::new(HALF_ORDER);
        assert!((gl.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for p in [1, 5, 20, 63] {
            let got = gl.integrate(0.0, 1.0, |x| x.powi(p));
            assert!((got - 1.0 / (p as f64 + 1.0)).abs() < 1e-13, "degree {p}");
        }
    }

    // Raw moments of Beta(a, b): E[x^r] = prod_{j<r} (a + j) / (a + b + j).
    fn beta_moment(a: f64, b: f64, r: i32) -> f64 {
        (0..r).map(|j| (a + j as f64) / (a + b + j as f64)).product()
    }

    #[test]
    fn beta_rule_reproduces_moments_across_shapes() {
        let shapes = [
            (0.3, 0.4),
            (0.7, 5.0),
            (1.5, 1.5),
            (2.0, 2.0),
            (24.5, 24.5),
            (3.0, 300.0),
            (500.0, 20.0),
            (4.0e5, 6.0e5),
            (3.0e7, 7.0e7),
        ];
        for &(a, b) in &shapes {
            let rule = BetaRule::new(a, b);
            for r in 1..=4 {
                let exact = beta_moment(a, b, r);
                let got = rule.expect(|x| x.powi(r));
                assert!(
                    ((got - exact) / exact).abs() < 1e-5,
                    "Beta({a}, {b}) moment {r}: {got} vs {exact}"
                );
            }
        }
    }
}
