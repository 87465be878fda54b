//! One-dimensional golden-section search and the coordinate ascent built on it.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineMax {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Maximize `f` on `[lo, hi]` to a bracket width of `tol`.
///
/// Endpoints are evaluated as well, so maxima sitting on the boundary of the
/// range are returned exactly.
pub fn golden_section_max(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> LineMax {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut evaluations = 2;
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        evaluations += 1;
    }
    let mut best = if fc >= fd { LineMax { x: c, value: fc, evaluations } } else { LineMax { x: d, value: fd, evaluations } };
    for edge in [lo, hi] {
        let v = f(edge);
        best.evaluations += 1;
        if v > best.value {
            best.x = edge;
            best.value = v;
        }
    }
    best
}

/// Box-constrained coordinate ascent, one golden-section search per coordinate per sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateAscent {
    pub bounds: [(f64, f64); 2],
    /// Convergence threshold on the per-sweep movement of each coordinate.
    pub step_tol: f64,
    /// Bracket width at which each line search stops.
    pub line_tol: f64,
    pub max_sweeps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentResult {
    pub point: [f64; 2],
    pub value: f64,
    pub sweeps: usize,
    pub evaluations: usize,
    pub converged: bool,
}

impl CoordinateAscent {
    pub fn maximize(&self, mut f: impl FnMut([f64; 2]) -> f64, start: [f64; 2]) -> AscentResult {
        let mut point = [
            start[0].clamp(self.bounds[0].0, self.bounds[0].1),
            start[1].clamp(self.bounds[1].0, self.bounds[1].1),
        ];
        let mut value = f(point);
        let mut evaluations = 1;
        for sweep in 1..=self.max_sweeps {
            let mut moved = [0.0f64; 2];
            for axis in 0..2 {
                let (lo, hi) = self.bounds[axis];
                let line = golden_section_max(
                    |v| {
                        let mut p = point;
                        p[axis] = v;
                        f(p)
                    },
                    lo,
                    hi,
                    self.line_tol,
                );
                evaluations += line.evaluations;
                if line.value >= value {
                    moved[axis] = (line.x - point[axis]).abs();
                    point[axis] = line.x;
                    value = line.value;
                }
            }
            if moved.iter().all(|&m| m < self.step_tol) {
                return AscentResult { point, value, sweeps: sweep, evaluations, converged: true };
            }
        }
        AscentResult { point, value, sweeps: self.max_sweeps, evaluations, converged: false }
    }
}
