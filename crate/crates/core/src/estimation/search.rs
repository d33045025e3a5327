//! Derivative-free minimization helpers.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for the minimum of `f` on `[a, b]`.
///
/// Stops once the bracket is narrower than `tol` or after `max_evals`
/// evaluations. Returns `(x_min, f_min)` among the evaluated interior points.
pub fn golden_section(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64, max_evals: usize) -> (f64, f64) {
    if b < a {
        std::mem::swap(&mut a, &mut b);
    }
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut evals = 2;
    while (b - a) > tol && evals < max_evals {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
        evals += 1;
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Box-constrained coordinate descent driven by golden-section line searches.
#[derive(Debug, Clone)]
pub struct CoordinateSearch {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Initial half-width of each coordinate's line-search bracket.
    pub step: Vec<f64>,
    /// Characteristic size of each coordinate; steps are measured in these units.
    pub scale: Vec<f64>,
    pub tolerance: f64,
    pub max_sweeps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub sweeps: usize,
}

impl CoordinateSearch {
    /// Minimize `f` from `x0`. Every accepted move lowers `f`, so the result
    /// is never worse than the starting point.
    pub fn minimize(&self, f: impl Fn(&[f64]) -> f64, x0: &[f64]) -> SearchOutcome {
        let dim = x0.len();
        let mut x: Vec<f64> = x0
            .iter()
            .enumerate()
            .map(|(i, &v)| v.clamp(self.lower[i], self.upper[i]))
            .collect();
        let mut value = f(&x);
        let mut step = self.step.clone();
        let line_evals = 80;
        let mut sweeps = 0;

        for _ in 0..self.max_sweeps {
            sweeps += 1;
            let start = x.clone();
            for i in 0..dim {
                let lo = (x[i] - step[i]).max(self.lower[i]);
                let hi = (x[i] + step[i]).min(self.upper[i]);
                if !(hi > lo) {
                    continue;
                }
                let mut probe = x.clone();
                let (xi, fi) = golden_section(
                    |s| {
                        probe[i] = s;
                        f(&probe)
                    },
                    lo,
                    hi,
                    self.tolerance * self.scale[i],
                    line_evals,
                );
                let moved = if fi < value {
                    let d = (xi - x[i]).abs();
                    x[i] = xi;
                    value = fi;
                    d
                } else {
                    0.0
                };
                let floor = self.tolerance * self.scale[i];
                step[i] = if moved >= 0.8 * step[i] {
                    2.0 * step[i]
                } else {
                    (3.0 * moved).max(0.5 * step[i]).max(floor)
                };
            }

            // Pattern move along the sweep displacement, for correlated valleys.
            let dir: Vec<f64> = x.iter().zip(&start).map(|(a, b)| a - b).collect();
            if dir.iter().any(|&d| d != 0.0) && dim > 1 {
                let along = |s: f64| -> Vec<f64> {
                    x.iter()
                        .zip(&dir)
                        .enumerate()
                        .map(|(i, (&xi, &di))| (xi + s * di).clamp(self.lower[i], self.upper[i]))
                        .collect()
                };
                // Expand the bracket while the best point sits at its far end.
                let (mut s_lo, mut s_hi) = (-0.5, 4.0);
                let (mut s, mut fs) = golden_section(|s| f(&along(s)), s_lo, s_hi, 1e-3, 40);
                while s > 0.9 * s_hi && s_hi < 1e6 {
                    s_lo = 0.5 * s_hi;
                    s_hi *= 8.0;
                    let (s2, f2) = golden_section(|s| f(&along(s)), s_lo, s_hi, 1e-3 * s_hi, 40);
                    if f2 < fs {
                        s = s2;
                        fs = f2;
                    } else {
                        break;
                    }
                }
                if fs < value {
                    x = along(s);
                    value = fs;
                }
            }

            let norm = x
                .iter()
                .zip(&start)
                .zip(&self.scale)
                .map(|((a, b), s)| ((a - b) / s).powi(2))
                .sum::<f64>()
                .sqrt();
            if norm < self.tolerance {
                break;
            }
        }
        SearchOutcome { x, value, sweeps }
    }
}

/// `count` logarithmically spaced values from `lo` to `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
                .collect()
        }
    }
}

/// `count` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}
