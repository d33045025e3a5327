//! Joint Levenberg–Marquardt refinement of all components at once.

use crate::signal_model::{nls_cost, ComponentParams, SignalRecord};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Box around the starting point within which each component may move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointBounds {
    /// Frequency half-width, in N-bins of `2π/(NΔ)`.
    pub omega_bins: f64,
    /// Relative β and γ change allowed.
    pub decay_relative: f64,
    /// Absolute β slack, in units of `1/T`; γ slack uses `1/T²`.
    pub decay_absolute: f64,
    pub max_iters: usize,
}

impl Default for JointBounds {
    fn default() -> Self {
        Self {
            omega_bins: 2.0,
            decay_relative: 0.5,
            decay_absolute: 0.05,
            max_iters: 100,
        }
    }
}

struct Layout {
    offsets: Vec<usize>,
    dim: usize,
}

impl Layout {
    fn new(comps: &[ComponentParams]) -> Self {
        let mut offsets = Vec::with_capacity(comps.len());
        let mut dim = 0;
        for c in comps {
            offsets.push(dim);
            dim += 2 + c.class.nonlinear_dim();
        }
        Self { offsets, dim }
    }
}

fn pack(comps: &[ComponentParams], layout: &Layout) -> DVector<f64> {
    let mut x = DVector::zeros(layout.dim);
    for (c, &o) in comps.iter().zip(&layout.offsets) {
        let a = c.amplitude();
        x[o] = a.re;
        x[o + 1] = a.im;
        x[o + 2] = c.omega;
        let mut k = o + 3;
        if c.class.has_beta() {
            x[k] = c.beta;
            k += 1;
        }
        if c.class.has_gamma() {
            x[k] = c.gamma;
        }
    }
    x
}

fn unpack(template: &[ComponentParams], layout: &Layout, x: &DVector<f64>) -> Vec<ComponentParams> {
    template
        .iter()
        .zip(&layout.offsets)
        .map(|(c, &o)| {
            let mut out = *c;
            out.omega = x[o + 2];
            let mut k = o + 3;
            if c.class.has_beta() {
                out.beta = x[k];
                k += 1;
            }
            if c.class.has_gamma() {
                out.gamma = x[k];
            }
            out.set_amplitude(Complex64::new(x[o], x[o + 1]));
            out
        })
        .collect()
}

/// Residual `y - model` stacked as `[Re; Im]` and its Jacobian with respect
/// to the packed parameters.
fn residual_and_jacobian(signal: &SignalRecord, comps: &[ComponentParams], layout: &Layout) -> (DVector<f64>, DMatrix<f64>) {
    let n = signal.len();
    let mut res = DVector::zeros(2 * n);
    let mut jac = DMatrix::zeros(2 * n, layout.dim);
    for (i, (&y, &t)) in signal.samples().iter().zip(signal.grid().times()).enumerate() {
        let mut model = Complex64::new(0.0, 0.0);
        for (c, &o) in comps.iter().zip(&layout.offsets) {
            let b = Complex64::from_polar((-c.beta * t - c.gamma * t * t).exp(), c.omega * t);
            let cb = c.amplitude() * b;
            model += cb;
            let mut cols = vec![b, Complex64::i() * b, Complex64::i() * t * cb];
            if c.class.has_beta() {
                cols.push(-t * cb);
            }
            if c.class.has_gamma() {
                cols.push(-t * t * cb);
            }
            for (k, d) in cols.into_iter().enumerate() {
                // Jacobian of the residual is minus that of the model.
                jac[(i, o + k)] = -d.re;
                jac[(n + i, o + k)] = -d.im;
            }
        }
        let r = y - model;
        res[i] = r.re;
        res[n + i] = r.im;
    }
    (res, jac)
}

/// Minimize the joint least-squares cost over all components, keeping each
/// component's class and staying inside `bounds` of the starting point.
/// The returned cost is never above that of `start`.
pub fn refine_joint(signal: &SignalRecord, start: &[ComponentParams], bounds: &JointBounds) -> Vec<ComponentParams> {
    if start.is_empty() {
        return Vec::new();
    }
    let layout = Layout::new(start);
    let span = signal.grid().span();
    let n_bin = std::f64::consts::TAU / (signal.len() as f64 * signal.grid().mean_spacing());

    let mut lo = DVector::from_element(layout.dim, f64::NEG_INFINITY);
    let mut hi = DVector::from_element(layout.dim, f64::INFINITY);
    for (c, &o) in start.iter().zip(&layout.offsets) {
        lo[o + 2] = c.omega - bounds.omega_bins * n_bin;
        hi[o + 2] = c.omega + bounds.omega_bins * n_bin;
        let mut k = o + 3;
        let mut decay = |k: usize, v: f64, unit: f64| {
            let slack = bounds.decay_relative * v + bounds.decay_absolute * unit;
            lo[k] = (v - slack).max(0.0);
            hi[k] = v + slack;
        };
        if c.class.has_beta() {
            decay(k, c.beta, 1.0 / span);
            k += 1;
        }
        if c.class.has_gamma() {
            decay(k, c.gamma, 1.0 / (span * span));
        }
    }
    let clamp = |x: &mut DVector<f64>| {
        for k in 0..x.len() {
            x[k] = x[k].clamp(lo[k], hi[k]);
        }
    };

    let mut x = pack(start, &layout);
    let mut best = unpack(start, &layout, &x);
    let mut cost = nls_cost(signal, &best);
    let mut lambda = 1e-3;

    for _ in 0..bounds.max_iters {
        let (res, jac) = residual_and_jacobian(signal, &best, &layout);
        let jtj = jac.tr_mul(&jac);
        let grad = jac.tr_mul(&res);
        let mut improved = false;
        while lambda < 1e12 {
            let mut a = jtj.clone();
            for k in 0..layout.dim {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&grad));
            let mut trial = &x + &step;
            clamp(&mut trial);
            let comps = unpack(start, &layout, &trial);
            let c = nls_cost(signal, &comps);
            if c < cost {
                let rel = (cost - c) / cost.max(f64::MIN_POSITIVE);
                x = trial;
                best = comps;
                cost = c;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if rel < 1e-14 {
                    return best;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    best
}
