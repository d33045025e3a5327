//! Pseudo-true parameters of deliberately under-specified templates.
//!
//! Fitting a single damped component with a template whose envelope is too
//! simple converges, at high SNR, to the parameter minimizing the
//! Kullback–Leibler divergence to the true model. For a constant envelope the
//! minimizer is closed form. For an exponential envelope fitted to a Voigt
//! component the decay `β₀` is the root of a sign function that is positive
//! at the true `β` and non-positive at `β + γ(t_N + t_{N-1})`, so bisection
//! inside that bracket always succeeds.

use crate::error::{Error, Result};
use crate::signal_model::{component_value, envelope, ComponentParams, ModelClass, TimeGrid};
use serde::{Deserialize, Serialize};

/// Limit point `θ₀` of a mismatched single-component fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoTrueResult {
    pub r0: f64,
    pub phi0: f64,
    pub omega0: f64,
    /// Present for the exponential-envelope template.
    pub beta0: Option<f64>,
    /// Half-open interval `(lo, hi]` known to contain `beta0`.
    pub bracket: Option<(f64, f64)>,
}

impl PseudoTrueResult {
    /// The limit point as a component of the template class.
    pub fn as_component(&self) -> ComponentParams {
        match self.beta0 {
            Some(beta0) => ComponentParams {
                class: ModelClass::Lorentzian,
                r: self.r0,
                phi: self.phi0,
                omega: self.omega0,
                beta: beta0,
                gamma: 0.0,
            },
            None => ComponentParams {
                class: ModelClass::Cisoid,
                r: self.r0,
                phi: self.phi0,
                omega: self.omega0,
                beta: 0.0,
                gamma: 0.0,
            },
        }
    }
}

/// Noise-free template mismatch `Σ_n |μ(t_n; ψ) - μ̆(t_n; θ)|²`.
///
/// The expected negative log-likelihood of the template equals this value
/// divided by σ², plus a constant independent of `theta`.
pub fn expected_fit_cost(theta: &ComponentParams, psi: &ComponentParams, grid: &TimeGrid) -> f64 {
    grid.times()
        .iter()
        .map(|&t| (component_value(t, psi) - component_value(t, theta)).norm_sqr())
        .sum()
}

/// Constant-envelope template: `r₀ = (r/N) Σ α(t_n)`, `ω₀ = ω`, `φ₀ = φ`.
pub fn pseudo_true_cisoid(psi: &ComponentParams, grid: &TimeGrid) -> PseudoTrueResult {
    let mean_env = grid
        .times()
        .iter()
        .map(|&t| envelope(t, psi.beta, psi.gamma))
        .sum::<f64>()
        / grid.len() as f64;
    PseudoTrueResult {
        r0: psi.r * mean_env,
        phi0: psi.phi,
        omega0: psi.omega,
        beta0: None,
        bracket: None,
    }
}

/// Sign function `Ψ(β₀)` whose zeros and sign match `∂Λ/∂β₀`.
///
/// Evaluated in pairwise form
/// `Σ_{m>n} (t_m - t_n) e^{-β₀(t_m+t_n)} (a_n e^{-β₀ t_m} - a_m e^{-β₀ t_n})`
/// with `a_n = exp(-βt_n - γt_n²)`, which keeps each term's sign exact.
pub fn psi_sign_function(beta0: f64, psi: &ComponentParams, grid: &TimeGrid) -> f64 {
    let t = grid.times();
    let a: Vec<f64> = t.iter().map(|&t| envelope(t, psi.beta, psi.gamma)).collect();
    let e: Vec<f64> = t.iter().map(|&t| (-beta0 * t).exp()).collect();
    let mut total = 0.0;
    for m in 1..t.len() {
        let mut row = 0.0;
        for n in 0..m {
            let weight = (t[m] - t[n]) * e[m] * e[n];
            row += weight * (a[n] * e[m] - a[m] * e[n]);
        }
        total += row;
    }
    total
}

/// `Λ(β₀) = ½ r (Σ α e^{-β₀t})² / Σ e^{-2β₀t}`, the concentrated objective
/// the exponential template maximizes.
pub fn concentrated_objective(beta0: f64, psi: &ComponentParams, grid: &TimeGrid) -> f64 {
    let (cross, norm) = grid.times().iter().fold((0.0, 0.0), |(c, n), &t| {
        let e = (-beta0 * t).exp();
        (c + envelope(t, psi.beta, psi.gamma) * e, n + e * e)
    });
    0.5 * psi.r * cross * cross / norm
}

/// Default bisection tolerance for a bracket of the given width.
pub fn default_tolerance(width: f64) -> f64 {
    1e-12 * (1.0 + width)
}

/// Exponential-envelope template. `ω₀ = ω`, `φ₀ = φ`, `β₀` by bisection on
/// [`psi_sign_function`], and `r₀ = r Σ α e^{-β₀t} / Σ e^{-2β₀t}`.
pub fn pseudo_true_lorentzian(psi: &ComponentParams, grid: &TimeGrid, tol: f64) -> Result<PseudoTrueResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    psi.validate()?;
    let beta = psi.beta;
    let gamma = psi.gamma;
    let hi = beta + gamma * grid.last_two_sum();

    if gamma == 0.0 {
        return Ok(PseudoTrueResult {
            r0: psi.r,
            phi0: psi.phi,
            omega0: psi.omega,
            beta0: Some(beta),
            bracket: Some((beta, hi)),
        });
    }

    let psi_lo = psi_sign_function(beta, psi, grid);
    let psi_hi = psi_sign_function(hi, psi, grid);
    if !(psi_lo > 0.0) || !(psi_hi <= 0.0) {
        return Err(Error::BracketFailure {
            lo: beta,
            hi,
            psi_lo,
            psi_hi,
        });
    }

    // The tighter endpoint built from the 2nd and 3rd largest instants is used
    // whenever it still encloses the sign change.
    let mut upper = hi;
    let n = grid.len();
    if n >= 3 {
        let t = grid.times();
        let tight = beta + gamma * (t[n - 2] + t[n - 3]);
        if tight > beta && psi_sign_function(tight, psi, grid) <= 0.0 {
            upper = tight;
        }
    }

    let mut lo = beta;
    let mut up = upper;
    while up - lo > tol {
        let mid = 0.5 * (lo + up);
        if mid <= lo || mid >= up {
            break;
        }
        if psi_sign_function(mid, psi, grid) > 0.0 {
            lo = mid;
        } else {
            up = mid;
        }
    }
    let beta0 = 0.5 * (lo + up);

    let (cross, norm) = grid.times().iter().fold((0.0, 0.0), |(c, n), &t| {
        let e = (-beta0 * t).exp();
        (c + envelope(t, beta, gamma) * e, n + e * e)
    });
    Ok(PseudoTrueResult {
        r0: psi.r * cross / norm,
        phi0: psi.phi,
        omega0: psi.omega,
        beta0: Some(beta0),
        bracket: Some((beta, hi)),
    })
}
