//! Cramér–Rao bounds for sums of damped components in complex white noise.
//!
//! Each component contributes the parameters `(r, φ, ω, β, γ)` in that order.
//! For circular Gaussian noise of variance σ² the Fisher information is
//! `F_ij = (2/σ²) Re Σ_n conj(∂μ_n/∂θ_i) ∂μ_n/∂θ_j`.

use crate::error::{Error, Result};
use crate::signal_model::{envelope, ComponentParams, TimeGrid};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

pub const PARAMS_PER_COMPONENT: usize = 5;

/// Conditioning limit above which the bound is reported as unavailable.
pub const MAX_CONDITION: f64 = 1e12;

/// Position of a parameter inside a component's block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    R = 0,
    Phi = 1,
    Omega = 2,
    Beta = 3,
    Gamma = 4,
}

impl Param {
    pub fn index(self, component: usize) -> usize {
        component * PARAMS_PER_COMPONENT + self as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    pub matrix: DMatrix<f64>,
}

impl FisherMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn components(&self) -> usize {
        self.dim() / PARAMS_PER_COMPONENT
    }
}

/// Which parameters are estimated (active) rather than held fixed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamMask {
    pub active: Vec<bool>,
}

impl ParamMask {
    /// Activate the parameters each component's class actually carries.
    pub fn for_components(components: &[ComponentParams]) -> Self {
        let active = components
            .iter()
            .flat_map(|c| [true, true, true, c.class.has_beta(), c.class.has_gamma()])
            .collect();
        Self { active }
    }

    pub fn all(components: usize) -> Self {
        Self {
            active: vec![true; components * PARAMS_PER_COMPONENT],
        }
    }

    pub fn count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

/// Analytic partial derivatives of `μ_n` for one component, in parameter order.
pub fn component_partials(t: f64, psi: &ComponentParams) -> [Complex64; PARAMS_PER_COMPONENT] {
    let unit = Complex64::from_polar(envelope(t, psi.beta, psi.gamma), psi.phi + psi.omega * t);
    let mu = unit * psi.r;
    let i = Complex64::new(0.0, 1.0);
    [unit, i * mu, i * t * mu, -t * mu, -t * t * mu]
}

pub fn fisher_information(components: &[ComponentParams], grid: &TimeGrid, sigma2: f64) -> Result<FisherMatrix> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::InvalidParameter(format!("noise variance must be positive, got {sigma2}")));
    }
    let dim = components.len() * PARAMS_PER_COMPONENT;
    let mut matrix = DMatrix::<f64>::zeros(dim, dim);
    let mut row = vec![Complex64::new(0.0, 0.0); dim];
    for &t in grid.times() {
        for (k, psi) in components.iter().enumerate() {
            row[k * PARAMS_PER_COMPONENT..(k + 1) * PARAMS_PER_COMPONENT].copy_from_slice(&component_partials(t, psi));
        }
        for i in 0..dim {
            for j in i..dim {
                matrix[(i, j)] += (row[i].conj() * row[j]).re;
            }
        }
    }
    let scale = 2.0 / sigma2;
    for i in 0..dim {
        for j in i..dim {
            let v = matrix[(i, j)] * scale;
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
        }
    }
    Ok(FisherMatrix { matrix })
}

/// Variance bounds for the active parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CrlbBounds {
    /// One entry per parameter of the full matrix; `None` where inactive.
    pub variances: Vec<Option<f64>>,
    /// Condition number of the unit-free (diagonally scaled) active block.
    pub condition: f64,
}

impl CrlbBounds {
    pub fn variance(&self, component: usize, param: Param) -> Option<f64> {
        self.variances.get(param.index(component)).copied().flatten()
    }

    pub fn root(&self, component: usize, param: Param) -> Option<f64> {
        self.variance(component, param).map(f64::sqrt)
    }
}

/// Diagonal of the inverse of the active sub-matrix.
///
/// The block is first scaled to unit diagonal so the condition number does
/// not depend on parameter units; the scaled block is inverted through its
/// symmetric eigendecomposition.
pub fn crlb_diag(fisher: &FisherMatrix, mask: &ParamMask) -> Result<CrlbBounds> {
    let dim = fisher.dim();
    if mask.active.len() != dim {
        return Err(Error::InvalidParameter(format!(
            "mask has {} entries for a {dim}x{dim} Fisher matrix",
            mask.active.len()
        )));
    }
    let idx: Vec<usize> = (0..dim).filter(|&i| mask.active[i]).collect();
    let m = idx.len();
    let mut variances = vec![None; dim];
    if m == 0 {
        return Ok(CrlbBounds { variances, condition: 1.0 });
    }
    let diag: Vec<f64> = idx.iter().map(|&i| fisher.matrix[(i, i)]).collect();
    if diag.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
        return Err(Error::SingularFisher { condition: f64::INFINITY });
    }
    let scale: Vec<f64> = diag.iter().map(|d| 1.0 / d.sqrt()).collect();
    let scaled = DMatrix::from_fn(m, m, |a, b| fisher.matrix[(idx[a], idx[b])] * scale[a] * scale[b]);
    let eig = SymmetricEigen::new(scaled);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularFisher { condition });
    }
    for a in 0..m {
        let inv_aa: f64 = (0..m)
            .map(|l| eig.eigenvectors[(a, l)] * eig.eigenvectors[(a, l)] / eig.eigenvalues[l])
            .sum();
        variances[idx[a]] = Some(inv_aa * scale[a] * scale[a]);
    }
    Ok(CrlbBounds { variances, condition })
}
