//! Polynomially damped complex sinusoids.
//!
//! A component is `r · exp(-βt - γt²) · exp(i(φ + ωt))`. Cisoids have
//! β = γ = 0, Lorentzian components γ = 0, and Voigt components may carry
//! both decays. Observations are a sum of components plus circularly
//! symmetric white Gaussian noise.

use crate::error::{Error, Result};
use crate::rng::NoiseRng;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::fmt;

/// Envelope family of a component, ordered by complexity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelClass {
    Cisoid,
    Lorentzian,
    Voigt,
}

impl ModelClass {
    pub const ALL: [ModelClass; 3] = [ModelClass::Cisoid, ModelClass::Lorentzian, ModelClass::Voigt];

    /// The next richer class, if any.
    pub fn escalate(self) -> Option<ModelClass> {
        match self {
            ModelClass::Cisoid => Some(ModelClass::Lorentzian),
            ModelClass::Lorentzian => Some(ModelClass::Voigt),
            ModelClass::Voigt => None,
        }
    }

    pub fn has_beta(self) -> bool {
        self >= ModelClass::Lorentzian
    }

    pub fn has_gamma(self) -> bool {
        self == ModelClass::Voigt
    }

    /// Number of nonlinear parameters (ω plus active decays).
    pub fn nonlinear_dim(self) -> usize {
        1 + usize::from(self.has_beta()) + usize::from(self.has_gamma())
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelClass::Cisoid => "cisoid",
            ModelClass::Lorentzian => "lorentzian",
            ModelClass::Voigt => "voigt",
        }
    }
}

impl fmt::Display for ModelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cisoid" | "sinusoid" => Ok(ModelClass::Cisoid),
            "lorentzian" => Ok(ModelClass::Lorentzian),
            "voigt" => Ok(ModelClass::Voigt),
            other => Err(Error::InvalidParameter(format!("unknown model class `{other}`"))),
        }
    }
}

/// Parameters `(r, φ, ω, β, γ)` of one component together with its class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentParams {
    pub class: ModelClass,
    pub r: f64,
    pub phi: f64,
    pub omega: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl ComponentParams {
    /// Validating constructor; normalizes `phi` to [0, 2π).
    pub fn new(class: ModelClass, r: f64, phi: f64, omega: f64, beta: f64, gamma: f64) -> Result<Self> {
        let params = Self {
            class,
            r,
            phi: wrap_phase(phi),
            omega,
            beta,
            gamma,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn cisoid(r: f64, phi: f64, omega: f64) -> Result<Self> {
        Self::new(ModelClass::Cisoid, r, phi, omega, 0.0, 0.0)
    }

    pub fn lorentzian(r: f64, phi: f64, omega: f64, beta: f64) -> Result<Self> {
        Self::new(ModelClass::Lorentzian, r, phi, omega, beta, 0.0)
    }

    pub fn voigt(r: f64, phi: f64, omega: f64, beta: f64, gamma: f64) -> Result<Self> {
        Self::new(ModelClass::Voigt, r, phi, omega, beta, gamma)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.r, self.phi, self.omega, self.beta, self.gamma]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter(format!("non-finite component parameter in {self:?}")));
        }
        if self.r < 0.0 {
            return Err(Error::InvalidParameter(format!("amplitude must be non-negative, got {}", self.r)));
        }
        if self.beta < 0.0 || self.gamma < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "decays must be non-negative, got beta={} gamma={}",
                self.beta, self.gamma
            )));
        }
        if !self.class.has_beta() && self.beta != 0.0 {
            return Err(Error::InvalidParameter("cisoid components must have beta = 0".into()));
        }
        if !self.class.has_gamma() && self.gamma != 0.0 {
            return Err(Error::InvalidParameter(format!("{} components must have gamma = 0", self.class)));
        }
        Ok(())
    }

    /// The complex amplitude `r·e^{iφ}`.
    pub fn amplitude(&self) -> Complex64 {
        Complex64::from_polar(self.r, self.phi)
    }

    /// Set `r` and `phi` from a complex amplitude.
    pub fn set_amplitude(&mut self, c: Complex64) {
        self.r = c.norm();
        self.phi = if self.r > 0.0 { wrap_phase(c.arg()) } else { 0.0 };
    }

    /// Reinterpret under another class; decays the class cannot carry are zeroed.
    pub fn with_class(mut self, class: ModelClass) -> Self {
        self.class = class;
        if !class.has_beta() {
            self.beta = 0.0;
        }
        if !class.has_gamma() {
            self.gamma = 0.0;
        }
        self
    }
}

/// Wrap an angle into [0, 2π).
pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Signed angular distance `a - b` wrapped into [-π, π).
pub fn phase_difference(a: f64, b: f64) -> f64 {
    (a - b + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI
}

/// Sampling instants `t_1 < … < t_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidGrid(format!("got {} instants", times.len())));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidGrid("non-finite instant".into()));
        }
        if let Some(w) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "t[{}]={} is not greater than t[{}]={}",
                w + 1,
                times[w + 1],
                w,
                times[w]
            )));
        }
        Ok(Self { times })
    }

    /// `t_n = start + (n-1)·step` for n = 1..=N.
    pub fn uniform(n: usize, start: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::InvalidGrid(format!("step must be positive, got {step}")));
        }
        Self::new((0..n).map(|i| start + step * i as f64).collect())
    }

    /// The default grid `t_n = n - 1`.
    pub fn unit(n: usize) -> Result<Self> {
        Self::uniform(n, 0.0, 1.0)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.times[0]
    }

    pub fn last(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Observation span `T = t_N - t_1`.
    pub fn span(&self) -> f64 {
        self.last() - self.first()
    }

    /// Average spacing `T / (N - 1)`.
    pub fn mean_spacing(&self) -> f64 {
        self.span() / (self.len() - 1) as f64
    }

    /// The spacing if the grid is uniform to within 1e-9 relative.
    pub fn uniform_spacing(&self) -> Option<f64> {
        let dt = self.mean_spacing();
        let uniform = self
            .times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt);
        uniform.then_some(dt)
    }

    /// `t_N + t_{N-1}`, the sum of the two largest instants.
    pub fn last_two_sum(&self) -> f64 {
        let n = self.len();
        self.times[n - 1] + self.times[n - 2]
    }
}

/// Complex observations on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalRecord {
    samples: Vec<Complex64>,
    grid: TimeGrid,
    noise_variance: Option<f64>,
}

impl SignalRecord {
    pub fn new(samples: Vec<Complex64>, grid: TimeGrid, noise_variance: Option<f64>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::LengthMismatch {
                samples: samples.len(),
                grid: grid.len(),
            });
        }
        if let Some(v) = noise_variance {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::NegativeVariance(v));
            }
        }
        Ok(Self {
            samples,
            grid,
            noise_variance,
        })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self {
            samples: vec![Complex64::new(0.0, 0.0); grid.len()],
            grid,
            noise_variance: None,
        }
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn noise_variance(&self) -> Option<f64> {
        self.noise_variance
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `Σ_n |y_n|²`.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|y| y.norm_sqr()).sum()
    }

    /// Same grid, different samples.
    pub fn with_samples(&self, samples: Vec<Complex64>) -> Result<Self> {
        Self::new(samples, self.grid.clone(), self.noise_variance)
    }

    pub fn add_component(&mut self, psi: &ComponentParams) {
        for (y, &t) in self.samples.iter_mut().zip(self.grid.times()) {
            *y += component_value(t, psi);
        }
    }

    pub fn subtract_component(&mut self, psi: &ComponentParams) {
        for (y, &t) in self.samples.iter_mut().zip(self.grid.times()) {
            *y -= component_value(t, psi);
        }
    }

    /// `self - Σ_k μ(·; ψ_k)`.
    pub fn minus_components(&self, components: &[ComponentParams]) -> Self {
        let mut out = self.clone();
        for psi in components {
            out.subtract_component(psi);
        }
        out
    }
}

/// `α(t) = exp(-βt - γt²)`.
#[inline]
pub fn envelope(t: f64, beta: f64, gamma: f64) -> f64 {
    (-beta * t - gamma * t * t).exp()
}

/// `μ(t; ψ) = r·α(t)·exp(i(φ + ωt))`.
#[inline]
pub fn component_value(t: f64, psi: &ComponentParams) -> Complex64 {
    let mag = psi.r * envelope(t, psi.beta, psi.gamma);
    Complex64::from_polar(mag, psi.phi + psi.omega * t)
}

/// Noise-free model `Σ_k μ(t_n; ψ_k)` on the grid.
pub fn reconstruct(components: &[ComponentParams], grid: &TimeGrid) -> Vec<Complex64> {
    grid.times()
        .iter()
        .map(|&t| components.iter().map(|psi| component_value(t, psi)).sum())
        .collect()
}

/// Draw an observation of `components` on `grid` with complex white noise of
/// total variance `sigma2` (σ²/2 per quadrature).
pub fn synthesize(components: &[ComponentParams], grid: &TimeGrid, sigma2: f64, seed: u64) -> Result<SignalRecord> {
    let mut rng = NoiseRng::new(seed);
    synthesize_with(components, grid, sigma2, &mut rng)
}

/// As [`synthesize`], drawing from a caller-owned generator.
pub fn synthesize_with(
    components: &[ComponentParams],
    grid: &TimeGrid,
    sigma2: f64,
    rng: &mut NoiseRng,
) -> Result<SignalRecord> {
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(Error::NegativeVariance(sigma2));
    }
    for psi in components {
        psi.validate()?;
    }
    let mut samples = reconstruct(components, grid);
    if sigma2 > 0.0 {
        for y in samples.iter_mut() {
            *y += rng.complex_gaussian(sigma2);
        }
    }
    SignalRecord::new(samples, grid.clone(), Some(sigma2))
}

/// Least-squares criterion `Σ_n |y_n - Σ_k μ(t_n; ψ_k)|²`.
pub fn nls_cost(signal: &SignalRecord, components: &[ComponentParams]) -> f64 {
    signal
        .samples()
        .iter()
        .zip(signal.grid().times())
        .map(|(&y, &t)| {
            let model: Complex64 = components.iter().map(|psi| component_value(t, psi)).sum();
            (y - model).norm_sqr()
        })
        .sum()
}
