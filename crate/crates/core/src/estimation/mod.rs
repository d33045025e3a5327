//! Approximate maximum-likelihood fitting under a fixed envelope class.
//!
//! Components are extracted one at a time (greedy deflation): a coarse
//! search over periodogram peaks and logarithmic decay grids seeds a local
//! golden-section coordinate refinement, with amplitude and phase solved in
//! closed form at every evaluation. Deflation stops once the residual shows
//! no significant peak away from the components already found, and finishes
//! with cyclic re-refinement of each component against the residual of the
//! others.

mod joint;
mod search;

pub use joint::{refine_joint, JointBounds};
pub use search::{golden_section, linspace, logspace, CoordinateSearch, SearchOutcome};

use crate::error::{Error, Result};
use crate::signal_model::{nls_cost, wrap_phase, ComponentParams, ModelClass, SignalRecord};
use crate::spectrum_test::{
    detect_new_peak_in, padded_periodogram, periodogram, ComplementRule, NeighborhoodSet, Periodogram,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Number of coarse grid points per nonlinear parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoarseGrid {
    /// Periodogram peaks tried as frequency seeds.
    pub omega: usize,
    /// Logarithmic β grid points (0 is always added).
    pub beta: usize,
    /// Logarithmic γ grid points (0 is always added).
    pub gamma: usize,
}

impl Default for CoarseGrid {
    fn default() -> Self {
        Self {
            omega: 3,
            beta: 24,
            gamma: 24,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub max_components: usize,
    pub coarse_grid: CoarseGrid,
    /// Zero-padding factor of the seeding periodogram.
    pub padding: usize,
    /// Convergence threshold on the refinement step, in units of
    /// `(ω·T, β·T, γ·T²)` with T the observation span.
    pub refine_tolerance: f64,
    pub refine_max_iters: usize,
    pub cycle_passes: usize,
    /// Level of the whiteness test that ends deflation.
    pub alpha_stop: f64,
    /// Half-width W of the test neighborhoods, in bins.
    pub neighborhood_width: usize,
    pub exclude_dc: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_components: 12,
            coarse_grid: CoarseGrid::default(),
            padding: 8,
            refine_tolerance: 1e-9,
            refine_max_iters: 200,
            cycle_passes: 3,
            alpha_stop: 0.01,
            neighborhood_width: 3,
            exclude_dc: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.max_components < 1 {
            return bad("max_components must be at least 1".into());
        }
        if self.coarse_grid.omega < 1 {
            return bad("coarse_grid.omega must be at least 1".into());
        }
        if self.coarse_grid.beta < 2 || self.coarse_grid.gamma < 2 {
            return bad("coarse_grid.beta and coarse_grid.gamma must be at least 2".into());
        }
        if self.padding < 1 {
            return bad("padding must be at least 1".into());
        }
        if !(self.refine_tolerance > 0.0) {
            return bad(format!("refine_tolerance must be positive, got {}", self.refine_tolerance));
        }
        if self.refine_max_iters < 1 {
            return bad("refine_max_iters must be at least 1".into());
        }
        if !(self.alpha_stop > 0.0 && self.alpha_stop < 1.0) {
            return bad(format!("alpha_stop must lie in (0, 1), got {}", self.alpha_stop));
        }
        Ok(())
    }

    pub fn complement_rule(&self) -> ComplementRule {
        ComplementRule {
            exclude_dc: self.exclude_dc,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub components: Vec<ComponentParams>,
    pub residual: SignalRecord,
    pub cost: f64,
}

/// Decay search ranges implied by the observation span.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayScales {
    pub span: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
}

impl DecayScales {
    pub fn for_signal(signal: &SignalRecord) -> Self {
        let span = signal.grid().span();
        Self {
            span,
            beta_min: 1e-4 / span,
            beta_max: 10.0 / span,
            gamma_min: 1e-4 / (span * span),
            gamma_max: 10.0 / (span * span),
        }
    }
}

/// Closed-form least-squares amplitude for a unit template.
struct TemplateFit {
    cost: f64,
    amplitude: Complex64,
    energy: f64,
}

fn template_fit(signal: &SignalRecord, omega: f64, beta: f64, gamma: f64) -> TemplateFit {
    let mut cross = Complex64::new(0.0, 0.0);
    let mut norm = 0.0;
    let mut total = 0.0;
    for (&y, &t) in signal.samples().iter().zip(signal.grid().times()) {
        let a = (-beta * t - gamma * t * t).exp();
        let b = Complex64::from_polar(a, omega * t);
        cross += y * b.conj();
        norm += a * a;
        total += y.norm_sqr();
    }
    if !(norm > f64::EPSILON) {
        return TemplateFit {
            cost: total,
            amplitude: Complex64::new(0.0, 0.0),
            energy: norm,
        };
    }
    let amplitude = cross / norm;
    TemplateFit {
        cost: (total - cross.norm_sqr() / norm).max(0.0),
        amplitude,
        energy: norm,
    }
}

/// Least-squares amplitude `r` and phase `φ` of the template
/// `α(t)e^{iωt}` against `signal`.
pub fn solve_amp_phase(signal: &SignalRecord, omega: f64, beta: f64, gamma: f64) -> Result<(f64, f64)> {
    let fit = template_fit(signal, omega, beta, gamma);
    if !(fit.energy > f64::EPSILON) {
        return Err(Error::DegenerateEnvelope { energy: fit.energy });
    }
    let r = fit.amplitude.norm();
    let phi = if r > 0.0 { wrap_phase(fit.amplitude.arg()) } else { 0.0 };
    Ok((r, phi))
}

/// Optional restrictions on a single-component search.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchHints {
    /// Explicit frequency seeds; otherwise periodogram peaks are used.
    pub omega_seeds: Option<Vec<f64>>,
    /// Neighborhoods (on the N-bin grid) whose peaks must not seed a search.
    pub excluded: Vec<NeighborhoodSet>,
    /// Closed β interval to search.
    pub beta_range: Option<(f64, f64)>,
    /// Closed γ interval to search.
    pub gamma_range: Option<(f64, f64)>,
}

fn nonlinear_of(c: &ComponentParams) -> Vec<f64> {
    let mut x = vec![c.omega];
    if c.class.has_beta() {
        x.push(c.beta);
    }
    if c.class.has_gamma() {
        x.push(c.gamma);
    }
    x
}

fn unpack(class: ModelClass, x: &[f64]) -> (f64, f64, f64) {
    let omega = x[0];
    let beta = if class.has_beta() { x[1] } else { 0.0 };
    let gamma = if class.has_gamma() { x[2] } else { 0.0 };
    (omega, beta, gamma)
}

fn build(class: ModelClass, omega: f64, beta: f64, gamma: f64, amplitude: Complex64) -> ComponentParams {
    let mut c = ComponentParams {
        class,
        r: 0.0,
        phi: 0.0,
        omega,
        beta,
        gamma,
    };
    c.set_amplitude(amplitude);
    c
}

/// Box and step sizes for the local refinement of one component.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub step: Vec<f64>,
}

fn local_search(signal: &SignalRecord, class: ModelClass, start: &[f64], bx: &LocalBox, cfg: &FitConfig) -> (Vec<f64>, f64) {
    let span = signal.grid().span();
    let scale: Vec<f64> = [1.0 / span, 1.0 / span, 1.0 / (span * span)][..start.len()].to_vec();
    let search = CoordinateSearch {
        lower: bx.lower.clone(),
        upper: bx.upper.clone(),
        step: bx.step.clone(),
        scale,
        tolerance: cfg.refine_tolerance,
        max_sweeps: cfg.refine_max_iters,
    };
    let out = search.minimize(
        |x| {
            let (w, b, g) = unpack(class, x);
            template_fit(signal, w, b, g).cost
        },
        start,
    );
    (out.x, out.value)
}

/// Refine one component against `signal` from its current parameters,
/// re-solving amplitude and phase. Never increases the fit cost.
pub fn refine_component(signal: &SignalRecord, comp: &ComponentParams, cfg: &FitConfig, bx: Option<&LocalBox>) -> ComponentParams {
    let scales = DecayScales::for_signal(signal);
    let n_bin = std::f64::consts::TAU / (signal.len() as f64 * signal.grid().mean_spacing());
    let default_box;
    let bx = match bx {
        Some(b) => b,
        None => {
            default_box = default_local_box(comp, n_bin, &scales, cfg);
            &default_box
        }
    };
    let start = nonlinear_of(comp);
    let (x, _) = local_search(signal, comp.class, &start, bx, cfg);
    let (w, b, g) = unpack(comp.class, &x);
    let fit = template_fit(signal, w, b, g);
    build(comp.class, w, b, g, fit.amplitude)
}

fn default_local_box(comp: &ComponentParams, n_bin: f64, scales: &DecayScales, cfg: &FitConfig) -> LocalBox {
    let pad_bin = n_bin / cfg.padding as f64;
    let mut lower = vec![comp.omega - 2.0 * n_bin];
    let mut upper = vec![comp.omega + 2.0 * n_bin];
    let mut step = vec![pad_bin / 4.0];
    if comp.class.has_beta() {
        lower.push(0.0);
        upper.push((2.0 * scales.beta_max).max(2.0 * comp.beta));
        step.push((0.1 * comp.beta).max(scales.beta_min));
    }
    if comp.class.has_gamma() {
        lower.push(0.0);
        upper.push((2.0 * scales.gamma_max).max(2.0 * comp.gamma));
        step.push((0.1 * comp.gamma).max(scales.gamma_min));
    }
    LocalBox { lower, upper, step }
}

fn grid_with_zero(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let mut g = vec![0.0];
    g.extend(logspace(lo, hi, count));
    g
}

fn next_spacing(grid: &[f64], value: f64, fallback: f64) -> f64 {
    grid.iter()
        .position(|&g| g == value)
        .and_then(|i| grid.get(i + 1).map(|&nx| nx - value))
        .unwrap_or(fallback)
        .max(fallback * 1e-3)
}

/// Local maxima of a padded periodogram, strongest first, skipping peaks whose
/// N-bin falls inside an excluded neighborhood.
fn peak_seeds(padded: &Periodogram, n_grid: &Periodogram, excluded: &[NeighborhoodSet], count: usize) -> Vec<f64> {
    let m = padded.n;
    let v = &padded.values;
    let floor = v.iter().cloned().fold(0.0, f64::max) * 1e-30;
    let mut peaks: Vec<usize> = (0..m)
        .filter(|&k| {
            let prev = v[(k + m - 1) % m];
            let next = v[(k + 1) % m];
            v[k] >= prev && v[k] > next && v[k] > floor
        })
        .filter(|&k| {
            let bin = n_grid.bin_of(padded.omega_of(k));
            !excluded.iter().any(|nb| nb.contains(bin))
        })
        .collect();
    peaks.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
    peaks.truncate(count);
    peaks
        .into_iter()
        .map(|k| {
            // Parabolic interpolation of the peak location.
            let (a, b, c) = (v[(k + m - 1) % m], v[k], v[(k + 1) % m]);
            let denom = a - 2.0 * b + c;
            let delta = if denom < 0.0 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
            let omega = (k as f64 + delta) * padded.bin_width;
            // Report frequencies in (-π/Δ, π/Δ].
            let period = m as f64 * padded.bin_width;
            if omega > 0.5 * period {
                omega - period
            } else {
                omega
            }
        })
        .collect()
}

/// One deflation step: the best single component of `class` in `signal`.
pub fn fit_single(signal: &SignalRecord, class: ModelClass, config: &FitConfig) -> Result<ComponentParams> {
    fit_single_with(signal, class, config, &SearchHints::default())
}

pub fn fit_single_with(signal: &SignalRecord, class: ModelClass, cfg: &FitConfig, hints: &SearchHints) -> Result<ComponentParams> {
    cfg.validate()?;
    if signal.energy() <= 0.0 {
        return Err(Error::NoCandidate);
    }
    let scales = DecayScales::for_signal(signal);
    let n_grid = periodogram(signal);
    let n_bin = n_grid.bin_width;
    let pad_bin = n_bin / cfg.padding as f64;

    let omegas = match &hints.omega_seeds {
        Some(seeds) => seeds.clone(),
        None => {
            let padded = padded_periodogram(signal, cfg.padding);
            peak_seeds(&padded, &n_grid, &hints.excluded, cfg.coarse_grid.omega)
        }
    };
    if omegas.is_empty() {
        return Err(Error::NoCandidate);
    }

    let betas = if !class.has_beta() {
        vec![0.0]
    } else {
        match hints.beta_range {
            Some((lo, hi)) if hi > lo => linspace(lo.max(0.0), hi, cfg.coarse_grid.beta + 1),
            Some((lo, _)) => vec![lo.max(0.0)],
            None => grid_with_zero(scales.beta_min, scales.beta_max, cfg.coarse_grid.beta),
        }
    };
    let gammas = if !class.has_gamma() {
        vec![0.0]
    } else {
        match hints.gamma_range {
            Some((lo, hi)) if hi > lo => {
                let lo = lo.max(0.0);
                let mut g = if lo == 0.0 { vec![0.0] } else { Vec::new() };
                g.extend(logspace(lo.max(scales.gamma_min), hi, cfg.coarse_grid.gamma));
                g
            }
            Some((lo, _)) => vec![lo.max(0.0)],
            None => grid_with_zero(scales.gamma_min, scales.gamma_max, cfg.coarse_grid.gamma),
        }
    };
    let (beta_lo, beta_hi) = hints.beta_range.unwrap_or((0.0, 2.0 * scales.beta_max));
    let (gamma_lo, gamma_hi) = hints.gamma_range.unwrap_or((0.0, 2.0 * scales.gamma_max));

    let mut best: Option<(f64, ComponentParams)> = None;
    for &omega in &omegas {
        // Coarse grid: ascending decays, strict improvement, so ties keep the
        // smaller (β, γ).
        let mut seed = (f64::INFINITY, 0.0, 0.0);
        for &b in &betas {
            for &g in &gammas {
                let cost = template_fit(signal, omega, b, g).cost;
                if cost < seed.0 {
                    seed = (cost, b, g);
                }
            }
        }
        let (_, b0, g0) = seed;

        let mut lower = vec![omega - 2.0 * n_bin];
        let mut upper = vec![omega + 2.0 * n_bin];
        let mut step = vec![pad_bin];
        let mut start = vec![omega];
        if class.has_beta() {
            lower.push(beta_lo.max(0.0));
            upper.push(beta_hi.max(beta_lo));
            step.push(next_spacing(&betas, b0, scales.beta_min));
            start.push(b0);
        }
        if class.has_gamma() {
            lower.push(gamma_lo.max(0.0));
            upper.push(gamma_hi.max(gamma_lo));
            step.push(next_spacing(&gammas, g0, scales.gamma_min));
            start.push(g0);
        }
        let bx = LocalBox { lower, upper, step };
        let (x, cost) = local_search(signal, class, &start, &bx, cfg);
        let (w, b, g) = unpack(class, &x);
        let fit = template_fit(signal, w, b, g);
        let cand = build(class, w, b, g, fit.amplitude);
        let better = match &best {
            None => true,
            Some((bc, bp)) => cost < *bc || (cost == *bc && (cand.beta, cand.gamma) < (bp.beta, bp.gamma)),
        };
        if better {
            best = Some((cost, cand));
        }
    }
    best.map(|(_, c)| c).ok_or(Error::NoCandidate)
}

/// Residual energy, relative to the input, below which deflation stops.
const RELATIVE_ENERGY_FLOOR: f64 = 1e-18;

/// Greedy deflation of `working` under `class`.
///
/// `reserved` lists frequencies of components modeled elsewhere: their
/// neighborhoods never seed a new component and are excluded from the noise
/// reference. `initial` components (already of `class`) are taken as found
/// and refined along with the new ones.
pub fn deflate(
    working: &SignalRecord,
    class: ModelClass,
    cfg: &FitConfig,
    reserved: &[f64],
    initial: Vec<ComponentParams>,
) -> Result<FitResult> {
    let (mut comps, residual) = deflate_tracked(working, class, cfg, reserved, initial)?;
    comps.sort_by(|a, b| b.r.total_cmp(&a.r));
    let cost = nls_cost(working, &comps);
    Ok(FitResult {
        components: comps,
        residual,
        cost,
    })
}

/// As [`deflate`], but keeps the `initial` components first and in order,
/// followed by the newly found ones in order of discovery.
pub(crate) fn deflate_tracked(
    working: &SignalRecord,
    class: ModelClass,
    cfg: &FitConfig,
    reserved: &[f64],
    initial: Vec<ComponentParams>,
) -> Result<(Vec<ComponentParams>, SignalRecord)> {
    cfg.validate()?;
    let mut comps = initial;
    let mut residual = working.minus_components(&comps);
    let total = working.energy();
    let rule = cfg.complement_rule();
    let working_per = periodogram(working);

    if !comps.is_empty() {
        cycle_pass(&mut comps, &mut residual, cfg);
    }

    while comps.len() < cfg.max_components {
        if residual.energy() <= RELATIVE_ENERGY_FLOOR * total {
            break;
        }
        let per = periodogram(&residual);
        let taken: Vec<NeighborhoodSet> = reserved
            .iter()
            .copied()
            .chain(comps.iter().map(|c| c.omega))
            .map(|w| NeighborhoodSet::new(w, cfg.neighborhood_width, &per))
            .collect();
        let detection = match detect_new_peak_in(&per, &working_per, &taken, cfg.neighborhood_width, rule) {
            Ok(Some(d)) => d,
            Ok(None) | Err(Error::EmptyComplement) => break,
            Err(e) => return Err(e),
        };
        if detection.p_value > cfg.alpha_stop {
            break;
        }
        let padded = padded_periodogram(&residual, cfg.padding);
        let seeds = peak_seeds(&padded, &per, &taken, usize::MAX);
        let near: Vec<f64> = seeds
            .into_iter()
            .filter(|&w| {
                let d = (per.bin_of(w) as isize - detection.bin as isize).rem_euclid(per.n as isize);
                d <= 1 || d >= per.n as isize - 1
            })
            .take(cfg.coarse_grid.omega)
            .collect();
        let hints = SearchHints {
            omega_seeds: Some(if near.is_empty() { vec![detection.omega] } else { near }),
            excluded: taken,
            ..SearchHints::default()
        };
        let comp = match fit_single_with(&residual, class, cfg, &hints) {
            Ok(c) => c,
            Err(Error::NoCandidate) => break,
            Err(e) => return Err(e),
        };
        if !(comp.r > 0.0) {
            break;
        }
        residual.subtract_component(&comp);
        comps.push(comp);
        cycle_pass(&mut comps, &mut residual, cfg);
    }

    for _ in 0..cfg.cycle_passes {
        cycle_pass(&mut comps, &mut residual, cfg);
    }
    Ok((comps, residual))
}

/// Re-refine each component against the residual of all the others.
pub fn cycle_pass(comps: &mut [ComponentParams], residual: &mut SignalRecord, cfg: &FitConfig) {
    for c in comps.iter_mut() {
        residual.add_component(c);
        let refined = refine_component(residual, c, cfg, None);
        residual.subtract_component(&refined);
        *c = refined;
    }
}

/// Fit a multi-component model of one class without knowing the model order.
pub fn fit_multi(signal: &SignalRecord, class: ModelClass, config: &FitConfig) -> Result<FitResult> {
    deflate(signal, class, config, &[], Vec::new())
}
