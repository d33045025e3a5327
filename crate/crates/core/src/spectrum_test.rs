//! Periodogram whiteness test for fitted residuals.
//!
//! Under white circular Gaussian noise each periodogram ordinate is
//! `σ²/2 · χ²(2)` and distinct Fourier bins are independent. The ratio of the
//! mean periodogram inside a neighborhood of an estimated frequency to the
//! mean over the remaining bins is therefore F-distributed, with
//! `(2|I|, 2|C|)` degrees of freedom, and large values flag unexplained power
//! near that frequency.
//!
//! Fourier frequencies are `ω_k = 2πk / (N·Δ)`, `k = 0..N`, with Δ the grid
//! spacing (Δ = 1 for the default grid).

use crate::error::{Error, Result};
use crate::signal_model::SignalRecord;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};
use std::cell::RefCell;
use std::collections::BTreeSet;
use std::f64::consts::TAU;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Periodogram ordinates on an equispaced frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Periodogram {
    /// `|Σ_n y_n e^{-iω_k t_n}|² / N`.
    pub values: Vec<f64>,
    /// Number of frequency bins.
    pub n: usize,
    /// Spacing of the frequency grid in rad per time unit.
    pub bin_width: f64,
}

impl Periodogram {
    pub fn omega_of(&self, k: usize) -> f64 {
        k as f64 * self.bin_width
    }

    /// Nearest bin to `omega`, modulo the grid length.
    pub fn bin_of(&self, omega: f64) -> usize {
        let k = (omega / self.bin_width).round() as i64;
        k.rem_euclid(self.n as i64) as usize
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// N-bin periodogram of a signal.
pub fn periodogram(signal: &SignalRecord) -> Periodogram {
    padded_periodogram(signal, 1)
}

/// Periodogram evaluated on a `factor`-times denser frequency grid
/// (zero padding), still normalized by the sample count N.
pub fn padded_periodogram(signal: &SignalRecord, factor: usize) -> Periodogram {
    let factor = factor.max(1);
    let n = signal.len();
    let m = n * factor;
    let grid = signal.grid();
    let norm = 1.0 / n as f64;
    let values = match grid.uniform_spacing() {
        Some(_) => {
            let mut buf: Vec<Complex64> = Vec::with_capacity(m);
            buf.extend_from_slice(signal.samples());
            buf.resize(m, Complex64::new(0.0, 0.0));
            PLANNER.with(|p| p.borrow_mut().plan_fft_forward(m).process(&mut buf));
            buf.iter().map(|c| c.norm_sqr() * norm).collect()
        }
        None => {
            let dw = TAU / (m as f64 * grid.mean_spacing());
            (0..m)
                .map(|k| {
                    let w = k as f64 * dw;
                    let s: Complex64 = signal
                        .samples()
                        .iter()
                        .zip(grid.times())
                        .map(|(&y, &t)| y * Complex64::from_polar(1.0, -w * t))
                        .sum();
                    s.norm_sqr() * norm
                })
                .collect()
        }
    };
    Periodogram {
        values,
        n: m,
        bin_width: TAU / (m as f64 * grid.mean_spacing()),
    }
}

/// Bins within `half_width` of the bin nearest an estimated frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodSet {
    pub center_omega: f64,
    pub half_width: usize,
    pub indices: Vec<usize>,
}

impl NeighborhoodSet {
    pub fn new(center_omega: f64, half_width: usize, per: &Periodogram) -> Self {
        Self::around_bin(per.bin_of(center_omega), center_omega, half_width, per.n)
    }

    fn around_bin(center: usize, center_omega: f64, half_width: usize, n: usize) -> Self {
        let w = half_width as i64;
        let indices: BTreeSet<usize> = (-w..=w)
            .map(|j| (center as i64 + j).rem_euclid(n as i64) as usize)
            .collect();
        Self {
            center_omega,
            half_width,
            indices: indices.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.indices.binary_search(&k).is_ok()
    }
}

/// Which bins count as noise-only reference bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ComplementRule {
    /// Drop the zero-frequency bin from the reference set.
    pub exclude_dc: bool,
}

/// Bins outside every neighborhood.
pub fn complement_bins(per: &Periodogram, neighborhoods: &[NeighborhoodSet], rule: ComplementRule) -> Vec<usize> {
    let mut covered = vec![false; per.n];
    for nb in neighborhoods {
        for &k in &nb.indices {
            covered[k] = true;
        }
    }
    if rule.exclude_dc {
        covered[0] = true;
    }
    (0..per.n).filter(|&k| !covered[k]).collect()
}

/// Mean periodogram over the complement of all neighborhoods.
pub fn complement_mean(per: &Periodogram, neighborhoods: &[NeighborhoodSet], rule: ComplementRule) -> Result<f64> {
    let bins = complement_bins(per, neighborhoods, rule);
    if bins.is_empty() {
        return Err(Error::EmptyComplement);
    }
    Ok(bins.iter().map(|&k| per.values[k]).sum::<f64>() / bins.len() as f64)
}

/// The neighborhood-to-complement power ratio and its F degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiStatistic {
    pub xi: f64,
    pub d1: usize,
    pub d2: usize,
}

/// `ξ = mean_{I_t} Φ̂ / mean_C Φ̂`, with C the bins outside the union of all
/// neighborhoods (the target is always included in the union).
pub fn xi_statistic(per: &Periodogram, neighborhoods: &[NeighborhoodSet], target: &NeighborhoodSet) -> Result<XiStatistic> {
    xi_statistic_with(per, neighborhoods, target, ComplementRule::default())
}

pub fn xi_statistic_with(
    per: &Periodogram,
    neighborhoods: &[NeighborhoodSet],
    target: &NeighborhoodSet,
    rule: ComplementRule,
) -> Result<XiStatistic> {
    let mut all: Vec<NeighborhoodSet> = neighborhoods.to_vec();
    if !neighborhoods.contains(target) {
        all.push(target.clone());
    }
    let complement = complement_bins(per, &all, rule);
    if complement.is_empty() {
        return Err(Error::EmptyComplement);
    }
    let inside = target.indices.iter().map(|&k| per.values[k]).sum::<f64>() / target.len() as f64;
    let outside = complement.iter().map(|&k| per.values[k]).sum::<f64>() / complement.len() as f64;
    let xi = match (inside > 0.0, outside > 0.0) {
        (_, true) => inside / outside,
        (true, false) => f64::INFINITY,
        // Both empty of power: a flat spectrum.
        (false, false) => 1.0,
    };
    Ok(XiStatistic {
        xi,
        d1: 2 * target.len(),
        d2: 2 * complement.len(),
    })
}

/// Outcome of the upper-tail F test for one neighborhood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhitenessVerdict {
    pub xi: f64,
    pub d1: usize,
    pub d2: usize,
    pub p_value: f64,
    pub sufficient: bool,
    pub alpha_level: f64,
}

/// Upper-tail survival function of F(d1, d2).
pub fn f_survival(x: f64, d1: usize, d2: usize) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    if x <= 0.0 {
        return 1.0;
    }
    let dist = FisherSnedecor::new(d1 as f64, d2 as f64).expect("positive degrees of freedom");
    dist.sf(x).clamp(0.0, 1.0)
}

/// One-sided test: the model is sufficient when `P(F > ξ) > alpha`.
pub fn f_quantile_test(xi: f64, d1: usize, d2: usize, alpha: f64) -> WhitenessVerdict {
    debug_assert!(d1 >= 1 && d2 >= 1);
    debug_assert!(alpha > 0.0 && alpha < 1.0);
    let p_value = f_survival(xi, d1, d2);
    WhitenessVerdict {
        xi,
        d1,
        d2,
        p_value,
        sufficient: p_value > alpha,
        alpha_level: alpha,
    }
}

/// Test every estimated frequency of a fitted model against the shared
/// complement of all their neighborhoods. One verdict per frequency, in order.
pub fn classify_residual(residual: &SignalRecord, omegas: &[f64], half_width: usize, alpha: f64) -> Result<Vec<WhitenessVerdict>> {
    classify_residual_with(residual, omegas, half_width, alpha, ComplementRule::default())
}

pub fn classify_residual_with(
    residual: &SignalRecord,
    omegas: &[f64],
    half_width: usize,
    alpha: f64,
    rule: ComplementRule,
) -> Result<Vec<WhitenessVerdict>> {
    let per = periodogram(residual);
    classify_periodogram(&per, omegas, half_width, alpha, rule)
}

pub fn classify_periodogram(
    per: &Periodogram,
    omegas: &[f64],
    half_width: usize,
    alpha: f64,
    rule: ComplementRule,
) -> Result<Vec<WhitenessVerdict>> {
    let neighborhoods: Vec<NeighborhoodSet> = omegas.iter().map(|&w| NeighborhoodSet::new(w, half_width, per)).collect();
    neighborhoods
        .iter()
        .map(|target| {
            let s = xi_statistic_with(per, &neighborhoods, target, rule)?;
            Ok(f_quantile_test(s.xi, s.d1, s.d2, alpha))
        })
        .collect()
}

/// A candidate for a not-yet-modeled component.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakDetection {
    pub omega: f64,
    pub bin: usize,
    pub xi: XiStatistic,
    /// Larger of the Bonferroni-adjusted global p-value and the local one.
    pub p_value: f64,
}

/// Look for residual power away from already-modeled frequencies.
///
/// Candidates are bins outside every reserved neighborhood that are local
/// maxima of the N-bin periodogram and the largest value within their own
/// neighborhood. Its ξ is computed
/// against the complement of the reserved neighborhoods plus its own, and the
/// p-value is Bonferroni-corrected for the number of bins it could have been
/// picked from, so the procedure stays conservative under pure noise.
pub fn detect_new_peak(
    per: &Periodogram,
    reserved: &[NeighborhoodSet],
    half_width: usize,
    rule: ComplementRule,
) -> Result<Option<PeakDetection>> {
    detect_new_peak_in(per, per, reserved, half_width, rule)
}

/// As [`detect_new_peak`], but candidates must be local maxima of `working`,
/// the periodogram of the signal before the current components were removed,
/// and the residual maximum of their own neighborhood.
///
/// A mismatched fit leaves broad residual power around its component whose
/// shape can peak anywhere in the tails, so each candidate must also stand
/// out against an annulus of bins just outside its own neighborhood. Under
/// white noise both ratios are F-distributed; the reported p-value is the
/// larger of the Bonferroni-adjusted global one and the local one, and the
/// candidate with the smallest such p-value (then the most residual power)
/// is returned.
pub fn detect_new_peak_in(
    residual: &Periodogram,
    working: &Periodogram,
    reserved: &[NeighborhoodSet],
    half_width: usize,
    rule: ComplementRule,
) -> Result<Option<PeakDetection>> {
    let n = residual.n;
    debug_assert_eq!(n, working.n);
    let eligible: Vec<usize> = (0..n).filter(|&k| !reserved.iter().any(|nb| nb.contains(k))).collect();
    if eligible.is_empty() {
        return Ok(None);
    }
    let is_local_max = |v: &[f64], k: usize| {
        let prev = v[(k + n - 1) % n];
        let next = v[(k + 1) % n];
        v[k] >= prev && v[k] >= next && v[k] > 0.0
    };
    let outer = (3 * half_width).max(half_width + 2);
    let mut best: Option<PeakDetection> = None;
    for &k in &eligible {
        if !is_local_max(&working.values, k) || !(residual.values[k] > 0.0) {
            continue;
        }
        let candidate = NeighborhoodSet::around_bin(k, residual.omega_of(k), half_width, n);
        if candidate.indices.iter().any(|&j| residual.values[j] > residual.values[k]) {
            continue;
        }
        let xi = xi_statistic_with(residual, reserved, &candidate, rule)?;
        let global = (f_survival(xi.xi, xi.d1, xi.d2) * eligible.len() as f64).min(1.0);

        let annulus: Vec<usize> = (half_width + 1..=outer)
            .flat_map(|d| [(k + d) % n, (k + n - d % n) % n])
            .filter(|&j| !candidate.contains(j) && !reserved.iter().any(|nb| nb.contains(j)))
            .collect();
        let local = if annulus.len() < 2 {
            1.0
        } else {
            let inside = candidate.indices.iter().map(|&j| residual.values[j]).sum::<f64>() / candidate.len() as f64;
            let around = annulus.iter().map(|&j| residual.values[j]).sum::<f64>() / annulus.len() as f64;
            let ratio = if around > 0.0 { inside / around } else { f64::INFINITY };
            f_survival(ratio, 2 * candidate.len(), 2 * annulus.len())
        };
        let p_value = global.max(local);
        let better = match &best {
            None => true,
            Some(b) => p_value < b.p_value || (p_value == b.p_value && residual.values[k] > residual.values[b.bin]),
        };
        if better {
            best = Some(PeakDetection {
                omega: residual.omega_of(k),
                bin: k,
                xi,
                p_value,
            });
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_model::{synthesize, ComponentParams, TimeGrid};

    fn flat(n: usize, level: f64) -> Periodogram {
        Periodogram {
            values: vec![level; n],
            n,
            bin_width: TAU / n as f64,
        }
    }

    #[test]
    fn zero_signal_zero_periodogram() {
        let grid = TimeGrid::unit(32).unwrap();
        let per = periodogram(&SignalRecord::zeros(grid));
        assert!(per.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_signal_concentrates_in_dc() {
        let n = 40;
        let c = Complex64::new(0.6, -1.1);
        let s = SignalRecord::new(vec![c; n], TimeGrid::unit(n).unwrap(), None).unwrap();
        let per = periodogram(&s);
        assert!((per.values[0] - n as f64 * c.norm_sqr()).abs() < 1e-10);
        assert!(per.values[1..].iter().all(|&v| v < 1e-20));
    }

    #[test]
    fn fft_matches_direct_sum_on_shifted_grid() {
        // Uniform grid with offset and non-unit spacing: the FFT path and the
        // direct evaluation must agree in magnitude.
        let grid = TimeGrid::uniform(25, 3.0, 0.5).unwrap();
        let psi = ComponentParams::lorentzian(1.0, 0.4, 2.1, 0.03).unwrap();
        let s = synthesize(&[psi], &grid, 0.2, 5).unwrap();
        let per = periodogram(&s);
        for k in 0..25 {
            let w = per.omega_of(k);
            let direct: Complex64 = s
                .samples()
                .iter()
                .zip(grid.times())
                .map(|(&y, &t)| y * Complex64::from_polar(1.0, -w * t))
                .sum();
            assert!((direct.norm_sqr() / 25.0 - per.values[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn nonuniform_grid_uses_direct_evaluation() {
        let grid = TimeGrid::new(vec![0.0, 1.0, 2.5, 3.0, 4.2, 6.0]).unwrap();
        let s = SignalRecord::new(vec![Complex64::new(1.0, 0.0); 6], grid, None).unwrap();
        let per = periodogram(&s);
        assert!((per.values[0] - 6.0).abs() < 1e-12);
        assert_eq!(per.n, 6);
    }

    #[test]
    fn xi_examples() {
        let per = flat(50, 3.0);
        let nb = NeighborhoodSet::new(1.0, 3, &per);
        let s = xi_statistic(&per, std::slice::from_ref(&nb), &nb).unwrap();
        assert_eq!(s.xi, 1.0);
        assert_eq!((s.d1, s.d2), (14, 86));

        let mut per = flat(50, 1.0);
        for &k in &nb.indices {
            per.values[k] = 2.0;
        }
        let s = xi_statistic(&per, std::slice::from_ref(&nb), &nb).unwrap();
        assert_eq!(s.xi, 2.0);
    }

    #[test]
    fn empty_complement_rejected() {
        let per = flat(5, 1.0);
        let nb = NeighborhoodSet::new(0.0, 3, &per);
        assert_eq!(nb.len(), 5);
        assert_eq!(xi_statistic(&per, &[nb.clone()], &nb), Err(Error::EmptyComplement));
        assert_eq!(complement_mean(&per, &[nb], ComplementRule::default()), Err(Error::EmptyComplement));
    }

    #[test]
    fn neighborhood_wraps_modulo_n() {
        let per = flat(20, 1.0);
        let nb = NeighborhoodSet::new(0.0, 2, &per);
        assert_eq!(nb.indices, vec![0, 1, 2, 18, 19]);
        let nb = NeighborhoodSet::new(-per.bin_width, 1, &per);
        assert_eq!(nb.indices, vec![0, 18, 19]);
    }

    #[test]
    fn dc_exclusion_changes_reference_set() {
        let per = flat(30, 1.0);
        let nb = NeighborhoodSet::new(1.0, 2, &per);
        let with = complement_bins(&per, &[nb.clone()], ComplementRule { exclude_dc: false });
        let without = complement_bins(&per, &[nb], ComplementRule { exclude_dc: true });
        assert_eq!(with.len(), 25);
        assert_eq!(without.len(), 24);
        assert!(!without.contains(&0));
    }

    #[test]
    fn f_test_limits() {
        let v = f_quantile_test(1.0, 100_000, 100_000, 0.05);
        assert!((v.p_value - 0.5).abs() < 0.01);
        let v = f_quantile_test(f64::INFINITY, 14, 386, 0.05);
        assert_eq!(v.p_value, 0.0);
        assert!(!v.sufficient);
        let v = f_quantile_test(1e6, 14, 386, 0.05);
        assert!(v.p_value < 1e-12);
    }

    #[test]
    fn f_survival_matches_quadrature_of_density() {
        // Oracle: composite Simpson integration of the F(2, 10) density.
        let (d1, d2) = (2.0f64, 10.0f64);
        let ln_beta = |a: f64, b: f64| statrs::function::gamma::ln_gamma(a) + statrs::function::gamma::ln_gamma(b) - statrs::function::gamma::ln_gamma(a + b);
        let density = |x: f64| {
            let lb = ln_beta(d1 / 2.0, d2 / 2.0);
            ((d1 / 2.0) * (d1 / d2).ln() + (d1 / 2.0 - 1.0) * x.ln() - ((d1 + d2) / 2.0) * (1.0 + d1 * x / d2).ln() - lb).exp()
        };
        let x = 4.10;
        let m = 200_000;
        let h = x / m as f64;
        let mut acc = density(1e-15) + density(x);
        for i in 1..m {
            let xi = i as f64 * h;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * density(xi);
        }
        let cdf = acc * h / 3.0;
        let p = f_survival(x, 2, 10);
        assert!((p - (1.0 - cdf)).abs() < 1e-6, "p={p} quad={}", 1.0 - cdf);
        assert!((p - 0.05).abs() < 1e-3);
    }

    #[test]
    fn strong_leftover_flags_insufficient() {
        let grid = TimeGrid::unit(100).unwrap();
        let omega = 0.9;
        let psi = ComponentParams::cisoid(1.0, 0.0, omega).unwrap();
        let s = synthesize(&[psi], &grid, 1e-4, 3).unwrap();
        let v = classify_residual(&s, &[omega], 3, 0.01).unwrap();
        assert!(!v[0].sufficient);
        assert!(v[0].xi > 100.0);
    }

    #[test]
    fn classify_is_permutation_equivariant() {
        let grid = TimeGrid::unit(128).unwrap();
        let s = synthesize(&[ComponentParams::lorentzian(0.1, 0.0, 1.0, 0.05).unwrap()], &grid, 1e-3, 11).unwrap();
        let omegas = [1.0, 2.5, 4.0];
        let a = classify_residual(&s, &omegas, 3, 0.05).unwrap();
        let b = classify_residual(&s, &[4.0, 1.0, 2.5], 3, 0.05).unwrap();
        assert_eq!(a[0], b[1]);
        assert_eq!(a[1], b[2]);
        assert_eq!(a[2], b[0]);
    }

    #[test]
    fn xi_scale_invariant() {
        let grid = TimeGrid::unit(64).unwrap();
        let s = synthesize(&[ComponentParams::cisoid(0.2, 0.0, 0.8).unwrap()], &grid, 0.01, 2).unwrap();
        let scale = Complex64::new(-3.0, 0.7);
        let scaled = s.with_samples(s.samples().iter().map(|y| y * scale).collect()).unwrap();
        let a = classify_residual(&s, &[0.8, 2.0], 3, 0.05).unwrap();
        let b = classify_residual(&scaled, &[0.8, 2.0], 3, 0.05).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.xi - y.xi).abs() <= 1e-10 * x.xi);
        }
    }

    #[test]
    fn detection_finds_unmodeled_tone() {
        let grid = TimeGrid::unit(200).unwrap();
        // On-bin tone, so no sidelobes leak past the neighborhood.
        let omega = TAU * 64.0 / 200.0;
        let s = synthesize(&[ComponentParams::cisoid(0.5, 1.0, omega).unwrap()], &grid, 1e-3, 8).unwrap();
        let per = periodogram(&s);
        let d = detect_new_peak(&per, &[], 3, ComplementRule::default()).unwrap().unwrap();
        assert_eq!(d.bin, 64);
        assert!(d.p_value < 1e-10);

        let reserved = NeighborhoodSet::new(omega, 3, &per);
        let d = detect_new_peak(&per, &[reserved], 3, ComplementRule::default()).unwrap().unwrap();
        assert!(d.p_value > 0.01, "p={}", d.p_value);
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use crate::signal_model::TimeGrid;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn parseval_identity(samples in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..80)) {
            let n = samples.len();
            let y: Vec<Complex64> = samples.into_iter().map(|(a, b)| Complex64::new(a, b)).collect();
            let s = SignalRecord::new(y, TimeGrid::unit(n).unwrap(), None).unwrap();
            let per = periodogram(&s);
            let e = s.energy();
            prop_assert!((per.total() - e).abs() <= 1e-10 * e.max(1e-300));
            prop_assert!(per.values.iter().all(|&v| v >= 0.0));
        }
    }
}
