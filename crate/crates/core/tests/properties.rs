//! Property tests for invariants that must hold for any valid input.

use dampfit::crlb::fisher_information;
use dampfit::estimation::{deflate, FitConfig};
use dampfit::pseudo_true::{default_tolerance, pseudo_true_cisoid, pseudo_true_lorentzian, psi_sign_function};
use dampfit::signal_model::{synthesize, wrap_phase, ComponentParams, ModelClass, SignalRecord, TimeGrid};
use dampfit::spectrum_test::{periodogram, xi_statistic, NeighborhoodSet};
use proptest::prelude::*;
use std::f64::consts::TAU;

fn voigt() -> impl Strategy<Value = ComponentParams> {
    (0.2f64..3.0, 0.0f64..TAU, 0.2f64..2.9, 0.0f64..0.05, 1e-7f64..1e-4)
        .prop_map(|(r, phi, omega, beta, gamma)| ComponentParams::voigt(r, phi, omega, beta, gamma).unwrap())
}

fn grid() -> impl Strategy<Value = TimeGrid> {
    prop_oneof![Just(20usize), Just(64), Just(200)].prop_map(|n| TimeGrid::unit(n).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lorentzian_limit_lies_inside_sign_bracket(psi in voigt(), grid in grid()) {
        let hi = psi.beta + psi.gamma * grid.last_two_sum();
        prop_assert!(psi_sign_function(psi.beta, &psi, &grid) > 0.0);
        prop_assert!(psi_sign_function(hi, &psi, &grid) <= 0.0);
        let pt = pseudo_true_lorentzian(&psi, &grid, default_tolerance(hi - psi.beta)).unwrap();
        let b = pt.beta0.unwrap();
        prop_assert!(b > psi.beta && b <= hi, "{} not in ({}, {}]", b, psi.beta, hi);
    }

    #[test]
    fn cisoid_limit_shrinks_amplitude(psi in voigt(), grid in grid()) {
        let pt = pseudo_true_cisoid(&psi, &grid);
        prop_assert!(pt.r0 > 0.0 && pt.r0 <= psi.r * (1.0 + 1e-12));
        prop_assert!((pt.omega0 - psi.omega).abs() < TAU / grid.len() as f64);
    }

    #[test]
    fn fisher_is_symmetric_positive_semidefinite(
        a in voigt(),
        b in voigt(),
        sigma2 in 1e-4f64..1.0,
    ) {
        let grid = TimeGrid::unit(64).unwrap();
        let f = fisher_information(&[a, b], &grid, sigma2).unwrap().matrix;
        prop_assert_eq!(f.clone(), f.transpose());
        let scale = f.diagonal().amax();
        let min_eig = f.symmetric_eigenvalues().min();
        prop_assert!(min_eig >= -1e-9 * scale, "min eigenvalue {}", min_eig);
    }

    #[test]
    fn xi_is_scale_invariant(seed in any::<u64>(), scale in 1e-3f64..1e3, omega in 0.3f64..2.8) {
        let s = synthesize(&[], &TimeGrid::unit(128).unwrap(), 1.0, seed).unwrap();
        let scaled = s.with_samples(s.samples().iter().map(|y| y * scale).collect()).unwrap();
        let per = periodogram(&s);
        let per_scaled = periodogram(&scaled);
        let nb = NeighborhoodSet::new(omega, 3, &per);
        let x = xi_statistic(&per, &[], &nb).unwrap().xi;
        let y = xi_statistic(&per_scaled, &[], &nb).unwrap().xi;
        prop_assert!((x - y).abs() <= 1e-9 * x.abs());
    }

    #[test]
    fn deflation_never_adds_energy(seed in any::<u64>(), psi in voigt(), sigma2 in 1e-4f64..1e-1) {
        let s = synthesize(&[psi], &TimeGrid::unit(64).unwrap(), sigma2, seed).unwrap();
        let fit = deflate(&s, ModelClass::Lorentzian, &FitConfig::default(), &[], Vec::new()).unwrap();
        prop_assert!(fit.cost <= s.energy() * (1.0 + 1e-12));
        let explained = s.minus_components(&fit.components);
        let r: &SignalRecord = &fit.residual;
        prop_assert!((explained.energy() - r.energy()).abs() <= 1e-9 * s.energy());
        prop_assert!(fit.components.iter().all(|c| c.class == ModelClass::Lorentzian));
    }

    #[test]
    fn wrapped_phase_is_in_range(phi in -1e6f64..1e6) {
        let w = wrap_phase(phi);
        prop_assert!((0.0..TAU).contains(&w));
        let diff = (w - phi) / TAU;
        prop_assert!((diff - diff.round()).abs() < 1e-6);
    }
}
