//! Sequential model selection: fit every component with the cheapest
//! envelope, test each residual neighborhood for whiteness, and refit only
//! the components that fail with the next richer class.
//!
//! Within a test stage components are escalated worst-first: the failing
//! component with the largest ξ is provisionally refit in the next class and
//! the remaining ones are re-tested, since a badly mismatched neighbor leaks
//! residual power into the neighborhoods around it.

use crate::error::{Error, Result};
use crate::estimation::{
    cycle_pass, deflate_tracked, fit_single_with, refine_joint, DecayScales, FitConfig, JointBounds, SearchHints,
};
use crate::signal_model::{ComponentParams, ModelClass, SignalRecord};
use crate::spectrum_test::{classify_residual_with, complement_mean, periodogram, NeighborhoodSet, WhitenessVerdict};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub fit: FitConfig,
    /// Level of the per-component whiteness test.
    pub alpha: f64,
    /// Run the joint local refinement at the end.
    pub final_refinement: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            alpha: 0.01,
            final_refinement: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.fit.validate()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedComponent {
    pub params: ComponentParams,
    /// One verdict per test stage the component took part in.
    pub verdict_history: Vec<WhitenessVerdict>,
    pub final_class: ModelClass,
    /// The component's estimate at the end of each fitting stage it went
    /// through, before the final joint refinement.
    pub stage_estimates: Vec<ComponentParams>,
}

impl ClassifiedComponent {
    /// The estimate this component had after the fitting stage of `class`.
    pub fn stage_estimate(&self, class: ModelClass) -> Option<&ComponentParams> {
        self.stage_estimates.iter().find(|c| c.class == class)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub components: Vec<ClassifiedComponent>,
    pub residual: SignalRecord,
    pub noise_variance_estimate: f64,
    /// 1, 3 or 5: the last fitting step that ran.
    pub steps_executed: u8,
}

impl PipelineReport {
    pub fn params(&self) -> Vec<ComponentParams> {
        self.components.iter().map(|c| c.params).collect()
    }

    pub fn classes(&self) -> Vec<ModelClass> {
        self.components.iter().map(|c| c.final_class).collect()
    }
}

/// Mean periodogram of `residual` outside all `neighborhoods`.
pub fn estimate_noise_variance(residual: &SignalRecord, neighborhoods: &[NeighborhoodSet]) -> Result<f64> {
    let per = periodogram(residual);
    complement_mean(&per, neighborhoods, Default::default())
}

/// Residual power, relative to the signal's, below which a neighborhood
/// counts as fully explained whatever its spectral shape.
const NEGLIGIBLE_RESIDUAL: f64 = 1e-14;

/// Round-off residuals of an exact fit are not white; accept them.
fn mark_negligible(verdicts: &mut [WhitenessVerdict], signal: &SignalRecord, residual: &SignalRecord, omegas: &[f64], half_width: usize) {
    let sp = periodogram(signal);
    let rp = periodogram(residual);
    for (v, &w) in verdicts.iter_mut().zip(omegas) {
        let nb = NeighborhoodSet::new(w, half_width, &sp);
        let mean = |p: &[f64]| nb.indices.iter().map(|&k| p[k]).sum::<f64>();
        if mean(&rp.values) <= NEGLIGIBLE_RESIDUAL * mean(&sp.values) {
            v.sufficient = true;
        }
    }
}

#[derive(Debug, Clone)]
struct Tracked {
    params: ComponentParams,
    frozen: bool,
    history: Vec<WhitenessVerdict>,
    stages: Vec<ComponentParams>,
}

impl Tracked {
    fn new(params: ComponentParams) -> Self {
        Self {
            params,
            frozen: false,
            history: Vec::new(),
            stages: vec![params],
        }
    }
}

struct Run<'a> {
    signal: &'a SignalRecord,
    cfg: &'a PipelineConfig,
    comps: Vec<Tracked>,
}

impl Run<'_> {
    fn params(&self) -> Vec<ComponentParams> {
        self.comps.iter().map(|c| c.params).collect()
    }

    fn frozen_reconstruction(&self) -> SignalRecord {
        let frozen: Vec<ComponentParams> = self.comps.iter().filter(|c| c.frozen).map(|c| c.params).collect();
        self.signal.minus_components(&frozen)
    }

    /// Test every active component of `class` and escalate failing ones,
    /// worst first, with a provisional refit in the next class. Returns
    /// whether anything was escalated. Components that pass are frozen.
    fn test_stage(&mut self, class: ModelClass) -> Result<bool> {
        let next = class.escalate().expect("test stages precede the last class");
        let fit = &self.cfg.fit;
        let rule = fit.complement_rule();
        let mut escalated = false;
        loop {
            let residual = self.signal.minus_components(&self.params());
            let omegas: Vec<f64> = self.comps.iter().map(|c| c.params.omega).collect();
            let mut verdicts = classify_residual_with(&residual, &omegas, fit.neighborhood_width, self.cfg.alpha, rule)?;
            mark_negligible(&mut verdicts, self.signal, &residual, &omegas, fit.neighborhood_width);
            let worst = self
                .comps
                .iter()
                .zip(&verdicts)
                .enumerate()
                .filter(|(_, (c, v))| !c.frozen && c.params.class == class && !v.sufficient)
                .max_by(|(_, (_, a)), (_, (_, b))| a.xi.total_cmp(&b.xi))
                .map(|(i, _)| i);
            let Some(i) = worst else {
                for (c, v) in self.comps.iter_mut().zip(&verdicts) {
                    if !c.frozen && c.params.class == class {
                        c.history.push(*v);
                        c.frozen = true;
                    }
                }
                return Ok(escalated);
            };
            self.comps[i].history.push(verdicts[i]);
            let mut own = residual;
            own.add_component(&self.comps[i].params);
            self.comps[i].params = self.escalate_one(&own, &self.comps[i].params, next)?;
            escalated = true;
            self.refresh_active();
        }
    }

    /// One cyclic refinement pass over the components that are not frozen.
    fn refresh_active(&mut self) {
        let mut residual = self.signal.minus_components(&self.params());
        for c in self.comps.iter_mut().filter(|c| !c.frozen) {
            let mut one = [c.params];
            cycle_pass(&mut one, &mut residual, &self.cfg.fit);
            c.params = one[0];
        }
    }

    /// Refit a single component in `next` against the residual of everything else.
    fn escalate_one(&self, own: &SignalRecord, current: &ComponentParams, next: ModelClass) -> Result<ComponentParams> {
        let fit = &self.cfg.fit;
        let mut hints = SearchHints {
            omega_seeds: Some(vec![current.omega]),
            ..SearchHints::default()
        };
        if next == ModelClass::Voigt {
            // The Lorentzian fit overestimates β by at most γ(t_N + t_{N-1}).
            let scales = DecayScales::for_signal(own);
            let lo = (current.beta - scales.gamma_max * own.grid().last_two_sum()).max(0.0);
            hints.beta_range = Some((lo, current.beta));
        }
        match fit_single_with(own, next, fit, &hints) {
            Ok(c) => Ok(c),
            // Nothing left to fit: keep the component as it was, in the new class.
            Err(Error::NoCandidate) => Ok(current.with_class(next)),
            Err(e) => Err(e),
        }
    }

    /// Refit all active components of `class` together, allowing new ones.
    fn fit_stage(&mut self, class: ModelClass) -> Result<()> {
        let working = self.frozen_reconstruction();
        let reserved: Vec<f64> = self.comps.iter().filter(|c| c.frozen).map(|c| c.params.omega).collect();
        let active: Vec<usize> = (0..self.comps.len()).filter(|&i| !self.comps[i].frozen).collect();
        let initial: Vec<ComponentParams> = active.iter().map(|&i| self.comps[i].params).collect();
        let (found, _) = deflate_tracked(&working, class, &self.cfg.fit, &reserved, initial)?;
        for (k, p) in found.into_iter().enumerate() {
            match active.get(k) {
                Some(&i) => {
                    self.comps[i].params = p;
                    self.comps[i].stages.push(p);
                }
                None => self.comps.push(Tracked::new(p)),
            }
        }
        Ok(())
    }
}

/// Estimate and classify all components of `signal`.
pub fn run_pipeline(signal: &SignalRecord, cfg: &PipelineConfig) -> Result<PipelineReport> {
    cfg.validate()?;
    let mut run = Run {
        signal,
        cfg,
        comps: Vec::new(),
    };

    run.fit_stage(ModelClass::Cisoid)?;
    let mut steps = 1;
    if !run.comps.is_empty() && run.test_stage(ModelClass::Cisoid)? {
        run.fit_stage(ModelClass::Lorentzian)?;
        steps = 3;
        if run.test_stage(ModelClass::Lorentzian)? {
            run.fit_stage(ModelClass::Voigt)?;
            steps = 5;
        }
    }

    let mut params = run.params();
    if cfg.final_refinement && !params.is_empty() {
        params = refine_joint(signal, &params, &JointBounds::default());
        let mut residual = signal.minus_components(&params);
        // A last per-component pass in case the joint step stalled early.
        cycle_pass(&mut params, &mut residual, &cfg.fit);
    }

    let mut components: Vec<ClassifiedComponent> = run
        .comps
        .into_iter()
        .zip(params)
        .map(|(t, params)| ClassifiedComponent {
            params,
            verdict_history: t.history,
            final_class: params.class,
            stage_estimates: t.stages,
        })
        .collect();
    components.sort_by(|a, b| a.params.omega.total_cmp(&b.params.omega));

    let final_params: Vec<ComponentParams> = components.iter().map(|c| c.params).collect();
    let residual = signal.minus_components(&final_params);
    let per = periodogram(&residual);
    let neighborhoods: Vec<NeighborhoodSet> = final_params
        .iter()
        .map(|c| NeighborhoodSet::new(c.omega, cfg.fit.neighborhood_width, &per))
        .collect();
    let noise_variance_estimate = complement_mean(&per, &neighborhoods, cfg.fit.complement_rule())?;

    Ok(PipelineReport {
        components,
        residual,
        noise_variance_estimate,
        steps_executed: steps,
    })
}
