//! Monte Carlo sweeps of the pipeline over noise levels.
//!
//! Every repetition draws its phases and noise from its own generator,
//! seeded from the master seed and the (noise level, repetition) indices, so
//! results do not depend on the number of workers or their scheduling.

use crate::crlb::{crlb_diag, fisher_information, Param, ParamMask};
use crate::error::{Error, Result};
use crate::pipeline::{run_pipeline, ClassifiedComponent, PipelineConfig, PipelineReport};
use crate::rng::{derive_seed, NoiseRng};
use crate::signal_model::{synthesize_with, ComponentParams, ModelClass, SignalRecord, TimeGrid};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseKeyword {
    /// Independently uniform on [0, 2π) in every repetition.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhaseSpec {
    Fixed(f64),
    Random(PhaseKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub class: ModelClass,
    pub r: f64,
    pub phase: PhaseSpec,
    pub omega: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub gamma: f64,
}

impl ComponentSpec {
    fn realize(&self, rng: &mut NoiseRng) -> Result<ComponentParams> {
        let phi = match self.phase {
            PhaseSpec::Fixed(p) => p,
            PhaseSpec::Random(PhaseKeyword::Uniform) => rng.phase(),
        };
        ComponentParams::new(self.class, self.r, phi, self.omega, self.beta, self.gamma)
    }
}

/// Uniform sampling instants `t_n = start + n·step`, n = 0..N-1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    #[serde(default)]
    pub start: f64,
    #[serde(default = "unit_step")]
    pub step: f64,
}

fn unit_step() -> f64 {
    1.0
}

impl GridSpec {
    pub fn build(&self) -> Result<TimeGrid> {
        TimeGrid::uniform(self.n, self.start, self.step)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub repetitions: usize,
    pub noise_variances: Vec<f64>,
    pub grid: GridSpec,
    pub components: Vec<ComponentSpec>,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    /// Worker threads for repetitions; all available cores when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

impl ExperimentConfig {
    /// Three unit-amplitude components on 200 unit-spaced samples: a cisoid
    /// at 0.7, a Lorentzian at 0.5 with β = 1/200 and a Voigt at 1.5 with
    /// β = 1/150, γ = 10⁻⁵, all with uniform random phases.
    pub fn reference() -> Self {
        let uniform = PhaseSpec::Random(PhaseKeyword::Uniform);
        Self {
            seed: 1,
            repetitions: 200,
            noise_variances: vec![1e-4, 1e-3, 1e-2],
            grid: GridSpec {
                n: 200,
                start: 0.0,
                step: 1.0,
            },
            components: vec![
                ComponentSpec {
                    class: ModelClass::Cisoid,
                    r: 1.0,
                    phase: uniform,
                    omega: 0.7,
                    beta: 0.0,
                    gamma: 0.0,
                },
                ComponentSpec {
                    class: ModelClass::Lorentzian,
                    r: 1.0,
                    phase: uniform,
                    omega: 0.5,
                    beta: 1.0 / 200.0,
                    gamma: 0.0,
                },
                ComponentSpec {
                    class: ModelClass::Voigt,
                    r: 1.0,
                    phase: uniform,
                    omega: 1.5,
                    beta: 1.0 / 150.0,
                    gamma: 1e-5,
                },
            ],
            pipeline: PipelineConfig::default(),
            workers: None,
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.repetitions < 1 {
            return bad("repetitions must be at least 1".into());
        }
        if self.noise_variances.is_empty() {
            return bad("noise_variances must not be empty".into());
        }
        if let Some(v) = self.noise_variances.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::NegativeVariance(*v));
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        self.grid.build()?;
        let mut rng = NoiseRng::new(0);
        for c in &self.components {
            c.realize(&mut rng)?;
        }
        self.pipeline.validate()
    }

    /// Seed of repetition `rep` at noise level index `level`.
    pub fn run_seed(&self, level: usize, rep: usize) -> u64 {
        derive_seed(self.seed, &[level as u64, rep as u64])
    }

    /// The true components and the observation of one repetition.
    pub fn realize(&self, level: usize, rep: usize) -> Result<(Vec<ComponentParams>, SignalRecord)> {
        let grid = self.grid.build()?;
        let mut rng = NoiseRng::new(self.run_seed(level, rep));
        let truths = self
            .components
            .iter()
            .map(|c| c.realize(&mut rng))
            .collect::<Result<Vec<_>>>()?;
        let sigma2 = self.noise_variances[level];
        let signal = synthesize_with(&truths, &grid, sigma2, &mut rng)?;
        Ok((truths, signal))
    }
}

/// Estimate paired with one true component.
#[derive(Debug, Clone, PartialEq)]
pub struct Matched {
    pub estimate: ClassifiedComponent,
    pub correct_class: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub level: usize,
    pub rep: usize,
    pub seed: u64,
    pub noise_variance: f64,
    pub truths: Vec<ComponentParams>,
    /// The pipeline report, or the error that stopped it.
    pub report: std::result::Result<PipelineReport, String>,
    /// One entry per true component.
    pub matched: Vec<Option<Matched>>,
    pub k_hat: usize,
}

impl RunOutcome {
    pub fn failed(&self) -> bool {
        self.report.is_err()
    }

    /// All components found, none extra, each in its true class.
    pub fn fully_correct(&self) -> bool {
        !self.failed()
            && self.k_hat == self.truths.len()
            && self.matched.iter().all(|m| m.as_ref().is_some_and(|m| m.correct_class))
    }

    /// Step-1 (cisoid fit) frequency error of true component `i`.
    pub fn step1_omega_error(&self, i: usize) -> Option<f64> {
        let m = self.matched[i].as_ref()?;
        Some(m.estimate.stage_estimate(ModelClass::Cisoid)?.omega - self.truths[i].omega)
    }

    /// Step-3 (Lorentzian fit) decay error of true component `i`.
    pub fn step3_beta_error(&self, i: usize) -> Option<f64> {
        let m = self.matched[i].as_ref()?;
        Some(m.estimate.stage_estimate(ModelClass::Lorentzian)?.beta - self.truths[i].beta)
    }
}

/// Pair each true component with a distinct estimate, closest frequencies
/// first. Estimates farther than `max_distance` stay unmatched.
pub fn match_components(truths: &[ComponentParams], estimates: &[ClassifiedComponent], max_distance: f64) -> Vec<Option<Matched>> {
    let mut pairs: Vec<(f64, usize, usize)> = truths
        .iter()
        .enumerate()
        .flat_map(|(i, t)| {
            estimates
                .iter()
                .enumerate()
                .map(move |(j, e)| ((e.params.omega - t.omega).abs(), i, j))
        })
        .filter(|(d, _, _)| *d <= max_distance)
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<Option<Matched>> = vec![None; truths.len()];
    let mut used = vec![false; estimates.len()];
    for (_, i, j) in pairs {
        if out[i].is_none() && !used[j] {
            used[j] = true;
            out[i] = Some(Matched {
                estimate: estimates[j].clone(),
                correct_class: estimates[j].final_class == truths[i].class,
            });
        }
    }
    out
}

/// Run one repetition.
pub fn run_once(cfg: &ExperimentConfig, level: usize, rep: usize) -> Result<RunOutcome> {
    let (truths, signal) = cfg.realize(level, rep)?;
    let n = signal.len() as f64;
    let bin = std::f64::consts::TAU / (n * signal.grid().mean_spacing());
    let report = run_pipeline(&signal, &cfg.pipeline).map_err(|e| e.to_string());
    let (matched, k_hat) = match &report {
        Ok(r) => (match_components(&truths, &r.components, 2.0 * bin), r.components.len()),
        Err(_) => (vec![None; truths.len()], 0),
    };
    Ok(RunOutcome {
        level,
        rep,
        seed: cfg.run_seed(level, rep),
        noise_variance: cfg.noise_variances[level],
        truths,
        report,
        matched,
        k_hat,
    })
}

/// All repetitions at all noise levels, ordered by (level, repetition).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunOutcome>> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.noise_variances.len())
        .flat_map(|l| (0..cfg.repetitions).map(move |r| (l, r)))
        .collect();
    let work = || jobs.par_iter().map(|&(l, r)| run_once(cfg, l, r)).collect::<Result<Vec<_>>>();
    match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("cannot start {w} workers: {e}")))?
            .install(work),
        None => work(),
    }
}

/// Per-component statistics at one noise level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentSummary {
    pub component: usize,
    pub class: ModelClass,
    pub omega: f64,
    /// Fraction of runs in which this component was found in its true class.
    pub classification_rate: f64,
    /// Runs entering the RMSE columns (fully correct runs).
    pub n_correct: usize,
    pub rmse_omega: Option<f64>,
    pub rmse_beta: Option<f64>,
    pub rmse_gamma: Option<f64>,
    pub crlb_omega: Option<f64>,
    pub crlb_beta: Option<f64>,
    pub crlb_gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSummary {
    pub noise_variance: f64,
    pub runs: usize,
    pub failed_runs: usize,
    pub fully_correct_rate: f64,
    pub components: Vec<ComponentSummary>,
}

fn rmse(errors: &[f64]) -> Option<f64> {
    (!errors.is_empty()).then(|| (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt())
}

/// Root of the run-averaged CRLB of each parameter, at the true parameters
/// and the phases each run used.
fn average_crlb(runs: &[&RunOutcome]) -> Vec<[Option<f64>; 3]> {
    let k = runs.first().map_or(0, |r| r.truths.len());
    let mut sums = vec![[0.0f64; 3]; k];
    let mut counts = vec![[0usize; 3]; k];
    for run in runs {
        if run.noise_variance <= 0.0 {
            continue;
        }
        let Some(grid) = run.report.as_ref().ok().map(|r| r.residual.grid().clone()) else {
            continue;
        };
        let Ok(fisher) = fisher_information(&run.truths, &grid, run.noise_variance) else {
            continue;
        };
        let Ok(bounds) = crlb_diag(&fisher, &ParamMask::for_components(&run.truths)) else {
            continue;
        };
        for (c, (s, n)) in sums.iter_mut().zip(counts.iter_mut()).enumerate() {
            for (slot, p) in [Param::Omega, Param::Beta, Param::Gamma].into_iter().enumerate() {
                if let Some(v) = bounds.variance(c, p) {
                    s[slot] += v;
                    n[slot] += 1;
                }
            }
        }
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, n)| std::array::from_fn(|i| (n[i] > 0).then(|| (s[i] / n[i] as f64).sqrt())))
        .collect()
}

pub fn summarize(cfg: &ExperimentConfig, outcomes: &[RunOutcome]) -> Vec<LevelSummary> {
    (0..cfg.noise_variances.len())
        .map(|level| {
            let runs: Vec<&RunOutcome> = outcomes.iter().filter(|o| o.level == level).collect();
            let total = runs.len();
            let failed_runs = runs.iter().filter(|r| r.failed()).count();
            let correct: Vec<&RunOutcome> = runs.iter().copied().filter(|r| r.fully_correct()).collect();
            let crlb = average_crlb(&correct);
            let components = cfg
                .components
                .iter()
                .enumerate()
                .map(|(i, spec)| {
                    let hits = runs
                        .iter()
                        .filter(|r| r.matched[i].as_ref().is_some_and(|m| m.correct_class))
                        .count();
                    let err = |f: fn(&ComponentParams) -> f64| -> Vec<f64> {
                        correct
                            .iter()
                            .filter_map(|r| r.matched[i].as_ref().map(|m| f(&m.estimate.params) - f(&r.truths[i])))
                            .collect()
                    };
                    let bounds = crlb.get(i).copied().unwrap_or([None; 3]);
                    ComponentSummary {
                        component: i,
                        class: spec.class,
                        omega: spec.omega,
                        classification_rate: if total > 0 { hits as f64 / total as f64 } else { 0.0 },
                        n_correct: correct.len(),
                        rmse_omega: rmse(&err(|c| c.omega)),
                        rmse_beta: spec.class.has_beta().then(|| rmse(&err(|c| c.beta))).flatten(),
                        rmse_gamma: spec.class.has_gamma().then(|| rmse(&err(|c| c.gamma))).flatten(),
                        crlb_omega: bounds[0],
                        crlb_beta: bounds[1],
                        crlb_gamma: bounds[2],
                    }
                })
                .collect();
            LevelSummary {
                noise_variance: cfg.noise_variances[level],
                runs: total,
                failed_runs,
                fully_correct_rate: if total > 0 { correct.len() as f64 / total as f64 } else { 0.0 },
                components,
            }
        })
        .collect()
}

/// Sorted values paired with their empirical CDF `i/n`, i = 1..n.
pub fn ecdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter().enumerate().map(|(i, x)| (x, (i + 1) as f64 / n)).collect()
}

/// Sample median; `None` for an empty slice.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.to_vec();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            repetitions: 4,
            noise_variances: vec![1e-4, 1e-2],
            ..ExperimentConfig::reference()
        }
    }

    #[test]
    fn seeds_independent_of_workers() {
        let one = ExperimentConfig {
            workers: Some(1),
            ..small()
        };
        let three = ExperimentConfig {
            workers: Some(3),
            ..small()
        };
        let a = run_experiment(&one).unwrap();
        let b = run_experiment(&three).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        assert!(a.windows(2).all(|w| (w[0].level, w[0].rep) < (w[1].level, w[1].rep)));
    }

    #[test]
    fn realizations_reproducible_and_distinct() {
        let cfg = small();
        let (t1, s1) = cfg.realize(0, 1).unwrap();
        let (t2, s2) = cfg.realize(0, 1).unwrap();
        assert_eq!((t1.clone(), s1.clone()), (t2, s2));
        let (t3, _) = cfg.realize(0, 2).unwrap();
        assert_ne!(t1[0].phi, t3[0].phi);
        assert_eq!(s1.len(), 200);
    }

    #[test]
    fn matching_is_one_to_one() {
        let truths = [
            ComponentParams::cisoid(1.0, 0.0, 0.5).unwrap(),
            ComponentParams::cisoid(1.0, 0.0, 0.52).unwrap(),
        ];
        let est = |w: f64| ClassifiedComponent {
            params: ComponentParams::cisoid(1.0, 0.0, w).unwrap(),
            verdict_history: Vec::new(),
            final_class: ModelClass::Cisoid,
            stage_estimates: Vec::new(),
        };
        let m = match_components(&truths, &[est(0.505)], 0.1);
        assert!(m[0].is_some() && m[1].is_none());
        let m = match_components(&truths, &[est(0.519), est(0.505)], 0.1);
        assert_eq!(m[0].as_ref().unwrap().estimate.params.omega, 0.505);
        assert_eq!(m[1].as_ref().unwrap().estimate.params.omega, 0.519);
        let m = match_components(&truths, &[est(0.9)], 0.1);
        assert!(m.iter().all(Option::is_none));
    }

    #[test]
    fn config_validation() {
        let mut cfg = small();
        cfg.repetitions = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = small();
        cfg.noise_variances = vec![-1.0];
        assert!(cfg.validate().is_err());
        let mut cfg = small();
        cfg.components[0].beta = 0.1;
        assert!(cfg.validate().is_err());
        assert!(small().validate().is_ok());
    }

    #[test]
    fn summary_counts() {
        let cfg = small();
        let out = run_experiment(&cfg).unwrap();
        let s = summarize(&cfg, &out);
        assert_eq!(s.len(), 2);
        assert!(s.iter().all(|l| l.runs == 4 && l.failed_runs == 0));
        let low = &s[0];
        assert!(low.fully_correct_rate >= 0.75, "{low:?}");
        assert!(low.components[0].rmse_beta.is_none());
        assert!(low.components[2].crlb_gamma.is_some());
    }

    #[test]
    fn ecdf_and_median() {
        let e = ecdf(&[3.0, 1.0, 2.0, f64::NAN]);
        assert_eq!(e, vec![(1.0, 1.0 / 3.0), (2.0, 2.0 / 3.0), (3.0, 1.0)]);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
