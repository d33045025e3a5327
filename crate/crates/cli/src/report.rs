//! Estimation reports in TOML.

use dampfit::pipeline::{ClassifiedComponent, PipelineReport};
use dampfit::spectrum_test::WhitenessVerdict;
use dampfit::{ComponentParams, ModelClass};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub noise_variance_estimate: f64,
    pub steps_executed: u8,
    pub residual_file: String,
    #[serde(default)]
    pub components: Vec<ComponentEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentEntry {
    pub class: ModelClass,
    pub r: f64,
    pub phi: f64,
    pub omega: f64,
    pub beta: f64,
    pub gamma: f64,
    #[serde(default)]
    pub verdicts: Vec<WhitenessVerdict>,
    #[serde(default)]
    pub stage_estimates: Vec<ComponentParams>,
}

impl From<&ClassifiedComponent> for ComponentEntry {
    fn from(c: &ClassifiedComponent) -> Self {
        Self {
            class: c.final_class,
            r: c.params.r,
            phi: c.params.phi,
            omega: c.params.omega,
            beta: c.params.beta,
            gamma: c.params.gamma,
            verdicts: c.verdict_history.clone(),
            stage_estimates: c.stage_estimates.clone(),
        }
    }
}

impl ReportFile {
    pub fn new(report: &PipelineReport, residual_file: &str) -> Self {
        Self {
            noise_variance_estimate: report.noise_variance_estimate,
            steps_executed: report.steps_executed,
            residual_file: residual_file.to_string(),
            components: report.components.iter().map(ComponentEntry::from).collect(),
        }
    }
}
