//! CSV tables and plots for Monte Carlo sweeps. Every row carries the
//! master seed and the noise variance that produced it.

use crate::error::{CliError, CliResult};
use crate::svg::{Plot, Series};
use dampfit::experiment::{ecdf, ExperimentConfig, LevelSummary, RunOutcome};
use std::path::Path;

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::output(path, e.into()))?;
    let io = |e: csv::Error| CliError::output(path, e.into());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::output(path, e))
}

pub fn write_summary(path: &Path, cfg: &ExperimentConfig, summary: &[LevelSummary]) -> CliResult<()> {
    let header = [
        "seed",
        "noise_variance",
        "component",
        "class",
        "omega",
        "runs",
        "failed_runs",
        "classification_rate",
        "fully_correct_rate",
        "n_correct",
        "rmse_omega",
        "root_crlb_omega",
        "rmse_beta",
        "root_crlb_beta",
        "rmse_gamma",
        "root_crlb_gamma",
    ];
    let rows = summary
        .iter()
        .flat_map(|l| {
            l.components.iter().map(move |c| {
                vec![
                    cfg.seed.to_string(),
                    num(l.noise_variance),
                    c.component.to_string(),
                    c.class.to_string(),
                    num(c.omega),
                    l.runs.to_string(),
                    l.failed_runs.to_string(),
                    num(c.classification_rate),
                    num(l.fully_correct_rate),
                    c.n_correct.to_string(),
                    opt(c.rmse_omega),
                    opt(c.crlb_omega),
                    opt(c.rmse_beta),
                    opt(c.crlb_beta),
                    opt(c.rmse_gamma),
                    opt(c.crlb_gamma),
                ]
            })
        })
        .collect();
    write_csv(path, &header, rows)
}

pub fn write_runs(path: &Path, cfg: &ExperimentConfig, outcomes: &[RunOutcome]) -> CliResult<()> {
    let header = [
        "seed",
        "noise_variance",
        "rep",
        "run_seed",
        "status",
        "k_hat",
        "fully_correct",
        "component",
        "true_class",
        "matched",
        "est_class",
        "omega_hat",
        "beta_hat",
        "gamma_hat",
        "step1_omega_error",
        "step3_beta_error",
    ];
    let mut rows = Vec::new();
    for o in outcomes {
        let status = match &o.report {
            Ok(_) => "ok".to_string(),
            Err(e) => format!("failed: {e}"),
        };
        for (i, t) in o.truths.iter().enumerate() {
            let m = o.matched[i].as_ref();
            rows.push(vec![
                cfg.seed.to_string(),
                num(o.noise_variance),
                o.rep.to_string(),
                o.seed.to_string(),
                status.clone(),
                o.k_hat.to_string(),
                o.fully_correct().to_string(),
                i.to_string(),
                t.class.to_string(),
                m.is_some().to_string(),
                m.map(|m| m.estimate.final_class.to_string()).unwrap_or_default(),
                opt(m.map(|m| m.estimate.params.omega)),
                opt(m.map(|m| m.estimate.params.beta)),
                opt(m.map(|m| m.estimate.params.gamma)),
                opt(o.step1_omega_error(i)),
                opt(o.step3_beta_error(i)),
            ]);
        }
    }
    write_csv(path, &header, rows)
}

/// Per-level, per-component empirical CDF of a stage error.
pub fn error_ecdfs(
    cfg: &ExperimentConfig,
    outcomes: &[RunOutcome],
    error: impl Fn(&RunOutcome, usize) -> Option<f64>,
) -> Vec<(f64, usize, Vec<(f64, f64)>)> {
    let mut out = Vec::new();
    for (level, &sigma2) in cfg.noise_variances.iter().enumerate() {
        for i in 0..cfg.components.len() {
            let errs: Vec<f64> = outcomes
                .iter()
                .filter(|o| o.level == level)
                .filter_map(|o| error(o, i))
                .collect();
            if !errs.is_empty() {
                out.push((sigma2, i, ecdf(&errs)));
            }
        }
    }
    out
}

pub fn write_ecdf(path: &Path, cfg: &ExperimentConfig, curves: &[(f64, usize, Vec<(f64, f64)>)]) -> CliResult<()> {
    let header = ["seed", "noise_variance", "component", "class", "error", "ecdf"];
    let rows = curves
        .iter()
        .flat_map(|(sigma2, i, pts)| {
            pts.iter().map(move |&(e, p)| {
                vec![
                    cfg.seed.to_string(),
                    num(*sigma2),
                    i.to_string(),
                    cfg.components[*i].class.to_string(),
                    num(e),
                    num(p),
                ]
            })
        })
        .collect();
    write_csv(path, &header, rows)
}

fn save(path: &Path, plot: &Plot) -> CliResult<()> {
    std::fs::write(path, plot.render()).map_err(|e| CliError::output(path, e))
}

/// Line plots of the summary and the error distributions.
pub fn write_plots(
    dir: &Path,
    cfg: &ExperimentConfig,
    summary: &[LevelSummary],
    step1: &[(f64, usize, Vec<(f64, f64)>)],
    step3: &[(f64, usize, Vec<(f64, f64)>)],
) -> CliResult<()> {
    let label = |i: usize| format!("{} ω={}", cfg.components[i].class, cfg.components[i].omega);
    let by_level = |f: &dyn Fn(&LevelSummary, usize) -> Option<f64>, i: usize| -> Vec<(f64, f64)> {
        summary.iter().filter_map(|l| Some((l.noise_variance, f(l, i)?))).collect()
    };
    let k = cfg.components.len();

    let classification = Plot {
        title: "Correct classification".into(),
        x_label: "noise variance".into(),
        y_label: "probability".into(),
        log_x: true,
        log_y: false,
        series: (0..k)
            .map(|i| Series {
                label: label(i),
                points: by_level(&|l, i| Some(l.components[i].classification_rate), i),
                dashed: false,
                steps: false,
            })
            .collect(),
    };
    save(&dir.join("classification.svg"), &classification)?;

    type Pick = fn(&dampfit::experiment::ComponentSummary) -> (Option<f64>, Option<f64>);
    let params: [(&str, Pick); 3] = [
        ("omega", |c| (c.rmse_omega, c.crlb_omega)),
        ("beta", |c| (c.rmse_beta, c.crlb_beta)),
        ("gamma", |c| (c.rmse_gamma, c.crlb_gamma)),
    ];
    for (name, pick) in params {
        let mut series = Vec::new();
        for i in 0..k {
            let rmse = by_level(&|l, i| pick(&l.components[i]).0, i);
            let crlb = by_level(&|l, i| pick(&l.components[i]).1, i);
            if rmse.is_empty() && crlb.is_empty() {
                continue;
            }
            series.push(Series {
                label: format!("{} RMSE", label(i)),
                points: rmse,
                dashed: false,
                steps: false,
            });
            series.push(Series {
                label: format!("{} CRLB", label(i)),
                points: crlb,
                dashed: true,
                steps: false,
            });
        }
        let plot = Plot {
            title: format!("RMSE of {name}"),
            x_label: "noise variance".into(),
            y_label: format!("root-MSE of {name}"),
            log_x: true,
            log_y: true,
            series,
        };
        save(&dir.join(format!("rmse_{name}.svg")), &plot)?;
    }

    for (file, title, curves) in [
        ("step1_omega_ecdf.svg", "Step-1 frequency error", step1),
        ("step3_beta_ecdf.svg", "Step-3 decay error", step3),
    ] {
        let plot = Plot {
            title: title.into(),
            x_label: "error".into(),
            y_label: "empirical CDF".into(),
            log_x: false,
            log_y: false,
            series: curves
                .iter()
                .map(|(sigma2, i, pts)| Series {
                    label: format!("{} σ²={sigma2:e}", cfg.components[*i].class),
                    points: pts.clone(),
                    dashed: false,
                    steps: true,
                })
                .collect(),
        };
        save(&dir.join(file), &plot)?;
    }
    Ok(())
}
