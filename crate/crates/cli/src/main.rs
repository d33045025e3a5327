//! `dampfit`: simulate, estimate and sweep polynomially damped sinusoids.

mod error;
mod report;
mod signal_io;
mod svg;
mod tables;

use clap::{Args, Parser, Subcommand};
use dampfit::crlb::{crlb_diag, fisher_information, Param, ParamMask};
use dampfit::estimation::golden_section;
use dampfit::experiment::{run_experiment, summarize, ExperimentConfig};
use dampfit::pipeline::{run_pipeline, PipelineConfig};
use dampfit::pseudo_true::{
    concentrated_objective, default_tolerance, expected_fit_cost, pseudo_true_cisoid, pseudo_true_lorentzian,
};
use dampfit::{ComponentParams, ModelClass, TimeGrid};
use error::{CliError, CliResult};
use signal_io::SignalMeta;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Repetitions of the full-length sweep.
const FULL_REPETITIONS: usize = 500;

#[derive(Debug, Parser)]
#[command(name = "dampfit", version, about = "Estimate and classify damped complex sinusoids")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Experiment configuration (TOML). Defaults to the built-in three-component setup.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (simulate, pseudotrue, crlb) or directory (estimate, montecarlo).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for Monte Carlo repetitions.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Level of the per-component whiteness test.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Half-width of the test neighborhoods, in frequency bins.
    #[arg(long, global = true)]
    neighborhood_width: Option<usize>,
    /// Run the 500-repetition sweep instead of the configured count.
    #[arg(long, global = true)]
    full: bool,
    /// Also write SVG plots next to the CSV tables.
    #[arg(long, global = true)]
    svg: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw one noisy observation of the configured components.
    Simulate {
        /// Noise variance, overriding the first configured level.
        #[arg(long)]
        noise_variance: Option<f64>,
    },
    /// Run the sequential estimator on a signal file.
    Estimate {
        /// Signal CSV with columns index,t,re,im.
        signal: PathBuf,
    },
    /// Monte Carlo sweep over the configured noise variances.
    Montecarlo,
    /// Limit points of mismatched single-component fits.
    Pseudotrue(PseudoArgs),
    /// Root Cramér–Rao bounds of the configured components.
    Crlb,
}

#[derive(Debug, Args)]
struct PseudoArgs {
    #[arg(long, default_value = "voigt")]
    class: ModelClass,
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    #[arg(long, default_value_t = 0.0)]
    phi: f64,
    #[arg(long, default_value_t = 1.5)]
    omega: f64,
    #[arg(long, default_value_t = 1.0 / 150.0)]
    beta: f64,
    #[arg(long, default_value_t = 1e-5)]
    gamma: f64,
    /// Number of unit-spaced samples starting at t = 0.
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Cross-check against direct numerical minimization.
    #[arg(long)]
    check: bool,
}

fn load_config(g: &Global) -> CliResult<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
            toml::from_str::<ExperimentConfig>(&text).map_err(|e| CliError::input(path, e))?
        }
        None => ExperimentConfig::reference(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(w) = g.workers {
        cfg.workers = Some(w);
    }
    if let Some(a) = g.alpha {
        cfg.pipeline.alpha = a;
    }
    if let Some(w) = g.neighborhood_width {
        cfg.pipeline.fit.neighborhood_width = w;
    }
    if g.full {
        cfg.repetitions = FULL_REPETITIONS;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::output(path, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::output("<stdout>", e)),
    }
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))
}

fn cmd_simulate(g: &Global, noise_variance: Option<f64>) -> CliResult<()> {
    let mut cfg = load_config(g)?;
    if let Some(v) = noise_variance {
        cfg.noise_variances = vec![v];
        cfg.validate()?;
    }
    let (_, signal) = cfg.realize(0, 0)?;
    let meta = SignalMeta {
        seed: Some(cfg.seed),
        noise_variance: Some(cfg.noise_variances[0]),
    };
    emit(g.out.as_deref(), &signal_io::format_signal(&signal, &meta))
}

fn cmd_estimate(g: &Global, path: &Path) -> CliResult<()> {
    let cfg = load_config(g)?;
    let (signal, meta) = signal_io::read_signal(path)?;
    let pipeline: PipelineConfig = cfg.pipeline;
    let report = run_pipeline(&signal, &pipeline)?;

    let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("."));
    ensure_dir(&dir)?;
    let residual_name = "residual.csv";
    signal_io::write_signal(&dir.join(residual_name), &report.residual, &meta)?;
    let file = report::ReportFile::new(&report, residual_name);
    let text = toml::to_string(&file).map_err(|e| CliError::Validation(format!("cannot encode report: {e}")))?;
    let report_path = dir.join("report.toml");
    std::fs::write(&report_path, text).map_err(|e| CliError::output(&report_path, e))?;

    println!("components: {}", report.components.len());
    for c in &report.components {
        let p = &c.params;
        println!(
            "  {:<10} r={:.6} phi={:.6} omega={:.6} beta={:.6e} gamma={:.6e}",
            c.final_class, p.r, p.phi, p.omega, p.beta, p.gamma
        );
    }
    println!("noise variance estimate: {:.6e}", report.noise_variance_estimate);
    println!("report: {}", report_path.display());
    Ok(())
}

fn cmd_montecarlo(g: &Global) -> CliResult<()> {
    let cfg = load_config(g)?;
    let dir = g
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("montecarlo"));
    ensure_dir(&dir)?;

    let outcomes = run_experiment(&cfg)?;
    let summary = summarize(&cfg, &outcomes);
    let step1 = tables::error_ecdfs(&cfg, &outcomes, |o, i| o.step1_omega_error(i));
    let step3 = tables::error_ecdfs(&cfg, &outcomes, |o, i| o.step3_beta_error(i));

    let effective = toml::to_string(&cfg).map_err(|e| CliError::Validation(format!("cannot encode config: {e}")))?;
    let cfg_path = dir.join("config.toml");
    std::fs::write(&cfg_path, effective).map_err(|e| CliError::output(&cfg_path, e))?;
    tables::write_summary(&dir.join("summary.csv"), &cfg, &summary)?;
    tables::write_runs(&dir.join("runs.csv"), &cfg, &outcomes)?;
    tables::write_ecdf(&dir.join("step1_omega_ecdf.csv"), &cfg, &step1)?;
    tables::write_ecdf(&dir.join("step3_beta_ecdf.csv"), &cfg, &step3)?;
    if g.svg {
        tables::write_plots(&dir, &cfg, &summary, &step1, &step3)?;
    }

    for l in &summary {
        print!("sigma2={:e} correct={:.3} failed={}", l.noise_variance, l.fully_correct_rate, l.failed_runs);
        for c in &l.components {
            print!(" {}={:.3}", c.class, c.classification_rate);
        }
        println!();
    }
    println!("tables: {}", dir.display());
    Ok(())
}

fn cmd_pseudotrue(g: &Global, a: &PseudoArgs) -> CliResult<()> {
    let psi = ComponentParams::new(a.class, a.r, a.phi, a.omega, a.beta, a.gamma)?;
    let grid = TimeGrid::unit(a.n)?;
    let mut out = String::from("template,r0,phi0,omega0,beta0,bracket_lo,bracket_hi,beta0_minus_beta");
    if a.check {
        out.push_str(",check_r0,check_beta0");
    }
    out.push('\n');

    let cis = pseudo_true_cisoid(&psi, &grid);
    let _ = write!(out, "cisoid,{:?},{:?},{:?},,,,", cis.r0, cis.phi0, cis.omega0);
    if a.check {
        // Direct minimization of the mismatch over the amplitude.
        let cost = |r: f64| expected_fit_cost(&ComponentParams { r, ..cis.as_component() }, &psi, &grid);
        let (r, _) = golden_section(cost, 0.0, 2.0 * psi.r.max(1e-300), 1e-13 * psi.r.max(1.0), 400);
        let _ = write!(out, ",{r:?},");
    }
    out.push('\n');

    let span = grid.last_two_sum();
    let width = psi.gamma * span;
    let lor = pseudo_true_lorentzian(&psi, &grid, default_tolerance(width))?;
    let beta0 = lor.beta0.unwrap_or(psi.beta);
    let (lo, hi) = lor.bracket.unwrap_or((psi.beta, psi.beta));
    let _ = write!(
        out,
        "lorentzian,{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
        lor.r0,
        lor.phi0,
        lor.omega0,
        beta0,
        lo,
        hi,
        beta0 - psi.beta
    );
    if a.check {
        let (b, _) = if hi > lo {
            golden_section(|b| -concentrated_objective(b, &psi, &grid), lo, hi, 1e-15 * (1.0 + hi), 400)
        } else {
            (lo, 0.0)
        };
        let cost = |r: f64| expected_fit_cost(&ComponentParams { r, ..lor.as_component() }, &psi, &grid);
        let (r, _) = golden_section(cost, 0.0, 2.0 * psi.r.max(1e-300), 1e-13 * psi.r.max(1.0), 400);
        let _ = write!(out, ",{r:?},{b:?}");
    }
    out.push('\n');
    emit(g.out.as_deref(), &out)
}

fn cmd_crlb(g: &Global) -> CliResult<()> {
    let cfg = load_config(g)?;
    let mut out = String::from("seed,noise_variance,component,class,parameter,root_crlb\n");
    for (level, &sigma2) in cfg.noise_variances.iter().enumerate() {
        if sigma2 <= 0.0 {
            return Err(CliError::Validation("the bound needs a positive noise variance".into()));
        }
        let (truths, signal) = cfg.realize(level, 0)?;
        let fisher = fisher_information(&truths, signal.grid(), sigma2)?;
        let bounds = crlb_diag(&fisher, &ParamMask::for_components(&truths))?;
        for (i, t) in truths.iter().enumerate() {
            for (name, p) in [
                ("r", Param::R),
                ("phi", Param::Phi),
                ("omega", Param::Omega),
                ("beta", Param::Beta),
                ("gamma", Param::Gamma),
            ] {
                if let Some(v) = bounds.root(i, p) {
                    let _ = writeln!(out, "{},{sigma2:?},{i},{},{name},{v:?}", cfg.seed, t.class);
                }
            }
        }
    }
    emit(g.out.as_deref(), &out)
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate { noise_variance } => cmd_simulate(&cli.global, *noise_variance),
        Command::Estimate { signal } => cmd_estimate(&cli.global, signal),
        Command::Montecarlo => cmd_montecarlo(&cli.global),
        Command::Pseudotrue(a) => cmd_pseudotrue(&cli.global, a),
        Command::Crlb => cmd_crlb(&cli.global),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
