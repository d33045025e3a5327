//! Signal files: `#` metadata lines, then a CSV table `index,t,re,im`.

use crate::error::{CliError, CliResult};
use dampfit::{SignalRecord, TimeGrid};
use num_complex::Complex64;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SignalMeta {
    pub seed: Option<u64>,
    pub noise_variance: Option<f64>,
}

pub fn format_signal(signal: &SignalRecord, meta: &SignalMeta) -> String {
    let mut out = String::new();
    out.push_str("# dampfit signal\n");
    let _ = writeln!(out, "# n = {}", signal.len());
    if let Some(seed) = meta.seed {
        let _ = writeln!(out, "# seed = {seed}");
    }
    if let Some(v) = meta.noise_variance.or(signal.noise_variance()) {
        let _ = writeln!(out, "# noise_variance = {v:?}");
    }
    out.push_str("index,t,re,im\n");
    for (i, (y, t)) in signal.samples().iter().zip(signal.grid().times()).enumerate() {
        let _ = writeln!(out, "{i},{t:?},{:?},{:?}", y.re, y.im);
    }
    out
}

pub fn write_signal(path: &Path, signal: &SignalRecord, meta: &SignalMeta) -> CliResult<()> {
    std::fs::write(path, format_signal(signal, meta)).map_err(|e| CliError::output(path, e))
}

pub fn parse_signal(text: &str, path: &Path) -> CliResult<(SignalRecord, SignalMeta)> {
    let mut meta = SignalMeta::default();
    for (lineno, line) in text.lines().enumerate() {
        let Some(body) = line.strip_prefix('#') else {
            continue;
        };
        let Some((key, value)) = body.split_once('=') else {
            continue;
        };
        let at = |m: String| CliError::input(path, format!("line {}: {m}", lineno + 1));
        match key.trim() {
            "seed" => meta.seed = Some(value.trim().parse().map_err(|e| at(format!("bad seed: {e}")))?),
            "noise_variance" => {
                meta.noise_variance = Some(value.trim().parse().map_err(|e| at(format!("bad noise_variance: {e}")))?)
            }
            _ => {}
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| CliError::input(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::input(path, format!("missing column `{name}`")))
    };
    let (ct, cre, cim) = (col("t")?, col("re")?, col("im")?);

    let mut times = Vec::new();
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::input(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| -> CliResult<f64> {
            record
                .get(i)
                .unwrap_or("")
                .parse::<f64>()
                .map_err(|e| CliError::input(path, format!("line {line}: bad `{name}` value: {e}")))
        };
        times.push(field(ct, "t")?);
        samples.push(Complex64::new(field(cre, "re")?, field(cim, "im")?));
    }
    let grid = TimeGrid::new(times).map_err(|e| CliError::input(path, e))?;
    let signal = SignalRecord::new(samples, grid, meta.noise_variance).map_err(|e| CliError::input(path, e))?;
    Ok((signal, meta))
}

pub fn read_signal(path: &Path) -> CliResult<(SignalRecord, SignalMeta)> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
    parse_signal(&text, path)
}
