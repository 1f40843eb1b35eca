//! Reading measured curves and writing tagged output files.

use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::montecarlo::SignalCurve;

/// CSV number: shortest round-trip decimal, in exponent form below 1e-5 or from 1e16.
#[derive(Debug, Clone, Copy)]
pub struct Num(pub f64);

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.0.abs();
        if a.is_finite() && a != 0.0 && !(1e-5..1e16).contains(&a) {
            write!(f, "{:e}", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Parses CSV text with columns `tau`, `signal` and optionally `stderr`.
///
/// Columns are found by name; any others are ignored, so `simulate` output
/// reads back directly. Lines starting with `#` are skipped. Delays are
/// multiplied by `time_scale`.
pub fn parse_data_csv(text: &str, time_scale: f64) -> Result<SignalCurve> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Io(e.to_string()))?.clone();
    let column = |name: &str| header.iter().position(|h| h == name);
    let (Some(tau_col), Some(signal_col)) = (column("tau"), column("signal")) else {
        let found = header.iter().collect::<Vec<_>>().join(",");
        return Err(Error::Io(format!(
            "expected columns `tau,signal[,stderr]`, found `{found}`"
        )));
    };
    let err_col = column("stderr");
    let mut curve = SignalCurve {
        n: 1,
        ..Default::default()
    };
    for record in reader.records() {
        let record = record.map_err(|e| Error::Io(e.to_string()))?;
        let lineno = record.position().map_or(0, |p| p.line());
        let num = |k: usize| {
            let s = &record[k];
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Io(format!("line {lineno}: `{s}` is not a finite number")))
        };
        curve.taus.push(num(tau_col)? * time_scale);
        curve.means.push(num(signal_col)?);
        curve.stderrs.push(match err_col {
            Some(k) => num(k)?,
            None => 0.0,
        });
    }
    if curve.taus.is_empty() {
        return Err(Error::Io("data file has no rows".into()));
    }
    Ok(curve)
}

pub fn read_data_csv(path: &Path, time_scale: f64) -> Result<SignalCurve> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_data_csv(&text, time_scale).map_err(|e| match e {
        Error::Io(msg) => Error::Io(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Prefixes `body` with a `# config_hash=<hex>` line.
pub fn with_hash_header(hash: &str, body: &str) -> String {
    format!("# config_hash={hash}\n{body}")
}
