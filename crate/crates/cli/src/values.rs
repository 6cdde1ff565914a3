//! Sweep-value parsing: `a:b:step` ranges, comma lists, and value files.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

/// Parse `--values`/`--values-file` into an ordered value list.
///
/// Range syntax `a:b:step` includes both endpoints when `step` divides the
/// range to round-off; otherwise the last value below `b` ends the list.
pub fn parse_values(inline: Option<&str>, file: Option<&Path>) -> Result<Vec<f64>> {
    let vals = match (inline, file) {
        (Some(_), Some(_)) => bail!("--values and --values-file are mutually exclusive"),
        (None, None) => bail!("one of --values or --values-file is required"),
        (Some(text), None) => parse_inline(text)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading values file {}", path.display()))?;
            text.split_whitespace()
                .map(parse_f64)
                .collect::<Result<Vec<_>>>()?
        }
    };
    if vals.is_empty() {
        bail!("no sweep values given");
    }
    Ok(vals)
}

fn parse_inline(text: &str) -> Result<Vec<f64>> {
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            bail!("range syntax is a:b:step, got `{text}`");
        }
        let a = parse_f64(parts[0])?;
        let b = parse_f64(parts[1])?;
        let step = parse_f64(parts[2])?;
        if !(step > 0.0) {
            bail!("range step must be positive, got {step}");
        }
        if b < a {
            bail!("range end {b} is below start {a}");
        }
        let span = b - a;
        let n = (span / step).round();
        let tol = 1e-9 * a.abs().max(b.abs()).max(1.0);
        let exact = (a + n * step - b).abs() <= tol && n >= 0.0;
        let count = if exact {
            n as usize
        } else {
            (span / step).floor() as usize
        };
        let mut vals = Vec::with_capacity(count + 1);
        for i in 0..=count {
            let v = if exact && i == count {
                b
            } else {
                a + i as f64 * step
            };
            vals.push(v);
        }
        Ok(vals)
    } else {
        text.split(',').map(parse_f64).collect()
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| anyhow!("could not parse `{s}` as a number"))
}
