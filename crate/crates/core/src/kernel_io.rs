//! Plain-text kernel file format used by every command-line tool.
//!
//! Layout: line 1 is the integer tap count `k`; the next `k` lines carry `k`
//! space-separated decimals each (written with 17 significant digits so a
//! read-back is bit-exact); any further lines starting with `#` are comments
//! and are ignored on read.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Kernel;

/// Renders a kernel (plus optional trailing comment lines) as text.
pub fn kernel_to_text(kern: &Kernel, comments: &[String]) -> String {
    let k = kern.size();
    let mut out = String::new();
    let _ = writeln!(out, "{k}");
    for u in 0..k {
        let row: Vec<String> = (0..k).map(|v| format!("{:.16e}", kern.get(u, v))).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    out
}

/// Parses the text form; trailing `#` comment lines are skipped.
pub fn kernel_from_text(text: &str) -> Result<Kernel> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty kernel file".into()))?;
    let k: usize = header
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad size line {header:?}")))?;
    let mut taps = Vec::with_capacity(k * k);
    for _ in 0..k {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("expected {k} tap rows")))?;
        if line.trim_start().starts_with('#') {
            return Err(Error::Parse("comment line inside tap rows".into()));
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad tap {tok:?}")))
            })
            .collect::<Result<_>>()?;
        if row.len() != k {
            return Err(Error::Parse(format!(
                "row has {} taps, expected {k}",
                row.len()
            )));
        }
        taps.extend(row);
    }
    for extra in lines {
        if !extra.trim_start().starts_with('#') {
            return Err(Error::Parse(format!("unexpected trailing line {extra:?}")));
        }
    }
    Kernel::from_vec(k, taps)
}

/// Writes the text form to a file.
pub fn write_kernel(path: &Path, kern: &Kernel, comments: &[String]) -> Result<()> {
    std::fs::write(path, kernel_to_text(kern, comments))?;
    Ok(())
}

/// Reads a kernel file.
pub fn read_kernel(path: &Path) -> Result<Kernel> {
    let text = std::fs::read_to_string(path)?;
    kernel_from_text(&text)
}
