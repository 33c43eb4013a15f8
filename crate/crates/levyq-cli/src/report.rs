//! Run reports and CSV output.
//!
//! Every numeric table is written with a fixed column order and floats at 17
//! significant digits, so outputs are stable, diffable golden files.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

/// 17 significant digits: round-trips every f64 exactly.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Metadata printed after every command.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub command: String,
    pub config_digest: String,
    pub version: String,
    pub outputs: Vec<PathBuf>,
    pub elapsed_ms: u128,
}

impl RunReport {
    pub fn start(command: &str, config_text: &str) -> (RunReport, Instant) {
        let digest = hex::encode(Sha256::digest(config_text.as_bytes()));
        (
            RunReport {
                command: command.to_string(),
                config_digest: digest[..16].to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                outputs: Vec::new(),
                elapsed_ms: 0,
            },
            Instant::now(),
        )
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "command: {}", self.command)?;
        writeln!(f, "config digest: {}", self.config_digest)?;
        writeln!(f, "tool version: {}", self.version)?;
        for path in &self.outputs {
            writeln!(f, "wrote: {}", path.display())?;
        }
        write!(f, "elapsed: {} ms", self.elapsed_ms)
    }
}

/// Write one CSV table; returns the path.
pub fn write_csv(
    dir: &Path,
    name: &str,
    header: &str,
    rows: &[Vec<String>],
) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut file = fs::File::create(&path)?;
    writeln!(file, "{header}")?;
    for row in rows {
        writeln!(file, "{}", row.join(","))?;
    }
    Ok(path)
}

/// Render rows as an aligned text table for stdout.
pub fn text_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            if i < widths.len() {
                widths[i] = widths[i].max(cell.len());
            }
        }
    }
    let mut out = String::new();
    let fmt_row = |cells: &[String], widths: &[usize]| -> String {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{:>width$}", c, width = widths.get(i).copied().unwrap_or(0)))
            .collect::<Vec<_>>()
            .join("  ")
    };
    let head: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    out.push_str(&fmt_row(&head, &widths));
    out.push('\n');
    for row in rows {
        out.push_str(&fmt_row(row, &widths));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for &v in &[0.5, 1.0 / 3.0, 1e-17, 123456.789, f64::MIN_POSITIVE] {
            let s = fmt_float(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(v, back, "{s}");
        }
    }
}
