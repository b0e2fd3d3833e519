//! Shared output plumbing: CSV field formatting, the determinism header
//! comment, and file-or-stdout writing.

use anyhow::{Context, Result};
use std::io::Write;
use std::path::Path;

/// Comment line stamped at the top of CSV outputs. Reruns with the same seed
/// and build are byte-identical; ln/exp go through the platform libm, so the
/// guarantee does not extend across platforms.
pub const DETERMINISM_HEADER: &str =
    "# determinism: byte-identical for a fixed seed and build; transcendental \
functions use the platform libm, so cross-platform byte equality is not guaranteed";

/// Shortest round-trip float formatting; IEEE infinities as inf/-inf.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

pub fn write_text(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)
                        .with_context(|| format!("creating {}", parent.display()))?;
                }
            }
            std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))
        }
        None => std::io::stdout()
            .write_all(content.as_bytes())
            .context("writing to stdout"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_round_trips_and_marks_infinities() {
        assert_eq!(fmt_f64(0.1), "0.1");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
        let x = std::f64::consts::LN_2;
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }
}
