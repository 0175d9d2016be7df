//! CSV tables and the JSON sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::error::CliError;

/// A float at 12 significant digits, shortest form, `inf`/`-inf`/`nan`
/// for non-finite values.
pub fn fmt_real(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    // rounding first fixes the exponent, then pick fixed or scientific
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent in {:e} output");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// One output file: `<name><suffix>.csv`.
#[derive(Debug, Clone)]
pub struct Table {
    pub suffix: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(suffix: &'static str, header: &[&'static str]) -> Self {
        Self { suffix, header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path, name: &str) -> Result<PathBuf, CliError> {
        let path = dir.join(format!("{name}{}.csv", self.suffix));
        let io = |e: csv::Error| CliError::Io(format!("writing {}: {e}", path.display()));
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Cell helpers.
pub fn r(x: f64) -> String {
    fmt_real(x)
}

pub fn opt(x: Option<f64>) -> String {
    x.map(fmt_real).unwrap_or_default()
}

pub fn int(x: impl ToString) -> String {
    x.to_string()
}

pub fn write_sidecar(dir: &Path, name: &str, record: &Value) -> Result<PathBuf, CliError> {
    let path = dir.join(format!("{name}.meta.json"));
    let text = serde_json::to_string_pretty(record).expect("sidecar serializes");
    fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_real(-0.5140429942789757), "-0.514042994279");
        assert_eq!(fmt_real(1.0), "1");
        assert_eq!(fmt_real(123456.0), "123456");
        assert_eq!(fmt_real(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_real(2.5e-7), "2.5e-7");
        assert_eq!(fmt_real(6.02214076e23), "6.02214076e23");
        assert_eq!(fmt_real(999999999999.9), "1e12");
        assert_eq!(fmt_real(0.000123456789012345), "0.000123456789012");
        assert_eq!(fmt_real(f64::NEG_INFINITY), "-inf");
        assert_eq!(fmt_real(f64::INFINITY), "inf");
        assert_eq!(fmt_real(-0.0), "0");
    }
}
