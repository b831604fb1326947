//! Per-step training metrics as CSV.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "step,l_real,l_fake,l_d,l_g,k,m";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub l_real: f64,
    pub l_fake: f64,
    pub l_d: f64,
    pub l_g: f64,
    /// Equilibrium weight used for this step's discriminator loss.
    pub k: f64,
    pub m: f64,
}

impl MetricsRow {
    /// Scientific notation with 17 significant digits (exact `f64` round trip).
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.step, self.l_real, self.l_fake, self.l_d, self.l_g, self.k, self.m
        )
    }

    pub fn parse_csv_line(line: &str) -> Result<Self> {
        let bad = || Error::Config(format!("malformed metrics row: {line}"));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        Ok(Self {
            step: f[0].parse().map_err(|_| bad())?,
            l_real: num(f[1])?,
            l_fake: num(f[2])?,
            l_d: num(f[3])?,
            l_g: num(f[4])?,
            k: num(f[5])?,
            m: num(f[6])?,
        })
    }
}

/// Appends rows and flushes after each one so aborted runs stay readable.
pub struct MetricsWriter {
    out: BufWriter<File>,
    path: std::path::PathBuf,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = Self {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
        };
        w.write_line(METRICS_HEADER)?;
        Ok(w)
    }

    fn write_line(&mut self, line: &str) -> Result<()> {
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn append(&mut self, row: &MetricsRow) -> Result<()> {
        self.write_line(&row.to_csv_line())
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::Config(format!("{}: missing metrics header", path.display())));
    }
    lines.map(MetricsRow::parse_csv_line).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_roundtrip_is_exact() {
        let row = MetricsRow {
            step: 3,
            l_real: 0.123_456_789_012_345_67,
            l_fake: 1e-9,
            l_d: -0.5,
            l_g: 1e-9,
            k: 0.0,
            m: 0.25,
        };
        let line = row.to_csv_line();
        assert_eq!(MetricsRow::parse_csv_line(&line).unwrap(), row);
        // At least 12 significant digits in every value field.
        assert!(line.split(',').skip(1).all(|f| f.split('e').next().unwrap().len() >= 13));
    }
}
