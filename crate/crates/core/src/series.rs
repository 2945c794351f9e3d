//! Uniformly sampled state sequences and their CSV representation.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// A sequence of equal-length state vectors sampled every `dt` starting at `t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub dt: f64,
    pub t0: f64,
    pub states: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn new(dt: f64, t0: f64, states: Vec<Vec<f64>>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        if let Some(first) = states.first() {
            let dim = first.len();
            if let Some(bad) = states.iter().find(|s| s.len() != dim) {
                return Err(Error::DimensionMismatch {
                    what: "time series sample length",
                    expected: dim,
                    got: bad.len(),
                });
            }
        }
        Ok(Self { dt, t0, states })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Dimension of each sample (0 for an empty series).
    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn time(&self, index: usize) -> f64 {
        self.t0 + index as f64 * self.dt
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }

    /// Sub-series of samples `range`, with `t0` shifted accordingly.
    pub fn slice(&self, range: std::ops::Range<usize>) -> TimeSeries {
        TimeSeries {
            dt: self.dt,
            t0: self.time(range.start),
            states: self.states[range].to_vec(),
        }
    }

    /// Last `n` samples (or all of them when shorter).
    pub fn tail(&self, n: usize) -> TimeSeries {
        let start = self.len().saturating_sub(n);
        self.slice(start..self.len())
    }

    /// Column `k` of the series.
    pub fn component(&self, k: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[k]).collect()
    }

    /// Writes `t,<columns...>` with one row per sample, 17 significant digits.
    ///
    /// `extra` columns are appended after the state columns; each closure is
    /// evaluated on the sample.
    pub fn write_csv<W: Write>(
        &self,
        mut out: W,
        columns: &[String],
        extra: &[ExtraColumn<'_>],
        manifest: Option<&str>,
    ) -> Result<()> {
        if columns.len() != self.dim() && !self.is_empty() {
            return Err(Error::DimensionMismatch {
                what: "csv column names",
                expected: self.dim(),
                got: columns.len(),
            });
        }
        if let Some(m) = manifest {
            writeln!(out, "# manifest: {m}")?;
        }
        let mut header = String::from("t");
        for c in columns.iter().map(String::as_str).chain(extra.iter().map(|e| e.0)) {
            header.push(',');
            header.push_str(c);
        }
        writeln!(out, "{header}")?;
        let mut line = String::new();
        for (i, s) in self.states.iter().enumerate() {
            line.clear();
            line.push_str(&format_f64(self.time(i)));
            for v in s.iter().copied().chain(extra.iter().map(|e| (e.1)(s))) {
                line.push(',');
                line.push_str(&format_f64(v));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Reads a series written by [`TimeSeries::write_csv`]. Comment lines
    /// starting with `#` are skipped. Only the columns named in `columns`
    /// (in that order) are kept; pass `None` to keep every non-`t` column.
    pub fn read_csv<R: BufRead>(input: R, columns: Option<&[String]>) -> Result<(Self, Vec<String>)> {
        let mut header: Option<Vec<String>> = None;
        let mut picks: Vec<usize> = Vec::new();
        let mut times = Vec::new();
        let mut states = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            match &header {
                None => {
                    let names: Vec<String> = fields.iter().map(|s| s.to_string()).collect();
                    if names.first().map(String::as_str) != Some("t") {
                        return Err(Error::InvalidArgument(
                            "time series csv must start with a `t` column".into(),
                        ));
                    }
                    picks = match columns {
                        Some(cols) => cols
                            .iter()
                            .map(|c| {
                                names.iter().position(|n| n == c).ok_or_else(|| {
                                    Error::InvalidArgument(format!("missing column `{c}`"))
                                })
                            })
                            .collect::<Result<_>>()?,
                        None => (1..names.len()).collect(),
                    };
                    header = Some(names);
                }
                Some(names) => {
                    if fields.len() != names.len() {
                        return Err(Error::InvalidArgument(format!(
                            "csv line {}: expected {} fields, got {}",
                            lineno + 1,
                            names.len(),
                            fields.len()
                        )));
                    }
                    let parse = |s: &str| {
                        s.parse::<f64>().map_err(|_| {
                            Error::InvalidArgument(format!("csv line {}: bad number `{s}`", lineno + 1))
                        })
                    };
                    times.push(parse(fields[0])?);
                    states.push(picks.iter().map(|&k| parse(fields[k])).collect::<Result<Vec<_>>>()?);
                }
            }
        }
        let names = header.ok_or_else(|| Error::InvalidArgument("empty csv".into()))?;
        let kept = picks.iter().map(|&k| names[k].clone()).collect();
        let t0 = times.first().copied().unwrap_or(0.0);
        let dt = if times.len() >= 2 {
            (times[times.len() - 1] - t0) / (times.len() - 1) as f64
        } else {
            1.0
        };
        Ok((TimeSeries::new(dt, t0, states)?, kept))
    }
}

/// Derived column: name and the function of a sample that fills it.
pub type ExtraColumn<'a> = (&'a str, &'a dyn Fn(&[f64]) -> f64);

/// Column names `eta_1..eta_n, mu_1..mu_n` for a Galerkin state of `n` modes.
pub fn galerkin_columns(n_modes: usize) -> Vec<String> {
    (1..=n_modes)
        .map(|j| format!("eta_{j}"))
        .chain((1..=n_modes).map(|j| format!("mu_{j}")))
        .collect()
}

/// Formats with 17 significant digits; parses back to the identical value.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}
