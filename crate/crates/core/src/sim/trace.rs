//! Sampled simulation output: one shared time grid and named scalar channels.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    columns: Vec<String>,
    lookup: HashMap<String, usize>,
    times: Vec<f64>,
    /// Row-major samples, `columns.len()` values per time.
    data: Vec<f64>,
}

impl Trace {
    pub fn new(columns: Vec<String>) -> Self {
        let lookup = columns
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        Self {
            columns,
            lookup,
            times: Vec::new(),
            data: Vec::new(),
        }
    }

    /// Appends a sample. Every value must be finite.
    pub fn push(&mut self, t: f64, row: &[f64]) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::DimensionMismatch(format!(
                "trace row has {} values for {} channels",
                row.len(),
                self.columns.len()
            )));
        }
        if let Some(i) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("channel `{}`", self.columns[i]),
                t,
            });
        }
        self.times.push(t);
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn has_channel(&self, name: &str) -> bool {
        self.lookup.contains_key(name)
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.lookup
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownChannel(name.to_string()))
    }

    pub fn channel(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.index(name)?;
        let w = self.columns.len();
        Ok((0..self.len()).map(|k| self.data[k * w + c]).collect())
    }

    pub fn value(&self, name: &str, sample: usize) -> Result<f64> {
        let c = self.index(name)?;
        if sample >= self.len() {
            return Err(Error::EmptyTrace);
        }
        Ok(self.data[sample * self.columns.len() + c])
    }

    pub fn last(&self, name: &str) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::EmptyTrace);
        }
        self.value(name, self.len() - 1)
    }

    pub fn row(&self, sample: usize) -> &[f64] {
        let w = self.columns.len();
        &self.data[sample * w..(sample + 1) * w]
    }

    /// CSV with a `t` column followed by every channel. Floats use the
    /// shortest representation that round-trips, so output is reproducible.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for k in 0..self.len() {
            let _ = write!(out, "{}", self.times[k]);
            for v in self.row(k) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}
