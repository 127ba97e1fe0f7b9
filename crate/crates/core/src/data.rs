//! Column-oriented numeric tables.

use std::path::PathBuf;

use crate::error::{Error, Result};

/// A table of named numeric columns with original row identifiers.
///
/// Binary indicators are stored as `0.0` / `1.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    row_ids: Vec<usize>,
    pub source: Option<PathBuf>,
}

impl Dataset {
    /// Builds a dataset from `(name, values)` pairs. Row ids are `0..n`.
    pub fn new<S: Into<String>>(columns: Vec<(S, Vec<f64>)>) -> Result<Self> {
        let n = columns.first().map(|(_, v)| v.len()).unwrap_or(0);
        Self::with_row_ids(columns, (0..n).collect())
    }

    pub fn with_row_ids<S: Into<String>>(
        columns: Vec<(S, Vec<f64>)>,
        row_ids: Vec<usize>,
    ) -> Result<Self> {
        let mut names = Vec::with_capacity(columns.len());
        let mut values = Vec::with_capacity(columns.len());
        for (name, col) in columns {
            let name = name.into();
            if names.contains(&name) {
                return Err(Error::invalid(format!("duplicate column name \"{name}\"")));
            }
            if col.len() != row_ids.len() {
                return Err(Error::invalid(format!(
                    "column \"{name}\" has {} rows, expected {}",
                    col.len(),
                    row_ids.len()
                )));
            }
            names.push(name);
            values.push(col);
        }
        Ok(Dataset {
            names,
            columns: values,
            row_ids,
            source: None,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    /// Values of row `i` in column order.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// Rows selected by index, duplicates allowed. Row ids travel with the rows.
    pub fn take_rows(&self, indices: &[usize]) -> Dataset {
        Dataset {
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| indices.iter().map(|&i| c[i]).collect())
                .collect(),
            row_ids: indices.iter().map(|&i| self.row_ids[i]).collect(),
            source: self.source.clone(),
        }
    }

    /// Appends or replaces a column.
    pub fn set_column(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.n_rows() {
            return Err(Error::invalid(format!(
                "column \"{name}\" has {} rows, expected {}",
                values.len(),
                self.n_rows()
            )));
        }
        match self.names.iter().position(|n| n == name) {
            Some(i) => self.columns[i] = values,
            None => {
                self.names.push(name.to_string());
                self.columns.push(values);
            }
        }
        Ok(())
    }

    /// True when every value of the column is 0 or 1.
    pub fn is_binary(&self, name: &str) -> Result<bool> {
        Ok(self.column(name)?.iter().all(|&v| v == 0.0 || v == 1.0))
    }
}

/// Linear-interpolation sample quantile (the default "type 7" definition):
/// with sorted values `x[0..n]`, `h = (n - 1) p` and the result interpolates
/// between `x[floor(h)]` and `x[ceil(h)]`.
pub fn sample_quantile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted_quantile(&sorted, p)
}

pub(crate) fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    sample_quantile(values, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_type7_matches_hand_values() {
        let x = [3.0, 1.0, 4.0, 2.0];
        assert_eq!(sample_quantile(&x, 0.0), 1.0);
        assert_eq!(sample_quantile(&x, 1.0), 4.0);
        assert_eq!(sample_quantile(&x, 0.5), 2.5);
        // h = 3 * 1/3 = 1 -> x[1]
        assert!((sample_quantile(&x, 1.0 / 3.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn take_rows_keeps_ids() {
        let d = Dataset::new(vec![("a", vec![1.0, 2.0, 3.0])]).unwrap();
        let t = d.take_rows(&[2, 2, 0]);
        assert_eq!(t.column("a").unwrap(), &[3.0, 3.0, 1.0]);
        assert_eq!(t.row_ids(), &[2, 2, 0]);
    }

    #[test]
    fn duplicate_and_mismatched_columns_rejected() {
        assert!(Dataset::new(vec![("a", vec![1.0]), ("a", vec![2.0])]).is_err());
        assert!(Dataset::new(vec![("a", vec![1.0]), ("b", vec![2.0, 3.0])]).is_err());
        let d = Dataset::new(vec![("a", vec![1.0])]).unwrap();
        assert!(matches!(d.column("b"), Err(Error::MissingColumn(_))));
    }
}
