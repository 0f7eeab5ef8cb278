use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower-triangular accuracy matrix: `row(t)[i]` is the accuracy on task
/// `i`'s test split after training task `t` (both 0-based).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResultMatrix {
    rows: Vec<Vec<f64>>,
}

impl ResultMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a matrix from complete rows, checking shape and bounds.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut m = Self::new();
        for row in rows {
            m.push_row(row)?;
        }
        Ok(m)
    }

    /// Appends the row for the next task; it must hold one entry per task
    /// seen so far, each in `[0, 1]`.
    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        let t = self.rows.len();
        if row.len() != t + 1 {
            return Err(Error::Contract(format!(
                "row {} needs {} entries, got {}",
                t + 1,
                t + 1,
                row.len()
            )));
        }
        if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::range("accuracy", v, "[0, 1]"));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn get(&self, t: usize, i: usize) -> Option<f64> {
        self.rows.get(t).and_then(|r| r.get(i)).copied()
    }

    fn row(&self, t: usize) -> Result<&[f64]> {
        self.rows.get(t).map(Vec::as_slice).ok_or_else(|| {
            Error::State(format!(
                "row {} is not complete ({} rows recorded)",
                t + 1,
                self.rows.len()
            ))
        })
    }

    /// `A_t`: mean accuracy over tasks `0..=t` after training task `t`.
    pub fn average_accuracy(&self, t: usize) -> Result<f64> {
        let row = self.row(t)?;
        Ok(row.iter().sum::<f64>() / row.len() as f64)
    }

    /// `F_t`: mean over earlier tasks `i < t` of the drop from the best
    /// accuracy ever reached on `i` before task `t` to the accuracy after `t`.
    pub fn average_forgetting(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Err(Error::UndefinedMetric {
                metric: "average forgetting",
                task: 1,
            });
        }
        let row = self.row(t)?;
        let total: f64 = (0..t)
            .map(|i| {
                let best = (i..t)
                    .map(|tp| self.rows[tp][i])
                    .fold(f64::NEG_INFINITY, f64::max);
                best - row[i]
            })
            .sum();
        Ok(total / t as f64)
    }
}
