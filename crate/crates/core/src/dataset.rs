use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::Label;
use crate::market_data::AlignedFrame;

/// Row-major feature matrix with one label per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub x: Vec<f64>,
    pub labels: Vec<Label>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, x: Vec<f64>, labels: Vec<Label>) -> Result<Self> {
        let cols = feature_names.len();
        if cols == 0 {
            return Err(Error::Shape("dataset needs at least one feature".into()));
        }
        if x.len() != cols * labels.len() {
            return Err(Error::Shape(format!(
                "{} values do not form {} rows of {cols}",
                x.len(),
                labels.len()
            )));
        }
        Ok(Self {
            feature_names,
            x,
            labels,
        })
    }

    /// All frame columns as features, paired with `labels` row for row.
    pub fn from_frame(frame: &AlignedFrame, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != frame.len() {
            return Err(Error::Shape(format!(
                "{} labels for {} rows",
                labels.len(),
                frame.len()
            )));
        }
        let names: Vec<String> = frame.column_names().map(str::to_string).collect();
        let x = frame.row_matrix(0..frame.len()).into_iter().flatten().collect();
        Dataset::new(names, x, labels)
    }

    pub fn n_cols(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.n_cols();
        &self.x[i * c..(i + 1) * c]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.x.iter().skip(j).step_by(self.n_cols()).copied().collect()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let x = rows.iter().flat_map(|&r| self.row(r).iter().copied()).collect();
        let labels = rows.iter().map(|&r| self.labels[r]).collect();
        Dataset {
            feature_names: self.feature_names.clone(),
            x,
            labels,
        }
    }

    pub fn class_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for l in &self.labels {
            counts[l.class_index()] += 1;
        }
        counts
    }
}
