//! Agreement and classification metrics.
//!
//! Everything here is computed in `f64` with summation in sorted-id order, so
//! reports are bit-reproducible across runs.

mod agreement;
mod confusion;
mod report;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

pub use agreement::{brennan_prediger, krippendorff_alpha_nominal, percent_agreement};
pub use confusion::{confusion, f1_scores, join_labels, ConfusionMatrix, F1Scores, JoinStats};
pub use report::{compare, grouped_report, render_table, GroupRow, GroupedReport, ReliabilityReport};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReliabilityError {
    #[error("gold and predicted labels share no document ids")]
    EmptyIntersection,
    #[error("alpha is undefined: only one category occurs in the pairable values")]
    AlphaUndefined,
    #[error("not enough pairable data: need {needed} items rated at least twice, found {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("no item is rated by two or more raters")]
    NoPairableItems,
    #[error("number of categories must be at least 2, got {0}")]
    InvalidCategoryCount(usize),
}

/// Items × raters matrix of categorical labels with missing cells.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RatingTable {
    cells: BTreeMap<String, BTreeMap<String, u8>>,
    raters: BTreeSet<String>,
}

impl RatingTable {
    pub fn set(&mut self, item: &str, rater: &str, label: u8) {
        self.raters.insert(rater.to_string());
        self.cells
            .entry(item.to_string())
            .or_default()
            .insert(rater.to_string(), label);
    }

    /// Builds a complete table from equally long rater columns; items are `i0000`, `i0001`, ...
    pub fn from_columns(columns: &[&[u8]]) -> Self {
        let mut t = RatingTable::default();
        for (r, col) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                t.set(&format!("i{i:04}"), &format!("r{r:02}"), v);
            }
        }
        t
    }

    /// Two-rater table over the intersection of two labelings.
    pub fn from_pair(
        a: &BTreeMap<String, u8>,
        b: &BTreeMap<String, u8>,
        names: (&str, &str),
    ) -> Self {
        let mut t = RatingTable::default();
        for (id, &la) in a {
            if let Some(&lb) = b.get(id) {
                t.set(id, names.0, la);
                t.set(id, names.1, lb);
            }
        }
        t
    }

    pub fn n_items(&self) -> usize {
        self.cells.len()
    }

    pub fn n_raters(&self) -> usize {
        self.raters.len()
    }

    pub fn filled_cells(&self) -> usize {
        self.cells.values().map(BTreeMap::len).sum()
    }

    pub fn items(&self) -> impl Iterator<Item = &str> {
        self.cells.keys().map(String::as_str)
    }

    pub fn raters(&self) -> impl Iterator<Item = &str> {
        self.raters.iter().map(String::as_str)
    }

    /// Labels of one item in rater order.
    pub(crate) fn units(&self) -> impl Iterator<Item = Vec<u8>> + '_ {
        self.cells.values().map(|row| row.values().copied().collect())
    }

    /// Adds every label of `other` under a rater name prefix.
    pub fn merge_rater(&mut self, labels: &BTreeMap<String, u8>, rater: &str) {
        for (item, &l) in labels {
            self.set(item, rater, l);
        }
    }
}
