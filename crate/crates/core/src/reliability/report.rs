use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::confusion::confusion_from_pairs;
use super::{
    brennan_prediger, f1_scores, join_labels, krippendorff_alpha_nominal, JoinStats, RatingTable,
    ReliabilityError,
};

/// The full metric bundle for one gold/predicted comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    #[serde(rename = "acc")]
    pub accuracy: f64,
    #[serde(rename = "f1_0")]
    pub f1_class0: f64,
    #[serde(rename = "f1_1")]
    pub f1_class1: f64,
    #[serde(rename = "f1_w")]
    pub f1_weighted: f64,
    pub f1_macro: f64,
    /// `None` when alpha is undefined; the reason is in `flags`.
    pub alpha_k: Option<f64>,
    pub kappa_bp: Option<f64>,
    #[serde(rename = "supp_0")]
    pub support0: u64,
    #[serde(rename = "supp_1")]
    pub support1: u64,
    #[serde(rename = "n")]
    pub n_compared: u64,
    pub flags: Vec<String>,
}

/// Compares gold with predicted labels on their id intersection.
pub fn compare(
    gold: &BTreeMap<String, u8>,
    predicted: &BTreeMap<String, u8>,
) -> Result<(ReliabilityReport, JoinStats), ReliabilityError> {
    let (pairs, stats) = join_labels(gold, predicted);
    let cm = confusion_from_pairs(&pairs)?;
    let f1 = f1_scores(&cm);
    let mut flags = Vec::new();
    if f1.degenerate0 {
        flags.push("degenerate_class_0".to_string());
    }
    if f1.degenerate1 {
        flags.push("degenerate_class_1".to_string());
    }
    let table = RatingTable::from_pair(gold, predicted, ("gold", "predicted"));
    let alpha_k = match krippendorff_alpha_nominal(&table) {
        Ok(a) => Some(a),
        Err(ReliabilityError::AlphaUndefined) => {
            flags.push("alpha_undefined".to_string());
            None
        }
        Err(_) => {
            flags.push("alpha_insufficient_data".to_string());
            None
        }
    };
    let kappa_bp = brennan_prediger(&table, 2).ok();
    let report = ReliabilityReport {
        accuracy: f1.accuracy,
        f1_class0: f1.f1_class0,
        f1_class1: f1.f1_class1,
        f1_weighted: f1.f1_weighted,
        f1_macro: f1.f1_macro,
        alpha_k,
        kappa_bp,
        support0: cm.support0(),
        support1: cm.support1(),
        n_compared: cm.total(),
        flags,
    };
    Ok((report, stats))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: String,
    #[serde(flatten)]
    pub report: ReliabilityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedReport {
    pub rows: Vec<GroupRow>,
    pub pooled: ReliabilityReport,
    pub join: JoinStats,
    /// Compared documents with no group assignment; they count toward the pooled row only.
    pub ungrouped: usize,
}

/// One row per group (sorted by group key) plus the pooled row.
pub fn grouped_report(
    gold: &BTreeMap<String, u8>,
    predicted: &BTreeMap<String, u8>,
    groups: &BTreeMap<String, String>,
) -> Result<GroupedReport, ReliabilityError> {
    let (pooled, join) = compare(gold, predicted)?;
    let mut split: BTreeMap<&str, BTreeMap<String, u8>> = BTreeMap::new();
    let mut ungrouped = 0;
    for (id, &g) in gold {
        if !predicted.contains_key(id) {
            continue;
        }
        match groups.get(id) {
            Some(grp) => {
                split.entry(grp.as_str()).or_default().insert(id.clone(), g);
            }
            None => ungrouped += 1,
        }
    }
    let mut rows = Vec::with_capacity(split.len());
    for (group, gold_part) in split {
        let (report, _) = compare(&gold_part, predicted)?;
        rows.push(GroupRow { group: group.to_string(), report });
    }
    Ok(GroupedReport { rows, pooled, join, ungrouped })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.3}"))
}

impl ReliabilityReport {
    fn text_cells(&self) -> [String; 11] {
        [
            format!("{:.3}", self.accuracy),
            format!("{:.3}", self.f1_class0),
            format!("{:.3}", self.f1_class1),
            format!("{:.3}", self.f1_weighted),
            format!("{:.3}", self.f1_macro),
            fmt_opt(self.alpha_k),
            fmt_opt(self.kappa_bp),
            self.support0.to_string(),
            self.support1.to_string(),
            self.n_compared.to_string(),
            self.flags.join(","),
        ]
    }
}

const HEADERS: [&str; 11] =
    ["Acc", "F1_0", "F1_1", "F1_W", "F1_macro", "alpha_K", "kappa_BP", "Supp_0", "Supp_1", "N", "Flags"];

/// Aligned-column text table of labelled reports.
pub fn render_table(first_column: &str, rows: &[(String, &ReliabilityReport)]) -> String {
    let mut cells: Vec<Vec<String>> = vec![std::iter::once(first_column.to_string())
        .chain(HEADERS.iter().map(|h| h.to_string()))
        .collect()];
    for (name, r) in rows {
        cells.push(std::iter::once(name.clone()).chain(r.text_cells()).collect());
    }
    let ncol = cells[0].len();
    let widths: Vec<usize> = (0..ncol)
        .map(|c| cells.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &cells {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c == 0 {
                let _ = write!(line, "{cell:<w$}", w = widths[c]);
            } else if c == ncol - 1 {
                let _ = write!(line, "  {cell}");
            } else {
                let _ = write!(line, "  {cell:>w$}", w = widths[c]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

impl GroupedReport {
    pub fn render_text(&self, group_title: &str) -> String {
        let mut rows: Vec<(String, &ReliabilityReport)> =
            self.rows.iter().map(|r| (r.group.clone(), &r.report)).collect();
        rows.push(("Pooled".to_string(), &self.pooled));
        render_table(group_title, &rows)
    }
}
