use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ReliabilityError;

/// Binary confusion counts, class 1 (negative campaigning present) as positive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Gold support of class 0.
    pub fn support0(&self) -> u64 {
        self.tn + self.fp
    }

    /// Gold support of class 1.
    pub fn support1(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn transpose(&self) -> Self {
        ConfusionMatrix { tp: self.tp, fp: self.fn_, fn_: self.fp, tn: self.tn }
    }

    pub fn precision1(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall1(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn precision0(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fn_)
    }

    pub fn recall0(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Counts of ids dropped by the gold/predicted join.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinStats {
    pub n_compared: usize,
    pub gold_only: usize,
    pub predicted_only: usize,
}

/// Aligned `(gold, predicted)` pairs over the id intersection, in id order.
pub fn join_labels(
    gold: &BTreeMap<String, u8>,
    predicted: &BTreeMap<String, u8>,
) -> (Vec<(u8, u8)>, JoinStats) {
    let pairs: Vec<(u8, u8)> = gold
        .iter()
        .filter_map(|(id, &g)| predicted.get(id).map(|&p| (g, p)))
        .collect();
    let stats = JoinStats {
        n_compared: pairs.len(),
        gold_only: gold.len() - pairs.len(),
        predicted_only: predicted.len() - pairs.len(),
    };
    (pairs, stats)
}

pub fn confusion(
    gold: &BTreeMap<String, u8>,
    predicted: &BTreeMap<String, u8>,
) -> Result<ConfusionMatrix, ReliabilityError> {
    let (pairs, _) = join_labels(gold, predicted);
    confusion_from_pairs(&pairs)
}

pub(crate) fn confusion_from_pairs(pairs: &[(u8, u8)]) -> Result<ConfusionMatrix, ReliabilityError> {
    if pairs.is_empty() {
        return Err(ReliabilityError::EmptyIntersection);
    }
    let mut cm = ConfusionMatrix::default();
    for &(g, p) in pairs {
        match (g != 0, p != 0) {
            (true, true) => cm.tp += 1,
            (false, true) => cm.fp += 1,
            (true, false) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub f1_class0: f64,
    pub f1_class1: f64,
    pub f1_macro: f64,
    pub f1_weighted: f64,
    pub accuracy: f64,
    /// Precision or recall of class 0 had a zero denominator.
    pub degenerate0: bool,
    pub degenerate1: bool,
}

/// `2·tp / (2·tp + fp + fn)` for one class; 0 when the class never appears in either labeling.
fn class_f1(tp: u64, fp: u64, fn_: u64) -> (f64, bool) {
    let degenerate = tp + fp == 0 || tp + fn_ == 0;
    let den = 2 * tp + fp + fn_;
    let f1 = if den == 0 { 0.0 } else { (2 * tp) as f64 / den as f64 };
    (f1, degenerate)
}

/// Per-class, macro, and support-weighted F1 plus accuracy. Requires a non-empty matrix.
pub fn f1_scores(cm: &ConfusionMatrix) -> F1Scores {
    let total = cm.total();
    assert!(total > 0, "f1_scores needs a non-empty confusion matrix");
    let (f1_class1, degenerate1) = class_f1(cm.tp, cm.fp, cm.fn_);
    let (f1_class0, degenerate0) = class_f1(cm.tn, cm.fn_, cm.fp);
    let s0 = cm.support0() as f64;
    let s1 = cm.support1() as f64;
    F1Scores {
        f1_class0,
        f1_class1,
        f1_macro: (f1_class0 + f1_class1) / 2.0,
        f1_weighted: (s0 * f1_class0 + s1 * f1_class1) / (s0 + s1),
        accuracy: (cm.tp + cm.tn) as f64 / total as f64,
        degenerate0,
        degenerate1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(v: &[u8]) -> BTreeMap<String, u8> {
        v.iter().enumerate().map(|(i, &l)| (format!("d{i}"), l)).collect()
    }

    #[test]
    fn hand_enumerated_matrix() {
        let cm = confusion(&labels(&[1, 1, 0, 0]), &labels(&[1, 0, 0, 0])).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 1, fp: 0, fn_: 1, tn: 2 });
    }

    #[test]
    fn identical_and_inverted() {
        let g = labels(&[1, 0, 1, 1, 0]);
        let cm = confusion(&g, &g).unwrap();
        assert_eq!((cm.fp, cm.fn_), (0, 0));
        let inv = confusion(&labels(&[1, 0]), &labels(&[0, 1])).unwrap();
        assert_eq!((inv.tp, inv.tn), (0, 0));
    }

    #[test]
    fn empty_intersection() {
        let a: BTreeMap<String, u8> = [("x".to_string(), 1)].into();
        let b: BTreeMap<String, u8> = [("y".to_string(), 1)].into();
        assert_eq!(confusion(&a, &b), Err(ReliabilityError::EmptyIntersection));
        let (_, stats) = join_labels(&a, &b);
        assert_eq!(stats, JoinStats { n_compared: 0, gold_only: 1, predicted_only: 1 });
    }

    #[test]
    fn hand_arithmetic_f1() {
        // P1 = 1, R1 = 1/2 -> 2/3; P0 = 2/3, R0 = 1 -> 4/5
        let s = f1_scores(&ConfusionMatrix { tp: 1, fp: 0, fn_: 1, tn: 2 });
        assert!((s.f1_class1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.f1_class0 - 0.8).abs() < 1e-15);
        assert!((s.f1_weighted - (2.0 * 0.8 + 2.0 * 2.0 / 3.0) / 4.0).abs() < 1e-15);
        assert!((s.f1_weighted - 0.7333).abs() < 1e-4);
        assert!((s.f1_macro - 0.7333).abs() < 1e-4);
        assert_eq!(s.accuracy, 0.75);
        assert!(!s.degenerate0 && !s.degenerate1);
    }

    #[test]
    fn perfect_mixed() {
        let s = f1_scores(&ConfusionMatrix { tp: 3, fp: 0, fn_: 0, tn: 4 });
        for v in [s.f1_class0, s.f1_class1, s.f1_macro, s.f1_weighted, s.accuracy] {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn single_class_support() {
        let s = f1_scores(&ConfusionMatrix { tp: 0, fp: 0, fn_: 0, tn: 5 });
        assert_eq!(s.f1_class0, 1.0);
        assert_eq!(s.f1_class1, 0.0);
        assert!(s.degenerate1);
        assert_eq!(s.f1_weighted, 1.0);
    }

    #[test]
    fn transpose_swaps_precision_recall() {
        let cm = ConfusionMatrix { tp: 3, fp: 2, fn_: 5, tn: 7 };
        let t = cm.transpose();
        assert_eq!(cm.precision1(), t.recall1());
        assert_eq!(cm.recall1(), t.precision1());
        assert_eq!(cm.precision0(), t.recall0());
    }
}
