use std::collections::BTreeMap;

use super::{RatingTable, ReliabilityError};

/// Krippendorff's alpha for nominal data via the coincidence matrix.
///
/// Items with fewer than two labels are not pairable and are ignored. Requires
/// at least two pairable items. When a single category occurs in the pairable
/// values the expected disagreement is zero and the result is
/// [`ReliabilityError::AlphaUndefined`].
pub fn krippendorff_alpha_nominal(table: &RatingTable) -> Result<f64, ReliabilityError> {
    // coincidences[(c, k)] accumulates over units; per-unit weight 1 / (m_u - 1)
    let mut coincidences: BTreeMap<(u8, u8), f64> = BTreeMap::new();
    let mut pairable = 0usize;
    for unit in table.units() {
        let m = unit.len();
        if m < 2 {
            continue;
        }
        pairable += 1;
        let mut counts: BTreeMap<u8, usize> = BTreeMap::new();
        for v in unit {
            *counts.entry(v).or_default() += 1;
        }
        let w = 1.0 / (m - 1) as f64;
        for (&c, &nc) in &counts {
            for (&k, &nk) in &counts {
                let pairs = if c == k { nc * (nc - 1) } else { nc * nk };
                if pairs > 0 {
                    *coincidences.entry((c, k)).or_default() += pairs as f64 * w;
                }
            }
        }
    }
    if pairable < 2 {
        return Err(ReliabilityError::InsufficientData { needed: 2, found: pairable });
    }

    let mut marginals: BTreeMap<u8, f64> = BTreeMap::new();
    for (&(c, _), &o) in &coincidences {
        *marginals.entry(c).or_default() += o;
    }
    let n: f64 = marginals.values().sum();
    let observed: f64 = coincidences
        .iter()
        .filter(|((c, k), _)| c != k)
        .map(|(_, &o)| o)
        .sum::<f64>()
        / n;
    let mut expected_pairs = 0.0;
    for (&c, &nc) in &marginals {
        for (&k, &nk) in &marginals {
            if c != k {
                expected_pairs += nc * nk;
            }
        }
    }
    if expected_pairs == 0.0 {
        return Err(ReliabilityError::AlphaUndefined);
    }
    let expected = expected_pairs / (n * (n - 1.0));
    Ok(1.0 - observed / expected)
}

/// Mean agreement over every (item, unordered rater pair) where both labels exist.
pub fn percent_agreement(table: &RatingTable) -> Result<f64, ReliabilityError> {
    let mut agree = 0u64;
    let mut total = 0u64;
    for unit in table.units() {
        for i in 0..unit.len() {
            for j in i + 1..unit.len() {
                total += 1;
                agree += u64::from(unit[i] == unit[j]);
            }
        }
    }
    if total == 0 {
        return Err(ReliabilityError::NoPairableItems);
    }
    Ok(agree as f64 / total as f64)
}

/// Brennan-Prediger coefficient `(P_o - 1/q) / (1 - 1/q)` with uniform chance over `q` categories.
///
/// With more than two raters `P_o` pools all rater pairs on all items with equal weight.
pub fn brennan_prediger(table: &RatingTable, q: usize) -> Result<f64, ReliabilityError> {
    if q < 2 {
        return Err(ReliabilityError::InvalidCategoryCount(q));
    }
    let po = percent_agreement(table)?;
    let chance = 1.0 / q as f64;
    Ok((po - chance) / (1.0 - chance))
}
