use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::design::DesignMatrix;
use super::{ModelVariant, RegressionFit, StudyError};
use crate::ingest::PartyFamily;

/// Families with fewer members than this get the `few_observations` flag.
const FEW: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalMeansRow {
    pub family: PartyFamily,
    pub predicted: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_obs: usize,
    pub flags: Vec<String>,
}

fn check(fit: &RegressionFit, design: &DesignMatrix) -> Result<(), StudyError> {
    if design.model != ModelVariant::FamilyModel || fit.model != ModelVariant::FamilyModel {
        return Err(StudyError::NotFamilyModel);
    }
    if fit.ols.beta.len() != design.n_params() || fit.ols.n_obs != design.n_obs() {
        return Err(StudyError::Mismatch);
    }
    Ok(())
}

/// Average design row with every observation assigned to `family`.
fn counterfactual_mean(design: &DesignMatrix, family: PartyFamily) -> DVector<f64> {
    let mut xbar = design.x.row_mean().transpose();
    for (j, col) in design.columns.iter().enumerate() {
        if let super::ColumnKind::Family(f) = col.kind {
            xbar[j] = if f == family { 1.0 } else { 0.0 };
        }
    }
    xbar
}

/// Predicted percentage for one family, other covariates at observed values.
pub fn marginal_mean(
    fit: &RegressionFit,
    design: &DesignMatrix,
    family: PartyFamily,
) -> Result<MarginalMeansRow, StudyError> {
    check(fit, design)?;
    let members: Vec<&str> = design.family_countries(family);
    if members.is_empty() {
        return Err(StudyError::FamilyAbsent(family.key().to_string()));
    }
    // The prediction is linear in the design row, so averaging predictions
    // equals predicting at the averaged row, and the delta-method gradient is
    // that averaged row.
    let grad = counterfactual_mean(design, family);
    let predicted = grad.dot(&fit.ols.beta);
    let var = (grad.transpose() * &fit.robust.vcov * &grad)[(0, 0)];
    let se = var.max(0.0).sqrt();

    let mut flags = Vec::new();
    if members.len() < FEW {
        flags.push("few_observations".to_string());
        let mut per_country: BTreeMap<&str, usize> = BTreeMap::new();
        for c in &members {
            *per_country.entry(c).or_default() += 1;
        }
        if per_country.values().any(|&n| 2 * n > members.len()) {
            flags.push("geographic_concentration".to_string());
        }
    }
    Ok(MarginalMeansRow {
        family,
        predicted,
        se,
        ci_low: predicted - fit.t_critical * se,
        ci_high: predicted + fit.t_critical * se,
        n_obs: members.len(),
        flags,
    })
}

/// One row per family present in the data, in CHES order.
///
/// A family with fewer than five members is flagged `few_observations`, and
/// additionally `geographic_concentration` when a single country holds a
/// majority of them.
pub fn marginal_means_family(
    fit: &RegressionFit,
    design: &DesignMatrix,
) -> Result<Vec<MarginalMeansRow>, StudyError> {
    check(fit, design)?;
    PartyFamily::ALL
        .iter()
        .filter(|f| design.families.contains(f))
        .map(|&f| marginal_mean(fit, design, f))
        .collect()
}
