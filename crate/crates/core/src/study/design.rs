use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{PartyAggregate, StudyError};
use crate::ingest::{PartyFamily, PartyMeta, PartyTable};

pub const INTERCEPT: &str = "(Intercept)";
pub const GOVT: &str = "Government experience";
pub const ANTIELITE: &str = "Anti-elite salience";
pub const EXTREME: &str = "Ideological extreme";
pub const LEFT_RIGHT: &str = "General Left-Right";

/// Distance from the scale midpoint, `|5 - lrgen|`.
pub fn extremism(lrgen: f64) -> Result<f64, StudyError> {
    if !(0.0..=10.0).contains(&lrgen) {
        return Err(StudyError::OutOfRange(format!("lrgen {lrgen} outside [0, 10]")));
    }
    Ok((5.0 - lrgen).abs())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelVariant {
    /// Government, anti-elite salience, extremism.
    #[default]
    #[serde(rename = "m1")]
    Model1,
    /// Government, anti-elite salience, left-right position.
    #[serde(rename = "m2")]
    Model2,
    /// Government, anti-elite salience, party family dummies.
    #[serde(rename = "family")]
    FamilyModel,
}

impl ModelVariant {
    pub fn key(self) -> &'static str {
        match self {
            ModelVariant::Model1 => "m1",
            ModelVariant::Model2 => "m2",
            ModelVariant::FamilyModel => "family",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            ModelVariant::Model1 => "Model 1",
            ModelVariant::Model2 => "Model 2",
            ModelVariant::FamilyModel => "Family model",
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for ModelVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m1" | "model1" => Ok(ModelVariant::Model1),
            "m2" | "model2" => Ok(ModelVariant::Model2),
            "family" | "familymodel" => Ok(ModelVariant::FamilyModel),
            other => Err(format!("unknown model variant {other:?} (expected m1, m2 or family)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "level", rename_all = "snake_case")]
pub enum ColumnKind {
    Intercept,
    Predictor,
    Country(String),
    Family(PartyFamily),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignColumn {
    pub name: String,
    pub kind: ColumnKind,
}

impl DesignColumn {
    pub fn is_fixed_effect(&self) -> bool {
        matches!(self.kind, ColumnKind::Country(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub model: ModelVariant,
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub columns: Vec<DesignColumn>,
    /// One entry per row.
    pub party_ids: Vec<String>,
    /// Index into `cluster_names` per row.
    pub clusters: Vec<usize>,
    /// Sorted country codes.
    pub cluster_names: Vec<String>,
    pub reference_country: String,
    /// Family per row.
    pub families: Vec<PartyFamily>,
    /// Omitted family level; `Some` only for the family model.
    pub reference_family: Option<PartyFamily>,
    /// Parties dropped for lack of metadata.
    pub excluded: Vec<String>,
}

impl DesignMatrix {
    pub fn n_obs(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_clusters(&self) -> usize {
        self.cluster_names.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn family_column(&self, family: PartyFamily) -> Option<usize> {
        self.columns.iter().position(|c| c.kind == ColumnKind::Family(family))
    }

    /// Countries of the rows belonging to `family`.
    pub fn family_countries(&self, family: PartyFamily) -> Vec<&str> {
        self.families
            .iter()
            .zip(&self.clusters)
            .filter(|(f, _)| **f == family)
            .map(|(_, &c)| self.cluster_names[c].as_str())
            .collect()
    }
}

fn predictors(model: ModelVariant, m: &PartyMeta) -> Result<Vec<f64>, StudyError> {
    let base = [f64::from(m.govt), m.antielite_salience];
    Ok(match model {
        ModelVariant::Model1 => vec![base[0], base[1], extremism(m.lrgen)?],
        ModelVariant::Model2 => vec![base[0], base[1], m.lrgen],
        ModelVariant::FamilyModel => base.to_vec(),
    })
}

fn predictor_names(model: ModelVariant) -> &'static [&'static str] {
    match model {
        ModelVariant::Model1 => &[GOVT, ANTIELITE, EXTREME],
        ModelVariant::Model2 => &[GOVT, ANTIELITE, LEFT_RIGHT],
        ModelVariant::FamilyModel => &[GOVT, ANTIELITE],
    }
}

/// Builds the regression design for the parties that have metadata.
///
/// Columns are the intercept, the model's predictors, then (family model
/// only) one dummy per family except the first present in CHES order, then one
/// dummy per country except `reference_country` (default: alphabetically
/// first). Fails when the columns are linearly dependent, naming them.
pub fn build_design(
    aggregates: &[PartyAggregate],
    party_meta: &PartyTable,
    model: ModelVariant,
    reference_country: Option<&str>,
) -> Result<DesignMatrix, StudyError> {
    let mut rows: Vec<(&PartyAggregate, &PartyMeta)> = Vec::new();
    let mut excluded = Vec::new();
    for a in aggregates {
        match party_meta.get(&a.party_id) {
            Some(m) if !a.missing_meta => rows.push((a, m)),
            _ => excluded.push(a.party_id.clone()),
        }
    }
    if rows.is_empty() {
        return Err(StudyError::NoObservations);
    }
    rows.sort_by(|a, b| a.0.party_id.cmp(&b.0.party_id));

    let countries: Vec<String> =
        rows.iter().map(|(a, _)| a.country.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let reference = match reference_country {
        Some(r) if countries.iter().any(|c| c == r) => r.to_string(),
        Some(r) => return Err(StudyError::UnknownReference(r.to_string())),
        None => countries[0].clone(),
    };
    let country_pos: BTreeMap<&str, usize> =
        countries.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();

    let families: Vec<PartyFamily> = rows.iter().map(|(_, m)| m.family).collect();
    let (family_levels, reference_family) = if model == ModelVariant::FamilyModel {
        let present: BTreeSet<PartyFamily> = families.iter().copied().collect();
        let mut levels = PartyFamily::ALL.iter().copied().filter(|f| present.contains(f));
        let reference = levels.next();
        (levels.collect::<Vec<_>>(), reference)
    } else {
        (Vec::new(), None)
    };

    let mut columns = vec![DesignColumn { name: INTERCEPT.into(), kind: ColumnKind::Intercept }];
    columns.extend(
        predictor_names(model).iter().map(|n| DesignColumn { name: (*n).into(), kind: ColumnKind::Predictor }),
    );
    columns.extend(family_levels.iter().map(|f| DesignColumn {
        name: format!("family:{}", f.key()),
        kind: ColumnKind::Family(*f),
    }));
    columns.extend(countries.iter().filter(|c| **c != reference).map(|c| DesignColumn {
        name: format!("country:{c}"),
        kind: ColumnKind::Country(c.clone()),
    }));

    let n = rows.len();
    let k = columns.len();
    let mut x = DMatrix::zeros(n, k);
    let mut y = DVector::zeros(n);
    let mut clusters = Vec::with_capacity(n);
    for (i, (agg, meta)) in rows.iter().enumerate() {
        if !(0.0..=10.0).contains(&meta.antielite_salience) {
            return Err(StudyError::OutOfRange(format!(
                "antielite_salience {} for {}",
                meta.antielite_salience, meta.party_id
            )));
        }
        y[i] = agg.pct_negative;
        x[(i, 0)] = 1.0;
        for (j, v) in predictors(model, meta)?.into_iter().enumerate() {
            x[(i, 1 + j)] = v;
        }
        for (j, col) in columns.iter().enumerate() {
            let hit = match &col.kind {
                ColumnKind::Family(f) => *f == meta.family,
                ColumnKind::Country(c) => *c == agg.country,
                _ => false,
            };
            if hit {
                x[(i, j)] = 1.0;
            }
        }
        clusters.push(country_pos[agg.country.as_str()]);
    }

    let design = DesignMatrix {
        model,
        y,
        x,
        columns,
        party_ids: rows.iter().map(|(a, _)| a.party_id.clone()).collect(),
        clusters,
        cluster_names: countries,
        reference_country: reference,
        families,
        reference_family,
        excluded,
    };
    if n <= k {
        return Err(StudyError::Underdetermined { n_obs: n, n_params: k });
    }
    check_rank(&design)?;
    Ok(design)
}

/// Sequential Gram-Schmidt over the columns; a column with (numerically) no
/// component outside the span of its predecessors is reported together with
/// the predecessors that reproduce it.
pub(crate) fn check_rank(design: &DesignMatrix) -> Result<(), StudyError> {
    let x = &design.x;
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut basis_cols: Vec<usize> = Vec::new();
    let mut offending: BTreeSet<usize> = BTreeSet::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let scale = col.norm().max(1.0);
        let mut r = col.clone();
        for q in &basis {
            let proj = q.dot(&r);
            r -= q * proj;
        }
        if r.norm() <= 1e-9 * scale {
            offending.insert(j);
            // Express the column in terms of the kept columns to name them.
            if basis_cols.is_empty() {
                continue;
            }
            let kept = x.select_columns(&basis_cols);
            if let Ok(coef) = kept.svd(true, true).solve(&col, 1e-12) {
                for (pos, &c) in basis_cols.iter().enumerate() {
                    if coef[pos].abs() > 1e-8 {
                        offending.insert(c);
                    }
                }
            }
        } else {
            let norm = r.norm();
            basis.push(r / norm);
            basis_cols.push(j);
        }
    }
    if offending.is_empty() {
        return Ok(());
    }
    Err(StudyError::RankDeficient {
        columns: offending.into_iter().map(|j| design.columns[j].name.clone()).collect(),
    })
}
