//! Party-level aggregation and the fixed-effects regression pipeline.

mod aggregate;
mod design;
mod figures;
mod margins;
mod ols;
mod output;

use thiserror::Error;

pub use aggregate::{aggregate_parties, AggregationFilters, Aggregation, CountBasis, PartyAggregate};
pub use design::{build_design, extremism, ColumnKind, DesignColumn, DesignMatrix, ModelVariant};
pub use figures::{country_negativity, party_negativity, CountryNegativity, PartyNegativity};
pub use margins::{marginal_mean, marginal_means_family, MarginalMeansRow};
pub use ols::{
    classical_vcov, cluster_robust_se, fit_model, fit_ols, ClusterRobust, Coefficient, OlsFit,
    RegressionFit, SmallSampleCorrection,
};
pub use output::{
    render_regression_table, write_aggregates_csv, write_country_csv, write_marginal_means_csv,
    write_party_csv, RegressionReport, SCHEMA_VERSION,
};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("no parties left to model")]
    NoObservations,
    #[error("reference country {0} not present in the data")]
    UnknownReference(String),
    #[error("rank-deficient design; collinear columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },
    #[error("underdetermined system: {n_obs} observations for {n_params} parameters")]
    Underdetermined { n_obs: usize, n_params: usize },
    #[error("clustered errors need at least 2 clusters, found {0}")]
    TooFewClusters(usize),
    #[error("marginal means require the family model")]
    NotFamilyModel,
    #[error("party family {0} absent from the data")]
    FamilyAbsent(String),
    #[error("design and fit do not belong together")]
    Mismatch,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
