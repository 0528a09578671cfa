use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::design::DesignMatrix;
use super::{ModelVariant, StudyError};

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub beta: DVector<f64>,
    pub fitted: DVector<f64>,
    pub residuals: DVector<f64>,
    /// `(X'X)^-1`, from the triangular factor of the QR decomposition.
    pub xtx_inv: DMatrix<f64>,
    pub ssr: f64,
    pub r2: f64,
    pub adj_r2: f64,
    /// Residual standard error, `sqrt(SSR / (N - k))`.
    pub rmse: f64,
    pub n_obs: usize,
    pub n_params: usize,
}

/// Least squares through a QR decomposition of the design.
pub fn fit_ols(design: &DesignMatrix) -> Result<OlsFit, StudyError> {
    let (n, k) = design.x.shape();
    if n <= k {
        return Err(StudyError::Underdetermined { n_obs: n, n_params: k });
    }
    let qr = design.x.clone().qr();
    let r = qr.r();
    let diag_max = r.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if r.diagonal().iter().any(|v| v.abs() <= 1e-10 * diag_max.max(1.0)) {
        super::design::check_rank(design)?;
        return Err(StudyError::RankDeficient { columns: Vec::new() });
    }
    let qty = qr.q().transpose() * &design.y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or(StudyError::RankDeficient { columns: Vec::new() })?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or(StudyError::RankDeficient { columns: Vec::new() })?;
    let xtx_inv = &r_inv * r_inv.transpose();

    let fitted = &design.x * &beta;
    let residuals = &design.y - &fitted;
    let ssr = residuals.norm_squared();
    let mean = design.y.mean();
    let sst: f64 = design.y.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = if sst > 0.0 { 1.0 - ssr / sst } else { f64::NAN };
    let adj_r2 = 1.0 - (1.0 - r2) * (n as f64 - 1.0) / (n - k) as f64;
    Ok(OlsFit {
        beta,
        fitted,
        residuals,
        xtx_inv,
        ssr,
        r2,
        adj_r2,
        rmse: (ssr / (n - k) as f64).sqrt(),
        n_obs: n,
        n_params: k,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmallSampleCorrection {
    /// `G/(G-1) * (N-1)/(N-k)`.
    #[default]
    Cr1,
    /// Plain sandwich, no scaling.
    None,
}

impl SmallSampleCorrection {
    pub fn factor(self, n_clusters: usize, n_obs: usize, n_params: usize) -> f64 {
        match self {
            SmallSampleCorrection::Cr1 => {
                let g = n_clusters as f64;
                (g / (g - 1.0)) * ((n_obs as f64 - 1.0) / (n_obs - n_params) as f64)
            }
            SmallSampleCorrection::None => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterRobust {
    pub vcov: DMatrix<f64>,
    pub se: DVector<f64>,
    pub n_clusters: usize,
    pub correction: SmallSampleCorrection,
}

impl ClusterRobust {
    /// Degrees of freedom for t-based intervals.
    pub fn df(&self) -> usize {
        self.n_clusters - 1
    }
}

/// Sandwich estimator with scores summed within clusters.
pub fn cluster_robust_se(
    fit: &OlsFit,
    design: &DesignMatrix,
    correction: SmallSampleCorrection,
) -> Result<ClusterRobust, StudyError> {
    if design.clusters.len() != fit.n_obs {
        return Err(StudyError::Mismatch);
    }
    let g = design.n_clusters();
    if g < 2 {
        return Err(StudyError::TooFewClusters(g));
    }
    let k = fit.n_params;
    let mut scores = DMatrix::<f64>::zeros(g, k);
    for (i, &c) in design.clusters.iter().enumerate() {
        let e = fit.residuals[i];
        for j in 0..k {
            scores[(c, j)] += design.x[(i, j)] * e;
        }
    }
    let meat = scores.transpose() * &scores;
    let scale = correction.factor(g, fit.n_obs, k);
    let vcov = (&fit.xtx_inv * meat * &fit.xtx_inv) * scale;
    let se = vcov.diagonal().map(|v| v.max(0.0).sqrt());
    Ok(ClusterRobust { vcov, se, n_clusters: g, correction })
}

/// Homoskedastic `s^2 (X'X)^-1`.
pub fn classical_vcov(fit: &OlsFit) -> DMatrix<f64> {
    &fit.xtx_inv * (fit.ssr / (fit.n_obs - fit.n_params) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    #[serde(skip)]
    pub fixed_effect: bool,
}

impl Coefficient {
    /// Zero lies outside the interval.
    pub fn excludes_zero(&self) -> bool {
        self.ci_low > 0.0 || self.ci_high < 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub model: ModelVariant,
    pub coefficients: Vec<Coefficient>,
    pub ols: OlsFit,
    pub robust: ClusterRobust,
    /// Two-sided 97.5% quantile of t with `G - 1` degrees of freedom.
    pub t_critical: f64,
    pub reference_country: String,
}

impl RegressionFit {
    pub fn r2(&self) -> f64 {
        self.ols.r2
    }
    pub fn adj_r2(&self) -> f64 {
        self.ols.adj_r2
    }
    pub fn rmse(&self) -> f64 {
        self.ols.rmse
    }
    pub fn n_obs(&self) -> usize {
        self.ols.n_obs
    }
    pub fn n_clusters(&self) -> usize {
        self.robust.n_clusters
    }

    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    /// Coefficients other than the country dummies.
    pub fn displayed(&self) -> impl Iterator<Item = &Coefficient> {
        self.coefficients.iter().filter(|c| !c.fixed_effect)
    }
}

pub(crate) fn t_critical(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("df >= 1")
        .inverse_cdf(0.975)
}

/// OLS, clustered covariance, and 95% intervals in one step.
pub fn fit_model(design: &DesignMatrix, correction: SmallSampleCorrection) -> Result<RegressionFit, StudyError> {
    let ols = fit_ols(design)?;
    let robust = cluster_robust_se(&ols, design, correction)?;
    let t = t_critical(robust.df());
    let coefficients = design
        .columns
        .iter()
        .enumerate()
        .map(|(j, col)| {
            let (b, se) = (ols.beta[j], robust.se[j]);
            Coefficient {
                name: col.name.clone(),
                estimate: b,
                se,
                ci_low: b - t * se,
                ci_high: b + t * se,
                fixed_effect: col.is_fixed_effect(),
            }
        })
        .collect();
    Ok(RegressionFit {
        model: design.model,
        coefficients,
        ols,
        robust,
        t_critical: t,
        reference_country: design.reference_country.clone(),
    })
}
