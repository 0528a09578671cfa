use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::design::DesignMatrix;
use super::{
    Coefficient, CountryNegativity, MarginalMeansRow, PartyAggregate, PartyNegativity, RegressionFit,
    SmallSampleCorrection, StudyError,
};

pub const SCHEMA_VERSION: u32 = 1;

fn num(v: f64) -> String {
    format!("{v:.6}")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), num)
}

/// `party_id,country,n_total,n_original,n_negative_original,pct_negative`
pub fn write_aggregates_csv<W: Write>(out: W, rows: &[PartyAggregate]) -> Result<(), StudyError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["party_id", "country", "n_total", "n_original", "n_negative_original", "pct_negative"])?;
    for r in rows {
        w.write_record([
            r.party_id.clone(),
            r.country.clone(),
            r.n_total.to_string(),
            r.n_original.to_string(),
            r.n_negative_original.to_string(),
            num(r.pct_negative),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `family,predicted,ci_low,ci_high,n_obs,flags`; flags joined with `;`.
pub fn write_marginal_means_csv<W: Write>(out: W, rows: &[MarginalMeansRow]) -> Result<(), StudyError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["family", "predicted", "ci_low", "ci_high", "n_obs", "flags"])?;
    for r in rows {
        w.write_record([
            r.family.key().to_string(),
            num(r.predicted),
            num(r.ci_low),
            num(r.ci_high),
            r.n_obs.to_string(),
            r.flags.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-country plot data; absent percentages are written as `NA`.
pub fn write_country_csv<W: Write>(out: W, rows: &[CountryNegativity]) -> Result<(), StudyError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["country", "n_original", "n_retweet", "pct_original", "pct_retweet"])?;
    for r in rows {
        w.write_record([
            r.country.clone(),
            r.n_original.to_string(),
            r.n_retweet.to_string(),
            opt(r.pct_original),
            opt(r.pct_retweet),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_party_csv<W: Write>(out: W, rows: &[PartyNegativity]) -> Result<(), StudyError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["party_id", "name", "country", "family", "n_original", "pct_negative", "pct_negative_retweets"])?;
    for r in rows {
        w.write_record([
            r.party_id.clone(),
            r.name.clone(),
            r.country.clone(),
            r.family.map_or_else(|| "NA".to_string(), |f| f.key().to_string()),
            r.n_original.to_string(),
            num(r.pct_negative),
            opt(r.pct_negative_retweets),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// JSON shape of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub schema_version: u32,
    pub model: String,
    pub coefficients: Vec<Coefficient>,
    pub fixed_effects: Vec<Coefficient>,
    pub reference_country: String,
    pub r2: f64,
    pub adj_r2: f64,
    pub rmse: f64,
    pub n: usize,
    pub n_clusters: usize,
    pub ci_df: usize,
    pub se_correction: SmallSampleCorrection,
    pub excluded_parties: Vec<String>,
}

impl RegressionReport {
    pub fn new(fit: &RegressionFit, design: &DesignMatrix) -> Self {
        let (fe, shown): (Vec<Coefficient>, Vec<Coefficient>) =
            fit.coefficients.iter().cloned().partition(|c| c.fixed_effect);
        RegressionReport {
            schema_version: SCHEMA_VERSION,
            model: fit.model.key().to_string(),
            coefficients: shown,
            fixed_effects: fe,
            reference_country: fit.reference_country.clone(),
            r2: fit.r2(),
            adj_r2: fit.adj_r2(),
            rmse: fit.rmse(),
            n: fit.n_obs(),
            n_clusters: fit.n_clusters(),
            ci_df: fit.robust.df(),
            se_correction: fit.robust.correction,
            excluded_parties: design.excluded.clone(),
        }
    }
}

type StatCell = fn(&RegressionFit) -> String;

/// Side-by-side text table: estimate (starred when the 95% interval
/// excludes zero) over its bracketed interval, then fit statistics.
/// Country dummies are omitted.
pub fn render_regression_table(models: &[&RegressionFit]) -> String {
    let mut names: Vec<&str> = Vec::new();
    for fit in models {
        for c in fit.displayed() {
            if !names.contains(&c.name.as_str()) {
                names.push(&c.name);
            }
        }
    }
    let mut rows: Vec<(String, Vec<String>)> = Vec::new();
    for name in &names {
        let (mut est, mut ci) = (Vec::new(), Vec::new());
        for fit in models {
            match fit.coefficient(name) {
                Some(c) => {
                    let star = if c.excludes_zero() { "*" } else { "" };
                    est.push(format!("{:.2}{star}", c.estimate));
                    ci.push(format!("[{:.2}; {:.2}]", c.ci_low, c.ci_high));
                }
                None => {
                    est.push(String::new());
                    ci.push(String::new());
                }
            }
        }
        rows.push((name.to_string(), est));
        rows.push((String::new(), ci));
    }
    let stats: [(&str, StatCell); 5] = [
        ("R\u{b2}", |f| format!("{:.2}", f.r2())),
        ("Adj. R\u{b2}", |f| format!("{:.2}", f.adj_r2())),
        ("Num. obs.", |f| f.n_obs().to_string()),
        ("RMSE", |f| format!("{:.2}", f.rmse())),
        ("N Clusters", |f| f.n_clusters().to_string()),
    ];
    let stat_rows: Vec<(String, Vec<String>)> =
        stats.iter().map(|(label, get)| (label.to_string(), models.iter().map(|f| get(f)).collect())).collect();

    let header: Vec<String> = models.iter().map(|f| f.model.title().to_string()).collect();
    let first = rows
        .iter()
        .chain(&stat_rows)
        .map(|(n, _)| n.chars().count())
        .max()
        .unwrap_or(0);
    let widths: Vec<usize> = (0..models.len())
        .map(|i| {
            rows.iter()
                .chain(&stat_rows)
                .map(|(_, v)| v[i].chars().count())
                .chain([header[i].chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |label: &str, cells: &[String]| {
        let mut s = format!("{label:<first$}");
        for (c, w) in cells.iter().zip(&widths) {
            let _ = write!(s, "  {c:>w$}");
        }
        s.trim_end().to_string() + "\n"
    };
    let total = first + widths.iter().map(|w| w + 2).sum::<usize>();
    let rule = "-".repeat(total) + "\n";

    let mut out = String::new();
    out += &line("", &header);
    out += &rule;
    for (n, v) in &rows {
        out += &line(n, v);
    }
    out += &rule;
    for (n, v) in &stat_rows {
        out += &line(n, v);
    }
    out += &rule;
    out += "* 0 outside the 95% confidence interval. Country fixed effects not shown.\n";
    out += "Standard errors clustered by country.\n";
    out
}
