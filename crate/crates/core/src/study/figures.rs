use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::PartyAggregate;
use crate::ingest::{Corpus, PartyFamily, PartyTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryNegativity {
    pub country: String,
    pub n_original: u64,
    pub n_retweet: u64,
    pub pct_original: Option<f64>,
    /// `None` when the country has no labeled retweets.
    pub pct_retweet: Option<f64>,
}

/// Message-level negativity per country, originals and retweets apart.
///
/// Every labeled message counts, independents and small parties included.
pub fn country_negativity(corpus: &Corpus, labels: &BTreeMap<String, u8>) -> Vec<CountryNegativity> {
    // (originals, negative originals, retweets, negative retweets)
    let mut counts: BTreeMap<&str, [u64; 4]> = BTreeMap::new();
    for doc in corpus {
        let Some(&label) = labels.get(&doc.id) else { continue };
        let c = counts.entry(&doc.country).or_default();
        let base = if doc.detect_retweet() { 2 } else { 0 };
        c[base] += 1;
        c[base + 1] += u64::from(label);
    }
    let pct = |neg: u64, n: u64| (n > 0).then(|| 100.0 * neg as f64 / n as f64);
    counts
        .into_iter()
        .map(|(country, [o, on, r, rn])| CountryNegativity {
            country: country.to_string(),
            n_original: o,
            n_retweet: r,
            pct_original: pct(on, o),
            pct_retweet: pct(rn, r),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartyNegativity {
    pub party_id: String,
    pub name: String,
    pub country: String,
    pub family: Option<PartyFamily>,
    pub n_original: u64,
    pub pct_negative: f64,
    pub pct_negative_retweets: Option<f64>,
}

/// Per-party plot rows, ordered by country then descending negativity.
pub fn party_negativity(aggregates: &[PartyAggregate], party_meta: &PartyTable) -> Vec<PartyNegativity> {
    let mut rows: Vec<PartyNegativity> = aggregates
        .iter()
        .map(|a| {
            let meta = party_meta.get(&a.party_id);
            PartyNegativity {
                party_id: a.party_id.clone(),
                name: meta.map_or_else(|| a.party_id.clone(), |m| m.display_name.clone()),
                country: a.country.clone(),
                family: meta.map(|m| m.family),
                n_original: a.n_original,
                pct_negative: a.pct_negative,
                pct_negative_retweets: a.pct_negative_retweets,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        a.country
            .cmp(&b.country)
            .then(b.pct_negative.total_cmp(&a.pct_negative))
            .then(a.party_id.cmp(&b.party_id))
    });
    rows
}
