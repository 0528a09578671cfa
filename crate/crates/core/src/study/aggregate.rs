use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::StudyError;
use crate::ingest::{Corpus, PartyTable};

/// Which count the `min_tweets` threshold is compared against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountBasis {
    /// All labeled messages, retweets included.
    #[default]
    Total,
    /// Only the messages that enter the percentage.
    Original,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AggregationFilters {
    pub exclude_retweets: bool,
    pub min_tweets: u64,
    pub exclude_independents: bool,
    pub min_tweets_basis: CountBasis,
}

impl Default for AggregationFilters {
    fn default() -> Self {
        AggregationFilters {
            exclude_retweets: true,
            min_tweets: 500,
            exclude_independents: true,
            min_tweets_basis: CountBasis::Total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartyAggregate {
    pub party_id: String,
    pub country: String,
    pub n_total: u64,
    /// Messages entering `pct_negative`: originals, or everything when
    /// retweets are not excluded.
    pub n_original: u64,
    pub n_negative_original: u64,
    pub pct_negative: f64,
    pub n_retweet: u64,
    pub n_negative_retweet: u64,
    /// `None` when the party has no retweets.
    pub pct_negative_retweets: Option<f64>,
    /// Party absent from the metadata table; kept here, dropped from models.
    pub missing_meta: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregation {
    /// Sorted by party id.
    pub parties: Vec<PartyAggregate>,
    /// Corpus documents without a label (failed annotations).
    pub n_unlabeled: u64,
    pub n_independent: u64,
    pub below_threshold: Vec<String>,
    /// Parties whose analysis set is empty, so no percentage exists.
    pub no_messages: Vec<String>,
}

impl Aggregation {
    pub fn missing_meta(&self) -> impl Iterator<Item = &PartyAggregate> {
        self.parties.iter().filter(|p| p.missing_meta)
    }
}

#[derive(Default)]
struct Tally {
    country: Option<String>,
    originals: u64,
    neg_originals: u64,
    retweets: u64,
    neg_retweets: u64,
}

fn pct(num: u64, den: u64) -> f64 {
    100.0 * num as f64 / den as f64
}

/// Counts labeled messages per party and applies the filters.
///
/// Filter order: retweet split, independents, then the `min_tweets` threshold.
pub fn aggregate_parties(
    corpus: &Corpus,
    labels: &BTreeMap<String, u8>,
    party_meta: &PartyTable,
    filters: &AggregationFilters,
) -> Result<Aggregation, StudyError> {
    let mut out = Aggregation::default();
    let mut tallies: BTreeMap<&str, Tally> = BTreeMap::new();
    for doc in corpus {
        let Some(&label) = labels.get(&doc.id) else {
            out.n_unlabeled += 1;
            continue;
        };
        if label > 1 {
            return Err(StudyError::OutOfRange(format!("label {label} for {}", doc.id)));
        }
        if doc.party_id.is_empty() && filters.exclude_independents {
            out.n_independent += 1;
            continue;
        }
        let t = tallies.entry(&doc.party_id).or_default();
        t.country.get_or_insert_with(|| doc.country.clone());
        let neg = u64::from(label);
        if doc.detect_retweet() {
            t.retweets += 1;
            t.neg_retweets += neg;
        } else {
            t.originals += 1;
            t.neg_originals += neg;
        }
    }

    for (party, t) in tallies {
        let n_total = t.originals + t.retweets;
        let (n_original, n_negative_original) = if filters.exclude_retweets {
            (t.originals, t.neg_originals)
        } else {
            (n_total, t.neg_originals + t.neg_retweets)
        };
        let basis = match filters.min_tweets_basis {
            CountBasis::Total => n_total,
            CountBasis::Original => n_original,
        };
        if basis < filters.min_tweets {
            out.below_threshold.push(party.to_string());
            continue;
        }
        if n_original == 0 {
            out.no_messages.push(party.to_string());
            continue;
        }
        let meta = party_meta.get(party);
        let country = match meta {
            Some(m) => m.country.clone(),
            None => t.country.unwrap_or_default(),
        };
        out.parties.push(PartyAggregate {
            party_id: party.to_string(),
            country,
            n_total,
            n_original,
            n_negative_original,
            pct_negative: pct(n_negative_original, n_original),
            n_retweet: t.retweets,
            n_negative_retweet: t.neg_retweets,
            pct_negative_retweets: (t.retweets > 0).then(|| pct(t.neg_retweets, t.retweets)),
            missing_meta: meta.is_none(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Document;

    fn doc(id: &str, party: &str, retweet: bool) -> Document {
        Document {
            id: id.into(),
            text: "x".into(),
            language: "de".into(),
            country: "DE".into(),
            author_id: "a".into(),
            party_id: party.into(),
            created_at: "2021-01-01T00:00:00Z".into(),
            is_retweet: retweet,
        }
    }

    fn loose() -> AggregationFilters {
        AggregationFilters { min_tweets: 0, ..Default::default() }
    }

    #[test]
    fn hand_counted_party() {
        let docs = vec![
            doc("a1", "p", false),
            doc("a2", "p", false),
            doc("a3", "p", false),
            doc("a4", "p", false),
            doc("a5", "p", false),
            doc("a6", "p", true),
        ];
        let labels: BTreeMap<String, u8> =
            [("a1", 1), ("a2", 0), ("a3", 1), ("a4", 0), ("a5", 0), ("a6", 1)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect();
        let agg = aggregate_parties(&Corpus::from_documents(docs), &labels, &PartyTable::new(), &loose()).unwrap();
        let p = &agg.parties[0];
        assert_eq!((p.n_total, p.n_original, p.n_negative_original), (6, 5, 2));
        assert_eq!(p.pct_negative, 40.0);
        assert_eq!(p.pct_negative_retweets, Some(100.0));
        assert!(p.missing_meta);
    }

    #[test]
    fn independents_and_unlabeled() {
        let docs = vec![doc("a", "", false), doc("b", "", false), doc("c", "p", false), doc("d", "p", false)];
        let labels: BTreeMap<String, u8> =
            [("a", 1), ("b", 1), ("c", 1)].into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        let agg = aggregate_parties(&Corpus::from_documents(docs.clone()), &labels, &PartyTable::new(), &loose()).unwrap();
        assert_eq!(agg.parties.len(), 1);
        assert_eq!(agg.n_independent, 2);
        assert_eq!(agg.n_unlabeled, 1);

        let keep = AggregationFilters { exclude_independents: false, ..loose() };
        let agg = aggregate_parties(&Corpus::from_documents(docs), &labels, &PartyTable::new(), &keep).unwrap();
        assert_eq!(agg.parties.len(), 2);
        assert_eq!(agg.parties[0].party_id, "");
    }

    #[test]
    fn retweets_folded_in_when_not_excluded() {
        let docs = vec![doc("a", "p", false), doc("b", "p", true)];
        let labels: BTreeMap<String, u8> = [("a", 0), ("b", 1)].into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        let f = AggregationFilters { exclude_retweets: false, ..loose() };
        let agg = aggregate_parties(&Corpus::from_documents(docs), &labels, &PartyTable::new(), &f).unwrap();
        assert_eq!(agg.parties[0].n_original, 2);
        assert_eq!(agg.parties[0].pct_negative, 50.0);
    }

    #[test]
    fn retweet_only_party_has_no_percentage() {
        let docs = vec![doc("a", "p", true)];
        let labels: BTreeMap<String, u8> = [("a".to_string(), 1)].into();
        let agg = aggregate_parties(&Corpus::from_documents(docs), &labels, &PartyTable::new(), &loose()).unwrap();
        assert!(agg.parties.is_empty());
        assert_eq!(agg.no_messages, vec!["p".to_string()]);
    }
}
