//! Seeded synthetic party panels and message corpora with known parameters.
//!
//! The generator is the ground truth for regression tests: every coefficient,
//! country effect, and family offset used to produce the data is returned
//! alongside it.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::ingest::{Corpus, Document, PartyFamily, PartyMeta, PartyTable};
use crate::study::PartyAggregate;

/// Nineteen EU member-state codes and a language spoken in each.
pub const PANEL_COUNTRIES: [(&str, &str); 19] = [
    ("AT", "de"),
    ("BE", "nl"),
    ("BG", "bg"),
    ("CZ", "cs"),
    ("DE", "de"),
    ("DK", "da"),
    ("EL", "el"),
    ("ES", "es"),
    ("FI", "fi"),
    ("FR", "fr"),
    ("HU", "hu"),
    ("IE", "en"),
    ("IT", "it"),
    ("LT", "lt"),
    ("NL", "nl"),
    ("PL", "pl"),
    ("PT", "pt"),
    ("SE", "sv"),
    ("UK", "en"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct PanelSpec {
    pub n_parties: usize,
    pub n_countries: usize,
    pub intercept: f64,
    pub beta_govt: f64,
    pub beta_antielite: f64,
    pub beta_extreme: f64,
    pub beta_left_right: f64,
    /// Added to the expected percentage of every party in the family.
    pub family_offsets: BTreeMap<PartyFamily, f64>,
    pub country_effect_sd: f64,
    pub noise_sd: f64,
    /// Inclusive range of original messages per party.
    pub originals: (u64, u64),
    pub seed: u64,
}

impl Default for PanelSpec {
    fn default() -> Self {
        PanelSpec {
            n_parties: 151,
            n_countries: 19,
            intercept: 12.0,
            beta_govt: -6.0,
            beta_antielite: 1.5,
            beta_extreme: 1.6,
            beta_left_right: 0.0,
            family_offsets: BTreeMap::new(),
            country_effect_sd: 2.0,
            noise_sd: 2.0,
            originals: (2_000, 40_000),
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub meta: PartyTable,
    /// Sorted by party id.
    pub aggregates: Vec<PartyAggregate>,
    pub country_effects: BTreeMap<String, f64>,
    /// Noise-free expected percentage per party.
    pub expected: BTreeMap<String, f64>,
}

impl Panel {
    /// Noise-free expectation for `meta` under `spec`, with its country effect.
    pub fn expectation(&self, spec: &PanelSpec, meta: &PartyMeta) -> f64 {
        expected_pct(spec, meta, self.country_effects[&meta.country])
    }
}

fn expected_pct(spec: &PanelSpec, m: &PartyMeta, country_effect: f64) -> f64 {
    spec.intercept
        + country_effect
        + spec.beta_govt * f64::from(m.govt)
        + spec.beta_antielite * m.antielite_salience
        + spec.beta_extreme * (5.0 - m.lrgen).abs()
        + spec.beta_left_right * m.lrgen
        + spec.family_offsets.get(&m.family).copied().unwrap_or(0.0)
}

/// Generates party metadata and aggregates.
///
/// Parties are dealt round-robin to countries and families, so every country
/// and (with at least 11 parties) every family is present. The percentage is
/// `expected + N(0, noise_sd)`, clamped to [0, 100] and rounded to whole
/// negative-message counts.
pub fn party_panel(spec: &PanelSpec) -> Panel {
    assert!(spec.n_countries >= 1 && spec.n_countries <= PANEL_COUNTRIES.len());
    assert!(spec.originals.0 >= 1 && spec.originals.0 <= spec.originals.1);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let countries = &PANEL_COUNTRIES[..spec.n_countries];

    let country_noise = Normal::new(0.0, spec.country_effect_sd).expect("sd >= 0");
    let country_effects: BTreeMap<String, f64> = countries
        .iter()
        .map(|(c, _)| (c.to_string(), country_noise.sample(&mut rng)))
        .collect();

    let mut families: Vec<PartyFamily> =
        (0..spec.n_parties).map(|i| PartyFamily::ALL[i % PartyFamily::ALL.len()]).collect();
    families.shuffle(&mut rng);

    let noise = Normal::new(0.0, spec.noise_sd).expect("sd >= 0");
    let mut meta = PartyTable::new();
    let mut aggregates = Vec::with_capacity(spec.n_parties);
    let mut expected = BTreeMap::new();
    let mut per_country = vec![0usize; countries.len()];
    for (i, family) in families.into_iter().enumerate() {
        let ci = i % countries.len();
        per_country[ci] += 1;
        let country = countries[ci].0;
        let party_id = format!("{country}-{:02}", per_country[ci]);
        let m = PartyMeta {
            party_id: party_id.clone(),
            country: country.to_string(),
            lrgen: round2(rng.random_range(0.0..=10.0)),
            govt: u8::from(rng.random_bool(0.35)),
            antielite_salience: round2(rng.random_range(0.0..=10.0)),
            family,
            display_name: format!("Party {party_id}"),
        };
        let mu = expected_pct(spec, &m, country_effects[country]);
        let y = (mu + noise.sample(&mut rng)).clamp(0.0, 100.0);

        let n_original = rng.random_range(spec.originals.0..=spec.originals.1);
        let n_negative_original = ((y / 100.0) * n_original as f64).round() as u64;
        let n_retweet = rng.random_range(0..=n_original / 2);
        let n_negative_retweet = ((y / 250.0) * n_retweet as f64).round() as u64;
        aggregates.push(PartyAggregate {
            party_id: party_id.clone(),
            country: country.to_string(),
            n_total: n_original + n_retweet,
            n_original,
            n_negative_original,
            pct_negative: 100.0 * n_negative_original as f64 / n_original as f64,
            n_retweet,
            n_negative_retweet,
            pct_negative_retweets: (n_retweet > 0)
                .then(|| 100.0 * n_negative_retweet as f64 / n_retweet as f64),
            missing_meta: false,
        });
        expected.insert(party_id.clone(), mu);
        meta.insert(party_id, m);
    }
    aggregates.sort_by(|a, b| a.party_id.cmp(&b.party_id));
    Panel { meta, aggregates, country_effects, expected }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Expands a panel into individual messages whose labels reproduce each
/// party's aggregate counts exactly (`messages_per_party` scales them down
/// first). Returns the corpus and the doc id -> label map.
pub fn panel_corpus(panel: &Panel, messages_per_party: u64, seed: u64) -> (Corpus, BTreeMap<String, u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lang: BTreeMap<&str, &str> = PANEL_COUNTRIES.iter().copied().collect();
    let mut docs = Vec::new();
    let mut labels = BTreeMap::new();
    for a in &panel.aggregates {
        let scale = |n: u64, of: u64| ((n as f64 / of.max(1) as f64) * messages_per_party as f64).round() as u64;
        let n_orig = scale(a.n_original, a.n_total).max(1);
        let n_rt = messages_per_party.saturating_sub(n_orig);
        let neg_orig = ((a.pct_negative / 100.0) * n_orig as f64).round() as u64;
        let neg_rt = a.pct_negative_retweets.map_or(0, |p| ((p / 100.0) * n_rt as f64).round() as u64);

        let mut flags: Vec<(bool, u8)> = Vec::with_capacity((n_orig + n_rt) as usize);
        flags.extend((0..n_orig).map(|k| (false, u8::from(k < neg_orig))));
        flags.extend((0..n_rt).map(|k| (true, u8::from(k < neg_rt))));
        flags.shuffle(&mut rng);
        for (k, (retweet, label)) in flags.into_iter().enumerate() {
            let id = format!("{}-{k:05}", a.party_id);
            let text = if retweet {
                format!("RT @mp{}: synthetic message {k}", k % 7)
            } else {
                format!("synthetic message {k} from {}", a.party_id)
            };
            docs.push(Document {
                id: id.clone(),
                text,
                language: lang.get(a.country.as_str()).copied().unwrap_or("en").to_string(),
                country: a.country.clone(),
                author_id: format!("{}-mp{}", a.party_id, k % 5),
                party_id: a.party_id.clone(),
                created_at: format!("2021-{:02}-{:02}T12:00:00Z", 1 + k % 12, 1 + k % 28),
                is_retweet: retweet,
            });
            labels.insert(id, label);
        }
    }
    (Corpus::from_documents(docs), labels)
}
