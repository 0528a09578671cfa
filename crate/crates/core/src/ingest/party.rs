use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{normalize_country, IngestError};

/// The eleven CHES party families, in CHES code order (1..=11).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartyFamily {
    RadicalRight,
    Conservative,
    Liberal,
    ChristianDemocrat,
    Socialist,
    RadicalLeft,
    Green,
    Regionalist,
    NoFamily,
    Confessional,
    AgrarianCenter,
}

impl PartyFamily {
    pub const ALL: [PartyFamily; 11] = [
        PartyFamily::RadicalRight,
        PartyFamily::Conservative,
        PartyFamily::Liberal,
        PartyFamily::ChristianDemocrat,
        PartyFamily::Socialist,
        PartyFamily::RadicalLeft,
        PartyFamily::Green,
        PartyFamily::Regionalist,
        PartyFamily::NoFamily,
        PartyFamily::Confessional,
        PartyFamily::AgrarianCenter,
    ];

    pub fn ches_code(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_ches_code(code: u8) -> Option<Self> {
        Self::ALL.get(usize::from(code).checked_sub(1)?).copied()
    }

    pub fn key(self) -> &'static str {
        match self {
            PartyFamily::RadicalRight => "radical_right",
            PartyFamily::Conservative => "conservative",
            PartyFamily::Liberal => "liberal",
            PartyFamily::ChristianDemocrat => "christian_democrat",
            PartyFamily::Socialist => "socialist",
            PartyFamily::RadicalLeft => "radical_left",
            PartyFamily::Green => "green",
            PartyFamily::Regionalist => "regionalist",
            PartyFamily::NoFamily => "no_family",
            PartyFamily::Confessional => "confessional",
            PartyFamily::AgrarianCenter => "agrarian_center",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PartyFamily::RadicalRight => "Radical right",
            PartyFamily::Conservative => "Conservative",
            PartyFamily::Liberal => "Liberal",
            PartyFamily::ChristianDemocrat => "Christian democratic",
            PartyFamily::Socialist => "Socialist",
            PartyFamily::RadicalLeft => "Radical left",
            PartyFamily::Green => "Green",
            PartyFamily::Regionalist => "Regionalist",
            PartyFamily::NoFamily => "No family",
            PartyFamily::Confessional => "Confessional",
            PartyFamily::AgrarianCenter => "Agrarian/Center",
        }
    }
}

impl fmt::Display for PartyFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for PartyFamily {
    type Err = String;

    /// Accepts the CHES numeric code, the snake_case key, or the display label.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Ok(code) = s.parse::<u8>() {
            return Self::from_ches_code(code).ok_or_else(|| format!("unknown family code {code}"));
        }
        let norm = s.to_ascii_lowercase().replace([' ', '-', '/'], "_");
        Self::ALL
            .into_iter()
            .find(|f| f.key() == norm || f.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown party family `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartyMeta {
    pub party_id: String,
    pub country: String,
    /// 0 = extreme left, 10 = extreme right.
    pub lrgen: f64,
    pub govt: u8,
    pub antielite_salience: f64,
    pub family: PartyFamily,
    pub display_name: String,
}

pub type PartyTable = BTreeMap<String, PartyMeta>;

#[derive(Debug, Deserialize)]
struct PartyRow {
    party_id: String,
    country: String,
    lrgen: f64,
    govt: String,
    antielite_salience: f64,
    family: String,
    #[serde(default)]
    name: String,
}

impl PartyMeta {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=10.0).contains(&self.lrgen) {
            return Err(format!("lrgen {} outside [0, 10]", self.lrgen));
        }
        if !(0.0..=10.0).contains(&self.antielite_salience) {
            return Err(format!("antielite_salience {} outside [0, 10]", self.antielite_salience));
        }
        if self.govt > 1 {
            return Err(format!("govt {} is not binary", self.govt));
        }
        Ok(())
    }
}

pub fn ingest_party_meta(path: &Path) -> Result<PartyTable, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ingest_party_meta_reader(file)
}

/// Parses `party_id,country,lrgen,govt,antielite_salience,family,name`. Invalid rows are errors.
pub fn ingest_party_meta_reader<R: Read>(reader: R) -> Result<PartyTable, IngestError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = PartyTable::new();
    for (i, rec) in rdr.deserialize::<PartyRow>().enumerate() {
        let row = i + 2;
        let invalid = |message: String| IngestError::InvalidRow { row, message };
        let rec = rec.map_err(|e| invalid(e.to_string()))?;
        let country = normalize_country(&rec.country)
            .ok_or_else(|| invalid(format!("invalid country code `{}`", rec.country)))?;
        let govt = match rec.govt.trim() {
            "0" => 0,
            "1" => 1,
            g => return Err(invalid(format!("govt `{g}` is not 0 or 1"))),
        };
        let family = rec.family.parse::<PartyFamily>().map_err(invalid)?;
        let meta = PartyMeta {
            display_name: if rec.name.is_empty() { rec.party_id.clone() } else { rec.name },
            party_id: rec.party_id,
            country,
            lrgen: rec.lrgen,
            govt,
            antielite_salience: rec.antielite_salience,
            family,
        };
        meta.validate().map_err(invalid)?;
        if out.insert(meta.party_id.clone(), meta).is_some() {
            return Err(invalid("duplicate party_id".into()));
        }
    }
    Ok(out)
}

/// Writes the table in the layout [`ingest_party_meta_reader`] reads.
pub fn write_party_meta_csv<W: Write>(out: W, table: &PartyTable) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["party_id", "country", "lrgen", "govt", "antielite_salience", "family", "name"])?;
    for m in table.values() {
        w.write_record([
            m.party_id.clone(),
            m.country.clone(),
            m.lrgen.to_string(),
            m.govt.to_string(),
            m.antielite_salience.to_string(),
            m.family.key().to_string(),
            m.display_name.clone(),
        ])?;
    }
    w.flush().map_err(|source| IngestError::Io { path: "<party csv>".into(), source })?;
    Ok(())
}
