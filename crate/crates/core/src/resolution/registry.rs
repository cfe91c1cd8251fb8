use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::fold;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityClass {
    PartyOrMember,
    Government,
    Institution,
    ForeignInstitution,
}

impl EntityClass {
    pub fn parse(label: &str) -> Option<Self> {
        match fold(label).as_str() {
            "party or member" | "party" | "party member" => Some(Self::PartyOrMember),
            "government" => Some(Self::Government),
            "institution" => Some(Self::Institution),
            "foreign institution" => Some(Self::ForeignInstitution),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("cannot read registry: {0}")]
    Io(#[from] std::io::Error),
    #[error("registry line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("overlapping validity spans for alias {alias:?} ({country}): {first} and {second}")]
    Overlap {
        alias: String,
        country: String,
        first: String,
        second: String,
    },
}

/// A dated mapping from a surface form to an entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub alias: String,
    pub country: String,
    pub entity_class: EntityClass,
    pub canonical_entity: String,
    #[serde(default, deserialize_with = "empty_as_none")]
    pub party_id: Option<String>,
    pub valid_from: NaiveDate,
    pub valid_to: NaiveDate,
}

impl RegistryEntry {
    pub fn valid_at(&self, date: NaiveDate) -> bool {
        self.valid_from <= date && date <= self.valid_to
    }

    fn span(&self) -> String {
        format!("{}..{}", self.valid_from, self.valid_to)
    }
}

/// Who governed, for resolving references to "the government".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GovernmentSpan {
    pub country: String,
    /// Lead party; government references resolve to it.
    pub party_id: String,
    /// All governing parties, `+`-separated in the CSV.
    #[serde(default, deserialize_with = "plus_list")]
    pub coalition: Vec<String>,
    pub valid_from: NaiveDate,
    pub valid_to: NaiveDate,
}

impl GovernmentSpan {
    pub fn includes(&self, party: &str) -> bool {
        self.party_id == party || self.coalition.iter().any(|p| p == party)
    }
}

fn empty_as_none<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    let v: Option<String> = Option::deserialize(d)?;
    Ok(v.map(|s| s.trim().to_string()).filter(|s| !s.is_empty()))
}

fn plus_list<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<String>, D::Error> {
    let v: Option<String> = Option::deserialize(d)?;
    Ok(v.unwrap_or_default()
        .split('+')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect())
}

/// Immutable affiliation registry with temporal lookups.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    entries: Vec<RegistryEntry>,
    folded: Vec<String>,
    by_alias: HashMap<(String, String), Vec<usize>>,
    governments: Vec<GovernmentSpan>,
}

fn read_csv<T: serde::de::DeserializeOwned, R: Read>(r: R) -> Result<Vec<T>, RegistryError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut out = Vec::new();
    for rec in reader.deserialize() {
        out.push(rec.map_err(|e: csv::Error| RegistryError::Row {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

impl Registry {
    pub fn new(entries: Vec<RegistryEntry>, governments: Vec<GovernmentSpan>) -> Result<Self, RegistryError> {
        for (i, e) in entries.iter().enumerate() {
            let line = i as u64 + 2;
            if e.valid_from > e.valid_to {
                return Err(RegistryError::Row {
                    line,
                    message: format!("valid_from {} after valid_to {}", e.valid_from, e.valid_to),
                });
            }
            match (e.entity_class, &e.party_id) {
                (EntityClass::PartyOrMember, None) => {
                    return Err(RegistryError::Row {
                        line,
                        message: format!("party_or_member alias {:?} has no party_id", e.alias),
                    })
                }
                (EntityClass::Institution | EntityClass::ForeignInstitution, Some(_)) => {
                    return Err(RegistryError::Row {
                        line,
                        message: format!("institution alias {:?} cannot carry a party_id", e.alias),
                    })
                }
                _ => {}
            }
        }
        let folded: Vec<String> = entries.iter().map(|e| fold(&e.alias)).collect();
        let mut by_alias: HashMap<(String, String), Vec<usize>> = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            by_alias
                .entry((e.country.clone(), folded[i].clone()))
                .or_default()
                .push(i);
        }
        for ((country, alias), idxs) in &by_alias {
            for (k, &i) in idxs.iter().enumerate() {
                for &j in &idxs[k + 1..] {
                    let (a, b) = (&entries[i], &entries[j]);
                    if a.valid_from <= b.valid_to && b.valid_from <= a.valid_to {
                        return Err(RegistryError::Overlap {
                            alias: alias.clone(),
                            country: country.clone(),
                            first: a.span(),
                            second: b.span(),
                        });
                    }
                }
            }
        }
        let mut by_country: HashMap<&str, Vec<&GovernmentSpan>> = HashMap::new();
        for g in &governments {
            if g.valid_from > g.valid_to {
                return Err(RegistryError::Row {
                    line: 0,
                    message: format!("government span {}..{} is inverted", g.valid_from, g.valid_to),
                });
            }
            by_country.entry(&g.country).or_default().push(g);
        }
        for (country, spans) in by_country {
            for (k, a) in spans.iter().enumerate() {
                for b in &spans[k + 1..] {
                    if a.valid_from <= b.valid_to && b.valid_from <= a.valid_to {
                        return Err(RegistryError::Overlap {
                            alias: "<government>".into(),
                            country: country.to_string(),
                            first: format!("{}..{}", a.valid_from, a.valid_to),
                            second: format!("{}..{}", b.valid_from, b.valid_to),
                        });
                    }
                }
            }
        }
        Ok(Self {
            entries,
            folded,
            by_alias,
            governments,
        })
    }

    pub fn from_readers<R1: Read, R2: Read>(aliases: R1, governments: Option<R2>) -> Result<Self, RegistryError> {
        let entries = read_csv(aliases)?;
        let governments = match governments {
            Some(r) => read_csv(r)?,
            None => Vec::new(),
        };
        Self::new(entries, governments)
    }

    pub fn load(aliases: &Path, governments: Option<&Path>) -> Result<Self, RegistryError> {
        let a = std::fs::File::open(aliases)?;
        let g = governments.map(std::fs::File::open).transpose()?;
        Self::from_readers(a, g)
    }

    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    /// Entry whose folded alias equals `folded_alias` and which is valid on `date`.
    pub fn exact(&self, country: &str, folded_alias: &str, date: NaiveDate) -> Option<&RegistryEntry> {
        self.by_alias
            .get(&(country.to_string(), folded_alias.to_string()))?
            .iter()
            .map(|&i| &self.entries[i])
            .find(|e| e.valid_at(date))
    }

    /// Any entry for the alias, preferring one valid on `date`.
    pub fn any_for_alias(&self, country: &str, folded_alias: &str, date: Option<NaiveDate>) -> Option<&RegistryEntry> {
        let idxs = self.by_alias.get(&(country.to_string(), folded_alias.to_string()))?;
        let mut all = idxs.iter().map(|&i| &self.entries[i]);
        match date {
            Some(d) => idxs
                .iter()
                .map(|&i| &self.entries[i])
                .find(|e| e.valid_at(d))
                .or_else(|| all.next()),
            None => all.next(),
        }
    }

    /// Entries valid on `date`, paired with their folded alias.
    pub fn valid_at<'a, 'c>(
        &'a self,
        country: &'c str,
        date: NaiveDate,
    ) -> impl Iterator<Item = (&'a str, &'a RegistryEntry)> + use<'a, 'c> {
        self.entries
            .iter()
            .zip(&self.folded)
            .filter(move |(e, _)| e.country == country && e.valid_at(date))
            .map(|(e, f)| (f.as_str(), e))
    }

    pub fn government_at(&self, country: &str, date: NaiveDate) -> Option<&GovernmentSpan> {
        self.governments
            .iter()
            .find(|g| g.country == country && g.valid_from <= date && date <= g.valid_to)
    }

    /// The entry for `canonical_entity` valid on `date`, if any.
    pub fn entity_at(&self, country: &str, canonical_entity: &str, date: NaiveDate) -> Option<&RegistryEntry> {
        self.entries
            .iter()
            .find(|e| e.country == country && e.canonical_entity == canonical_entity && e.valid_at(date))
    }
}
