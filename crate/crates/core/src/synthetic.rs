//! Deterministic synthetic parliament with planted annotations.
//!
//! Every reference, its sentiment and its target party are chosen here, so
//! the index the pipeline should recover is known in advance. The generator
//! writes a corpus, registry, mock world, Gold file and the planted series.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gateway::{PlantedAnnotation, PlantedMention, PlantedWorld};
use crate::validation::{EntityTruth, GoldRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub speeches: usize,
    pub year_from: i32,
    pub year_to: i32,
    pub min_out_refs: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 20240601,
            speeches: 600,
            year_from: 2019,
            year_to: 2021,
            min_out_refs: 30,
        }
    }
}

pub const COUNTRY: &str = "HU";
pub const PARTIES: [&str; 5] = ["FIDESZ", "KDNP", "MSZP", "JOBBIK", "DK"];
const GOVERNMENT: [&str; 2] = ["FIDESZ", "KDNP"];

/// Speakers per party. The last entry changes party mid-period.
const MEMBERS: [(&str, &[&str]); 5] = [
    (
        "FIDESZ",
        &["Kocsis Máté", "Gulyás Gergely", "Németh Szilárd", "Szijjártó Péter"],
    ),
    (
        "KDNP",
        &["Semjén Zsolt", "Rétvári Bence", "Hargitai János", "Nacsa Lőrinc"],
    ),
    (
        "MSZP",
        &[
            "Tóth Bertalan",
            "Hiller István",
            "Bangóné Borbély Ildikó",
            "Kunhalmi Ágnes",
        ],
    ),
    (
        "JOBBIK",
        &["Jakab Péter", "Stummer János", "Brenner Koloman", "Dudás Róbert"],
    ),
    (
        "DK",
        &["Gyurcsány Ferenc", "Vadai Ágnes", "Arató Gergely", "Varju László"],
    ),
];

pub const SWITCHER: &str = "Kovács Anna";
const INDEPENDENT: &str = "Szél Bernadett";

/// Names of parties and leaders, each with the entity it denotes.
const PARTY_ALIASES: [(&str, &str, &str); 11] = [
    ("Fidesz", "Fidesz", "FIDESZ"),
    ("the governing party", "Fidesz", "FIDESZ"),
    ("KDNP", "KDNP", "KDNP"),
    ("Christian Democrats", "KDNP", "KDNP"),
    ("MSZP", "MSZP", "MSZP"),
    ("Hungarian Socialist Party", "MSZP", "MSZP"),
    ("Jobbik", "Jobbik", "JOBBIK"),
    ("Jobbik Movement", "Jobbik", "JOBBIK"),
    ("DK", "DK", "DK"),
    ("Democratic Coalition", "DK", "DK"),
    ("Orbán Viktor", "Orbán Viktor", "FIDESZ"),
];

/// Misspelt or shortened forms that should resolve by fuzzy match.
const VARIANTS: [(&str, &str); 8] = [
    ("Orban", "Orbán Viktor"),
    ("Viktor Orban", "Orbán Viktor"),
    ("Gyurcsany", "Gyurcsány Ferenc"),
    ("Gulyas Gergely", "Gulyás Gergely"),
    ("Christian Democrat", "Christian Democrats"),
    ("Socialist Party", "Hungarian Socialist Party"),
    ("Jakab", "Jakab Péter"),
    ("Vadai", "Vadai Ágnes"),
];

/// Actors outside the party index: (surface, registry class or mock label, spurious).
const OTHER_ACTORS: [(&str, &str, bool); 8] = [
    ("the Government", "government", false),
    ("the Prime Minister's Office", "government", false),
    ("the Constitutional Court", "institution", false),
    ("the European Commission", "foreign_institution", false),
    ("the State Audit Office", "institution", false),
    ("Brussels", "foreign institution", false),
    ("the Danube", "discard", true),
    ("wolves", "discard", true),
];

/// A party the registry does not know; resolution queues it for review.
const UNKNOWN_PARTY: &str = "Two-Tailed Dog Party";

/// Sentiment captions from the extraction guidance, `N` being the actor.
pub const ANCHORS: [&str; 11] = [
    "N is a complete disgrace; his actions are unforgivable and heinous.",
    "N's policy is catastrophic and shows her incompetence and lack of empathy.",
    "N's approach is flawed and disappointing; he must reconsider his stance.",
    "N's recent decision was short-sighted and not well-thought-out.",
    "N could have done better; the results were somewhat underwhelming.",
    "N presented the quarterly report as per the schedule.",
    "N made a decent effort, and there are some signs of improvement.",
    "N's initiative is somewhat effective; it's a step in the right direction.",
    "N's leadership has been strong and beneficial to our team.",
    "N's contribution has been outstanding and transformative for our project.",
    "N is an extraordinary visionary; their work has revolutionized our understanding and approach.",
];

const ADDRESSES: [&str; 4] = [
    "Dear Madam Speaker!",
    "Honourable House!",
    "Dear colleagues!",
    "Dear Minister!",
];

const FILLERS: [&str; 4] = [
    "The bill before us concerns the budget of the coming year.",
    "I would like to speak about the situation of families in the countryside.",
    "We have discussed this question in the committee for weeks.",
    "Let me turn to the figures published last month.",
];

fn anchor(sentiment: i8, name: &str) -> String {
    // Every caption starts with the placeholder.
    format!("{name}{}", &ANCHORS[(sentiment + 5) as usize][1..])
}

fn switch_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 7, 1).expect("valid date")
}

fn party_of_switcher(date: NaiveDate) -> &'static str {
    if date < switch_date() {
        "JOBBIK"
    } else {
        "DK"
    }
}

/// Mean planted tone of party `n` toward party `m` in `year`.
fn tone(n: &str, m: &str, year: i32, year_from: i32) -> f64 {
    let drift = f64::from(year - year_from);
    let gov_n = GOVERNMENT.contains(&n);
    let gov_m = GOVERNMENT.contains(&m);
    match (gov_n, gov_m) {
        (true, true) => 2.5,
        (true, false) => -1.5 - 0.75 * drift,
        (false, true) => -2.5 - 0.5 * drift,
        (false, false) => 0.5 - 0.5 * drift,
    }
}

#[derive(Debug, Clone)]
struct Speaker {
    name: &'static str,
    /// Fixed party, or `None` for the switcher and the independent.
    party: Option<&'static str>,
}

impl Speaker {
    fn party_at(&self, date: NaiveDate) -> Option<&'static str> {
        match (self.party, self.name) {
            (Some(p), _) => Some(p),
            (None, SWITCHER) => Some(party_of_switcher(date)),
            (None, _) => None,
        }
    }
}

#[derive(Debug, Clone)]
struct SpeechPlan {
    id: String,
    date: NaiveDate,
    speaker: Speaker,
    address_only: bool,
    mentions: Vec<PlannedMention>,
}

#[derive(Debug, Clone)]
struct PlannedMention {
    surface: String,
    sentiment: i8,
    explicit: bool,
    spurious: bool,
    /// Canonical registry entity, when the mention should resolve to one.
    canonical: Option<String>,
    /// Target party for party references.
    party: Option<&'static str>,
}

/// One planted party reference, as the index should see it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedReference {
    pub year: i32,
    pub referring_party: String,
    pub referred_party: String,
    pub sentiment: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCell {
    pub period: String,
    pub scope: String,
    pub eps: Option<f64>,
    pub n_refs: u64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSeries {
    pub granularity: String,
    pub min_out_refs: u64,
    pub cells: Vec<PlantedCell>,
}

/// Everything the generator produces, in memory.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub speeches_csv: String,
    pub registry_csv: String,
    pub governments_csv: String,
    pub world: PlantedWorld,
    pub gold: Vec<GoldRecord>,
    pub entity_truth: Vec<EntityTruth>,
    pub references: Vec<PlantedReference>,
    pub series: PlantedSeries,
    pub config: SynthConfig,
}

fn random_date(rng: &mut ChaCha8Rng, year: i32) -> NaiveDate {
    let start = NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year");
    let days = if NaiveDate::from_ymd_opt(year, 12, 31).expect("valid").ordinal() == 366 {
        366
    } else {
        365
    };
    start + chrono::Days::new(rng.random_range(0..days))
}

fn roster() -> Vec<Speaker> {
    let mut out: Vec<Speaker> = MEMBERS
        .iter()
        .flat_map(|(party, names)| {
            names.iter().map(move |n| Speaker {
                name: n,
                party: Some(party),
            })
        })
        .collect();
    out.push(Speaker {
        name: SWITCHER,
        party: None,
    });
    out.push(Speaker {
        name: INDEPENDENT,
        party: None,
    });
    out
}

/// Surface forms that denote party `m` on `date`, with their canonical entity.
fn surfaces_for(m: &str, date: NaiveDate) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = PARTY_ALIASES
        .iter()
        .filter(|(_, _, p)| *p == m)
        .map(|(s, c, _)| (s.to_string(), c.to_string()))
        .collect();
    for (party, names) in MEMBERS {
        if party == m {
            out.extend(names.iter().map(|n| (n.to_string(), n.to_string())));
        }
    }
    if party_of_switcher(date) == m {
        out.push((SWITCHER.to_string(), SWITCHER.to_string()));
    }
    let canonical: BTreeSet<String> = out.iter().map(|(s, _)| s.clone()).collect();
    for (variant, target) in VARIANTS {
        if canonical.contains(target) {
            let entity = out
                .iter()
                .find(|(s, _)| s == target)
                .map(|(_, c)| c.clone())
                .expect("present");
            out.push((variant.to_string(), entity));
        }
    }
    if m == "FIDESZ" {
        out.push(("the Prime Minister".into(), "Orbán Viktor".into()));
    }
    out
}

pub fn generate(config: &SynthConfig) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let years: Vec<i32> = (config.year_from..=config.year_to).collect();
    let roster = roster();

    let per_year = config.speeches / years.len();
    let mut plans: Vec<SpeechPlan> = Vec::new();
    for (yi, &year) in years.iter().enumerate() {
        let n = if yi + 1 == years.len() {
            config.speeches - per_year * (years.len() - 1)
        } else {
            per_year
        };
        let mut dated: Vec<(NaiveDate, Speaker, bool)> = (0..n)
            .map(|i| {
                // Round-robin keeps every party present in every year.
                let speaker = roster[i % roster.len()].clone();
                let address_only = rng.random_bool(0.03);
                (random_date(&mut rng, year), speaker, address_only)
            })
            .collect();
        dated.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.name.cmp(b.1.name)));
        for (date, speaker, address_only) in dated {
            plans.push(SpeechPlan {
                id: String::new(),
                date,
                speaker,
                address_only,
                mentions: Vec::new(),
            });
        }
    }
    for (i, p) in plans.iter_mut().enumerate() {
        p.id = format!("HU-{}-{:04}", p.date.year(), i + 1);
    }

    // Party references: a planned count per dyad and year, each placed in a
    // speech of the referring party.
    for &year in &years {
        for n in PARTIES {
            let slots: Vec<usize> = plans
                .iter()
                .enumerate()
                .filter(|(_, p)| p.date.year() == year && !p.address_only && p.speaker.party_at(p.date) == Some(n))
                .map(|(i, _)| i)
                .collect();
            assert!(!slots.is_empty(), "no speeches for {n} in {year}");
            for m in PARTIES {
                let count = if n == m {
                    rng.random_range(1..=3)
                } else {
                    rng.random_range(9..=20)
                };
                let mu = if n == m {
                    3.0
                } else {
                    tone(n, m, year, config.year_from)
                };
                for _ in 0..count {
                    let slot = *slots.choose(&mut rng).expect("non-empty");
                    let date = plans[slot].date;
                    let sentiment = (mu + f64::from(rng.random_range(-2i8..=2))).round().clamp(-5.0, 5.0) as i8;
                    let (surface, canonical) = surfaces_for(m, date).choose(&mut rng).expect("aliases").clone();
                    let explicit = !rng.random_bool(0.1);
                    plans[slot].mentions.push(PlannedMention {
                        surface,
                        sentiment,
                        explicit,
                        spurious: false,
                        canonical: Some(canonical),
                        party: Some(m),
                    });
                }
            }
        }
    }

    // Actors outside the index, including the independent MP's references.
    for plan in plans.iter_mut() {
        if plan.address_only {
            continue;
        }
        if plan.speaker.party_at(plan.date).is_none() {
            for m in ["FIDESZ", "MSZP"] {
                let date = plan.date;
                let (surface, canonical) = surfaces_for(m, date).choose(&mut rng).expect("aliases").clone();
                plan.mentions.push(PlannedMention {
                    surface,
                    sentiment: rng.random_range(-4..=1),
                    explicit: true,
                    spurious: false,
                    canonical: Some(canonical),
                    party: Some(m),
                });
            }
        }
        if rng.random_bool(0.35) {
            let (surface, _, spurious) = *OTHER_ACTORS.choose(&mut rng).expect("actors");
            plan.mentions.push(PlannedMention {
                surface: surface.into(),
                sentiment: if spurious { 0 } else { rng.random_range(-3..=2) },
                explicit: true,
                spurious,
                canonical: registry_canonical(surface),
                party: None,
            });
        }
        if rng.random_bool(0.02) {
            plan.mentions.push(PlannedMention {
                surface: UNKNOWN_PARTY.into(),
                sentiment: rng.random_range(-1..=2),
                explicit: true,
                spurious: false,
                canonical: None,
                party: None,
            });
        }
        plan.mentions.shuffle(&mut rng);
    }

    let speeches_csv = speeches_csv(&plans, &mut rng);
    let world = world(&plans);
    let references = planted_references(&plans);
    let series = planted_series(&references, config.min_out_refs);
    let gold = simulated_gold(&plans, &mut rng);
    let entity_truth = plans
        .iter()
        .flat_map(|p| {
            p.mentions.iter().enumerate().map(|(row, m)| EntityTruth {
                speech_id: p.id.clone(),
                row,
                canonical_entity: m.canonical.clone(),
            })
        })
        .collect();
    SyntheticCorpus {
        speeches_csv,
        registry_csv: registry_csv(config),
        governments_csv: format!(
            "country,party_id,coalition,valid_from,valid_to\n{COUNTRY},FIDESZ,FIDESZ+KDNP,{}-01-01,{}-12-31\n",
            config.year_from, config.year_to
        ),
        world,
        gold,
        entity_truth,
        references,
        series,
        config: config.clone(),
    }
}

/// Canonical entity for registry-known non-party actors.
fn registry_canonical(surface: &str) -> Option<String> {
    match surface {
        "the Government" | "the Prime Minister's Office" => Some("Government of Hungary".into()),
        "the Constitutional Court" => Some("Constitutional Court".into()),
        "the European Commission" => Some("European Commission".into()),
        _ => None,
    }
}

fn speeches_csv(plans: &[SpeechPlan], rng: &mut ChaCha8Rng) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "date", "speaker", "party", "text"])
        .expect("in-memory write");
    for p in plans {
        let mut sentences: Vec<String> = Vec::new();
        if p.address_only {
            sentences.push(ADDRESSES.choose(rng).expect("addresses").to_string());
            sentences.push("Dear colleagues!".into());
        } else {
            if rng.random_bool(0.5) {
                sentences.push(ADDRESSES.choose(rng).expect("addresses").to_string());
            }
            sentences.push(FILLERS.choose(rng).expect("fillers").to_string());
            for m in &p.mentions {
                if m.explicit {
                    sentences.push(anchor(m.sentiment, &m.surface));
                } else {
                    sentences.push(format!(
                        "Everyone here knows whom I mean. {}",
                        anchor(m.sentiment, "They")
                    ));
                }
            }
            sentences.push("Thank you for your attention.".into());
        }
        let party = p.speaker.party_at(p.date).unwrap_or("-");
        w.write_record([
            p.id.as_str(),
            &p.date.to_string(),
            p.speaker.name,
            party,
            &sentences.join(" "),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn world(plans: &[SpeechPlan]) -> PlantedWorld {
    let annotations = plans
        .iter()
        .filter(|p| !p.address_only)
        .map(|p| PlantedAnnotation {
            speech_id: p.id.clone(),
            mentions: p
                .mentions
                .iter()
                .map(|m| PlantedMention {
                    actor: m.surface.clone(),
                    context: if m.explicit {
                        format!("{} is discussed in the debate.", m.surface)
                    } else {
                        "Referred to by pronoun.".into()
                    },
                    rationale: format!("The speaker's tone toward {} is rated {}.", m.surface, m.sentiment),
                    sentiment: m.sentiment,
                    explicit: m.explicit,
                    spurious: m.spurious,
                })
                .collect(),
        })
        .collect();
    let mut classes = BTreeMap::new();
    for (surface, label, _) in OTHER_ACTORS {
        classes.insert(crate::resolution::fold(surface), label.replace('_', " "));
    }
    classes.insert(crate::resolution::fold(UNKNOWN_PARTY), "party or member".into());
    PlantedWorld { annotations, classes }
}

fn planted_references(plans: &[SpeechPlan]) -> Vec<PlantedReference> {
    plans
        .iter()
        .flat_map(|p| {
            let referring = p.speaker.party_at(p.date);
            p.mentions.iter().filter_map(move |m| {
                Some(PlantedReference {
                    year: p.date.year(),
                    referring_party: referring?.to_string(),
                    referred_party: m.party?.to_string(),
                    sentiment: m.sentiment,
                })
            })
        })
        .collect()
}

/// Yearly scores computed directly from the planted references.
pub fn planted_series(refs: &[PlantedReference], min_out_refs: u64) -> PlantedSeries {
    let years: BTreeSet<i32> = refs.iter().map(|r| r.year).collect();
    let mut cells = Vec::new();
    for year in years {
        let in_year: Vec<&PlantedReference> = refs.iter().filter(|r| r.year == year).collect();
        let total = in_year.len() as f64;
        let received = |m: &str| in_year.iter().filter(|r| r.referred_party == m).count() as f64;
        let speakers: BTreeSet<&str> = in_year.iter().map(|r| r.referring_party.as_str()).collect();
        let mut party_scores: Vec<(&str, f64, bool)> = Vec::new();
        for n in &speakers {
            let share_n = received(n) / total;
            let mut eps = 0.0;
            let mut out_refs = 0u64;
            for m in PARTIES.iter().filter(|m| *m != n) {
                let sents: Vec<f64> = in_year
                    .iter()
                    .filter(|r| r.referring_party == *n && r.referred_party == *m)
                    .map(|r| f64::from(r.sentiment))
                    .collect();
                if sents.is_empty() {
                    continue;
                }
                out_refs += sents.len() as u64;
                let like = sents.iter().sum::<f64>() / sents.len() as f64;
                eps -= like * (received(m) / total) / (1.0 - share_n);
            }
            let flagged = out_refs < min_out_refs;
            party_scores.push((n, eps, flagged));
            cells.push(PlantedCell {
                period: year.to_string(),
                scope: n.to_string(),
                eps: Some(eps),
                n_refs: out_refs,
                flagged,
            });
        }
        let included: Vec<&(&str, f64, bool)> = party_scores.iter().filter(|(_, _, f)| !f).collect();
        let mass: f64 = included.iter().map(|(n, _, _)| received(n) / total).sum();
        let parliament =
            (mass > 0.0).then(|| included.iter().map(|(n, e, _)| e * received(n) / total).sum::<f64>() / mass);
        cells.push(PlantedCell {
            period: year.to_string(),
            scope: "parliament".into(),
            eps: parliament,
            n_refs: in_year.len() as u64,
            flagged: parliament.is_none(),
        });
    }
    PlantedSeries {
        granularity: "year".into(),
        min_out_refs,
        cells,
    }
}

/// A human coder that misses some mentions, spells some differently and
/// rates some one point apart.
fn simulated_gold(plans: &[SpeechPlan], rng: &mut ChaCha8Rng) -> Vec<GoldRecord> {
    let mut out = Vec::new();
    for p in plans.iter().filter(|p| !p.address_only) {
        for m in &p.mentions {
            if m.spurious {
                continue;
            }
            let keep = if m.explicit { 0.85 } else { 0.5 };
            if !rng.random_bool(keep) {
                continue;
            }
            let sentiment = match rng.random_range(0..10) {
                0 | 1 => m.sentiment + 1,
                2 | 3 => m.sentiment - 1,
                _ => m.sentiment,
            }
            .clamp(-5, 5);
            let actor = match (&m.canonical, rng.random_bool(0.2)) {
                (Some(c), true) => c.clone(),
                _ => m.surface.clone(),
            };
            let record = GoldRecord {
                speech_id: p.id.clone(),
                coder: "coder1".into(),
                actor_surface: actor,
                sentiment,
            };
            if rng.random_bool(0.02) {
                out.push(record.clone());
            }
            out.push(record);
        }
    }
    out
}

fn registry_csv(config: &SynthConfig) -> String {
    let from = format!("{}-01-01", config.year_from);
    let to = format!("{}-12-31", config.year_to);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "alias",
        "country",
        "entity_class",
        "canonical_entity",
        "party_id",
        "valid_from",
        "valid_to",
    ])
    .expect("in-memory write");
    let mut row = |alias: &str, class: &str, canonical: &str, party: &str, from: &str, to: &str| {
        w.write_record([alias, COUNTRY, class, canonical, party, from, to])
            .expect("in-memory write");
    };
    for (alias, canonical, party) in PARTY_ALIASES {
        row(alias, "party_or_member", canonical, party, &from, &to);
    }
    for (party, names) in MEMBERS {
        for n in names {
            row(n, "party_or_member", n, party, &from, &to);
        }
    }
    let switch = switch_date();
    let before = (switch - chrono::Days::new(1)).to_string();
    row(SWITCHER, "party_or_member", SWITCHER, "JOBBIK", &from, &before);
    row(SWITCHER, "party_or_member", SWITCHER, "DK", &switch.to_string(), &to);
    row(
        "the Prime Minister",
        "party_or_member",
        "Orbán Viktor",
        "FIDESZ",
        &from,
        &to,
    );
    row("the Government", "government", "Government of Hungary", "", &from, &to);
    row(
        "the Prime Minister's Office",
        "government",
        "Government of Hungary",
        "",
        &from,
        &to,
    );
    row(
        "the Constitutional Court",
        "institution",
        "Constitutional Court",
        "",
        &from,
        &to,
    );
    row(
        "the European Commission",
        "foreign_institution",
        "European Commission",
        "",
        &from,
        &to,
    );
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub const CORPUS_MANIFEST: &str = r#"name = "synthetic-hu"
country = "HU"
year_from = 2019
year_to = 2021
format = "csv"
date_format = "%Y-%m-%d"
filter = "synthetic plenary speeches"

[mapping]
speech_id = "id"
date = "date"
speaker_name = "speaker"
speaker_party = "party"
text = "text"
"#;

pub const VOCATIVES: &str = r#"HU = ['^(dear|honourable)\b[^.!?]*[!.]$']
"#;

/// Pipeline config for the written corpus: a faulty mock extractor, a clean
/// mock verifier and automatic Supergold decisions.
pub const PIPELINE_CONFIG: &str = r#"work_dir = "work"
backend = "mock-extract"
verifier = "mock-verify"

[context]
country = "HU"
year_from = 2019
year_to = 2021

[corpus]
inputs = [{ manifest = "corpus.toml", data = "speeches.csv" }]
vocatives = "vocatives.toml"

[registry]
aliases = "registry.csv"
governments = "governments.csv"

[backends.mock-extract]
kind = "mock"
world = "planted_world.json"
faults = { prose_fraction = 0.05, bad_sentiment_fraction = 0.02, unrecoverable_fraction = 0.0, seed = 11 }

[backends.mock-verify]
kind = "mock"
world = "planted_world.json"

[extract]
concurrency = 8
base_delay_ms = 1
max_delay_ms = 5

[index]
granularity = "year"
min_out_refs = 30

[validate]
k = 200
seed = 7
gold = "gold.csv"
entity_truth = "entity_truth.csv"
auto_confirm = true
model_label = "mock"
"#;

/// Writes the corpus files into `dir`.
pub fn write(corpus: &SyntheticCorpus, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("speeches.csv"), &corpus.speeches_csv)?;
    std::fs::write(dir.join("corpus.toml"), CORPUS_MANIFEST)?;
    std::fs::write(dir.join("vocatives.toml"), VOCATIVES)?;
    std::fs::write(dir.join("elitepol.toml"), PIPELINE_CONFIG)?;
    std::fs::write(dir.join("registry.csv"), &corpus.registry_csv)?;
    std::fs::write(dir.join("governments.csv"), &corpus.governments_csv)?;
    std::fs::write(dir.join("planted_world.json"), pretty_json(&corpus.world))?;
    std::fs::write(dir.join("planted_series.json"), pretty_json(&corpus.series))?;
    std::fs::write(dir.join("gold.csv"), crate::validation::gold_csv(&corpus.gold))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for t in &corpus.entity_truth {
        w.serialize(t).map_err(std::io::Error::other)?;
    }
    std::fs::write(
        dir.join("entity_truth.csv"),
        w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?,
    )?;
    Ok(())
}

fn pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resolution::{fuzzy_match, Registry};

    #[test]
    fn deterministic() {
        let a = generate(&SynthConfig::default());
        let b = generate(&SynthConfig::default());
        assert_eq!(a.speeches_csv, b.speeches_csv);
        assert_eq!(a.series, b.series);
        assert_eq!(a.gold, b.gold);
    }

    #[test]
    fn anchors_substitute_the_actor() {
        assert_eq!(
            anchor(-5, "Fidesz"),
            "Fidesz is a complete disgrace; his actions are unforgivable and heinous."
        );
        assert!(anchor(4, "DK").starts_with("DK's contribution"));
    }

    #[test]
    fn every_surface_resolves_to_its_entity() {
        let reg = Registry::from_readers(registry_csv(&SynthConfig::default()).as_bytes(), None::<&[u8]>).unwrap();
        for date in [
            NaiveDate::from_ymd_opt(2019, 3, 1).unwrap(),
            NaiveDate::from_ymd_opt(2021, 3, 1).unwrap(),
        ] {
            for m in PARTIES {
                for (surface, canonical) in surfaces_for(m, date) {
                    let folded = crate::resolution::fold(&surface);
                    let best = reg
                        .valid_at(COUNTRY, date)
                        .map(|(alias, e)| (fuzzy_match(alias, &folded), e))
                        .max_by(|a, b| a.0.total_cmp(&b.0))
                        .unwrap();
                    assert!(best.0 >= 0.85, "{surface} scores {}", best.0);
                    assert_eq!(best.1.canonical_entity, canonical, "{surface}");
                    assert_eq!(best.1.party_id.as_deref(), Some(m), "{surface}");
                }
            }
        }
    }

    #[test]
    fn other_actors_never_resolve_to_a_party() {
        let reg = Registry::from_readers(registry_csv(&SynthConfig::default()).as_bytes(), None::<&[u8]>).unwrap();
        let date = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
        let others = OTHER_ACTORS.iter().map(|(s, _, _)| *s).chain([UNKNOWN_PARTY]);
        for surface in others {
            let folded = crate::resolution::fold(surface);
            if let Some(e) = reg.exact(COUNTRY, &folded, date) {
                assert_eq!(Some(e.canonical_entity.clone()), registry_canonical(surface));
                continue;
            }
            for (alias, e) in reg.valid_at(COUNTRY, date) {
                let s = fuzzy_match(alias, &folded);
                assert!(s < 0.85, "{surface} reaches {alias} ({}) at {s}", e.canonical_entity);
            }
        }
    }

    #[test]
    fn series_cells_are_unflagged() {
        let c = generate(&SynthConfig::default());
        assert_eq!(c.series.cells.len(), 3 * 6);
        assert!(c.series.cells.iter().all(|cell| !cell.flagged && cell.eps.is_some()));
    }
}
