//! Dyadic aggregation of party references and the Elite Polarization Score.
//!
//! For a period, `like(n→m)` is the mean sentiment of party n's references
//! to party m and `share(m)` is m's fraction of all party-directed
//! references. The party score is
//!
//! ```text
//! eps(n) = Σ_{m≠n} −like(n→m) · share(m) / (1 − share(n))
//! ```
//!
//! and the parliament score is the share-weighted mean of party scores. The
//! weight `share(m) / (1 − share(n))` is evaluated as
//! `received(m) / (total − received(n))`, which is the same ratio without the
//! rounding of two divisions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::resolution::ResolvedReference;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Quarter,
    Year,
}

impl Granularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Quarter => "quarter",
            Granularity::Year => "year",
        }
    }
}

impl std::str::FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "quarter" => Ok(Self::Quarter),
            "year" => Ok(Self::Year),
            other => Err(format!("unknown granularity {other:?} (expected quarter or year)")),
        }
    }
}

/// A calendar year or calendar quarter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Period {
    pub year: i32,
    /// 1..=4 for quarterly periods.
    pub quarter: Option<u8>,
}

impl Period {
    pub fn of(date: NaiveDate, granularity: Granularity) -> Self {
        let quarter = match granularity {
            Granularity::Year => None,
            Granularity::Quarter => Some(((date.month0() / 3) + 1) as u8),
        };
        Self {
            year: date.year(),
            quarter,
        }
    }

    pub fn year(year: i32) -> Self {
        Self { year, quarter: None }
    }

    pub fn granularity(&self) -> Granularity {
        if self.quarter.is_some() {
            Granularity::Quarter
        } else {
            Granularity::Year
        }
    }
}

impl std::fmt::Display for Period {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.quarter {
            Some(q) => write!(f, "{}Q{q}", self.year),
            None => write!(f, "{}", self.year),
        }
    }
}

impl std::str::FromStr for Period {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("bad period label {s:?}");
        match s.split_once('Q') {
            Some((y, q)) => {
                let quarter: u8 = q.parse().map_err(|_| bad())?;
                if !(1..=4).contains(&quarter) {
                    return Err(bad());
                }
                Ok(Self {
                    year: y.parse().map_err(|_| bad())?,
                    quarter: Some(quarter),
                })
            }
            None => Ok(Self::year(s.parse().map_err(|_| bad())?)),
        }
    }
}

impl Serialize for Period {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Period {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A party-to-party reference reduced to what the index needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartyReference {
    pub period: Period,
    pub referring_party: Option<String>,
    pub referred_party: String,
    pub sentiment: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadAggregate {
    pub period: Period,
    pub referring_party: String,
    pub referred_party: String,
    pub ref_count: u64,
    pub sentiment_sum: i64,
    /// Mean sentiment of the references.
    pub like: f64,
    /// Population standard deviation of the sentiments (diagnostic).
    pub sd: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PeriodShares {
    /// References received per party, from all speakers.
    pub received: BTreeMap<String, u64>,
    pub total: u64,
}

impl PeriodShares {
    pub fn received(&self, party: &str) -> u64 {
        self.received.get(party).copied().unwrap_or(0)
    }

    pub fn share(&self, party: &str) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.received(party) as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregationDiagnostics {
    pub missing_referring_party: usize,
    pub excluded_non_party: usize,
    pub self_references: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Aggregation {
    pub dyads: BTreeMap<(Period, String, String), DyadAggregate>,
    pub shares: BTreeMap<Period, PeriodShares>,
    pub diagnostics: AggregationDiagnostics,
}

impl Aggregation {
    pub fn periods(&self) -> impl Iterator<Item = &Period> {
        self.shares.keys()
    }

    pub fn dyad(&self, period: Period, n: &str, m: &str) -> Option<&DyadAggregate> {
        self.dyads.get(&(period, n.to_string(), m.to_string()))
    }

    /// Parties that made at least one reference in `period`.
    pub fn referring_parties(&self, period: Period) -> BTreeSet<&str> {
        self.dyads
            .range((period, String::new(), String::new())..)
            .take_while(|((p, _, _), _)| *p == period)
            .map(|((_, n, _), _)| n.as_str())
            .collect()
    }
}

/// Builds dyad cells (self-cells included) and reference shares.
pub fn aggregate(refs: &[PartyReference]) -> Aggregation {
    let mut agg = Aggregation::default();
    let mut squares: BTreeMap<(Period, String, String), i64> = BTreeMap::new();
    for r in refs {
        let Some(n) = &r.referring_party else {
            agg.diagnostics.missing_referring_party += 1;
            continue;
        };
        let key = (r.period, n.clone(), r.referred_party.clone());
        let cell = agg.dyads.entry(key.clone()).or_insert_with(|| DyadAggregate {
            period: r.period,
            referring_party: n.clone(),
            referred_party: r.referred_party.clone(),
            ref_count: 0,
            sentiment_sum: 0,
            like: 0.0,
            sd: 0.0,
        });
        cell.ref_count += 1;
        cell.sentiment_sum += i64::from(r.sentiment);
        *squares.entry(key).or_default() += i64::from(r.sentiment) * i64::from(r.sentiment);
        if *n == r.referred_party {
            agg.diagnostics.self_references += 1;
        }
        let shares = agg.shares.entry(r.period).or_default();
        *shares.received.entry(r.referred_party.clone()).or_default() += 1;
        shares.total += 1;
    }
    for (key, cell) in agg.dyads.iter_mut() {
        let count = cell.ref_count as f64;
        cell.like = cell.sentiment_sum as f64 / count;
        let mean_sq = squares[key] as f64 / count;
        cell.sd = (mean_sq - cell.like * cell.like).max(0.0).sqrt();
    }
    agg
}

/// Filters resolved references down to party dyads and aggregates them.
pub fn aggregate_dyads(refs: &[ResolvedReference], granularity: Granularity, government_as_party: bool) -> Aggregation {
    let mut excluded = 0;
    let party_refs: Vec<PartyReference> = refs
        .iter()
        .filter_map(|r| {
            if !r.is_party_dyad(government_as_party) {
                excluded += 1;
                return None;
            }
            Some(PartyReference {
                period: Period::of(r.date, granularity),
                referring_party: r.referring_party.clone(),
                referred_party: r.referred_party.clone()?,
                sentiment: r.mention.sentiment,
            })
        })
        .collect();
    let mut agg = aggregate(&party_refs);
    agg.diagnostics.excluded_non_party = excluded;
    agg
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scope {
    Party(String),
    Parliament,
}

impl std::fmt::Display for Scope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scope::Party(p) => f.write_str(p),
            Scope::Parliament => f.write_str("parliament"),
        }
    }
}

impl Serialize for Scope {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Scope {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(if s == "parliament" {
            Scope::Parliament
        } else {
            Scope::Party(s)
        })
    }
}

/// One term of a score, kept for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub party: String,
    /// `like(n→m)` for party records, the party score for parliament records.
    /// `None` marks an out-party that n never referred to.
    pub value: Option<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpsFlags {
    pub insufficient_data: bool,
    pub degenerate_share: bool,
}

impl EpsFlags {
    pub fn any(&self) -> bool {
        self.insufficient_data || self.degenerate_share
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.insufficient_data {
            parts.push("insufficient-data");
        }
        if self.degenerate_share {
            parts.push("degenerate-share");
        }
        parts.join("|")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsRecord {
    pub period: Period,
    pub scope: Scope,
    pub eps: Option<f64>,
    /// Out-references for a party, all party references for parliament.
    pub n_refs: u64,
    pub components: Vec<Component>,
    pub flags: EpsFlags,
    /// Parliament only: total share of the included parties.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub renormalization: Option<f64>,
}

impl EpsRecord {
    pub fn weight_sum(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexOptions {
    pub granularity: Granularity,
    /// Out-references below which a party record is flagged.
    pub min_out_refs: u64,
    pub government_as_party: bool,
}

impl Default for IndexOptions {
    fn default() -> Self {
        Self {
            granularity: Granularity::Year,
            min_out_refs: 30,
            government_as_party: false,
        }
    }
}

fn unsigned_zero(x: f64) -> f64 {
    x + 0.0
}

/// Party-level score for `party` in `period`.
pub fn eps_party(party: &str, period: Period, agg: &Aggregation, min_out_refs: u64) -> EpsRecord {
    let empty = PeriodShares::default();
    let shares = agg.shares.get(&period).unwrap_or(&empty);
    let out_total = shares.total - shares.received(party);
    let mut out_refs = 0;
    let mut components = Vec::new();
    // Accumulates −like·received; dividing by the out-party total once
    // applies the share / (1 − share_n) weight.
    let mut sum = 0.0;
    for (m, &received) in &shares.received {
        if m == party || received == 0 {
            continue;
        }
        let weight = if out_total == 0 {
            0.0
        } else {
            received as f64 / out_total as f64
        };
        let like = agg.dyad(period, party, m).map(|d| {
            out_refs += d.ref_count;
            d.like
        });
        if let Some(l) = like {
            sum += -l * received as f64;
        }
        components.push(Component {
            party: m.clone(),
            value: like,
            weight,
        });
    }
    let degenerate = out_total == 0;
    EpsRecord {
        period,
        scope: Scope::Party(party.to_string()),
        eps: if degenerate {
            None
        } else {
            Some(unsigned_zero(sum / out_total as f64))
        },
        n_refs: out_refs,
        components,
        flags: EpsFlags {
            insufficient_data: out_refs < min_out_refs,
            degenerate_share: degenerate,
        },
        renormalization: None,
    }
}

/// Share-weighted mean of the defined, unflagged party scores of `period`.
pub fn eps_parliament(period: Period, party_records: &[EpsRecord], shares: &PeriodShares) -> EpsRecord {
    let included: Vec<(&str, f64, u64)> = party_records
        .iter()
        .filter(|r| r.period == period && !r.flags.any())
        .filter_map(|r| match (&r.scope, r.eps) {
            (Scope::Party(p), Some(eps)) => Some((p.as_str(), eps, shares.received(p))),
            _ => None,
        })
        .collect();
    let mass: u64 = included.iter().map(|(_, _, r)| r).sum();
    let mut record = EpsRecord {
        period,
        scope: Scope::Parliament,
        eps: None,
        n_refs: shares.total,
        components: Vec::new(),
        flags: EpsFlags::default(),
        renormalization: None,
    };
    if mass == 0 {
        record.flags.insufficient_data = true;
        return record;
    }
    // Weighting by received counts and dividing once equals the renormalized
    // share weighting.
    let mut sum = 0.0;
    for (party, eps, received) in included {
        sum += eps * received as f64;
        record.components.push(Component {
            party: party.to_string(),
            value: Some(eps),
            weight: received as f64 / mass as f64,
        });
    }
    record.eps = Some(unsigned_zero(sum / mass as f64));
    record.renormalization = Some(mass as f64 / shares.total as f64);
    record
}

/// Every party record followed by the parliament record, per period.
pub fn compute_index(agg: &Aggregation, min_out_refs: u64) -> Vec<EpsRecord> {
    let mut out = Vec::new();
    for (&period, shares) in &agg.shares {
        let parties: Vec<EpsRecord> = agg
            .referring_parties(period)
            .into_iter()
            .map(|n| eps_party(n, period, agg, min_out_refs))
            .collect();
        let parliament = eps_parliament(period, &parties, shares);
        out.extend(parties);
        out.push(parliament);
    }
    out
}

fn fmt_f64(x: Option<f64>) -> String {
    x.map(|v| format!("{}", unsigned_zero(v))).unwrap_or_default()
}

pub const SERIES_HEADER: &str = "period,granularity,scope,eps,n_refs,flags";

/// CSV time series, one row per record, in record order.
pub fn series_csv(records: &[EpsRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SERIES_HEADER.split(',')).expect("in-memory write");
    for r in records {
        w.write_record([
            r.period.to_string(),
            r.period.granularity().as_str().to_string(),
            r.scope.to_string(),
            fmt_f64(r.eps),
            r.n_refs.to_string(),
            r.flags.label(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

#[derive(Serialize)]
struct SeriesPoint<'a> {
    period: String,
    eps: Option<f64>,
    n_refs: u64,
    flags: &'a str,
}

/// Plot-ready JSON: `{"series": {scope: [{period, eps, n_refs, flags}]}}`.
pub fn series_json(records: &[EpsRecord]) -> String {
    let labels: Vec<String> = records.iter().map(|r| r.flags.label()).collect();
    let mut series: BTreeMap<String, Vec<SeriesPoint>> = BTreeMap::new();
    let mut periods = BTreeSet::new();
    for (r, flags) in records.iter().zip(&labels) {
        periods.insert(r.period);
        series.entry(r.scope.to_string()).or_default().push(SeriesPoint {
            period: r.period.to_string(),
            eps: r.eps.map(unsigned_zero),
            n_refs: r.n_refs,
            flags,
        });
    }
    let granularity = periods.iter().next().map(|p| p.granularity().as_str());
    let doc = serde_json::json!({
        "granularity": granularity,
        "periods": periods.iter().map(Period::to_string).collect::<Vec<_>>(),
        "series": series,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

pub fn export_series(records: &[EpsRecord], format: ExportFormat) -> String {
    match format {
        ExportFormat::Csv => series_csv(records),
        ExportFormat::Json => series_json(records),
    }
}

/// Dyad table with the within-cell standard deviation.
pub fn dyads_csv(agg: &Aggregation) -> String {
    let mut s = String::from("period,granularity,referring_party,referred_party,ref_count,like,sd,self\n");
    for d in agg.dyads.values() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            d.period,
            d.period.granularity().as_str(),
            csv_field(&d.referring_party),
            csv_field(&d.referred_party),
            d.ref_count,
            unsigned_zero(d.like),
            unsigned_zero(d.sd),
            d.referring_party == d.referred_party
        );
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
