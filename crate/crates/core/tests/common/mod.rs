//! Generators, a naive score oracle and property checks shared by the
//! property tests and the acceptance runner.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use elitepol_core::extraction::Mention;
use elitepol_core::gateway::Verdict;
use elitepol_core::index::{aggregate, compute_index, EpsRecord, PartyReference, Period, Scope};
use elitepol_core::resolution::{EntityClass, ResolutionMethod, ResolvedReference};
use elitepol_core::validation::{
    align, auto_confirm, compute_metrics, derive_supergold, entity_stage_metrics, sample_indices, EntityTruth,
    GoldRecord, Verdicts,
};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub const PARTIES: [&str; 5] = ["A", "B", "C", "D", "E"];

#[derive(Debug, Clone)]
pub struct Instance {
    pub refs: Vec<PartyReference>,
    pub min_out_refs: u64,
}

fn reference(year: i32, n: Option<usize>, m: usize, sentiment: i8) -> PartyReference {
    PartyReference {
        period: Period::year(year),
        referring_party: n.map(|i| PARTIES[i].to_string()),
        referred_party: PARTIES[m].to_string(),
        sentiment,
    }
}

/// Up to five parties, up to fifty references over two years, sentiments in
/// `-limit..=limit`, and the odd reference without a speaker party.
pub fn instance_with(limit: i8) -> impl Strategy<Value = Instance> {
    (2usize..=5).prop_flat_map(move |parties| {
        let one = (
            prop::bool::weighted(0.95),
            0..parties,
            0..parties,
            -limit..=limit,
            prop::bool::weighted(0.8),
        )
            .prop_map(|(known, n, m, s, first)| reference(if first { 2015 } else { 2016 }, known.then_some(n), m, s));
        (prop::collection::vec(one, 1..=50), 0u64..=8).prop_map(|(refs, min_out_refs)| Instance { refs, min_out_refs })
    })
}

pub fn instance() -> impl Strategy<Value = Instance> {
    instance_with(5)
}

/// Every party refers to every other party with one fixed sentiment each.
#[derive(Debug, Clone)]
pub struct ConstantInstance {
    pub refs: Vec<PartyReference>,
    pub sentiment: BTreeMap<String, i8>,
}

pub fn constant_instance() -> impl Strategy<Value = ConstantInstance> {
    (2usize..=5).prop_flat_map(|parties| {
        (
            prop::collection::vec(1usize..=4, parties * parties),
            prop::collection::vec(0usize..=3, parties),
            prop::collection::vec(-5i8..=5, parties),
        )
            .prop_map(move |(counts, self_counts, sentiments)| {
                let mut refs = Vec::new();
                for n in 0..parties {
                    for m in 0..parties {
                        let count = if n == m {
                            self_counts[n]
                        } else {
                            counts[n * parties + m]
                        };
                        refs.extend((0..count).map(|_| reference(2015, Some(n), m, sentiments[n])));
                    }
                }
                let sentiment = (0..parties).map(|n| (PARTIES[n].to_string(), sentiments[n])).collect();
                ConstantInstance { refs, sentiment }
            })
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expected {
    pub eps: Option<f64>,
    pub flagged: bool,
}

/// Scores re-derived from raw references with shares, likes and the
/// out-party renormalization computed literally.
pub fn naive_scores(refs: &[PartyReference], min_out_refs: u64) -> BTreeMap<(Period, Scope), Expected> {
    let mut out = BTreeMap::new();
    let periods: BTreeSet<Period> = refs.iter().map(|r| r.period).collect();
    for period in periods {
        let known: Vec<(&str, &str, f64)> = refs
            .iter()
            .filter(|r| r.period == period)
            .filter_map(|r| {
                r.referring_party
                    .as_deref()
                    .map(|n| (n, r.referred_party.as_str(), f64::from(r.sentiment)))
            })
            .collect();
        if known.is_empty() {
            continue;
        }
        let total = known.len() as f64;
        let share = |p: &str| known.iter().filter(|(_, m, _)| *m == p).count() as f64 / total;
        let speakers: BTreeSet<&str> = known.iter().map(|(n, _, _)| *n).collect();
        let targets: BTreeSet<&str> = known.iter().map(|(_, m, _)| *m).collect();
        let mut party = Vec::new();
        for n in &speakers {
            let share_n = share(n);
            let out_refs = known.iter().filter(|(a, b, _)| a == n && b != n).count() as u64;
            let flagged_data = out_refs < min_out_refs;
            if share_n == 1.0 {
                out.insert(
                    (period, Scope::Party(n.to_string())),
                    Expected {
                        eps: None,
                        flagged: true,
                    },
                );
                continue;
            }
            let mut eps = 0.0;
            for m in targets.iter().filter(|m| *m != n) {
                let sents: Vec<f64> = known
                    .iter()
                    .filter(|(a, b, _)| a == n && b == m)
                    .map(|(_, _, s)| *s)
                    .collect();
                if sents.is_empty() {
                    continue;
                }
                let like = sents.iter().sum::<f64>() / sents.len() as f64;
                eps += -like * share(m) / (1.0 - share_n);
            }
            out.insert(
                (period, Scope::Party(n.to_string())),
                Expected {
                    eps: Some(eps),
                    flagged: flagged_data,
                },
            );
            if !flagged_data {
                party.push((eps, share_n));
            }
        }
        let mass: f64 = party.iter().map(|(_, w)| w).sum();
        let parliament = if mass > 0.0 {
            Expected {
                eps: Some(party.iter().map(|(e, w)| e * w).sum::<f64>() / mass),
                flagged: false,
            }
        } else {
            Expected {
                eps: None,
                flagged: true,
            }
        };
        out.insert((period, Scope::Parliament), parliament);
    }
    out
}

pub fn index_of(refs: &[PartyReference], min_out_refs: u64) -> Vec<EpsRecord> {
    compute_index(&aggregate(refs), min_out_refs)
}

fn party_records(records: &[EpsRecord]) -> impl Iterator<Item = &EpsRecord> {
    records.iter().filter(|r| matches!(r.scope, Scope::Party(_)))
}

pub fn check_oracle(inst: &Instance) -> Result<(), TestCaseError> {
    let records = index_of(&inst.refs, inst.min_out_refs);
    let expected = naive_scores(&inst.refs, inst.min_out_refs);
    prop_assert_eq!(records.len(), expected.len());
    for r in &records {
        let want = expected
            .get(&(r.period, r.scope.clone()))
            .ok_or_else(|| TestCaseError::fail(format!("unexpected record {} {}", r.period, r.scope)))?;
        prop_assert_eq!(r.flags.any(), want.flagged, "{} {}", r.period, r.scope);
        match (r.eps, want.eps) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-9, "{} {}: {a} vs {b}", r.period, r.scope),
            (None, None) => {}
            (a, b) => prop_assert!(false, "{} {}: {a:?} vs {b:?}", r.period, r.scope),
        }
    }
    Ok(())
}

pub fn check_bounds(inst: &Instance) -> Result<(), TestCaseError> {
    for r in index_of(&inst.refs, inst.min_out_refs) {
        if let Some(e) = r.eps {
            prop_assert!((-5.0..=5.0).contains(&e), "{} {}: {e}", r.period, r.scope);
        }
    }
    Ok(())
}

pub fn check_weight_sum(inst: &Instance) -> Result<(), TestCaseError> {
    for r in party_records(&index_of(&inst.refs, 0)) {
        if r.flags.any() {
            continue;
        }
        let sum = r.weight_sum();
        prop_assert!(
            (sum - 1.0).abs() <= 1e-12,
            "{} {}: weights sum to {sum}",
            r.period,
            r.scope
        );
    }
    Ok(())
}

pub fn check_collapse(inst: &ConstantInstance) -> Result<(), TestCaseError> {
    for r in party_records(&index_of(&inst.refs, 0)) {
        let Scope::Party(n) = &r.scope else { unreachable!() };
        let s = f64::from(inst.sentiment[n]);
        prop_assert_eq!(r.eps, Some(-s), "{}", n);
    }
    Ok(())
}

pub fn check_linearity(inst: &Instance, c: i8) -> Result<(), TestCaseError> {
    let scaled: Vec<PartyReference> = inst
        .refs
        .iter()
        .map(|r| PartyReference {
            sentiment: r.sentiment * c,
            ..r.clone()
        })
        .collect();
    let base = index_of(&inst.refs, inst.min_out_refs);
    let after = index_of(&scaled, inst.min_out_refs);
    prop_assert_eq!(base.len(), after.len());
    for (a, b) in base.iter().zip(&after) {
        prop_assert_eq!(&a.scope, &b.scope);
        match (a.eps, b.eps) {
            (Some(x), Some(y)) => prop_assert!(
                (f64::from(c) * x - y).abs() <= 1e-12,
                "{} {}: {c} * {x} != {y}",
                a.period,
                a.scope
            ),
            (None, None) => {}
            (x, y) => prop_assert!(false, "{} {}: {x:?} vs {y:?}", a.period, a.scope),
        }
    }
    Ok(())
}

pub fn check_convexity(inst: &Instance) -> Result<(), TestCaseError> {
    let records = index_of(&inst.refs, inst.min_out_refs);
    for p in records.iter().filter(|r| r.scope == Scope::Parliament) {
        let Some(e) = p.eps else { continue };
        let included: Vec<f64> = party_records(&records)
            .filter(|r| r.period == p.period && !r.flags.any())
            .filter_map(|r| r.eps)
            .collect();
        prop_assert!(!included.is_empty());
        let lo = included.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = included.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(
            lo - 1e-12 <= e && e <= hi + 1e-12,
            "{}: {e} outside [{lo}, {hi}]",
            p.period
        );
    }
    Ok(())
}

/// AI and Gold findings over a handful of speeches and a small name pool,
/// with a verifier answer per AI finding.
#[derive(Debug, Clone)]
pub struct CodingInstance {
    pub ai: Vec<Mention>,
    pub gold: Vec<GoldRecord>,
    pub answers: Vec<Verdict>,
    pub order: Vec<usize>,
    pub gold_order: Vec<usize>,
}

const NAMES: [&str; 6] = ["Orbán Viktor", "Orban", "Fidesz", "MSZP", "Jobbik", "Gyurcsány Ferenc"];

pub fn mention(speech_id: &str, row: usize, actor: &str, sentiment: i8) -> Mention {
    Mention {
        speech_id: speech_id.into(),
        row,
        actor_surface: actor.into(),
        context_description: String::new(),
        political_rationale: String::new(),
        sentiment,
        sentiment_rounded: false,
    }
}

pub fn gold(speech_id: &str, actor: &str, sentiment: i8) -> GoldRecord {
    GoldRecord {
        speech_id: speech_id.into(),
        coder: "coder".into(),
        actor_surface: actor.into(),
        sentiment,
    }
}

pub fn coding_instance() -> impl Strategy<Value = CodingInstance> {
    let finding = (0usize..4, 0..NAMES.len(), -5i8..=5);
    (
        prop::collection::vec(finding.clone(), 1..20),
        prop::collection::vec(finding, 1..20),
        prop::collection::vec(
            prop::sample::select(vec![Verdict::Yes, Verdict::No, Verdict::Indeterminate]),
            20,
        ),
    )
        .prop_flat_map(|(ai, gold_rows, answers)| {
            let mut rows = [0usize; 4];
            let ai: Vec<Mention> = ai
                .into_iter()
                .map(|(s, n, v)| {
                    let row = rows[s];
                    rows[s] += 1;
                    mention(&format!("s{s}"), row, NAMES[n], v)
                })
                .collect();
            let gold: Vec<GoldRecord> = gold_rows
                .into_iter()
                .map(|(s, n, v)| gold(&format!("s{s}"), NAMES[n], v))
                .collect();
            let order = Just((0..ai.len()).collect::<Vec<_>>()).prop_shuffle();
            let gold_order = Just((0..gold.len()).collect::<Vec<_>>()).prop_shuffle();
            (Just(ai), Just(gold), Just(answers), order, gold_order)
        })
        .prop_map(|(ai, gold, answers, order, gold_order)| CodingInstance {
            ai,
            gold,
            answers,
            order,
            gold_order,
        })
}

fn metrics_json(ai: &[Mention], gold: &[GoldRecord], answers: &[Verdict]) -> Option<String> {
    let ms = align(ai, gold, 0.85);
    let verdicts: Verdicts = ms
        .triples
        .iter()
        .filter(|t| t.gold.is_none())
        .filter_map(|t| {
            let row = t.ai.as_ref()?.index;
            let speech: usize = t.speech_id[1..].parse().ok()?;
            Some((t.id.clone(), answers[(row * 4 + speech) % answers.len()]))
        })
        .collect();
    let mut sg = derive_supergold(&ms, &verdicts, &[]);
    auto_confirm(&mut sg.records);
    compute_metrics(&ms, &sg.records)
        .ok()
        .map(|m| serde_json::to_string(&m).expect("serializable"))
}

/// Reordering the input findings leaves every metric unchanged.
pub fn check_permutation(inst: &CodingInstance) -> Result<(), TestCaseError> {
    let base = metrics_json(&inst.ai, &inst.gold, &inst.answers);
    let ai: Vec<Mention> = inst.order.iter().map(|&i| inst.ai[i].clone()).collect();
    let gold: Vec<GoldRecord> = inst.gold_order.iter().map(|&i| inst.gold[i].clone()).collect();
    prop_assert_eq!(base, metrics_json(&ai, &gold, &inst.answers));
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub enum Outcome {
    Correct,
    Wrong,
    Missed,
    Spurious,
    Empty,
}

pub fn resolved(speech_id: &str, row: usize, entity: Option<&str>) -> ResolvedReference {
    ResolvedReference {
        mention: mention(speech_id, row, entity.unwrap_or("someone"), 0),
        date: "2015-01-01".parse().expect("valid date"),
        country: "HU".into(),
        entity_class: Some(EntityClass::PartyOrMember),
        canonical_entity: entity.map(str::to_string),
        referring_party: None,
        referred_party: None,
        referred_role: None,
        self_reference: false,
        resolution_method: if entity.is_some() {
            ResolutionMethod::RegistryExact
        } else {
            ResolutionMethod::Unresolved
        },
        confirmed: true,
        match_score: None,
    }
}

pub fn truth(speech_id: &str, row: usize, entity: Option<&str>) -> EntityTruth {
    EntityTruth {
        speech_id: speech_id.into(),
        row,
        canonical_entity: entity.map(str::to_string),
    }
}

/// Predictions and labels realizing the given outcomes, one mention each.
pub fn entity_fixture(outcomes: &[Outcome]) -> (Vec<ResolvedReference>, Vec<EntityTruth>) {
    let mut pred = Vec::new();
    let mut labels = Vec::new();
    for (row, o) in outcomes.iter().enumerate() {
        let (p, t) = match o {
            Outcome::Correct => (Some("Fidesz"), Some("Fidesz")),
            Outcome::Wrong => (Some("MSZP"), Some("Fidesz")),
            Outcome::Missed => (None, Some("Fidesz")),
            Outcome::Spurious => (Some("MSZP"), None),
            Outcome::Empty => (None, None),
        };
        pred.push(resolved("s", row, p));
        labels.push(truth("s", row, t));
    }
    (pred, labels)
}

pub fn outcomes() -> impl Strategy<Value = Vec<Outcome>> {
    prop::collection::vec(
        prop::sample::select(vec![
            Outcome::Correct,
            Outcome::Wrong,
            Outcome::Missed,
            Outcome::Spurious,
            Outcome::Empty,
        ]),
        1..60,
    )
}

/// F1 is the harmonic mean of precision and recall and lies between them.
pub fn check_f1(outcomes: &[Outcome]) -> Result<(), TestCaseError> {
    let (pred, labels) = entity_fixture(outcomes);
    let m = entity_stage_metrics(&pred, &labels).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let count = |f: fn(&Outcome) -> bool| outcomes.iter().filter(|o| f(o)).count();
    let tp = count(|o| matches!(o, Outcome::Correct));
    let wrong = count(|o| matches!(o, Outcome::Wrong));
    prop_assert_eq!(m.totals.tp, tp);
    prop_assert_eq!(m.totals.fp, wrong + count(|o| matches!(o, Outcome::Spurious)));
    prop_assert_eq!(m.totals.fn_, wrong + count(|o| matches!(o, Outcome::Missed)));
    let (p, r) = (m.precision, m.recall);
    if p + r > 0.0 {
        prop_assert!((m.f1 - 2.0 * p * r / (p + r)).abs() <= 1e-12);
        prop_assert!(p.min(r) - 1e-12 <= m.f1 && m.f1 <= p.max(r) + 1e-12);
    } else {
        prop_assert_eq!(m.f1, 0.0);
    }
    Ok(())
}

/// Picks are sorted, in range, never adjacent, and a function of the seed.
pub fn check_sampler(n: usize, k: usize, seed: u64) -> Result<(), TestCaseError> {
    match sample_indices(n, k, seed) {
        Ok(idx) => {
            prop_assert!(k == 0 || n + 1 >= 2 * k);
            prop_assert_eq!(idx.len(), k);
            prop_assert!(idx.iter().all(|&i| i < n));
            prop_assert!(idx.windows(2).all(|w| w[1] >= w[0] + 2), "{idx:?}");
            prop_assert_eq!(Some(idx), sample_indices(n, k, seed).ok());
        }
        Err(_) => prop_assert!(n + 1 < 2 * k),
    }
    Ok(())
}
