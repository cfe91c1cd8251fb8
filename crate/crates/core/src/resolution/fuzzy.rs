use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Canonical fold: strip diacritics, lowercase, punctuation to spaces, single spaces.
pub fn fold(s: &str) -> String {
    let stripped: String = s
        .nfd()
        .filter(|c| !is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Highest score two distinct folded strings can reach.
pub const MAX_DISTINCT: f64 = 0.999;

const CONTAINMENT_WEIGHT: f64 = 0.75;

fn best(token: &str, others: &[&str]) -> f64 {
    others
        .iter()
        .map(|o| strsim::jaro_winkler(token, o))
        .fold(0.0, f64::max)
}

/// Token-set similarity of two surface forms, in `[0, 1]`.
///
/// Each token is scored by its best Jaro-Winkler match among the other
/// string's tokens. The result blends the better directed coverage
/// (does one name contain the other, as "Orban" in "Viktor Orbán") with the
/// mean over all tokens of both strings, which penalises extra tokens.
/// Only fold-equal strings score 1.0.
pub fn fuzzy_match(a: &str, b: &str) -> f64 {
    let fa = fold(a);
    let fb = fold(b);
    if fa == fb {
        return 1.0;
    }
    let ta: Vec<&str> = fa.split(' ').filter(|t| !t.is_empty()).collect();
    let tb: Vec<&str> = fb.split(' ').filter(|t| !t.is_empty()).collect();
    if ta.is_empty() || tb.is_empty() {
        return 0.0;
    }
    let sum_a: f64 = ta.iter().map(|t| best(t, &tb)).sum();
    let sum_b: f64 = tb.iter().map(|t| best(t, &ta)).sum();
    let containment = (sum_a / ta.len() as f64).max(sum_b / tb.len() as f64);
    let mutual = (sum_a + sum_b) / (ta.len() + tb.len()) as f64;
    let raw = CONTAINMENT_WEIGHT * containment + (1.0 - CONTAINMENT_WEIGHT) * mutual;
    raw.clamp(0.0, MAX_DISTINCT)
}
