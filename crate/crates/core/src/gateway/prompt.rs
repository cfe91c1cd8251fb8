use std::path::Path;

use regex::Regex;
use thiserror::Error;

/// Extraction prompt shipped with the crate.
pub const EXTRACTION_V1: &str = include_str!("../../prompts/extraction_v1.txt");

/// Appended to the prompt when a response has to be requested again.
pub const FORMAT_REMINDER: &str = "\n\nIMPORTANT: Reply with nothing but a CSV table with the header \
actor,context,rationale,sentiment and one row per political actor. The sentiment column must be an \
integer from -5 to 5.";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("template has no {{{0}}} placeholder")]
    MissingPlaceholder(&'static str),
    #[error("unresolved placeholder {0} in template")]
    Unresolved(String),
    #[error("cannot read template: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub version: String,
    pub text: String,
}

impl PromptTemplate {
    pub fn builtin() -> Self {
        Self {
            version: "extraction_v1".into(),
            text: EXTRACTION_V1.into(),
        }
    }

    /// Loads a template; the version tag is the file stem.
    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path).map_err(|e| PromptError::Io(e.to_string()))?;
        let version = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("unversioned")
            .to_string();
        Ok(Self { version, text })
    }
}

/// An inclusive span of years, rendered with an en dash ("2016–2021").
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct YearRange {
    pub from: i32,
    pub to: i32,
}

impl std::fmt::Display for YearRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.from == self.to {
            write!(f, "{}", self.from)
        } else {
            write!(f, "{}\u{2013}{}", self.from, self.to)
        }
    }
}

/// English name for a country code; unknown codes render as the code itself.
pub fn country_name(code: &str) -> &str {
    match code {
        "AT" => "Austria",
        "BE" => "Belgium",
        "BG" => "Bulgaria",
        "CY" => "Cyprus",
        "CZ" => "Czechia",
        "DE" => "Germany",
        "DK" => "Denmark",
        "EE" => "Estonia",
        "ES" => "Spain",
        "FI" => "Finland",
        "FR" => "France",
        "GB" | "UK" => "the United Kingdom",
        "GR" => "Greece",
        "HR" => "Croatia",
        "HU" => "Hungary",
        "IE" => "Ireland",
        "IT" => "Italy",
        "LT" => "Lithuania",
        "LU" => "Luxembourg",
        "LV" => "Latvia",
        "MT" => "Malta",
        "NL" => "the Netherlands",
        "PL" => "Poland",
        "PT" => "Portugal",
        "RO" => "Romania",
        "SE" => "Sweden",
        "SI" => "Slovenia",
        "SK" => "Slovakia",
        other => other,
    }
}

/// Substitutes `{country}` and `{year_range}`. Any other `{name}` left over is an error.
pub fn render_prompt(template: &PromptTemplate, country: &str, years: YearRange) -> Result<String, PromptError> {
    for name in ["country", "year_range"] {
        if !template.text.contains(&format!("{{{name}}}")) {
            return Err(PromptError::MissingPlaceholder(name));
        }
    }
    let rendered = template
        .text
        .replace("{country}", country_name(country))
        .replace("{year_range}", &years.to_string());
    let leftover = Regex::new(r"\{[A-Za-z_][A-Za-z0-9_]*\}").expect("static regex");
    if let Some(m) = leftover.find(&rendered) {
        return Err(PromptError::Unresolved(m.as_str().to_string()));
    }
    Ok(rendered)
}

/// The message sent for one speech: prompt, blank line, then the speech body.
pub fn extraction_message(prompt: &str, text: &str) -> String {
    format!("{prompt}\n\n{text}")
}

pub fn verification_prompt(country: &str, actor: &str) -> String {
    format!(
        "You are checking a parliamentary speech delivered in {}. Is the political actor \"{actor}\" \
mentioned or referred to in the speech below, by name, title or pronoun? Answer YES or NO on the \
first line, then give a one-sentence rationale.",
        country_name(country)
    )
}

pub fn classification_prompt(country: &str, alias: &str) -> String {
    format!(
        "A parliamentary speech delivered in {} refers to \"{alias}\". Classify this reference into \
exactly one of: party_or_member, government, institution, foreign_institution, discard. Use discard \
for non-political entities such as competitions, general groups or sectors. Answer with the label only.",
        country_name(country)
    )
}

pub fn suggestion_prompt(country: &str, alias: &str, date: &str, candidates: &[String]) -> String {
    format!(
        "In a parliamentary speech delivered in {} on {date}, the speaker refers to \"{alias}\". \
Which of the following entities is meant? Candidates: {}. Answer with the candidate exactly as \
written, or NONE.",
        country_name(country),
        candidates.join("; ")
    )
}
