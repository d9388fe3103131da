//! Utterance → intent + entities.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use fuzzkb_core::dataset::Dataset;
use fuzzkb_core::rulebase::KnowledgeBase;
use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};

use crate::grammar::{Grammar, IntentName};

pub const ENTITY_NAMES: [&str; 9] = [
    "dataset",
    "variable",
    "value",
    "known_concept",
    "unknown_concept",
    "outcome",
    "n_estimators",
    "max_depth",
    "top_n",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVocab {
    pub name: String,
    /// Symbols of the feature; empty until a knowledge base exists.
    pub terms: Vec<String>,
}

/// Names the parser may resolve entities to.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<FeatureVocab>,
    pub classes: Vec<String>,
}

impl Schema {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Feature and class names only; terms become known once a KB is built.
    pub fn from_dataset(ds: &Dataset) -> Self {
        Self {
            features: ds
                .features
                .iter()
                .map(|f| FeatureVocab {
                    name: f.name.clone(),
                    terms: Vec::new(),
                })
                .collect(),
            classes: ds.class_domain().to_vec(),
        }
    }

    pub fn from_kb(kb: &KnowledgeBase) -> Self {
        Self {
            features: kb
                .features
                .iter()
                .map(|f| FeatureVocab {
                    name: f.name.clone(),
                    terms: f.terms.clone(),
                })
                .collect(),
            classes: kb.class_domain.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intent {
    pub name: IntentName,
    /// Entity name → values in utterance order.
    pub entities: BTreeMap<String, Vec<String>>,
}

impl Intent {
    pub fn entity(&self, name: &str) -> &[String] {
        self.entities.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn first(&self, name: &str) -> Option<&str> {
        self.entity(name).first().map(String::as_str)
    }

    fn push(&mut self, name: &str, value: impl Into<String>) {
        debug_assert!(ENTITY_NAMES.contains(&name));
        self.entities.entry(name.to_string()).or_default().push(value.into());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchConfidence {
    /// Every entity matched a schema name, alias or term exactly.
    Exact,
    /// At least one entity was matched by string similarity.
    FuzzyMatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub message: String,
    pub suggested_intent: IntentName,
    pub suggestion: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub intent: Option<Intent>,
    pub rejection: Option<Rejection>,
    pub confidence: MatchConfidence,
    /// Phrases that should have named a feature, term or class but did not.
    pub unrecognized_tokens: Vec<String>,
}

struct Ctx<'a> {
    grammar: &'a Grammar,
    schema: &'a Schema,
    fuzzy: bool,
    unrecognized: Vec<String>,
}

fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lowercase, unify quotes and spacing, drop trailing punctuation and apply
/// the synonym table.
pub fn normalize(grammar: &Grammar, text: &str) -> String {
    let mut s: String = text
        .chars()
        .map(|c| match c {
            '\u{2018}' | '\u{2019}' | '`' => '\'',
            '\u{201c}' | '\u{201d}' => '"',
            c => c,
        })
        .collect::<String>()
        .to_lowercase();
    s = s.replace(['"', '\''], "");
    s = squash(&s);
    s = s.replace(" ,", ",");
    let trimmed = s.trim_end_matches(['?', '.', '!', ' ', ';', ':']);
    s = trimmed.trim_start().to_string();
    for (re, canonical) in &grammar.synonyms {
        s = re.replace_all(&s, canonical.as_str()).into_owned();
    }
    s
}

fn clean_phrase(p: &str) -> String {
    let mut s = p.trim().trim_matches(|c: char| c == ',' || c == '.').trim().to_string();
    for prefix in ["the ", "a ", "an ", "feature ", "variable ", "values of ", "value of "] {
        if let Some(rest) = s.strip_prefix(prefix) {
            s = rest.to_string();
        }
    }
    for suffix in [" feature", " variable", " values", " value"] {
        if let Some(rest) = s.strip_suffix(suffix) {
            s = rest.to_string();
        }
    }
    s.trim().to_string()
}

fn underscored(s: &str) -> String {
    s.split(|c: char| c.is_whitespace() || c == '-')
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join("_")
}

/// Best candidate by normalized Levenshtein similarity, if above the
/// threshold and strictly better than the runner-up.
fn closest<'a>(phrase: &str, candidates: impl Iterator<Item = &'a str>, threshold: f64) -> Option<&'a str> {
    let mut scored: Vec<(f64, &str)> = candidates
        .map(|c| (strsim::normalized_levenshtein(phrase, &c.to_lowercase()), c))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    match scored.as_slice() {
        [(s, c), rest @ ..] if *s >= threshold && rest.first().is_none_or(|(s2, _)| s2 < s) => Some(c),
        _ => None,
    }
}

impl Ctx<'_> {
    fn feature(&mut self, phrase: &str) -> Option<String> {
        let p = clean_phrase(phrase);
        if p.is_empty() {
            return None;
        }
        let feats = &self.schema.features;
        let find = |name: &str| feats.iter().find(|f| f.name.eq_ignore_ascii_case(name)).map(|f| f.name.clone());
        if let Some(f) = find(&p).or_else(|| find(&underscored(&p))) {
            return Some(f);
        }
        if let Some(f) = self.grammar.feature_aliases.get(&p).and_then(|c| find(c)) {
            return Some(f);
        }
        if let Some(c) = closest(&p, feats.iter().map(|f| f.name.as_str()), self.grammar.fuzzy_threshold) {
            self.fuzzy = true;
            return Some(c.to_string());
        }
        self.unrecognized.push(p);
        None
    }

    fn term(&mut self, feature: Option<&str>, phrase: &str) -> Option<String> {
        let p = underscored(&clean_phrase(phrase));
        if p.is_empty() {
            return None;
        }
        let vocab: Vec<&str> = match feature.and_then(|f| self.schema.features.iter().find(|v| v.name == f)) {
            Some(v) if !v.terms.is_empty() => v.terms.iter().map(String::as_str).collect(),
            _ => {
                let all: BTreeSet<&str> = self
                    .schema
                    .features
                    .iter()
                    .flat_map(|v| v.terms.iter().map(String::as_str))
                    .collect();
                all.into_iter().collect()
            }
        };
        if let Some(t) = vocab.iter().find(|t| t.eq_ignore_ascii_case(&p)) {
            return Some(t.to_string());
        }
        if let Some(t) = closest(&p, vocab.iter().copied(), self.grammar.fuzzy_threshold) {
            self.fuzzy = true;
            return Some(t.to_string());
        }
        self.unrecognized.push(clean_phrase(phrase));
        None
    }

    fn class(&mut self, phrase: &str) -> Option<String> {
        let p = underscored(&clean_phrase(phrase));
        let classes = &self.schema.classes;
        if let Some(c) = classes
            .iter()
            .find(|c| c.eq_ignore_ascii_case(&p) || underscored(&c.to_lowercase()) == p)
        {
            return Some(c.clone());
        }
        if let Some(c) = closest(&p, classes.iter().map(String::as_str), self.grammar.fuzzy_threshold) {
            self.fuzzy = true;
            return Some(c.to_string());
        }
        self.unrecognized.push(p);
        None
    }
}

static LIST_SEP: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r",\s*(?:and\s+)?|\s+and\s+|\s*&\s*").expect("static pattern"));
static BINDING: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?P<f>.+?) (?:is|are|equals|=|being|was|were|is set to) (?P<v>.+)$").expect("static pattern")
});

fn split_list(s: &str) -> Vec<String> {
    LIST_SEP
        .split(s)
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn known_bindings(ctx: &mut Ctx, intent: &mut Intent, text: &str) {
    for item in split_list(text) {
        match BINDING.captures(&item) {
            Some(c) => {
                let f = ctx.feature(&c["f"]);
                let v = ctx.term(f.as_deref(), &c["v"]);
                if let (Some(f), Some(v)) = (f, v) {
                    intent.push("known_concept", f);
                    intent.push("value", v);
                }
            }
            None => ctx.unrecognized.push(item),
        }
    }
}

fn group<'t>(c: &Captures<'t>, name: &str) -> Option<&'t str> {
    c.name(name).map(|m| m.as_str())
}

fn extract(ctx: &mut Ctx, name: IntentName, caps: &Captures, text: &str) -> Intent {
    let mut intent = Intent {
        name,
        entities: BTreeMap::new(),
    };
    match name {
        IntentName::LoadData => {
            if let Some(d) = group(caps, "dataset") {
                intent.push("dataset", d);
            }
        }
        IntentName::PlotHistogram | IntentName::Bias => {
            if let Some(f) = group(caps, "var").and_then(|v| ctx.feature(v)) {
                intent.push("variable", f);
            }
        }
        IntentName::PlotCorrelation => {
            for g in ["a", "b"] {
                if let Some(f) = group(caps, g).and_then(|v| ctx.feature(v)) {
                    intent.push("variable", f);
                }
            }
        }
        IntentName::TopRulesKb => {
            if let Some(n) = group(caps, "n") {
                intent.push("top_n", n);
            }
        }
        IntentName::TrainModel => {
            for (param, re) in &ctx.grammar.parameters {
                if let Some(c) = re.captures(text) {
                    if let Some(v) = c.name("v").or_else(|| c.name("v2")) {
                        intent.push(param, v.as_str());
                    }
                }
            }
        }
        IntentName::RunFullQuery | IntentName::RunCfQuery => {
            if let Some(k) = group(caps, "known") {
                known_bindings(ctx, &mut intent, k);
            }
            if let Some(o) = group(caps, "outcome").and_then(|o| ctx.class(o)) {
                intent.push("outcome", o);
            }
            if let Some(o) = group(caps, "contrast").and_then(|o| ctx.class(o)) {
                intent.push("outcome", o);
            }
            if let Some(u) = group(caps, "unknown") {
                for item in split_list(u) {
                    if let Some(f) = ctx.feature(&item) {
                        intent.push("unknown_concept", f);
                    }
                }
            }
        }
        _ => {}
    }
    intent
}

fn tokens(s: &str) -> BTreeSet<String> {
    s.split(|c: char| !c.is_alphanumeric() && c != '_')
        .filter(|t| t.len() > 2)
        .map(str::to_lowercase)
        .collect()
}

fn suggest(grammar: &Grammar, text: &str) -> (IntentName, String) {
    let words = tokens(text);
    let mut best = (0.0, IntentName::Help, "What can you do?".to_string());
    for (intent, example) in grammar.examples() {
        let ex = tokens(example);
        let inter = words.intersection(&ex).count() as f64;
        let union = words.union(&ex).count().max(1) as f64;
        let score = inter / union;
        if score > best.0 {
            best = (score, intent, example.to_string());
        }
    }
    (best.1, best.2)
}

/// Parse one utterance. Never fails: anything outside the grammar yields a
/// rejection carrying the closest example phrasing.
pub fn parse_with(grammar: &Grammar, text: &str, schema: &Schema) -> ParseOutcome {
    let norm = normalize(grammar, text);
    let mut ctx = Ctx {
        grammar,
        schema,
        fuzzy: false,
        unrecognized: Vec::new(),
    };
    for compiled in &grammar.intents {
        let Some(caps) = compiled.patterns.iter().find_map(|p| p.captures(&norm)) else {
            continue;
        };
        if schema.is_empty() && !compiled.name.needs_no_schema() {
            return ParseOutcome {
                intent: None,
                rejection: Some(Rejection {
                    message: "No dataset is loaded yet.".into(),
                    suggested_intent: IntentName::LoadData,
                    suggestion: "Load the diabetes dataset".into(),
                }),
                confidence: MatchConfidence::Exact,
                unrecognized_tokens: Vec::new(),
            };
        }
        let intent = extract(&mut ctx, compiled.name, &caps, &norm);
        return ParseOutcome {
            intent: Some(intent),
            rejection: None,
            confidence: if ctx.fuzzy {
                MatchConfidence::FuzzyMatch
            } else {
                MatchConfidence::Exact
            },
            unrecognized_tokens: ctx.unrecognized,
        };
    }
    let (suggested_intent, suggestion) = suggest(grammar, &norm);
    ParseOutcome {
        intent: None,
        rejection: Some(Rejection {
            message: "I did not understand that question.".into(),
            suggested_intent,
            suggestion,
        }),
        confidence: MatchConfidence::Exact,
        unrecognized_tokens: Vec::new(),
    }
}
