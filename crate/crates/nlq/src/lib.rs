//! Deterministic natural-language front end for knowledge-base questions.
//!
//! A versioned JSON grammar maps utterances to one of fifteen intents and
//! extracts entities (features, symbols, classes, parameters) resolved against
//! the current schema. Replies are produced from engine results by
//! [`render_answer`].

mod grammar;
mod parser;
mod render;

use thiserror::Error;

pub use grammar::{Grammar, IntentName, BUILTIN_GRAMMAR, SUPPORTED_VERSION};
pub use parser::{
    normalize, parse_with, FeatureVocab, Intent, MatchConfidence, ParseOutcome, Rejection, Schema,
    ENTITY_NAMES,
};
pub use render::{
    display_feature, display_term, fmt3, join_list, render_answer, render_rule, Payload, RuleView,
};

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("invalid grammar: {0}")]
    Invalid(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Parse with the bundled grammar.
pub fn parse(text: &str, schema: &Schema) -> ParseOutcome {
    use std::sync::LazyLock;
    static BUILTIN: LazyLock<Grammar> = LazyLock::new(Grammar::builtin);
    parse_with(&BUILTIN, text, schema)
}
