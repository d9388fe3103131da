//! Pattern tables loaded from the versioned grammar file.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::GrammarError;

pub const BUILTIN_GRAMMAR: &str = include_str!("../data/grammar.json");
pub const SUPPORTED_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntentName {
    LoadData,
    DataStats,
    PlotHistogram,
    PlotCorrelation,
    CorrelationMatrix,
    TrainModel,
    TrainTestSamples,
    TrainExplanationModule,
    ProblemComplexity,
    Bias,
    TopRulesKb,
    RunFullQuery,
    RunCfQuery,
    ClosestInstance,
    Help,
}

impl IntentName {
    pub const ALL: [IntentName; 15] = [
        IntentName::LoadData,
        IntentName::DataStats,
        IntentName::PlotHistogram,
        IntentName::PlotCorrelation,
        IntentName::CorrelationMatrix,
        IntentName::TrainModel,
        IntentName::TrainTestSamples,
        IntentName::TrainExplanationModule,
        IntentName::ProblemComplexity,
        IntentName::Bias,
        IntentName::TopRulesKb,
        IntentName::RunFullQuery,
        IntentName::RunCfQuery,
        IntentName::ClosestInstance,
        IntentName::Help,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IntentName::LoadData => "load_data",
            IntentName::DataStats => "data_stats",
            IntentName::PlotHistogram => "plot_histogram",
            IntentName::PlotCorrelation => "plot_correlation",
            IntentName::CorrelationMatrix => "correlation_matrix",
            IntentName::TrainModel => "train_model",
            IntentName::TrainTestSamples => "train_test_samples",
            IntentName::TrainExplanationModule => "train_explanation_module",
            IntentName::ProblemComplexity => "problem_complexity",
            IntentName::Bias => "bias",
            IntentName::TopRulesKb => "top_rules_kb",
            IntentName::RunFullQuery => "run_full_query",
            IntentName::RunCfQuery => "run_cf_query",
            IntentName::ClosestInstance => "closest_instance",
            IntentName::Help => "help",
        }
    }

    /// Intents that make sense before any dataset is loaded.
    pub fn needs_no_schema(self) -> bool {
        matches!(self, IntentName::LoadData | IntentName::Help)
    }
}

impl fmt::Display for IntentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IntentName {
    type Err = GrammarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        IntentName::ALL
            .into_iter()
            .find(|i| i.as_str() == s)
            .ok_or_else(|| GrammarError::Invalid(format!("unknown intent '{s}'")))
    }
}

#[derive(Debug, Clone, Deserialize)]
struct IntentSpec {
    name: String,
    patterns: Vec<String>,
    #[serde(default)]
    examples: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
struct GrammarFile {
    version: u32,
    #[serde(default)]
    synonyms: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    feature_aliases: BTreeMap<String, Vec<String>>,
    fuzzy_threshold: f64,
    intents: Vec<IntentSpec>,
    #[serde(default)]
    parameters: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub(crate) struct CompiledIntent {
    pub name: IntentName,
    pub patterns: Vec<Regex>,
    pub examples: Vec<String>,
}

/// Compiled grammar. Intents are tried in file order; the first pattern that
/// matches decides the intent.
#[derive(Debug, Clone)]
pub struct Grammar {
    pub version: u32,
    pub(crate) synonyms: Vec<(Regex, String)>,
    /// alias (lowercase) → canonical feature name.
    pub(crate) feature_aliases: BTreeMap<String, String>,
    pub(crate) fuzzy_threshold: f64,
    pub(crate) intents: Vec<CompiledIntent>,
    pub(crate) parameters: BTreeMap<String, Regex>,
}

fn compile(p: &str) -> Result<Regex, GrammarError> {
    Regex::new(p).map_err(|e| GrammarError::Invalid(format!("pattern '{p}': {e}")))
}

impl Grammar {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_GRAMMAR).expect("bundled grammar is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, GrammarError> {
        let file: GrammarFile = serde_json::from_str(text)?;
        if file.version != SUPPORTED_VERSION {
            return Err(GrammarError::Invalid(format!(
                "grammar version {} is not supported (expected {SUPPORTED_VERSION})",
                file.version
            )));
        }
        if !(0.0..=1.0).contains(&file.fuzzy_threshold) {
            return Err(GrammarError::Invalid("fuzzy_threshold must lie in [0,1]".into()));
        }
        let mut synonyms = Vec::new();
        for (canonical, words) in &file.synonyms {
            for w in words {
                let re = compile(&format!(r"\b{}\b", regex::escape(&w.to_lowercase())))?;
                synonyms.push((re, canonical.to_lowercase()));
            }
        }
        // longer phrases first so "data set" wins over any shorter overlap
        synonyms.sort_by_key(|(re, _)| std::cmp::Reverse(re.as_str().len()));
        let mut feature_aliases = BTreeMap::new();
        for (canonical, aliases) in &file.feature_aliases {
            for a in aliases {
                feature_aliases.insert(a.to_lowercase(), canonical.clone());
            }
        }
        let mut intents = Vec::with_capacity(file.intents.len());
        for spec in &file.intents {
            let name: IntentName = spec.name.parse()?;
            if intents.iter().any(|i: &CompiledIntent| i.name == name) {
                return Err(GrammarError::Invalid(format!("intent '{name}' listed twice")));
            }
            intents.push(CompiledIntent {
                name,
                patterns: spec.patterns.iter().map(|p| compile(p)).collect::<Result<_, _>>()?,
                examples: spec.examples.clone(),
            });
        }
        let parameters = file
            .parameters
            .iter()
            .map(|(k, p)| Ok((k.clone(), compile(p)?)))
            .collect::<Result<_, GrammarError>>()?;
        Ok(Self {
            version: file.version,
            synonyms,
            feature_aliases,
            fuzzy_threshold: file.fuzzy_threshold,
            intents,
            parameters,
        })
    }

    /// Example phrasings per intent, in grammar order.
    pub fn examples(&self) -> Vec<(IntentName, &str)> {
        self.intents
            .iter()
            .flat_map(|i| i.examples.iter().map(move |e| (i.name, e.as_str())))
            .collect()
    }
}
