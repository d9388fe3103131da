//! Reply text for engine results. Confidences are shown with 3 decimals.

use fuzzkb_core::query::{QueryKind, QueryResult};
use fuzzkb_core::rulebase::{FuzzyRule, KnowledgeBase};
use serde::{Deserialize, Serialize};

use crate::grammar::IntentName;

/// A rule prepared for display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleView {
    pub id: usize,
    /// (feature, term) pairs in schema order.
    pub antecedent: Vec<(String, String)>,
    pub class_feature: String,
    pub class_label: String,
    pub rule_confidence: f64,
}

impl RuleView {
    pub fn new(kb: &KnowledgeBase, rule: &FuzzyRule, class_feature: &str) -> Self {
        Self {
            id: rule.id,
            antecedent: kb
                .features
                .iter()
                .zip(&rule.antecedent)
                .map(|(f, s)| (f.name.clone(), s.term.clone()))
                .collect(),
            class_feature: class_feature.to_string(),
            class_label: rule.class_label.clone(),
            rule_confidence: rule.rule_confidence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Loaded { dataset: String, instances: usize, features: Vec<String> },
    DataStats { instances: usize, features: Vec<String> },
    Histogram { feature: String },
    Correlation { a: String, b: String, r: f64, p_value: f64 },
    CorrelationMatrix,
    Trained { accuracy: f64, k: usize, ignored_parameters: Vec<String> },
    Split { train_fraction: f64, train: usize, test: usize },
    Built { features: Vec<String>, class_feature: String, classes: Vec<String>, symbols: usize },
    Complexity { value: f64 },
    Bias { feature: String, value: f64 },
    TopRules { rules: Vec<RuleView> },
    Query { result: QueryResult },
    Closest { rule: RuleView },
    Help { examples: Vec<String> },
    Rejected { message: String, suggestion: String },
    Failure { message: String },
}

/// "preg" → "Preg".
pub fn display_feature(name: &str) -> String {
    let mut c = name.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// "very_low" → "very low".
pub fn display_term(term: &str) -> String {
    term.replace('_', " ")
}

pub fn fmt3(v: f64) -> String {
    format!("{v:.3}")
}

/// "a", "a and b", "a, b, and c".
pub fn join_list(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [a] => a.clone(),
        [a, b] => format!("{a} and {b}"),
        [init @ .., last] => format!("{}, and {last}", init.join(", ")),
    }
}

pub fn render_rule(r: &RuleView) -> String {
    let parts: Vec<String> = r
        .antecedent
        .iter()
        .map(|(f, t)| format!("{} is {}", display_feature(f), display_term(t)))
        .collect();
    format!(
        "If {}, then {} is {}.",
        parts.join(", "),
        display_feature(&r.class_feature),
        r.class_label
    )
}

fn render_query(intent: IntentName, result: &QueryResult) -> String {
    let counterfactual = intent == IntentName::RunCfQuery || result.kind == QueryKind::Counterfactual;
    let verb = if counterfactual { "should be" } else { "is" };
    let Some(top) = result.solutions.first() else {
        let mut s = String::from("I could not find any rule matching your query.");
        match &result.hint {
            Some(h) if h.mismatches.is_empty() => s.push_str(&format!(
                " The nearest candidate is rule #{}, with a rule certainty of {}.",
                h.rule_id,
                fmt3(h.rule_confidence)
            )),
            Some(h) => {
                let diffs: Vec<String> = h
                    .mismatches
                    .iter()
                    .map(|(f, t)| format!("{} is {}", display_feature(f), display_term(t)))
                    .collect();
                s.push_str(&format!(
                    " The nearest candidate is rule #{}, where {} (rule certainty {}).",
                    h.rule_id,
                    join_list(&diffs),
                    fmt3(h.rule_confidence)
                ));
            }
            None => s.push_str(&format!(" No rule predicts {}.", result.desired_class)),
        }
        return s;
    };
    let mut s = String::from("I have run the query for you. These are the results:");
    for b in &top.bindings {
        s.push_str(&format!(
            " {} {verb} {}, with a certainty of {}.",
            display_feature(&b.feature),
            display_term(&b.term),
            fmt3(b.confidence)
        ));
    }
    s.push_str(&format!(" The entire rule has a certainty of {}.", fmt3(top.rule_confidence)));
    s
}

fn strength(r: f64) -> &'static str {
    match r.abs() {
        a if a >= 0.7 => "The correlation seems to be strong.",
        a if a >= 0.3 => "The correlation seems to be moderate.",
        _ => "The correlation does not seem to be very strong.",
    }
}

/// Fill the reply template for `intent` with `payload`.
pub fn render_answer(intent: IntentName, payload: &Payload) -> String {
    match payload {
        Payload::Loaded { dataset, instances, features } => format!(
            "I loaded the {dataset} dataset: {instances} instances described by {} features.",
            features.len()
        ),
        Payload::DataStats { instances, features } => {
            let names: Vec<String> = features.iter().map(|f| display_feature(f)).collect();
            format!(
                "The dataset contains the following variables: {}. The dataset has {instances} instances in total.",
                join_list(&names)
            )
        }
        Payload::Histogram { feature } => {
            format!("There you go! This is how {} is distributed.", display_feature(feature))
        }
        Payload::Correlation { a, b, r, p_value } => format!(
            "The correlation value between {} and {} is {:.2}. The associated p-value is {:.2e}. {}",
            display_feature(a),
            display_feature(b),
            r,
            p_value,
            strength(*r)
        ),
        Payload::CorrelationMatrix => "This is what the correlation matrix looks like.".into(),
        Payload::Trained { accuracy, k, ignored_parameters } => {
            let mut s = format!(
                "I trained the baseline k-nearest-neighbour classifier (k = {k}) on the dataset. The accuracy on the test set is {}.",
                fmt3(*accuracy)
            );
            if !ignored_parameters.is_empty() {
                s.push_str(&format!(
                    " The baseline has no {} parameter, so it was ignored.",
                    join_list(ignored_parameters)
                ));
            }
            s.push_str(" You can retrain with a different number of neighbours, or build the explanation module.");
            s
        }
        Payload::Split { train_fraction, train, test } => {
            let tr = (train_fraction * 100.0).round();
            format!(
                "I used {tr}% of the data ({train} instances) for training the classification model. For testing, I used the remaining {}% of the data ({test} instances).",
                100.0 - tr
            )
        }
        Payload::Built { features, class_feature, classes, symbols } => {
            let mut names: Vec<String> = features.iter().map(|f| display_feature(f)).collect();
            names.push(display_feature(class_feature));
            format!(
                "Done! I mapped every numeric variable to {symbols} symbolic terms, scored the rules with fuzzy-rough regions and built a knowledge base in Prolog to run queries. Please use these feature names: {}. The decision classes are {}.",
                join_list(&names),
                join_list(classes)
            )
        }
        Payload::Complexity { value } => format!(
            "The complexity of this problem is {}. Higher values mean that more rules in the knowledge base conflict with each other.",
            fmt3(*value)
        ),
        Payload::Bias { feature, value } => format!(
            "The fuzzy-rough uncertainty (explicit bias) against {} is {}. It measures how much the fuzzy-rough regions change when this feature is removed.",
            display_feature(feature),
            fmt3(*value)
        ),
        Payload::TopRules { rules } => {
            let mut s = format!("These are the top {} rules in the knowledge base:", rules.len());
            for (i, r) in rules.iter().enumerate() {
                s.push_str(&format!(
                    "\nRule #{}: {} (certainty {})",
                    i + 1,
                    render_rule(r),
                    fmt3(r.rule_confidence)
                ));
            }
            s
        }
        Payload::Query { result } => render_query(intent, result),
        Payload::Closest { rule } => {
            format!("I found that the following rule is the closest: {}", render_rule(rule))
        }
        Payload::Help { examples } => {
            let mut s = String::from("You can ask me things like:");
            for e in examples {
                s.push_str(&format!("\n- {e}"));
            }
            s
        }
        Payload::Rejected { message, suggestion } => {
            format!("{message} You could try something like: \"{suggestion}\"")
        }
        Payload::Failure { message } => message.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fuzzkb_core::query::{Binding, Solution};

    fn result(kind: QueryKind, bindings: Vec<(&str, &str, f64)>, rule: f64) -> QueryResult {
        QueryResult {
            kind,
            desired_class: "tested_negative".into(),
            contrast_class: None,
            solutions: vec![Solution {
                rule_id: 0,
                bindings: bindings
                    .into_iter()
                    .map(|(f, t, c)| Binding { feature: f.into(), term: t.into(), confidence: c })
                    .collect(),
                rule_confidence: rule,
                min_antecedent_confidence: 0.5,
            }],
            total_matches: 1,
            relaxed_known: false,
            hint: None,
        }
    }

    #[test]
    fn whatif_reply() {
        let r = result(QueryKind::Whatif, vec![("age", "very_low", 0.99149)], 0.9544);
        assert_eq!(
            render_answer(IntentName::RunFullQuery, &Payload::Query { result: r }),
            "I have run the query for you. These are the results: Age is very low, with a certainty of 0.991. The entire rule has a certainty of 0.954."
        );
    }

    #[test]
    fn counterfactual_reply() {
        let r = result(
            QueryKind::Counterfactual,
            vec![("preg", "very_high", 0.929), ("gluc", "high", 0.924)],
            0.883,
        );
        let text = render_answer(IntentName::RunCfQuery, &Payload::Query { result: r });
        assert!(text.contains("Preg should be very high, with a certainty of 0.929."));
        assert!(text.contains("Gluc should be high, with a certainty of 0.924."));
        assert!(text.ends_with("The entire rule has a certainty of 0.883."));
    }

    #[test]
    fn empty_query_reply() {
        let mut r = result(QueryKind::Whatif, vec![], 0.0);
        r.solutions.clear();
        let text = render_answer(IntentName::RunFullQuery, &Payload::Query { result: r });
        assert!(text.starts_with("I could not find any rule matching your query."));
    }

    #[test]
    fn lists_and_templates() {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        assert_eq!(join_list(&names), "a, b, and c");
        assert_eq!(join_list(&names[..2]), "a and b");
        assert_eq!(
            render_answer(IntentName::ProblemComplexity, &Payload::Complexity { value: 0.1384 }),
            "The complexity of this problem is 0.138. Higher values mean that more rules in the knowledge base conflict with each other."
        );
        let split = render_answer(IntentName::TrainTestSamples, &Payload::Split { train_fraction: 0.8, train: 614, test: 154 });
        assert!(split.contains("80% of the data (614 instances)"));
        assert!(split.contains("20% of the data (154 instances)"));
        let corr = render_answer(
            IntentName::PlotCorrelation,
            &Payload::Correlation { a: "age".into(), b: "pres".into(), r: 0.2396, p_value: 1.75e-11 },
        );
        assert!(corr.contains("is 0.24."));
        assert!(corr.contains("1.75e-11"));
    }

    #[test]
    fn rule_text() {
        let r = RuleView {
            id: 3,
            antecedent: vec![("preg".into(), "very_low".into()), ("age".into(), "low".into())],
            class_feature: "class".into(),
            class_label: "tested_negative".into(),
            rule_confidence: 0.9,
        };
        assert_eq!(render_rule(&r), "If Preg is very low, Age is low, then Class is tested_negative.");
    }
}
