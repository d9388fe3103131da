//! The message endpoint: parse an utterance, run the matching session
//! operation and render the reply with its attachments.

use std::path::Path;

use fuzzkb_core::query::{Query, QueryKind};
use fuzzkb_nlq::{
    display_feature, join_list, parse, render_answer, Grammar, Intent, IntentName, MatchConfidence,
    Payload, RuleView,
};
use serde::{Deserialize, Serialize};

use crate::eda::{CorrelationMatrix, CorrelationSeries, HistogramSeries, DEFAULT_BINS};
use crate::error::{Result, ServiceError};
use crate::session::{
    available_datasets, Author, BuildRequest, Event, LoadRequest, Session, TrainRequest,
};

pub const DEFAULT_TOP_N: usize = 3;

/// Chart data for client-side rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "chart", rename_all = "snake_case")]
pub enum Chart {
    Histogram(HistogramSeries),
    Scatter(CorrelationSeries),
    Heatmap(CorrelationMatrix),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Attachment {
    ChartSeries(Chart),
    Table { columns: Vec<String>, rows: Vec<Vec<String>> },
    KbExcerpt { rules: Vec<RuleView> },
    QueryResult { result: fuzzkb_core::query::QueryResult },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplyStatus {
    Ok,
    /// The utterance was not understood.
    Rejected,
    /// A prerequisite stage is missing.
    Conflict,
    /// The request was understood but could not be carried out.
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageReply {
    pub reply_text: String,
    pub attachments: Vec<Attachment>,
    pub status: ReplyStatus,
    pub intent: Option<IntentName>,
    pub confidence: MatchConfidence,
    pub unrecognized_tokens: Vec<String>,
}

struct Answer {
    payload: Payload,
    attachments: Vec<Attachment>,
}

impl From<Payload> for Answer {
    fn from(payload: Payload) -> Self {
        Self { payload, attachments: Vec::new() }
    }
}

fn missing(what: &str) -> ServiceError {
    ServiceError::BadRequest(format!("I need {what} to answer that."))
}

fn help_examples() -> Vec<String> {
    let grammar = Grammar::builtin();
    let mut seen = Vec::new();
    let mut out = Vec::new();
    for (intent, example) in grammar.examples() {
        if !seen.contains(&intent) {
            seen.push(intent);
            out.push(example.to_string());
        }
    }
    out
}

fn rule_views(session: &Session, rules: &[fuzzkb_core::rulebase::FuzzyRule]) -> Result<Vec<RuleView>> {
    let kb = session.kb()?;
    let class = session.class_feature();
    Ok(rules.iter().map(|r| RuleView::new(kb, r, &class)).collect())
}

fn build_query(intent: &Intent, kind: QueryKind) -> Result<Query> {
    let concepts = intent.entity("known_concept");
    let values = intent.entity("value");
    if concepts.len() != values.len() {
        return Err(ServiceError::BadRequest(
            "Every known variable needs exactly one value, e.g. \"Age is medium\".".into(),
        ));
    }
    let outcomes = intent.entity("outcome");
    let desired = outcomes.first().ok_or_else(|| missing("the outcome you are interested in"))?;
    let unknowns = intent.entity("unknown_concept").to_vec();
    if unknowns.is_empty() {
        return Err(missing("at least one variable to solve for"));
    }
    Ok(Query {
        kind,
        desired_class: desired.clone(),
        contrast_class: outcomes.get(1).cloned(),
        known: concepts.iter().cloned().zip(values.iter().cloned()).collect(),
        unknowns,
        constraints: Default::default(),
        limit: None,
    })
}

fn dispatch(session: &mut Session, intent: &Intent, data_dir: &Path) -> Result<Answer> {
    use IntentName::*;
    Ok(match intent.name {
        Help => Payload::Help { examples: help_examples() }.into(),
        LoadData => {
            let name = intent.first("dataset").ok_or_else(|| {
                ServiceError::BadRequest(format!(
                    "Which dataset should I load? Available: {}.",
                    join_list(&available_datasets(data_dir))
                ))
            })?;
            let info = session.load_dataset(&LoadRequest { name: Some(name.to_string()), arff: None }, data_dir)?;
            Payload::Loaded { dataset: info.name, instances: info.instances, features: info.features }.into()
        }
        DataStats => {
            let info = session.dataset_info()?;
            Payload::DataStats { instances: info.instances, features: info.features }.into()
        }
        PlotHistogram => {
            let var = intent.first("variable").ok_or_else(|| missing("a variable"))?;
            let h = session.histogram(var, DEFAULT_BINS)?;
            Answer {
                payload: Payload::Histogram { feature: h.feature.clone() },
                attachments: vec![Attachment::ChartSeries(Chart::Histogram(h))],
            }
        }
        PlotCorrelation => {
            let vars = intent.entity("variable");
            let [a, b] = vars else { return Err(missing("two variables")) };
            let c = session.correlation(a, b)?;
            Answer {
                payload: Payload::Correlation { a: c.a.clone(), b: c.b.clone(), r: c.r, p_value: c.p_value },
                attachments: vec![Attachment::ChartSeries(Chart::Scatter(c))],
            }
        }
        CorrelationMatrix => Answer {
            payload: Payload::CorrelationMatrix,
            attachments: vec![Attachment::ChartSeries(Chart::Heatmap(session.correlation_matrix()?))],
        },
        TrainModel => {
            let k = intent
                .first("n_estimators")
                .map(|v| v.parse::<usize>().map_err(|_| missing("a whole number of neighbours")))
                .transpose()?;
            let ignored: Vec<String> =
                if intent.first("max_depth").is_some() { vec!["max_depth".into()] } else { Vec::new() };
            let info = session.train(&TrainRequest { k, ..Default::default() })?;
            Payload::Trained { accuracy: info.accuracy, k: info.k, ignored_parameters: ignored }.into()
        }
        TrainTestSamples => {
            let info = session.train_info()?;
            Payload::Split { train_fraction: info.train_fraction, train: info.train, test: info.test }.into()
        }
        TrainExplanationModule => {
            let info = session.build(&BuildRequest::default())?;
            Payload::Built {
                features: info.features,
                class_feature: info.class_feature,
                classes: info.classes,
                symbols: info.symbols,
            }
            .into()
        }
        ProblemComplexity => Payload::Complexity { value: session.complexity()?.value }.into(),
        Bias => {
            let var = intent.first("variable").ok_or_else(|| missing("a variable"))?;
            let b = session.bias(var)?;
            Payload::Bias { feature: b.feature, value: b.value }.into()
        }
        TopRulesKb => {
            let n = match intent.first("top_n") {
                Some(v) => v.parse::<usize>().map_err(|_| missing("a whole number of rules"))?,
                None => DEFAULT_TOP_N,
            };
            let rules = rule_views(session, &session.top_rules(n)?)?;
            Answer {
                payload: Payload::TopRules { rules: rules.clone() },
                attachments: vec![Attachment::KbExcerpt { rules }],
            }
        }
        RunFullQuery | RunCfQuery => {
            let kind = if intent.name == RunCfQuery { QueryKind::Counterfactual } else { QueryKind::Whatif };
            let q = build_query(intent, kind)?;
            let result = session.query(kind, q)?;
            let mut attachments = vec![Attachment::QueryResult { result: result.clone() }];
            if let Some(top) = result.solutions.first() {
                let rule = session.kb()?.rule(top.rule_id).cloned();
                attachments.push(Attachment::KbExcerpt { rules: rule_views(session, &rule.into_iter().collect::<Vec<_>>())? });
            }
            Answer { payload: Payload::Query { result }, attachments }
        }
        ClosestInstance => {
            let info = session.closest(None)?;
            let rules = rule_views(session, &[info.reference, info.closest])?;
            Answer {
                payload: Payload::Closest { rule: rules[1].clone() },
                attachments: vec![Attachment::KbExcerpt { rules }],
            }
        }
    })
}

fn needs_kb(intent: IntentName) -> bool {
    use IntentName::*;
    matches!(intent, ProblemComplexity | Bias | TopRulesKb | RunFullQuery | RunCfQuery | ClosestInstance)
}

fn clarify(session: &Session, tokens: &[String]) -> String {
    let quoted: Vec<String> = tokens.iter().map(|t| format!("\"{t}\"")).collect();
    let schema = session.schema();
    let mut s = format!("I don't know {}.", join_list(&quoted));
    if !schema.is_empty() {
        let names: Vec<String> = schema.features.iter().map(|f| display_feature(&f.name)).collect();
        s.push_str(&format!(" Please use these feature names: {}.", join_list(&names)));
        if let Some(terms) = schema.features.iter().find(|f| !f.terms.is_empty()) {
            let t: Vec<String> = terms.terms.iter().map(|t| fuzzkb_nlq::display_term(t)).collect();
            s.push_str(&format!(" Values are {}.", join_list(&t)));
        }
        s.push_str(&format!(" Outcomes are {}.", join_list(&schema.classes)));
    }
    s
}

/// Handle one chat message. Stage problems and bad requests come back as
/// guidance in the reply, never as transport errors.
pub fn handle_message(session: &mut Session, text: &str, data_dir: &Path) -> MessageReply {
    session.events.push(Event { author: Author::User, text: text.to_string() });
    let parsed = parse(text, &session.schema());
    let mut reply = MessageReply {
        reply_text: String::new(),
        attachments: Vec::new(),
        status: ReplyStatus::Ok,
        intent: parsed.intent.as_ref().map(|i| i.name),
        confidence: parsed.confidence,
        unrecognized_tokens: parsed.unrecognized_tokens.clone(),
    };
    // Without a KB the schema has no terms yet, so report the missing stage
    // rather than complaining about unknown words.
    let stage_first = parsed.intent.as_ref().is_some_and(|i| needs_kb(i.name)) && session.kb.is_none();
    match (&parsed.intent, &parsed.rejection) {
        (Some(intent), _) if parsed.unrecognized_tokens.is_empty() || stage_first => match dispatch(session, intent, data_dir) {
            Ok(answer) => {
                reply.reply_text = render_answer(intent.name, &answer.payload);
                reply.attachments = answer.attachments;
            }
            Err(e) => {
                reply.status = match e {
                    ServiceError::Conflict(_) => ReplyStatus::Conflict,
                    _ => ReplyStatus::Error,
                };
                reply.reply_text = render_answer(intent.name, &Payload::Failure { message: e.to_string() });
            }
        },
        (Some(_), _) => {
            reply.status = ReplyStatus::Rejected;
            reply.reply_text = clarify(session, &parsed.unrecognized_tokens);
        }
        (None, Some(rej)) => {
            reply.status = ReplyStatus::Rejected;
            reply.reply_text = render_answer(
                IntentName::Help,
                &Payload::Rejected { message: rej.message.clone(), suggestion: rej.suggestion.clone() },
            );
        }
        (None, None) => {
            reply.status = ReplyStatus::Rejected;
            reply.reply_text = "I did not understand that. Ask me for help to see what I can do.".into();
        }
    }
    session.events.push(Event { author: Author::Bot, text: reply.reply_text.clone() });
    reply
}
