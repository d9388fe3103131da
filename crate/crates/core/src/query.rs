//! What-if and counterfactual resolution over a knowledge base.
//!
//! A query fixes some feature symbols (the known bindings), asks for the
//! symbols of other features (the unknowns) and names the class the rule must
//! predict. Every rule of that class agreeing with the known bindings is a
//! solution; solutions are ranked by rule confidence, then by their weakest
//! antecedent confidence, then by id.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fuzzy_rough::rule_distance;
use crate::rulebase::{FuzzyRule, KnowledgeBase};

pub const DEFAULT_LIMIT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    #[default]
    Whatif,
    Counterfactual,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Constraints {
    pub min_term_confidence: Option<f64>,
    pub min_rule_confidence: Option<f64>,
    /// Feature → terms the unknown bindings must avoid.
    pub excluded_terms: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Query {
    #[serde(default)]
    pub kind: QueryKind,
    pub desired_class: String,
    #[serde(default)]
    pub contrast_class: Option<String>,
    /// Feature → term.
    #[serde(default)]
    pub known: BTreeMap<String, String>,
    pub unknowns: Vec<String>,
    #[serde(default)]
    pub constraints: Constraints,
    /// Maximum number of solutions returned (default 3).
    #[serde(default)]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binding {
    pub feature: String,
    pub term: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub rule_id: usize,
    pub bindings: Vec<Binding>,
    pub rule_confidence: f64,
    pub min_antecedent_confidence: f64,
}

/// Closest rule of the desired class when nothing matched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearestHint {
    pub rule_id: usize,
    /// Known bindings the candidate disagrees with, as feature → its term.
    pub mismatches: BTreeMap<String, String>,
    pub rule_confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub kind: QueryKind,
    pub desired_class: String,
    pub contrast_class: Option<String>,
    pub solutions: Vec<Solution>,
    /// Number of matching rules before the limit was applied.
    pub total_matches: usize,
    /// Set when the query had no known bindings.
    pub relaxed_known: bool,
    pub hint: Option<NearestHint>,
}

/// A query with names resolved to KB indices.
struct Resolved {
    class: String,
    contrast: Option<String>,
    known: Vec<(usize, String)>,
    unknowns: Vec<usize>,
    excluded: Vec<(usize, Vec<String>)>,
    min_term: f64,
    min_rule: f64,
    limit: usize,
}

fn unit(name: &str, v: Option<f64>) -> Result<f64> {
    match v {
        None => Ok(0.0),
        Some(x) if (0.0..=1.0).contains(&x) => Ok(x),
        Some(x) => Err(Error::validation(format!("{name} must lie in [0,1], got {x}"))),
    }
}

fn resolve_names(kb: &KnowledgeBase, q: &Query) -> Result<Resolved> {
    let feature = |name: &str| {
        kb.feature_index(name)
            .ok_or_else(|| Error::domain(format!("unknown feature '{name}'")))
    };
    let term = |f: usize, t: &str| {
        kb.features[f]
            .term_index(t)
            .map(|i| kb.features[f].terms[i].clone())
            .ok_or_else(|| {
                Error::domain(format!("'{t}' is not a term of {}", kb.features[f].name))
            })
    };
    let class = |c: &str| {
        kb.class_index(c)
            .map(|i| kb.class_domain[i].clone())
            .ok_or_else(|| Error::domain(format!("unknown class '{c}'")))
    };

    let desired = class(&q.desired_class)?;
    let contrast = q.contrast_class.as_deref().map(class).transpose()?;
    if q.kind == QueryKind::Counterfactual && contrast.as_ref() == Some(&desired) {
        return Err(Error::validation(format!(
            "desired and contrast class are both '{desired}'"
        )));
    }
    if q.unknowns.is_empty() {
        return Err(Error::validation("a query needs at least one unknown feature"));
    }
    let mut known = Vec::with_capacity(q.known.len());
    for (f, t) in &q.known {
        let fi = feature(f)?;
        if known.iter().any(|(k, _)| *k == fi) {
            return Err(Error::validation(format!("feature '{f}' bound twice")));
        }
        known.push((fi, term(fi, t)?));
    }
    let mut unknowns = Vec::with_capacity(q.unknowns.len());
    for f in &q.unknowns {
        let fi = feature(f)?;
        if known.iter().any(|(k, _)| *k == fi) {
            return Err(Error::validation(format!(
                "feature '{f}' is both known and unknown"
            )));
        }
        if !unknowns.contains(&fi) {
            unknowns.push(fi);
        }
    }
    let mut excluded = Vec::new();
    for (f, terms) in &q.constraints.excluded_terms {
        let fi = feature(f)?;
        let ts = terms.iter().map(|t| term(fi, t)).collect::<Result<Vec<_>>>()?;
        excluded.push((fi, ts));
    }
    let limit = q.limit.unwrap_or(DEFAULT_LIMIT);
    if limit == 0 {
        return Err(Error::validation("limit must be at least 1"));
    }
    Ok(Resolved {
        class: desired,
        contrast,
        known,
        unknowns,
        excluded,
        min_term: unit("min_term_confidence", q.constraints.min_term_confidence)?,
        min_rule: unit("min_rule_confidence", q.constraints.min_rule_confidence)?,
        limit,
    })
}

fn matches(r: &FuzzyRule, q: &Resolved) -> bool {
    r.class_label == q.class
        && r.rule_confidence >= q.min_rule
        && q.known.iter().all(|(f, t)| r.antecedent[*f].term == *t)
        && q.unknowns.iter().all(|f| r.antecedent[*f].confidence >= q.min_term)
        && q.excluded.iter().all(|(f, ts)| {
            !q.unknowns.contains(f) || !ts.contains(&r.antecedent[*f].term)
        })
}

fn nearest(kb: &KnowledgeBase, q: &Resolved) -> Option<NearestHint> {
    kb.rules
        .iter()
        .filter(|r| r.class_label == q.class)
        .map(|r| {
            let mism: BTreeMap<String, String> = q
                .known
                .iter()
                .filter(|(f, t)| r.antecedent[*f].term != *t)
                .map(|(f, _)| (kb.features[*f].name.clone(), r.antecedent[*f].term.clone()))
                .collect();
            (r, mism)
        })
        .min_by(|(a, ma), (b, mb)| {
            ma.len()
                .cmp(&mb.len())
                .then(b.rule_confidence.total_cmp(&a.rule_confidence))
                .then(a.id.cmp(&b.id))
        })
        .map(|(r, mismatches)| NearestHint {
            rule_id: r.id,
            mismatches,
            rule_confidence: r.rule_confidence,
        })
}

/// Ranking used for solutions: confidence desc, weakest antecedent desc, id asc.
pub fn rank(a: &FuzzyRule, b: &FuzzyRule) -> std::cmp::Ordering {
    b.rule_confidence
        .total_cmp(&a.rule_confidence)
        .then(
            b.min_antecedent_confidence()
                .total_cmp(&a.min_antecedent_confidence()),
        )
        .then(a.id.cmp(&b.id))
}

pub fn resolve(kb: &KnowledgeBase, q: &Query) -> Result<QueryResult> {
    let rq = resolve_names(kb, q)?;
    let mut hits: Vec<&FuzzyRule> = kb.rules.iter().filter(|r| matches(r, &rq)).collect();
    hits.sort_by(|a, b| rank(a, b));
    let total_matches = hits.len();
    let solutions = hits
        .into_iter()
        .take(rq.limit)
        .map(|r| Solution {
            rule_id: r.id,
            bindings: rq
                .unknowns
                .iter()
                .map(|&f| Binding {
                    feature: kb.features[f].name.clone(),
                    term: r.antecedent[f].term.clone(),
                    confidence: r.antecedent[f].confidence,
                })
                .collect(),
            rule_confidence: r.rule_confidence,
            min_antecedent_confidence: r.min_antecedent_confidence(),
        })
        .collect::<Vec<_>>();
    let hint = if solutions.is_empty() {
        nearest(kb, &rq)
    } else {
        None
    };
    Ok(QueryResult {
        kind: q.kind,
        desired_class: rq.class,
        contrast_class: rq.contrast,
        solutions,
        total_matches,
        relaxed_known: rq.known.is_empty(),
        hint,
    })
}

/// Nearest other rule under the KB's distance variant; ties go to the lowest id.
pub fn closest_rule<'a>(kb: &'a KnowledgeBase, reference: &FuzzyRule) -> Result<&'a FuzzyRule> {
    if reference.antecedent.len() != kb.features.len() {
        return Err(Error::validation("reference rule does not fit the KB schema"));
    }
    let variant = kb.scoring.distance;
    kb.rules
        .iter()
        .filter(|r| r.id != reference.id)
        .map(|r| (rule_distance(reference, r, variant, None), r))
        .min_by(|(da, a), (db, b)| da.total_cmp(db).then(a.id.cmp(&b.id)))
        .map(|(_, r)| r)
        .ok_or_else(|| Error::validation("no other rule to compare with"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryContext {
    pub query: Query,
    pub result: QueryResult,
    /// Top solution's rule, if there was one.
    pub rule_id: Option<usize>,
}

/// Remembers the last resolution so follow-up questions can refer to it.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct QuerySession {
    last: Option<QueryContext>,
}

impl QuerySession {
    pub fn resolve(&mut self, kb: &KnowledgeBase, q: &Query) -> Result<QueryResult> {
        let result = resolve(kb, q)?;
        self.last = Some(QueryContext {
            query: q.clone(),
            rule_id: result.solutions.first().map(|s| s.rule_id),
            result: result.clone(),
        });
        Ok(result)
    }

    pub fn last_query_context(&self) -> Option<&QueryContext> {
        self.last.as_ref()
    }

    pub fn clear(&mut self) {
        self.last = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeatureKind;
    use crate::fuzzy_rough::{DistanceVariant, ScoringConfig};
    use crate::granulation::SymbolAssignment;
    use crate::rulebase::FeatureSchema;

    fn rule(id: usize, terms: &[(&str, f64)], class: &str, conf: f64) -> FuzzyRule {
        FuzzyRule {
            id,
            antecedent: terms.iter().map(|(t, c)| SymbolAssignment::new(*t, *c)).collect(),
            class_label: class.into(),
            class_confidence: 1.0,
            rule_confidence: conf,
        }
    }

    fn kb() -> KnowledgeBase {
        let terms: Vec<String> = ["very_low", "low", "medium"].iter().map(|s| s.to_string()).collect();
        KnowledgeBase {
            features: ["preg", "gluc", "age"]
                .iter()
                .map(|n| FeatureSchema {
                    name: n.to_string(),
                    kind: FeatureKind::Numeric,
                    terms: terms.clone(),
                })
                .collect(),
            class_domain: vec!["tested_negative".into(), "tested_positive".into()],
            rules: vec![
                rule(0, &[("very_low", 0.9), ("low", 0.8), ("very_low", 0.991)], "tested_negative", 0.8),
                rule(1, &[("very_low", 0.7), ("low", 0.9), ("medium", 0.6)], "tested_negative", 0.9),
                rule(2, &[("very_low", 1.0), ("low", 1.0), ("low", 0.5)], "tested_positive", 1.0),
                rule(3, &[("low", 1.0), ("medium", 1.0), ("low", 0.95)], "tested_negative", 0.9),
                rule(4, &[("very_low", 0.9), ("low", 0.8), ("very_low", 0.991)], "tested_negative", 0.8),
            ],
            scoring: ScoringConfig { distance: DistanceVariant::Crisp, ..Default::default() },
            granulation: None,
        }
    }

    fn whatif(known: &[(&str, &str)], unknowns: &[&str], class: &str) -> Query {
        Query {
            kind: QueryKind::Whatif,
            desired_class: class.into(),
            contrast_class: None,
            known: known.iter().map(|(f, t)| (f.to_string(), t.to_string())).collect(),
            unknowns: unknowns.iter().map(|s| s.to_string()).collect(),
            constraints: Constraints::default(),
            limit: None,
        }
    }

    #[test]
    fn ranks_by_confidence_then_weakest_then_id() {
        let q = whatif(&[("Preg", "Very_Low"), ("gluc", "low")], &["age"], "TESTED_NEGATIVE");
        let r = resolve(&kb(), &q).unwrap();
        let ids: Vec<usize> = r.solutions.iter().map(|s| s.rule_id).collect();
        assert_eq!(ids, vec![1, 0, 4]);
        assert_eq!(r.total_matches, 3);
        assert_eq!(r.solutions[1].bindings[0].term, "very_low");
        assert_eq!(r.solutions[1].bindings[0].confidence, 0.991);
        assert_eq!(r.desired_class, "tested_negative");
        assert!(!r.relaxed_known);
    }

    #[test]
    fn constraints_filter() {
        let mut q = whatif(&[("preg", "very_low")], &["age"], "tested_negative");
        q.constraints.min_term_confidence = Some(0.95);
        let ids: Vec<usize> = resolve(&kb(), &q).unwrap().solutions.iter().map(|s| s.rule_id).collect();
        assert_eq!(ids, vec![0, 4]);
        q.constraints.min_term_confidence = None;
        q.constraints.min_rule_confidence = Some(0.85);
        let ids: Vec<usize> = resolve(&kb(), &q).unwrap().solutions.iter().map(|s| s.rule_id).collect();
        assert_eq!(ids, vec![1]);
        q.constraints.min_rule_confidence = None;
        q.constraints.excluded_terms.insert("age".into(), vec!["very_low".into()]);
        let ids: Vec<usize> = resolve(&kb(), &q).unwrap().solutions.iter().map(|s| s.rule_id).collect();
        assert_eq!(ids, vec![1]);
    }

    #[test]
    fn relaxed_and_limited() {
        let mut q = whatif(&[], &["preg"], "tested_negative");
        q.limit = Some(1);
        let r = resolve(&kb(), &q).unwrap();
        assert!(r.relaxed_known);
        assert_eq!(r.total_matches, 4);
        assert_eq!(r.solutions.len(), 1);
        assert_eq!(r.solutions[0].rule_id, 3);
    }

    #[test]
    fn errors() {
        let k = kb();
        assert!(matches!(resolve(&k, &whatif(&[("bmi", "low")], &["age"], "tested_negative")), Err(Error::Domain(_))));
        assert!(matches!(resolve(&k, &whatif(&[("preg", "huge")], &["age"], "tested_negative")), Err(Error::Domain(_))));
        assert!(matches!(resolve(&k, &whatif(&[], &["age"], "maybe")), Err(Error::Domain(_))));
        assert!(matches!(resolve(&k, &whatif(&[("age", "low")], &["age"], "tested_negative")), Err(Error::Validation(_))));
        assert!(matches!(resolve(&k, &whatif(&[("age", "low")], &[], "tested_negative")), Err(Error::Validation(_))));
        let mut cf = whatif(&[("age", "medium")], &["preg"], "tested_negative");
        cf.kind = QueryKind::Counterfactual;
        cf.contrast_class = Some("Tested_Negative".into());
        assert!(matches!(resolve(&k, &cf), Err(Error::Validation(_))));
        cf.contrast_class = Some("tested_positive".into());
        let r = resolve(&k, &cf).unwrap();
        assert_eq!(r.solutions[0].rule_id, 1);
        assert_eq!(r.contrast_class.as_deref(), Some("tested_positive"));
    }

    #[test]
    fn empty_result_carries_hint() {
        let q = whatif(&[("preg", "low"), ("gluc", "low"), ("age", "low")], &[], "tested_negative");
        let mut q = q;
        q.known.remove("age");
        q.unknowns = vec!["age".into()];
        let r = resolve(&kb(), &q).unwrap();
        assert!(r.solutions.is_empty());
        let h = r.hint.unwrap();
        // rules 0,1,3,4 each miss one binding; 1 and 3 share top confidence, 1 has lower id
        assert_eq!(h.rule_id, 1);
        assert_eq!(h.mismatches.get("preg").map(String::as_str), Some("very_low"));
    }

    #[test]
    fn closest_rule_prefers_duplicate_then_lowest_id() {
        let k = kb();
        assert_eq!(closest_rule(&k, &k.rules[0]).unwrap().id, 4);
        assert_eq!(closest_rule(&k, &k.rules[4]).unwrap().id, 0);
        // rule 2 vs 0,1,4: one mismatch each (age); lowest id wins
        assert_eq!(closest_rule(&k, &k.rules[2]).unwrap().id, 0);
        let mut single = k.clone();
        single.rules.truncate(1);
        assert!(closest_rule(&single, &single.rules[0]).is_err());
    }

    #[test]
    fn session_tracks_last_query() {
        let k = kb();
        let mut s = QuerySession::default();
        assert!(s.last_query_context().is_none());
        s.resolve(&k, &whatif(&[("preg", "very_low")], &["age"], "tested_negative")).unwrap();
        assert_eq!(s.last_query_context().unwrap().rule_id, Some(1));
        s.resolve(&k, &whatif(&[], &["age"], "tested_positive")).unwrap();
        assert_eq!(s.last_query_context().unwrap().rule_id, Some(2));
    }

    #[test]
    fn query_json_shape() {
        let q: Query = serde_json::from_str(
            r#"{"kind":"counterfactual","desired_class":"tested_negative","contrast_class":"tested_positive",
                "known":{"age":"medium"},"unknowns":["preg","gluc"],
                "constraints":{"min_term_confidence":0.6}}"#,
        )
        .unwrap();
        assert_eq!(q.kind, QueryKind::Counterfactual);
        assert_eq!(q.constraints.min_term_confidence, Some(0.6));
        assert!(serde_json::from_str::<Query>(r#"{"desired_class":"a","unknowns":[],"bogus":1}"#).is_err());
    }
}
