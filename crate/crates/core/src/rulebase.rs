//! Symbolic rule base: one fuzzy rule per instance, with Prolog and JSON
//! serialisation.
//!
//! Clause shape:
//!
//! ```text
//! input(0, [[very_low,0.991000], [low,0.870000], 0.954000]) :- output([tested_negative,1.000000]).
//! ```

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureKind, Value};
use crate::error::{Error, Result};
use crate::fuzzy_rough::{DistanceVariant, Implicator, ScoringConfig};
use crate::granulation::{Granulation, SymbolAssignment};
use crate::prediction::Prediction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyRule {
    pub id: usize,
    /// One assignment per non-class feature, in schema order.
    pub antecedent: Vec<SymbolAssignment>,
    pub class_label: String,
    pub class_confidence: f64,
    pub rule_confidence: f64,
}

impl FuzzyRule {
    /// Smallest antecedent confidence (1.0 for an empty antecedent).
    pub fn min_antecedent_confidence(&self) -> f64 {
        self.antecedent
            .iter()
            .map(|s| s.confidence)
            .fold(1.0, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub name: String,
    pub kind: FeatureKind,
    /// Ordered symbol vocabulary of the feature.
    pub terms: Vec<String>,
}

impl FeatureSchema {
    pub fn term_index(&self, term: &str) -> Option<usize> {
        self.terms.iter().position(|t| t.eq_ignore_ascii_case(term))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub features: Vec<FeatureSchema>,
    pub class_domain: Vec<String>,
    pub rules: Vec<FuzzyRule>,
    pub scoring: ScoringConfig,
    /// Absent when the KB was reloaded from a Prolog file.
    #[serde(default)]
    pub granulation: Option<Granulation>,
}

/// Lowercase the text and replace every non-alphanumeric character with `_`.
/// Names that would not start with a lowercase letter get an `x_` prefix so
/// the result is a plain Prolog atom.
pub fn atom(text: &str) -> String {
    let body: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    match body.chars().next() {
        Some(c) if c.is_ascii_lowercase() => body,
        _ => format!("x_{body}"),
    }
}

fn atoms_checked(what: &str, names: &[String]) -> Result<Vec<String>> {
    let mut seen: HashMap<String, &str> = HashMap::new();
    let mut out = Vec::with_capacity(names.len());
    for n in names {
        let a = atom(n);
        if let Some(prev) = seen.insert(a.clone(), n) {
            return Err(Error::validation(format!(
                "{what}: '{prev}' and '{n}' both map to atom '{a}'"
            )));
        }
        out.push(a);
    }
    Ok(out)
}

impl KnowledgeBase {
    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features
            .iter()
            .position(|f| f.name.eq_ignore_ascii_case(name))
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_domain
            .iter()
            .position(|c| c.eq_ignore_ascii_case(name))
    }

    pub fn rule(&self, id: usize) -> Option<&FuzzyRule> {
        self.rules.get(id).filter(|r| r.id == id)
    }

    pub fn avg_rule_confidence(&self) -> f64 {
        mean(self.rules.iter().map(|r| r.rule_confidence))
    }

    /// Mean over all rules and features of the antecedent confidences.
    pub fn avg_antecedent_confidence(&self) -> f64 {
        mean(
            self.rules
                .iter()
                .flat_map(|r| r.antecedent.iter().map(|s| s.confidence)),
        )
    }

    /// Check ids, arity, vocabulary and confidence ranges.
    pub fn validate(&self) -> Result<()> {
        self.scoring.validate()?;
        for (i, r) in self.rules.iter().enumerate() {
            if r.id != i {
                return Err(Error::validation(format!("rule at position {i} has id {}", r.id)));
            }
            if r.antecedent.len() != self.features.len() {
                return Err(Error::validation(format!(
                    "rule {i}: {} antecedent terms, expected {}",
                    r.antecedent.len(),
                    self.features.len()
                )));
            }
            if !self.class_domain.contains(&r.class_label) {
                return Err(Error::domain(format!("rule {i}: unknown class '{}'", r.class_label)));
            }
            for (f, s) in self.features.iter().zip(&r.antecedent) {
                if !f.terms.contains(&s.term) {
                    return Err(Error::domain(format!(
                        "rule {i}: '{}' is not a term of {}",
                        s.term, f.name
                    )));
                }
                check_unit(i, s.confidence)?;
            }
            check_unit(i, r.class_confidence)?;
            check_unit(i, r.rule_confidence)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let kb: KnowledgeBase = serde_json::from_str(text)?;
        kb.validate()?;
        Ok(kb)
    }
}

/// Largest confidence difference between two rule lists that agree on ids,
/// terms and classes; `None` when they differ structurally.
pub fn confidence_gap(a: &[FuzzyRule], b: &[FuzzyRule]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let mut gap: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        if x.id != y.id || x.class_label != y.class_label || x.antecedent.len() != y.antecedent.len() {
            return None;
        }
        for (s, t) in x.antecedent.iter().zip(&y.antecedent) {
            if s.term != t.term {
                return None;
            }
            gap = gap.max((s.confidence - t.confidence).abs());
        }
        gap = gap
            .max((x.class_confidence - y.class_confidence).abs())
            .max((x.rule_confidence - y.rule_confidence).abs());
    }
    Some(gap)
}

fn check_unit(rule: usize, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::validation(format!("rule {rule}: confidence {v} outside [0,1]")))
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// One rule per dataset row. Numeric cells are mapped to their strongest
/// symbol, nominal cells are kept as-is with confidence 1. Rule confidences
/// start at 1 until the KB is scored.
pub fn build_rules(
    ds: &Dataset,
    gran: &Granulation,
    preds: &[Prediction],
    scoring: ScoringConfig,
) -> Result<KnowledgeBase> {
    scoring.validate()?;
    if preds.len() != ds.len() {
        return Err(Error::validation(format!(
            "{} predictions for {} instances",
            preds.len(),
            ds.len()
        )));
    }
    if ds.has_missing() {
        return Err(Error::validation("dataset must be imputed before building rules"));
    }
    let class_atoms = atoms_checked("class", ds.class_domain())?;
    let mut features = Vec::with_capacity(ds.features.len());
    let mut granules = Vec::with_capacity(ds.features.len());
    let mut nominal_atoms: Vec<Vec<String>> = Vec::with_capacity(ds.features.len());
    for f in &ds.features {
        match f.kind {
            FeatureKind::Numeric => {
                let g = gran.get(&f.name).ok_or_else(|| {
                    Error::validation(format!("no granulation for feature '{}'", f.name))
                })?;
                features.push(FeatureSchema {
                    name: f.name.clone(),
                    kind: FeatureKind::Numeric,
                    terms: g.terms.clone(),
                });
                granules.push(Some(g));
                nominal_atoms.push(Vec::new());
            }
            FeatureKind::Nominal => {
                let atoms = atoms_checked(&f.name, &f.domain)?;
                features.push(FeatureSchema {
                    name: f.name.clone(),
                    kind: FeatureKind::Nominal,
                    terms: atoms.clone(),
                });
                granules.push(None);
                nominal_atoms.push(atoms);
            }
        }
    }
    let rules = (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let p = &preds[i];
            if p.instance_id != i {
                return Err(Error::validation(format!(
                    "prediction {i} refers to instance {}",
                    p.instance_id
                )));
            }
            let class = ds
                .class_domain()
                .iter()
                .position(|c| *c == p.class_label)
                .ok_or_else(|| Error::domain(format!("unknown class '{}'", p.class_label)))?;
            let mut antecedent = Vec::with_capacity(features.len());
            for (j, cell) in ds.rows[i].iter().enumerate() {
                let s = match (cell, granules[j]) {
                    (Value::Numeric(x), Some(g)) => g.assign(*x),
                    (Value::Nominal(v), None) => SymbolAssignment {
                        term: nominal_atoms[j][*v].clone(),
                        confidence: 1.0,
                    },
                    _ => {
                        return Err(Error::validation(format!(
                            "row {i}: unexpected value for '{}'",
                            features[j].name
                        )))
                    }
                };
                antecedent.push(s);
            }
            Ok(FuzzyRule {
                id: i,
                antecedent,
                class_label: class_atoms[class].clone(),
                class_confidence: p.confidence,
                rule_confidence: 1.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KnowledgeBase {
        features,
        class_domain: class_atoms,
        rules,
        scoring,
        granulation: Some(gran.clone()),
    })
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

/// Render the KB as Prolog text: a `%` header followed by one clause per rule.
pub fn prolog_string(kb: &KnowledgeBase) -> String {
    let mut s = String::new();
    s.push_str("% fuzzkb knowledge base\n");
    for f in &kb.features {
        let kind = match f.kind {
            FeatureKind::Numeric => "numeric",
            FeatureKind::Nominal => "nominal",
        };
        let _ = writeln!(
            s,
            "% feature {} {}: {}",
            serde_json::Value::String(f.name.clone()),
            kind,
            f.terms.join(", ")
        );
    }
    let _ = writeln!(s, "% classes: {}", kb.class_domain.join(", "));
    if let Some(g) = &kb.granulation {
        let _ = writeln!(
            s,
            "% granulation: c={} m={} max_iters={} tol={:e}",
            g.config.c, g.config.m, g.config.max_iters, g.config.tol
        );
    }
    let _ = writeln!(
        s,
        "% scoring: implicator={} distance={} lambda={}",
        kb.scoring.implicator, kb.scoring.distance, kb.scoring.lambda
    );
    let _ = writeln!(s, "% rules: {}", kb.rules.len());
    for r in &kb.rules {
        let _ = write!(s, "input({}, [", r.id);
        for a in &r.antecedent {
            let _ = write!(s, "[{},{}], ", a.term, fmt6(a.confidence));
        }
        let _ = writeln!(
            s,
            "{}]) :- output([{},{}]).",
            fmt6(r.rule_confidence),
            r.class_label,
            fmt6(r.class_confidence)
        );
    }
    s
}

pub fn export_prolog<W: Write>(kb: &KnowledgeBase, mut sink: W) -> Result<()> {
    sink.write_all(prolog_string(kb).as_bytes())?;
    sink.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Atom(String),
    Num(f64),
    Punct(char),
    Neck,
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>> {
    let mut out = Vec::new();
    let mut line = 1;
    let mut it = text.char_indices().peekable();
    while let Some((i, c)) = it.next() {
        match c {
            '\n' => line += 1,
            c if c.is_whitespace() => {}
            '%' => {
                while let Some(&(_, c)) = it.peek() {
                    if c == '\n' {
                        break;
                    }
                    it.next();
                }
            }
            '(' | ')' | '[' | ']' | ',' | '.' => out.push((Tok::Punct(c), line)),
            ':' => match it.next() {
                Some((_, '-')) => out.push((Tok::Neck, line)),
                _ => return Err(Error::parse(line, "expected ':-'")),
            },
            c if c.is_ascii_lowercase() => {
                let mut end = i + c.len_utf8();
                while let Some(&(j, d)) = it.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        end = j + d.len_utf8();
                        it.next();
                    } else {
                        break;
                    }
                }
                out.push((Tok::Atom(text[i..end].to_string()), line));
            }
            c if c.is_ascii_digit() || c == '-' => {
                let mut end = i + 1;
                loop {
                    let Some(&(j, d)) = it.peek() else { break };
                    let take = d.is_ascii_digit()
                        || matches!(d, 'e' | 'E')
                        || (matches!(d, '+' | '-') && matches!(text[..j].chars().last(), Some('e' | 'E')))
                        || (d == '.'
                            && text[j + 1..].chars().next().is_some_and(|n| n.is_ascii_digit()));
                    if !take {
                        break;
                    }
                    end = j + 1;
                    it.next();
                }
                let lit = &text[i..end];
                let v: f64 = lit
                    .parse()
                    .map_err(|_| Error::parse(line, format!("bad number '{lit}'")))?;
                out.push((Tok::Num(v), line));
            }
            other => return Err(Error::parse(line, format!("unexpected character '{other}'"))),
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    clause: usize,
}

impl Cursor<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        let line = self
            .toks
            .get(self.pos)
            .or(self.toks.last())
            .map(|t| t.1)
            .unwrap_or(0);
        Error::Clause {
            clause: self.clause,
            message: format!("line {line}: {}", msg.into()),
        }
    }

    fn next(&mut self) -> Option<&Tok> {
        let t = self.toks.get(self.pos).map(|t| &t.0);
        self.pos += 1;
        t
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn punct(&mut self, c: char) -> Result<()> {
        match self.next() {
            Some(Tok::Punct(p)) if *p == c => Ok(()),
            other => {
                let found = format!("{other:?}");
                self.pos -= 1;
                Err(self.err(format!("expected '{c}', found {found}")))
            }
        }
    }

    fn atom(&mut self) -> Result<String> {
        match self.next() {
            Some(Tok::Atom(a)) => Ok(a.clone()),
            _ => {
                self.pos -= 1;
                Err(self.err("expected an atom"))
            }
        }
    }

    fn num(&mut self) -> Result<f64> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(*v),
            _ => {
                self.pos -= 1;
                Err(self.err("expected a number"))
            }
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<()> {
        let a = self.atom()?;
        if a == kw {
            Ok(())
        } else {
            self.pos -= 1;
            Err(self.err(format!("expected '{kw}', found '{a}'")))
        }
    }
}

fn parse_clause(c: &mut Cursor) -> Result<FuzzyRule> {
    c.keyword("input")?;
    c.punct('(')?;
    let id = c.num()?;
    if id < 0.0 || id.fract() != 0.0 {
        return Err(c.err(format!("bad rule id {id}")));
    }
    c.punct(',')?;
    c.punct('[')?;
    let mut antecedent = Vec::new();
    while c.peek() == Some(&Tok::Punct('[')) {
        c.punct('[')?;
        let term = c.atom()?;
        c.punct(',')?;
        let confidence = c.num()?;
        c.punct(']')?;
        c.punct(',')?;
        antecedent.push(SymbolAssignment { term, confidence });
    }
    let rule_confidence = c.num()?;
    c.punct(']')?;
    c.punct(')')?;
    match c.next() {
        Some(Tok::Neck) => {}
        _ => {
            c.pos -= 1;
            return Err(c.err("expected ':-'"));
        }
    }
    c.keyword("output")?;
    c.punct('(')?;
    c.punct('[')?;
    let class_label = c.atom()?;
    c.punct(',')?;
    let class_confidence = c.num()?;
    c.punct(']')?;
    c.punct(')')?;
    c.punct('.')?;
    Ok(FuzzyRule {
        id: id as usize,
        antecedent,
        class_label,
        class_confidence,
        rule_confidence,
    })
}

#[derive(Default)]
struct Header {
    features: Vec<FeatureSchema>,
    classes: Option<Vec<String>>,
    scoring: Option<ScoringConfig>,
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn parse_header(text: &str) -> Result<Header> {
    let mut h = Header::default();
    for (n, line) in text.lines().enumerate() {
        let Some(body) = line.trim_start().strip_prefix('%') else {
            continue;
        };
        let body = body.trim();
        if let Some(rest) = body.strip_prefix("feature ") {
            let mut names = serde_json::Deserializer::from_str(rest).into_iter::<String>();
            let name = match names.next() {
                Some(Ok(name)) => name,
                _ => return Err(Error::parse(n + 1, "feature line needs a quoted name")),
            };
            let rest = &rest[names.byte_offset()..];
            let (kind, terms) = rest
                .split_once(':')
                .ok_or_else(|| Error::parse(n + 1, "feature line without ':'"))?;
            let kind = match kind.trim() {
                "numeric" => FeatureKind::Numeric,
                "nominal" => FeatureKind::Nominal,
                k => return Err(Error::parse(n + 1, format!("unknown feature kind '{k}'"))),
            };
            h.features.push(FeatureSchema {
                name,
                kind,
                terms: split_list(terms),
            });
        } else if let Some(rest) = body.strip_prefix("classes:") {
            h.classes = Some(split_list(rest));
        } else if let Some(rest) = body.strip_prefix("scoring:") {
            let mut cfg = ScoringConfig::default();
            for kv in rest.split_whitespace() {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::parse(n + 1, format!("bad scoring entry '{kv}'")))?;
                match k {
                    "implicator" => {
                        cfg.implicator = v
                            .parse::<Implicator>()
                            .map_err(|e| Error::parse(n + 1, e.to_string()))?
                    }
                    "distance" => {
                        cfg.distance = v
                            .parse::<DistanceVariant>()
                            .map_err(|e| Error::parse(n + 1, e.to_string()))?
                    }
                    "lambda" => {
                        cfg.lambda = v
                            .parse()
                            .map_err(|_| Error::parse(n + 1, format!("bad lambda '{v}'")))?
                    }
                    _ => {}
                }
            }
            h.scoring = Some(cfg);
        }
    }
    Ok(h)
}

/// Read a KB written by [`export_prolog`]. Feature names, vocabularies and
/// the scoring configuration come from the header when present, otherwise
/// they are inferred from the clauses (features are then named `f0`, `f1`,
/// ...). The granulation prototypes are not part of the Prolog format.
pub fn parse_prolog_kb(text: &str) -> Result<KnowledgeBase> {
    let header = parse_header(text)?;
    let toks = tokenize(text)?;
    let mut cur = Cursor {
        toks: &toks,
        pos: 0,
        clause: 0,
    };
    let mut rules: Vec<FuzzyRule> = Vec::new();
    let mut arity = if header.features.is_empty() {
        None
    } else {
        Some(header.features.len())
    };
    while cur.peek().is_some() {
        let r = parse_clause(&mut cur)?;
        let expected = *arity.get_or_insert(r.antecedent.len());
        if r.antecedent.len() != expected {
            return Err(Error::Clause {
                clause: cur.clause,
                message: format!(
                    "{} term/confidence pairs, expected {expected}",
                    r.antecedent.len()
                ),
            });
        }
        if r.id != rules.len() {
            return Err(Error::Clause {
                clause: cur.clause,
                message: format!("rule id {} out of sequence (expected {})", r.id, rules.len()),
            });
        }
        rules.push(r);
        cur.clause += 1;
    }

    let features = if header.features.is_empty() {
        let n = arity.unwrap_or(0);
        (0..n)
            .map(|j| FeatureSchema {
                name: format!("f{j}"),
                kind: FeatureKind::Numeric,
                terms: first_seen(rules.iter().map(|r| r.antecedent[j].term.as_str())),
            })
            .collect()
    } else {
        header.features
    };
    let class_domain = header
        .classes
        .unwrap_or_else(|| first_seen(rules.iter().map(|r| r.class_label.as_str())));
    let kb = KnowledgeBase {
        features,
        class_domain,
        rules,
        scoring: header.scoring.unwrap_or_default(),
        granulation: None,
    };
    kb.validate()?;
    Ok(kb)
}

fn first_seen<'a>(it: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = HashSet::new();
    it.filter(|t| seen.insert(*t)).map(str::to_string).collect()
}
