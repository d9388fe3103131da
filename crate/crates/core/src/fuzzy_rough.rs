//! Rule confidence as membership in the fuzzy-rough lower approximation of
//! the rule's class region, plus the measures derived from it.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::granulation::SymbolAssignment;
use crate::rulebase::{FuzzyRule, KnowledgeBase};

/// Guards the denominator of [`bias_proxy`].
pub const BIAS_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Implicator {
    Fodor,
    Goguen,
    Godel,
    Lukasiewicz,
}

impl Implicator {
    pub const ALL: [Implicator; 4] = [
        Implicator::Fodor,
        Implicator::Goguen,
        Implicator::Godel,
        Implicator::Lukasiewicz,
    ];

    /// Unchecked evaluation; callers guarantee `a, b` in [0, 1].
    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Implicator::Lukasiewicz => (1.0 - a + b).min(1.0),
            _ if a <= b => 1.0,
            Implicator::Fodor => (1.0 - a).max(b),
            Implicator::Goguen => b / a,
            Implicator::Godel => b,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Implicator::Fodor => "fodor",
            Implicator::Goguen => "goguen",
            Implicator::Godel => "godel",
            Implicator::Lukasiewicz => "lukasiewicz",
        }
    }
}

impl fmt::Display for Implicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Implicator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "fodor" | "fd" => Ok(Implicator::Fodor),
            "goguen" | "gg" => Ok(Implicator::Goguen),
            "godel" | "gödel" | "goedel" | "gd" => Ok(Implicator::Godel),
            "lukasiewicz" | "łukasiewicz" | "lk" => Ok(Implicator::Lukasiewicz),
            other => Err(Error::Config(format!("unknown implicator '{other}'"))),
        }
    }
}

/// Checked implicator evaluation.
pub fn implicator(name: Implicator, a: f64, b: f64) -> Result<f64> {
    for v in [a, b] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::domain(format!("implicator argument {v} outside [0,1]")));
        }
    }
    Ok(name.apply(a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceVariant {
    /// 0 for equal symbols, 1 otherwise.
    Crisp,
    /// Equal symbols contribute half the complement of the weaker membership.
    Fuzzy,
}

impl DistanceVariant {
    pub const ALL: [DistanceVariant; 2] = [DistanceVariant::Crisp, DistanceVariant::Fuzzy];
}

impl fmt::Display for DistanceVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceVariant::Crisp => "crisp",
            DistanceVariant::Fuzzy => "fuzzy",
        })
    }
}

impl FromStr for DistanceVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "crisp" => Ok(DistanceVariant::Crisp),
            "fuzzy" => Ok(DistanceVariant::Fuzzy),
            other => Err(Error::Config(format!("unknown distance variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub implicator: Implicator,
    pub distance: DistanceVariant,
    pub lambda: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            implicator: Implicator::Lukasiewicz,
            distance: DistanceVariant::Fuzzy,
            lambda: 1.0,
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMembership {
    pub rule_id: usize,
    pub class_label: String,
    pub lower_membership: f64,
}

/// Membership of a rule in the region of `class`: its class confidence when
/// the rule predicts that class, 0 otherwise.
pub fn theta_membership(rule: &FuzzyRule, class: &str, class_domain: &[String]) -> Result<f64> {
    if !class_domain.iter().any(|c| c == class) {
        return Err(Error::domain(format!("unknown class '{class}'")));
    }
    Ok(if rule.class_label == class {
        rule.class_confidence
    } else {
        0.0
    })
}

#[inline]
fn sigma(same: bool, mu_x: f64, mu_y: f64, variant: DistanceVariant) -> f64 {
    match (same, variant) {
        (false, _) => 1.0,
        (true, DistanceVariant::Crisp) => 0.0,
        (true, DistanceVariant::Fuzzy) => 0.5 * (1.0 - mu_x.min(mu_y)),
    }
}

pub fn feature_distance(x: &SymbolAssignment, y: &SymbolAssignment, variant: DistanceVariant) -> f64 {
    sigma(x.term == y.term, x.confidence, y.confidence, variant)
}

/// Sum of per-feature distances, optionally skipping one feature.
pub fn rule_distance(
    x: &FuzzyRule,
    y: &FuzzyRule,
    variant: DistanceVariant,
    excluded: Option<usize>,
) -> f64 {
    x.antecedent
        .iter()
        .zip(&y.antecedent)
        .enumerate()
        .filter(|(i, _)| Some(*i) != excluded)
        .fold(0.0, |acc, (_, (a, b))| acc + feature_distance(a, b, variant))
}

/// Similarity of `y` to the rule `x` being scored.
pub fn relation(y: &FuzzyRule, x: &FuzzyRule, cfg: &ScoringConfig) -> f64 {
    x.class_confidence * (-cfg.lambda * rule_distance(x, y, cfg.distance, None)).exp()
}

/// Rules with their symbols interned per feature, for the quadratic loops.
struct Encoded {
    n_features: usize,
    terms: Vec<u32>,
    conf: Vec<f64>,
    class: Vec<usize>,
    p: Vec<f64>,
}

impl Encoded {
    fn new(kb: &KnowledgeBase) -> Result<Self> {
        let nf = kb.features.len();
        let n = kb.rules.len();
        let mut terms = Vec::with_capacity(n * nf);
        let mut conf = Vec::with_capacity(n * nf);
        let mut class = Vec::with_capacity(n);
        let mut p = Vec::with_capacity(n);
        for r in &kb.rules {
            if r.antecedent.len() != nf {
                return Err(Error::validation(format!(
                    "rule {}: {} antecedent terms, expected {nf}",
                    r.id,
                    r.antecedent.len()
                )));
            }
            for (f, s) in kb.features.iter().zip(&r.antecedent) {
                let t = f.terms.iter().position(|t| *t == s.term).ok_or_else(|| {
                    Error::domain(format!("rule {}: '{}' is not a term of {}", r.id, s.term, f.name))
                })?;
                terms.push(t as u32);
                conf.push(s.confidence);
            }
            class.push(
                kb.class_domain
                    .iter()
                    .position(|c| *c == r.class_label)
                    .ok_or_else(|| Error::domain(format!("unknown class '{}'", r.class_label)))?,
            );
            p.push(r.class_confidence);
        }
        Ok(Self {
            n_features: nf,
            terms,
            conf,
            class,
            p,
        })
    }

    fn len(&self) -> usize {
        self.p.len()
    }

    fn distance(&self, x: usize, y: usize, variant: DistanceVariant, excluded: Option<usize>) -> f64 {
        let nf = self.n_features;
        let (bx, by) = (x * nf, y * nf);
        let mut d = 0.0;
        for i in 0..nf {
            if Some(i) == excluded {
                continue;
            }
            d += sigma(
                self.terms[bx + i] == self.terms[by + i],
                self.conf[bx + i],
                self.conf[by + i],
                variant,
            );
        }
        d
    }
}

/// Pairwise rule distances, reusable across implicators and λ values.
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
    class: Vec<usize>,
    p: Vec<f64>,
}

impl DistanceMatrix {
    pub fn compute(kb: &KnowledgeBase, variant: DistanceVariant, excluded: Option<usize>) -> Result<Self> {
        let enc = Encoded::new(kb)?;
        let n = enc.len();
        let mut d = vec![0.0; n * n];
        d.par_chunks_mut(n.max(1)).enumerate().for_each(|(x, row)| {
            for (y, v) in row.iter_mut().enumerate() {
                *v = enc.distance(x, y, variant, excluded);
            }
        });
        Ok(Self {
            n,
            d,
            class: enc.class,
            p: enc.p,
        })
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.d[x * self.n + y]
    }

    /// Lower-approximation membership of every rule, in id order.
    pub fn lower_memberships(&self, implicator: Implicator, lambda: f64) -> Vec<f64> {
        (0..self.n)
            .into_par_iter()
            .map(|x| {
                let (cx, px) = (self.class[x], self.p[x]);
                let row = &self.d[x * self.n..(x + 1) * self.n];
                let mut acc = px;
                for (y, &dxy) in row.iter().enumerate() {
                    let a = px * (-lambda * dxy).exp();
                    let b = if self.class[y] == cx { self.p[y] } else { 0.0 };
                    acc = acc.min(implicator.apply(a, b));
                }
                acc
            })
            .collect()
    }
}

/// Lower memberships under `cfg` without modifying the KB.
pub fn lower_memberships(kb: &KnowledgeBase, cfg: &ScoringConfig, excluded: Option<usize>) -> Result<Vec<f64>> {
    cfg.validate()?;
    let dm = DistanceMatrix::compute(kb, cfg.distance, excluded)?;
    Ok(dm.lower_memberships(cfg.implicator, cfg.lambda))
}

/// Score every rule, store the result as its rule confidence and record
/// `cfg` as the KB's scoring configuration.
pub fn score_rules(kb: &mut KnowledgeBase, cfg: &ScoringConfig) -> Result<Vec<RegionMembership>> {
    let mu = lower_memberships(kb, cfg, None)?;
    kb.scoring = *cfg;
    let mut out = Vec::with_capacity(mu.len());
    for (r, m) in kb.rules.iter_mut().zip(mu) {
        r.rule_confidence = m;
        out.push(RegionMembership {
            rule_id: r.id,
            class_label: r.class_label.clone(),
            lower_membership: m,
        });
    }
    Ok(out)
}

/// One minus the mean rule confidence.
pub fn complexity(kb: &KnowledgeBase) -> Result<f64> {
    if kb.is_empty() {
        return Err(Error::validation("complexity of an empty knowledge base"));
    }
    Ok(1.0 - kb.avg_rule_confidence())
}

/// The `n` most confident rules; ties go to the lower id.
pub fn top_rules(kb: &KnowledgeBase, n: usize) -> Result<Vec<&FuzzyRule>> {
    if n == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    if n > kb.len() {
        log::warn!("requested {n} rules but the knowledge base has {}", kb.len());
    }
    let mut rules: Vec<&FuzzyRule> = kb.rules.iter().collect();
    rules.sort_by(|a, b| {
        b.rule_confidence
            .total_cmp(&a.rule_confidence)
            .then(a.id.cmp(&b.id))
    });
    rules.truncate(n);
    Ok(rules)
}

/// Relative change of the lower memberships when `feature` is left out of
/// the distance: `Σ|μ_with − μ_without| / max(Σ μ_with, ε)`, clipped to [0, 1].
pub fn bias_proxy(kb: &KnowledgeBase, feature: &str, cfg: &ScoringConfig) -> Result<f64> {
    let f = kb
        .feature_index(feature)
        .ok_or_else(|| Error::domain(format!("unknown feature '{feature}'")))?;
    let with = lower_memberships(kb, cfg, None)?;
    let without = lower_memberships(kb, cfg, Some(f))?;
    let num: f64 = with.iter().zip(&without).map(|(a, b)| (a - b).abs()).sum();
    let den: f64 = with.iter().sum();
    Ok((num / den.max(BIAS_EPSILON)).clamp(0.0, 1.0))
}
