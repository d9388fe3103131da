//! Seeded random knowledge bases for tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::FeatureKind;
use crate::fuzzy_rough::ScoringConfig;
use crate::granulation::{default_terms, SymbolAssignment};
use crate::rulebase::{FeatureSchema, FuzzyRule, KnowledgeBase};

#[derive(Debug, Clone, Copy)]
pub struct SyntheticSpec {
    pub rules: usize,
    pub classes: usize,
    pub features: usize,
    /// Symbols per feature, 2..=11.
    pub terms: usize,
    /// All class confidences equal to 1.
    pub hard_labels: bool,
}

/// Confidences are drawn on a 0.05 grid so distance ties and equal scores
/// occur often enough to exercise tie-breaking.
pub fn random_kb(seed: u64, spec: SyntheticSpec) -> KnowledgeBase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms = default_terms(spec.terms.clamp(2, 11)).expect("term count clamped to table");
    let features: Vec<FeatureSchema> = (0..spec.features)
        .map(|i| FeatureSchema {
            name: format!("f{i}"),
            kind: FeatureKind::Numeric,
            terms: terms.clone(),
        })
        .collect();
    let class_domain: Vec<String> = (0..spec.classes.max(1)).map(|j| format!("c{j}")).collect();
    let floor = 1.0 / terms.len() as f64;
    let grid = |rng: &mut ChaCha8Rng, lo: f64| {
        let steps = rng.random_range(0..=20u32);
        (lo + (1.0 - lo) * f64::from(steps) / 20.0).min(1.0)
    };
    let rules = (0..spec.rules)
        .map(|id| {
            let antecedent = (0..spec.features)
                .map(|_| {
                    let t = rng.random_range(0..terms.len());
                    SymbolAssignment::new(terms[t].clone(), grid(&mut rng, floor))
                })
                .collect();
            let class = rng.random_range(0..class_domain.len());
            let p = if spec.hard_labels { 1.0 } else { grid(&mut rng, 0.0) };
            FuzzyRule {
                id,
                antecedent,
                class_label: class_domain[class].clone(),
                class_confidence: p,
                rule_confidence: 1.0,
            }
        })
        .collect();
    KnowledgeBase {
        features,
        class_domain,
        rules,
        scoring: ScoringConfig::default(),
        granulation: None,
    }
}
