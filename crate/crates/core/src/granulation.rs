//! Fuzzy c-means granulation of normalized numeric features into ordered
//! linguistic terms.
//!
//! Each value is clustered on the unit interval. Embedding a value as the
//! symmetric pair `(x, x)` scales every distance by `sqrt(2)`, which cancels
//! in the membership ratios, so the one-dimensional computation here gives
//! the same memberships and prototypes (up to the same embedding).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureKind};
use crate::error::{Error, Result};

pub const MIN_TERMS: usize = 2;
pub const MAX_TERMS: usize = 11;

/// Fuzzy c-means parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FcmConfig {
    /// Number of clusters (linguistic terms).
    pub c: usize,
    /// Fuzzification coefficient, strictly greater than 1.
    pub m: f64,
    pub max_iters: usize,
    /// Convergence threshold on the largest prototype displacement.
    pub tol: f64,
}

impl Default for FcmConfig {
    fn default() -> Self {
        FcmConfig {
            c: 5,
            m: 2.0,
            max_iters: 300,
            tol: 1e-6,
        }
    }
}

impl FcmConfig {
    pub fn with_clusters(c: usize) -> Self {
        FcmConfig {
            c,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c < MIN_TERMS {
            return Err(Error::Config(format!("c must be at least 2, got {}", self.c)));
        }
        if !(self.m > 1.0) || !self.m.is_finite() {
            return Err(Error::Config(format!("m must be finite and > 1, got {}", self.m)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be > 0, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Canonical ordered term labels for `c` clusters.
pub fn default_terms(c: usize) -> Result<Vec<String>> {
    if !(MIN_TERMS..=MAX_TERMS).contains(&c) {
        return Err(Error::Config(format!(
            "term count must lie in {MIN_TERMS}..={MAX_TERMS}, got {c}"
        )));
    }
    Ok(term_table(c).iter().map(|s| s.to_string()).collect())
}

fn term_table(c: usize) -> &'static [&'static str] {
    match c {
        1 => &["medium"],
        2 => &["low", "high"],
        3 => &["low", "medium", "high"],
        4 => &["low", "medium_low", "medium_high", "high"],
        5 => &["very_low", "low", "medium", "high", "very_high"],
        6 => &["very_low", "low", "medium_low", "medium_high", "high", "very_high"],
        7 => &[
            "very_low", "low", "medium_low", "medium", "medium_high", "high", "very_high",
        ],
        8 => &[
            "extremely_low", "very_low", "low", "medium_low", "medium_high", "high", "very_high",
            "extremely_high",
        ],
        9 => &[
            "extremely_low", "very_low", "low", "medium_low", "medium", "medium_high", "high",
            "very_high", "extremely_high",
        ],
        10 => &[
            "lowest", "extremely_low", "very_low", "low", "medium_low", "medium_high", "high",
            "very_high", "extremely_high", "highest",
        ],
        11 => &[
            "lowest", "extremely_low", "very_low", "low", "medium_low", "medium", "medium_high",
            "high", "very_high", "extremely_high", "highest",
        ],
        _ => unreachable!("term count checked by caller"),
    }
}

/// Every label any table can produce, in no particular order.
pub fn all_default_terms() -> Vec<&'static str> {
    let mut out: Vec<&'static str> = Vec::new();
    for c in 1..=MAX_TERMS {
        for t in term_table(c) {
            if !out.contains(t) {
                out.push(t);
            }
        }
    }
    out
}

/// A term together with the membership degree it was assigned with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolAssignment {
    pub term: String,
    pub confidence: f64,
}

impl SymbolAssignment {
    pub fn new(term: impl Into<String>, confidence: f64) -> Self {
        SymbolAssignment {
            term: term.into(),
            confidence,
        }
    }
}

/// Memberships of `x` to each prototype.
///
/// A value that coincides with a prototype belongs fully to the first such
/// cluster. Otherwise `u_j = 1 / sum_l (d_j / d_l)^(2/(m-1))`, evaluated
/// relative to the nearest prototype to stay finite.
pub fn memberships(x: f64, prototypes: &[f64], m: f64) -> Vec<f64> {
    let mut out = vec![0.0; prototypes.len()];
    if let Some(hit) = prototypes.iter().position(|&z| x == z) {
        out[hit] = 1.0;
        return out;
    }
    let exponent = 2.0 / (m - 1.0);
    let dmin = prototypes
        .iter()
        .map(|&z| (x - z).abs())
        .fold(f64::INFINITY, f64::min);
    let mut total = 0.0;
    for (w, &z) in out.iter_mut().zip(prototypes) {
        *w = (dmin / (x - z).abs()).powf(exponent);
        total += *w;
    }
    for w in &mut out {
        *w /= total;
    }
    out
}

/// Result of a fuzzy c-means run on one feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FcmFit {
    /// Strictly ascending prototypes.
    pub prototypes: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

/// Run fuzzy c-means on values in [0, 1].
///
/// Prototypes start at evenly spaced quantiles of the distinct values, so
/// the run is deterministic and starts from distinct positions even when a
/// feature has many repeated values.
pub fn fit_fcm(values: &[f64], cfg: &FcmConfig) -> Result<FcmFit> {
    cfg.validate()?;
    if values.is_empty() {
        return Err(Error::validation("fuzzy c-means needs at least one value"));
    }
    if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::validation(format!(
            "fuzzy c-means expects values in [0,1], found {bad}"
        )));
    }

    // Distinct values with multiplicities; sums over them equal sums over
    // the raw points.
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct: Vec<f64> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for v in sorted {
        if distinct.last() == Some(&v) {
            *counts.last_mut().unwrap() += 1.0;
        } else {
            distinct.push(v);
            counts.push(1.0);
        }
    }

    let mut warnings = Vec::new();
    let c = if cfg.c > distinct.len() {
        let msg = format!(
            "requested {} clusters but only {} distinct values; using {}",
            cfg.c,
            distinct.len(),
            distinct.len()
        );
        log::warn!("{msg}");
        warnings.push(msg);
        distinct.len()
    } else {
        cfg.c
    };

    let mut prototypes: Vec<f64> = if c == 1 {
        vec![distinct[0]]
    } else {
        let span = (distinct.len() - 1) as f64;
        (0..c)
            .map(|j| {
                let pos = j as f64 * span / (c - 1) as f64;
                let lo = pos.floor() as usize;
                let hi = pos.ceil() as usize;
                let frac = pos - lo as f64;
                distinct[lo] + frac * (distinct[hi] - distinct[lo])
            })
            .collect()
    };

    let mut iterations = 0;
    let mut converged = false;
    let mut num = vec![0.0; c];
    let mut den = vec![0.0; c];
    while iterations < cfg.max_iters {
        iterations += 1;
        num.iter_mut().for_each(|v| *v = 0.0);
        den.iter_mut().for_each(|v| *v = 0.0);
        for (&x, &n) in distinct.iter().zip(&counts) {
            let u = memberships(x, &prototypes, cfg.m);
            for j in 0..c {
                let w = n * u[j].powf(cfg.m);
                num[j] += w * x;
                den[j] += w;
            }
        }
        let mut displacement: f64 = 0.0;
        for j in 0..c {
            if den[j] > 0.0 {
                let z = num[j] / den[j];
                displacement = displacement.max((z - prototypes[j]).abs());
                prototypes[j] = z;
            }
        }
        if displacement < cfg.tol {
            converged = true;
            break;
        }
    }

    prototypes.sort_by(f64::total_cmp);
    if prototypes.windows(2).any(|w| w[0] >= w[1]) {
        let up: Vec<f64> = prototypes
            .iter()
            .enumerate()
            .map(|(rank, &z)| z + 1e-9 * rank as f64)
            .collect();
        prototypes = if up.last().is_some_and(|&z| z <= 1.0) {
            up
        } else {
            prototypes
                .iter()
                .enumerate()
                .map(|(rank, &z)| z - 1e-9 * (c - 1 - rank) as f64)
                .collect()
        };
        warnings.push("coincident prototypes were separated by a tiny perturbation".into());
    }

    Ok(FcmFit {
        prototypes,
        iterations,
        converged,
        warnings,
    })
}

/// Fuzzy partition of one numeric feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGranulation {
    pub feature: String,
    pub prototypes: Vec<f64>,
    pub terms: Vec<String>,
    pub m: f64,
}

impl FeatureGranulation {
    pub fn fit(feature: impl Into<String>, values: &[f64], cfg: &FcmConfig) -> Result<(Self, Vec<String>)> {
        let fit = fit_fcm(values, cfg)?;
        let terms = term_table(fit.prototypes.len())
            .iter()
            .map(|s| s.to_string())
            .collect();
        Ok((
            FeatureGranulation {
                feature: feature.into(),
                prototypes: fit.prototypes,
                terms,
                m: cfg.m,
            },
            fit.warnings,
        ))
    }

    pub fn memberships(&self, x: f64) -> Vec<f64> {
        memberships(x, &self.prototypes, self.m)
    }

    /// Term with the largest membership; ties go to the lower term.
    pub fn assign(&self, x: f64) -> SymbolAssignment {
        let x = if (0.0..=1.0).contains(&x) {
            x
        } else {
            log::warn!("value {x} for '{}' outside [0,1]; clamped", self.feature);
            x.clamp(0.0, 1.0)
        };
        let u = self.memberships(x);
        let mut best = 0;
        for (j, &v) in u.iter().enumerate() {
            if v > u[best] {
                best = j;
            }
        }
        SymbolAssignment::new(self.terms[best].clone(), u[best])
    }

    pub fn term_index(&self, term: &str) -> Option<usize> {
        self.terms.iter().position(|t| t.eq_ignore_ascii_case(term))
    }
}

/// Granulations of all numeric features of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Granulation {
    pub config: FcmConfig,
    pub features: Vec<FeatureGranulation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Granulation {
    /// Fit every numeric feature independently (in parallel). The dataset
    /// must be imputed and normalized.
    pub fn fit(ds: &Dataset, cfg: &FcmConfig) -> Result<Self> {
        cfg.validate()?;
        if ds.has_missing() {
            return Err(Error::validation("granulation requires an imputed dataset"));
        }
        let numeric: Vec<usize> = (0..ds.features.len())
            .filter(|&j| ds.features[j].kind == FeatureKind::Numeric)
            .collect();
        let fitted: Vec<Result<(FeatureGranulation, Vec<String>)>> = numeric
            .par_iter()
            .map(|&j| FeatureGranulation::fit(ds.features[j].name.clone(), &ds.numeric_column(j), cfg))
            .collect();
        let mut features = Vec::with_capacity(fitted.len());
        let mut warnings = Vec::new();
        for r in fitted {
            let (g, w) = r?;
            warnings.extend(w.into_iter().map(|m| format!("{}: {m}", g.feature)));
            features.push(g);
        }
        Ok(Granulation {
            config: *cfg,
            features,
            warnings,
        })
    }

    pub fn get(&self, feature: &str) -> Option<&FeatureGranulation> {
        self.features
            .iter()
            .find(|g| g.feature.eq_ignore_ascii_case(feature))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Eq. (1) evaluated literally, term by term.
    fn literal_memberships(x: f64, z: &[f64], m: f64) -> Vec<f64> {
        z.iter()
            .map(|&zj| {
                let s: f64 = z
                    .iter()
                    .map(|&zl| ((x - zj).abs() / (x - zl).abs()).powf(2.0 / (m - 1.0)))
                    .sum();
                1.0 / s
            })
            .collect()
    }

    #[test]
    fn default_term_tables() {
        assert_eq!(
            default_terms(5).unwrap(),
            vec!["very_low", "low", "medium", "high", "very_high"]
        );
        assert_eq!(default_terms(2).unwrap(), vec!["low", "high"]);
        assert_eq!(default_terms(3).unwrap(), vec!["low", "medium", "high"]);
        assert_eq!(
            default_terms(4).unwrap(),
            vec!["low", "medium_low", "medium_high", "high"]
        );
        for c in MIN_TERMS..=MAX_TERMS {
            let t = default_terms(c).unwrap();
            assert_eq!(t.len(), c);
            let mut dedup = t.clone();
            dedup.sort();
            dedup.dedup();
            assert_eq!(dedup.len(), c);
        }
        assert!(default_terms(1).is_err());
        assert!(default_terms(12).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(FcmConfig { m: 1.0, ..Default::default() }.validate().is_err());
        assert!(FcmConfig { c: 1, ..Default::default() }.validate().is_err());
        assert!(FcmConfig { tol: 0.0, ..Default::default() }.validate().is_err());
        assert!(FcmConfig::default().validate().is_ok());
    }

    #[test]
    fn membership_matches_literal_formula() {
        let z = [0.1, 0.35, 0.6, 0.92];
        for &m in &[1.5, 2.0, 3.0] {
            for i in 0..=20 {
                let x = i as f64 / 20.0 + 0.013;
                let a = memberships(x, &z, m);
                let b = literal_memberships(x, &z, m);
                for (p, q) in a.iter().zip(&b) {
                    assert!((p - q).abs() < 1e-12, "x={x} m={m}: {p} vs {q}");
                }
            }
        }
    }

    #[test]
    fn assign_at_midpoint_ties_low() {
        let g = FeatureGranulation {
            feature: "f".into(),
            prototypes: vec![0.2, 0.8],
            terms: default_terms(2).unwrap(),
            m: 2.0,
        };
        let s = g.assign(0.5);
        assert_eq!(s.term, "low");
        assert!((s.confidence - 0.5).abs() < 1e-12);
    }

    #[test]
    fn assign_hand_evaluated() {
        let g = FeatureGranulation {
            feature: "f".into(),
            prototypes: vec![0.2, 0.8],
            terms: default_terms(2).unwrap(),
            m: 2.0,
        };
        let s = g.assign(0.25);
        let expected = 1.0 / (1.0 + (0.05f64 / 0.55).powi(2));
        assert_eq!(s.term, "low");
        assert!((s.confidence - expected).abs() < 1e-12);
        assert!((s.confidence - 0.9918).abs() < 1e-4);
    }

    #[test]
    fn assign_on_prototype_is_one_hot() {
        let g = FeatureGranulation {
            feature: "f".into(),
            prototypes: vec![0.1, 0.5, 0.9],
            terms: default_terms(3).unwrap(),
            m: 2.0,
        };
        assert_eq!(g.memberships(0.5), vec![0.0, 1.0, 0.0]);
        assert_eq!(g.assign(0.9), SymbolAssignment::new("high", 1.0));
    }

    #[test]
    fn assign_clamps_out_of_range() {
        let g = FeatureGranulation {
            feature: "f".into(),
            prototypes: vec![0.0, 1.0],
            terms: default_terms(2).unwrap(),
            m: 2.0,
        };
        assert_eq!(g.assign(1.7), SymbolAssignment::new("high", 1.0));
        assert_eq!(g.assign(-3.0), SymbolAssignment::new("low", 1.0));
    }

    #[test]
    fn three_sites_recovered() {
        let mut values = Vec::new();
        for _ in 0..200 {
            values.extend_from_slice(&[0.0, 0.5, 1.0]);
        }
        let fit = fit_fcm(&values, &FcmConfig::with_clusters(3)).unwrap();
        for (p, e) in fit.prototypes.iter().zip([0.0, 0.5, 1.0]) {
            assert!((p - e).abs() < 1e-3, "{:?}", fit.prototypes);
        }
    }

    #[test]
    fn symmetric_data_symmetric_prototypes() {
        let values: Vec<f64> = (0..=40).map(|i| i as f64 / 40.0).collect();
        let fit = fit_fcm(&values, &FcmConfig::with_clusters(2)).unwrap();
        let [a, b] = [fit.prototypes[0], fit.prototypes[1]];
        assert!((a + b - 1.0).abs() < 1e-5, "{a} {b}");
    }

    #[test]
    fn too_few_distinct_values_reduces_c() {
        let values = [0.0, 0.0, 1.0, 1.0, 1.0];
        let fit = fit_fcm(&values, &FcmConfig::with_clusters(5)).unwrap();
        assert_eq!(fit.prototypes.len(), 2);
        assert_eq!(fit.warnings.len(), 1);
        let (g, _) = FeatureGranulation::fit("f", &[0.0; 4], &FcmConfig::default()).unwrap();
        assert_eq!(g.terms, vec!["medium"]);
        assert_eq!(g.assign(0.0), SymbolAssignment::new("medium", 1.0));
    }

    #[test]
    fn rejects_values_outside_unit_interval() {
        assert!(fit_fcm(&[0.2, 1.2], &FcmConfig::default()).is_err());
        assert!(fit_fcm(&[], &FcmConfig::default()).is_err());
    }

    #[test]
    fn zero_inflated_feature_keeps_distinct_prototypes() {
        let mut values = vec![0.0; 400];
        values.extend((1..=100).map(|i| i as f64 / 100.0));
        let fit = fit_fcm(&values, &FcmConfig::with_clusters(5)).unwrap();
        assert_eq!(fit.prototypes.len(), 5);
        assert!(fit.prototypes.windows(2).all(|w| w[0] < w[1]));
    }
}
