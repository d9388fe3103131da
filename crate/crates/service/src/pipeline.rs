//! Batch pipeline: load, clean, predict, granulate, build, score, export.

use std::fs;
use std::path::{Path, PathBuf};

use fuzzkb_core::dataset::{impute, normalize, parse_arff, split_indices, Dataset, SplitConfig, SplitIndices};
use fuzzkb_core::fuzzy_rough::{complexity, score_rules, ScoringConfig};
use fuzzkb_core::granulation::{FcmConfig, Granulation};
use fuzzkb_core::prediction::{accuracy, baseline_classify, ingest_predictions, Prediction, DEFAULT_NEIGHBORS};
use fuzzkb_core::rulebase::{build_rules, prolog_string, KnowledgeBase};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

/// A dataset after parsing, plus its cleaned form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prepared {
    /// Display name (file stem or relation).
    pub name: String,
    /// Imputed, original scale. Used for exploratory statistics.
    pub imputed: Dataset,
    /// Imputed and min-max normalized. Used for modelling.
    pub clean: Dataset,
}

impl Prepared {
    pub fn from_arff(name: impl Into<String>, text: &str) -> Result<Self> {
        let raw = parse_arff(text)?;
        let imputed = impute(&raw)?;
        let clean = normalize(&imputed)?;
        Ok(Self { name: name.into(), imputed, clean })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| ServiceError::NotFound(format!("cannot read {}: {e}", path.display())))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into());
        Self::from_arff(name, &text)
    }
}

/// Output of the built-in baseline classifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineRun {
    pub k: usize,
    pub split_config: SplitConfig,
    pub split: SplitIndices,
    /// One prediction per dataset row.
    pub predictions: Vec<Prediction>,
    /// Accuracy on the held-out rows.
    pub accuracy: f64,
}

/// Train kNN on the train split and predict every row.
pub fn run_baseline(clean: &Dataset, k: usize, split_config: SplitConfig) -> Result<BaselineRun> {
    let split = split_indices(clean, &split_config)?;
    let train = clean.select(&split.train);
    let predictions = baseline_classify(&train, clean, k)?;
    let test_preds: Vec<Prediction> = split
        .test
        .iter()
        .enumerate()
        .map(|(i, &row)| Prediction { instance_id: i, ..predictions[row].clone() })
        .collect();
    let accuracy = if split.test.is_empty() {
        f64::NAN
    } else {
        accuracy(&test_preds, &clean.select(&split.test))?
    };
    Ok(BaselineRun { k, split_config, split, predictions, accuracy })
}

/// Granulate, build one rule per row and score the rules.
pub fn build_scored_kb(
    clean: &Dataset,
    predictions: &[Prediction],
    symbols: usize,
    scoring: ScoringConfig,
) -> Result<KnowledgeBase> {
    let gran = Granulation::fit(clean, &FcmConfig::with_clusters(symbols))?;
    let mut kb = build_rules(clean, &gran, predictions, scoring)?;
    score_rules(&mut kb, &scoring)?;
    Ok(kb)
}

/// Where the predictions used to build the KB come from.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictionSource {
    File(PathBuf),
    Baseline { k: usize, split: SplitConfig },
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub data: PathBuf,
    pub predictions: PredictionSource,
    pub symbols: usize,
    pub scoring: ScoringConfig,
    pub out: PathBuf,
}

impl PipelineConfig {
    pub fn baseline(data: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            data: data.into(),
            predictions: PredictionSource::Baseline { k: DEFAULT_NEIGHBORS, split: SplitConfig::default() },
            symbols: 5,
            scoring: ScoringConfig::default(),
            out: out.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub dataset: String,
    pub instances: usize,
    pub rules: usize,
    pub symbols: usize,
    pub scoring: ScoringConfig,
    /// Test accuracy of the baseline, when it produced the predictions.
    pub baseline_accuracy: Option<f64>,
    pub avg_rule_confidence: f64,
    pub avg_antecedent_confidence: f64,
    pub complexity: f64,
}

/// Everything the pipeline produced, kept in memory for callers that want
/// to continue with queries.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub prepared: Prepared,
    pub kb: KnowledgeBase,
    pub summary: PipelineSummary,
}

pub const GRANULATION_FILE: &str = "granulation.json";
pub const PROLOG_FILE: &str = "kb.pl";
pub const KB_JSON_FILE: &str = "kb.json";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn load_predictions(ds: &Dataset, path: &Path) -> Result<Vec<Prediction>> {
    let file = fs::File::open(path)
        .map_err(|e| ServiceError::NotFound(format!("cannot read {}: {e}", path.display())))?;
    Ok(ingest_predictions(ds, file)?)
}

/// Run the whole pipeline and write its artifacts into `cfg.out`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineRun> {
    let prepared = Prepared::load(&cfg.data)?;
    let (predictions, baseline_accuracy) = match &cfg.predictions {
        PredictionSource::File(p) => (load_predictions(&prepared.clean, p)?, None),
        PredictionSource::Baseline { k, split } => {
            let run = run_baseline(&prepared.clean, *k, *split)?;
            (run.predictions, Some(run.accuracy))
        }
    };
    let kb = build_scored_kb(&prepared.clean, &predictions, cfg.symbols, cfg.scoring)?;
    let summary = PipelineSummary {
        dataset: prepared.name.clone(),
        instances: prepared.clean.len(),
        rules: kb.len(),
        symbols: cfg.symbols,
        scoring: cfg.scoring,
        baseline_accuracy,
        avg_rule_confidence: kb.avg_rule_confidence(),
        avg_antecedent_confidence: kb.avg_antecedent_confidence(),
        complexity: complexity(&kb)?,
    };

    fs::create_dir_all(&cfg.out)?;
    if let Some(gran) = &kb.granulation {
        fs::write(cfg.out.join(GRANULATION_FILE), gran.to_json()?)?;
    }
    fs::write(cfg.out.join(PROLOG_FILE), prolog_string(&kb))?;
    fs::write(cfg.out.join(KB_JSON_FILE), kb.to_json()?)?;
    fs::write(cfg.out.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)? + "\n")?;
    log::info!(
        "{}: {} rules, avg rule confidence {:.4}, complexity {:.4}",
        summary.dataset,
        summary.rules,
        summary.avg_rule_confidence,
        summary.complexity
    );
    Ok(PipelineRun { prepared, kb, summary })
}
