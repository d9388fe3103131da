//! Conversation sessions and their stage lifecycle.
//!
//! A session moves through load, predict (ingest or train), build and query.
//! Each operation checks its preconditions and answers with a conflict when
//! a stage is missing. New upstream state discards everything derived from
//! the old one. A KB is built into a local value and only then stored, so
//! no request can see it half-built.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use fuzzkb_core::dataset::SplitConfig;
use fuzzkb_core::fuzzy_rough::{
    bias_proxy, complexity, top_rules, DistanceVariant, Implicator, ScoringConfig,
};
use fuzzkb_core::prediction::{ingest_predictions, Prediction, DEFAULT_NEIGHBORS};
use fuzzkb_core::query::{closest_rule, Query, QueryKind, QueryResult, QuerySession};
use fuzzkb_core::rulebase::{prolog_string, FuzzyRule, KnowledgeBase};
use fuzzkb_nlq::Schema;
use serde::{Deserialize, Serialize};

use crate::eda::{self, CorrelationMatrix, CorrelationSeries, HistogramSeries};
use crate::error::{Result, ServiceError};
use crate::pipeline::{build_scored_kb, run_baseline, BaselineRun, Prepared};

pub const DEFAULT_SYMBOLS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Author {
    User,
    Bot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub author: Author,
    pub text: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub dataset: Option<Prepared>,
    pub baseline: Option<BaselineRun>,
    pub predictions: Option<Vec<Prediction>>,
    pub kb: Option<KnowledgeBase>,
    pub symbols: Option<usize>,
    pub query: QuerySession,
    pub events: Vec<Event>,
}

// Request and response bodies of the structured operations.

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadRequest {
    /// Name of a dataset in the service's data directory.
    pub name: Option<String>,
    /// Inline ARFF text.
    pub arff: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub name: String,
    pub instances: usize,
    pub features: Vec<String>,
    pub class_feature: String,
    pub classes: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionsRequest {
    /// `id,class[,confidence]` CSV text.
    pub csv: Option<String>,
    pub predictions: Option<Vec<Prediction>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionsInfo {
    pub count: usize,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRequest {
    pub k: Option<usize>,
    pub train_fraction: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainInfo {
    pub k: usize,
    pub accuracy: f64,
    pub train_fraction: f64,
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildRequest {
    pub symbols: Option<usize>,
    pub implicator: Option<Implicator>,
    pub distance: Option<DistanceVariant>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildInfo {
    pub rules: usize,
    pub symbols: usize,
    pub scoring: ScoringConfig,
    pub features: Vec<String>,
    pub class_feature: String,
    pub classes: Vec<String>,
    pub avg_rule_confidence: f64,
    pub avg_antecedent_confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosestInfo {
    pub reference: FuzzyRule,
    pub closest: FuzzyRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueInfo {
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasInfo {
    pub feature: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub dataset: Option<String>,
    pub trained: bool,
    pub predictions: bool,
    pub kb_rules: Option<usize>,
    pub events: usize,
}

fn conflict(msg: &str) -> ServiceError {
    ServiceError::Conflict(msg.to_string())
}

impl Session {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into(), ..Default::default() }
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            id: self.id.clone(),
            dataset: self.dataset.as_ref().map(|d| d.name.clone()),
            trained: self.baseline.is_some(),
            predictions: self.predictions.is_some(),
            kb_rules: self.kb.as_ref().map(KnowledgeBase::len),
            events: self.events.len(),
        }
    }

    pub fn dataset(&self) -> Result<&Prepared> {
        self.dataset
            .as_ref()
            .ok_or_else(|| conflict("No dataset is loaded yet. Load one first, e.g. \"Load the diabetes dataset\"."))
    }

    pub fn kb(&self) -> Result<&KnowledgeBase> {
        self.kb.as_ref().ok_or_else(|| {
            conflict("The explanation module is not built yet. Train a model or upload predictions, then build it.")
        })
    }

    pub fn baseline(&self) -> Result<&BaselineRun> {
        self.baseline
            .as_ref()
            .ok_or_else(|| conflict("No model has been trained yet. Ask me to train one first."))
    }

    /// Class attribute name of the loaded dataset.
    pub fn class_feature(&self) -> String {
        self.dataset
            .as_ref()
            .map(|d| d.clean.class_feature.name.clone())
            .unwrap_or_else(|| "class".into())
    }

    /// Names the NL parser may resolve to at this stage.
    pub fn schema(&self) -> Schema {
        match (&self.kb, &self.dataset) {
            (Some(kb), _) => Schema::from_kb(kb),
            (None, Some(d)) => Schema::from_dataset(&d.clean),
            _ => Schema::empty(),
        }
    }

    fn reset_after_dataset(&mut self) {
        self.baseline = None;
        self.predictions = None;
        self.reset_after_predictions();
    }

    fn reset_after_predictions(&mut self) {
        self.kb = None;
        self.symbols = None;
        self.query.clear();
    }

    pub fn load_dataset(&mut self, req: &LoadRequest, data_dir: &Path) -> Result<DatasetInfo> {
        let prepared = match (&req.name, &req.arff) {
            (_, Some(text)) => Prepared::from_arff(req.name.clone().unwrap_or_else(|| "dataset".into()), text)?,
            (Some(name), None) => Prepared::load(&dataset_path(data_dir, name)?)?,
            (None, None) => return Err(ServiceError::BadRequest("give a dataset 'name' or inline 'arff'".into())),
        };
        self.dataset = Some(prepared);
        self.reset_after_dataset();
        Ok(self.dataset_info()?)
    }

    pub fn dataset_info(&self) -> Result<DatasetInfo> {
        let d = self.dataset()?;
        Ok(DatasetInfo {
            name: d.name.clone(),
            instances: d.clean.len(),
            features: d.clean.features.iter().map(|f| f.name.clone()).collect(),
            class_feature: d.clean.class_feature.name.clone(),
            classes: d.clean.class_domain().to_vec(),
            warnings: d.clean.warnings.clone(),
        })
    }

    pub fn ingest_predictions(&mut self, req: &PredictionsRequest) -> Result<PredictionsInfo> {
        let ds = &self.dataset()?.clean;
        let preds = match (&req.csv, &req.predictions) {
            (Some(csv), None) => ingest_predictions(ds, csv.as_bytes())?,
            (None, Some(list)) => {
                let mut buf = Vec::new();
                fuzzkb_core::prediction::emit_predictions(list, &mut buf)?;
                ingest_predictions(ds, buf.as_slice())?
            }
            _ => {
                return Err(ServiceError::BadRequest(
                    "give exactly one of 'csv' or 'predictions'".into(),
                ))
            }
        };
        let count = preds.len();
        self.predictions = Some(preds);
        self.baseline = None;
        self.reset_after_predictions();
        Ok(PredictionsInfo { count })
    }

    pub fn train(&mut self, req: &TrainRequest) -> Result<TrainInfo> {
        let defaults = SplitConfig::default();
        let split = SplitConfig {
            train_fraction: req.train_fraction.unwrap_or(defaults.train_fraction),
            seed: req.seed.unwrap_or(defaults.seed),
        };
        let k = req.k.unwrap_or(DEFAULT_NEIGHBORS);
        let run = run_baseline(&self.dataset()?.clean, k, split)?;
        self.predictions = Some(run.predictions.clone());
        self.baseline = Some(run);
        self.reset_after_predictions();
        self.train_info()
    }

    pub fn train_info(&self) -> Result<TrainInfo> {
        let run = self.baseline()?;
        Ok(TrainInfo {
            k: run.k,
            accuracy: run.accuracy,
            train_fraction: run.split_config.train_fraction,
            train: run.split.train.len(),
            test: run.split.test.len(),
        })
    }

    pub fn build(&mut self, req: &BuildRequest) -> Result<BuildInfo> {
        let ds = &self.dataset()?.clean;
        let preds = self.predictions.as_ref().ok_or_else(|| {
            conflict("There are no predictions to explain yet. Train a model or upload predictions first.")
        })?;
        let defaults = ScoringConfig::default();
        let scoring = ScoringConfig {
            implicator: req.implicator.unwrap_or(defaults.implicator),
            distance: req.distance.unwrap_or(defaults.distance),
            lambda: req.lambda.unwrap_or(defaults.lambda),
        };
        let symbols = req.symbols.unwrap_or(DEFAULT_SYMBOLS);
        let kb = build_scored_kb(ds, preds, symbols, scoring)?;
        self.kb = Some(kb);
        self.symbols = Some(symbols);
        self.query.clear();
        self.build_info()
    }

    pub fn build_info(&self) -> Result<BuildInfo> {
        let kb = self.kb()?;
        Ok(BuildInfo {
            rules: kb.len(),
            symbols: self.symbols.unwrap_or(DEFAULT_SYMBOLS),
            scoring: kb.scoring,
            features: kb.features.iter().map(|f| f.name.clone()).collect(),
            class_feature: self.class_feature(),
            classes: kb.class_domain.clone(),
            avg_rule_confidence: kb.avg_rule_confidence(),
            avg_antecedent_confidence: kb.avg_antecedent_confidence(),
        })
    }

    /// Resolve `q` as a query of `kind`, whatever its own `kind` field says.
    pub fn query(&mut self, kind: QueryKind, mut q: Query) -> Result<QueryResult> {
        q.kind = kind;
        let kb = self.kb.as_ref().ok_or_else(|| self.kb().unwrap_err())?;
        Ok(self.query.resolve(kb, &q)?)
    }

    /// Closest rule to `rule_id`, or to the last query's top rule.
    pub fn closest(&self, rule_id: Option<usize>) -> Result<ClosestInfo> {
        let kb = self.kb()?;
        let id = match rule_id {
            Some(id) => id,
            None => self
                .query
                .last_query_context()
                .and_then(|c| c.rule_id)
                .ok_or_else(|| conflict("There is no rule to start from. Run a query that returns a rule first."))?,
        };
        let reference = kb
            .rule(id)
            .ok_or_else(|| ServiceError::BadRequest(format!("no rule with id {id}")))?;
        let closest = closest_rule(kb, reference)?;
        Ok(ClosestInfo { reference: reference.clone(), closest: closest.clone() })
    }

    pub fn complexity(&self) -> Result<ValueInfo> {
        Ok(ValueInfo { value: complexity(self.kb()?)? })
    }

    pub fn bias(&self, feature: &str) -> Result<BiasInfo> {
        let kb = self.kb()?;
        let value = bias_proxy(kb, feature, &kb.scoring)?;
        let name = kb
            .feature_index(feature)
            .map(|i| kb.features[i].name.clone())
            .unwrap_or_else(|| feature.to_string());
        Ok(BiasInfo { feature: name, value })
    }

    pub fn top_rules(&self, n: usize) -> Result<Vec<FuzzyRule>> {
        Ok(top_rules(self.kb()?, n)?.into_iter().cloned().collect())
    }

    pub fn export_prolog(&self) -> Result<String> {
        Ok(prolog_string(self.kb()?))
    }

    pub fn histogram(&self, feature: &str, bins: usize) -> Result<HistogramSeries> {
        eda::histogram(&self.dataset()?.imputed, feature, bins)
    }

    pub fn correlation(&self, a: &str, b: &str) -> Result<CorrelationSeries> {
        eda::correlation(&self.dataset()?.imputed, a, b)
    }

    pub fn correlation_matrix(&self) -> Result<CorrelationMatrix> {
        Ok(eda::correlation_matrix(&self.dataset()?.imputed))
    }
}

/// `<data_dir>/<name>.arff`, refusing anything that is not a plain name.
pub fn dataset_path(data_dir: &Path, name: &str) -> Result<PathBuf> {
    let name = name.trim().to_ascii_lowercase();
    let plain = !name.is_empty()
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if !plain {
        return Err(ServiceError::BadRequest(format!("invalid dataset name '{name}'")));
    }
    let path = data_dir.join(format!("{name}.arff"));
    if !path.is_file() {
        return Err(ServiceError::NotFound(format!(
            "dataset '{name}' not found; available: {}",
            available_datasets(data_dir).join(", ")
        )));
    }
    Ok(path)
}

pub fn available_datasets(data_dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(data_dir)
        .into_iter()
        .flatten()
        .flatten()
        .filter_map(|e| {
            let p = e.path();
            if p.extension()? != "arff" {
                return None;
            }
            Some(p.file_stem()?.to_string_lossy().into_owned())
        })
        .collect();
    names.sort();
    names
}

pub type SessionHandle = Arc<Mutex<Session>>;

/// All live sessions. Each session sits behind its own mutex, so requests on
/// one session are serialized while different sessions run concurrently.
#[derive(Debug)]
pub struct SessionStore {
    sessions: RwLock<HashMap<String, SessionHandle>>,
    pub data_dir: PathBuf,
    persist_dir: Option<PathBuf>,
}

impl SessionStore {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self { sessions: RwLock::default(), data_dir: data_dir.into(), persist_dir: None }
    }

    /// Keep a JSON snapshot of each session in `dir`, restoring any that
    /// are already there.
    pub fn with_persistence(mut self, dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let mut map = HashMap::new();
        for entry in std::fs::read_dir(&dir)?.flatten() {
            let path = entry.path();
            if path.extension().is_some_and(|e| e == "json") {
                match std::fs::read_to_string(&path).map_err(ServiceError::from).and_then(|t| {
                    serde_json::from_str::<Session>(&t).map_err(ServiceError::from)
                }) {
                    Ok(s) => {
                        map.insert(s.id.clone(), Arc::new(Mutex::new(s)));
                    }
                    Err(e) => log::warn!("skipping snapshot {}: {e}", path.display()),
                }
            }
        }
        log::info!("restored {} sessions from {}", map.len(), dir.display());
        self.sessions = RwLock::new(map);
        self.persist_dir = Some(dir);
        Ok(self)
    }

    pub fn create(&self) -> Result<String> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = Session::new(id.clone());
        self.persist(&session)?;
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok(id)
    }

    pub fn get(&self, id: &str) -> Result<SessionHandle> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("no session '{id}'")))
    }

    pub fn remove(&self, id: &str) -> Result<()> {
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .remove(id)
            .ok_or_else(|| ServiceError::NotFound(format!("no session '{id}'")))?;
        if let Some(dir) = &self.persist_dir {
            let _ = std::fs::remove_file(dir.join(format!("{id}.json")));
        }
        Ok(())
    }

    /// Write the snapshot of `session` when persistence is on.
    pub fn persist(&self, session: &Session) -> Result<()> {
        if let Some(dir) = &self.persist_dir {
            let tmp = dir.join(format!("{}.json.tmp", session.id));
            std::fs::write(&tmp, serde_json::to_vec(session)?)?;
            std::fs::rename(&tmp, dir.join(format!("{}.json", session.id)))?;
        }
        Ok(())
    }

    /// Run `op` with exclusive access to the session.
    pub fn with_session<T>(&self, id: &str, op: impl FnOnce(&mut Session) -> Result<T>) -> Result<T> {
        let handle = self.get(id)?;
        let mut session = handle.lock().unwrap_or_else(|e| e.into_inner());
        op(&mut session)
    }

    /// Like [`Self::with_session`], then snapshot the session.
    pub fn update<T>(&self, id: &str, op: impl FnOnce(&mut Session) -> Result<T>) -> Result<T> {
        let handle = self.get(id)?;
        let mut session = handle.lock().unwrap_or_else(|e| e.into_inner());
        let out = op(&mut session);
        self.persist(&session)?;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data_dir() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
    }

    #[test]
    fn stages_are_enforced() {
        let mut s = Session::new("t");
        assert!(matches!(s.train(&TrainRequest::default()), Err(ServiceError::Conflict(_))));
        assert!(matches!(s.complexity(), Err(ServiceError::Conflict(_))));
        s.load_dataset(&LoadRequest { name: Some("wine".into()), arff: None }, &data_dir()).unwrap();
        assert!(matches!(s.build(&BuildRequest::default()), Err(ServiceError::Conflict(_))));
        s.train(&TrainRequest { k: Some(3), ..Default::default() }).unwrap();
        let info = s.build(&BuildRequest { symbols: Some(3), ..Default::default() }).unwrap();
        assert_eq!(info.rules, 178);
        assert!(matches!(s.closest(None), Err(ServiceError::Conflict(_))));
        // A new dataset invalidates everything derived from the old one.
        s.load_dataset(&LoadRequest { name: Some("wine".into()), arff: None }, &data_dir()).unwrap();
        assert!(s.kb.is_none() && s.predictions.is_none() && s.baseline.is_none());
    }

    #[test]
    fn dataset_names_are_sanitized() {
        assert!(matches!(dataset_path(&data_dir(), "../etc/passwd"), Err(ServiceError::BadRequest(_))));
        assert!(matches!(dataset_path(&data_dir(), "nothere"), Err(ServiceError::NotFound(_))));
        assert!(dataset_path(&data_dir(), "Diabetes").is_ok());
        assert!(available_datasets(&data_dir()).contains(&"wine".to_string()));
    }

    #[test]
    fn snapshots_survive_a_restart() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::new(data_dir()).with_persistence(dir.path()).unwrap();
        let id = store.create().unwrap();
        store
            .update(&id, |s| s.load_dataset(&LoadRequest { name: Some("wine".into()), arff: None }, &data_dir()))
            .unwrap();
        let again = SessionStore::new(data_dir()).with_persistence(dir.path()).unwrap();
        let name = again.with_session(&id, |s| Ok(s.dataset()?.name.clone())).unwrap();
        assert_eq!(name, "wine");
    }
}
