//! Sensitivity sweeps over symbol count, lambda, implicator and distance.
//!
//! For every dataset and symbol count the KB is built once. Each distance
//! variant gets one distance matrix, and every (lambda, implicator) cell
//! reuses it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use fuzzkb_core::dataset::SplitConfig;
use fuzzkb_core::fuzzy_rough::{DistanceMatrix, DistanceVariant, Implicator, ScoringConfig};
use fuzzkb_core::prediction::DEFAULT_NEIGHBORS;
use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, OrderStatistics};

use crate::error::{Result, ServiceError};
use crate::pipeline::{build_scored_kb, load_predictions, run_baseline, Prepared};

fn default_symbols() -> Vec<usize> {
    (2..=10).collect()
}
fn default_lambdas() -> Vec<f64> {
    vec![0.25, 0.5, 1.0, 2.0, 4.0]
}
fn default_implicators() -> Vec<Implicator> {
    Implicator::ALL.to_vec()
}
fn default_distances() -> Vec<DistanceVariant> {
    DistanceVariant::ALL.to_vec()
}
fn default_k() -> usize {
    DEFAULT_NEIGHBORS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// ARFF files.
    pub datasets: Vec<PathBuf>,
    /// Prediction CSVs aligned with `datasets`. Empty means baseline for all.
    #[serde(default)]
    pub predictions: Vec<Option<PathBuf>>,
    #[serde(default = "default_symbols")]
    pub symbol_counts: Vec<usize>,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_implicators")]
    pub implicators: Vec<Implicator>,
    #[serde(default = "default_distances")]
    pub distances: Vec<DistanceVariant>,
    /// Neighbours of the baseline classifier.
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub split: SplitConfig,
    /// Write one SVG chart per dataset next to the CSV.
    #[serde(default)]
    pub charts: bool,
}

impl SweepSpec {
    pub fn new(datasets: Vec<PathBuf>) -> Self {
        Self {
            datasets,
            predictions: Vec::new(),
            symbol_counts: default_symbols(),
            lambdas: default_lambdas(),
            implicators: default_implicators(),
            distances: default_distances(),
            k: default_k(),
            split: SplitConfig::default(),
            charts: false,
        }
    }

    /// Read a TOML spec, or JSON when the extension is `.json`. Relative
    /// paths are resolved against the spec file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut spec: SweepSpec = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text)?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        spec.datasets.iter_mut().for_each(fix);
        spec.predictions.iter_mut().flatten().for_each(fix);
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("datasets", self.datasets.is_empty()),
            ("symbol_counts", self.symbol_counts.is_empty()),
            ("lambdas", self.lambdas.is_empty()),
            ("implicators", self.implicators.is_empty()),
            ("distances", self.distances.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(ServiceError::BadRequest(format!("sweep grid '{name}' is empty")));
        }
        if !self.predictions.is_empty() && self.predictions.len() != self.datasets.len() {
            return Err(ServiceError::BadRequest(format!(
                "{} prediction entries for {} datasets",
                self.predictions.len(),
                self.datasets.len()
            )));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.datasets.len()
            * self.symbol_counts.len()
            * self.lambdas.len()
            * self.implicators.len()
            * self.distances.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dataset: String,
    pub c: usize,
    pub lambda: f64,
    pub implicator: Implicator,
    pub distance: DistanceVariant,
    pub avg_rule_conf: Option<f64>,
    pub avg_antecedent_conf: Option<f64>,
    pub p10: Option<f64>,
    pub p90: Option<f64>,
    /// Empty when the cell succeeded.
    pub error: String,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn dataset_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Rows for one dataset at one symbol count, in (distance, lambda,
/// implicator) order.
fn sweep_symbol_count(
    spec: &SweepSpec,
    name: &str,
    data: &std::result::Result<(Prepared, Vec<fuzzkb_core::prediction::Prediction>), String>,
    c: usize,
) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    let kb = data.as_ref().map_err(Clone::clone).and_then(|(p, preds)| {
        build_scored_kb(&p.clean, preds, c, ScoringConfig::default()).map_err(|e| e.to_string())
    });
    for &distance in &spec.distances {
        let matrix = kb.as_ref().map_err(Clone::clone).and_then(|kb| {
            DistanceMatrix::compute(kb, distance, None).map_err(|e| e.to_string())
        });
        for &lambda in &spec.lambdas {
            for &implicator in &spec.implicators {
                let mut row = SweepRow {
                    dataset: name.to_string(),
                    c,
                    lambda,
                    implicator,
                    distance,
                    avg_rule_conf: None,
                    avg_antecedent_conf: None,
                    p10: None,
                    p90: None,
                    error: String::new(),
                };
                let cell = ScoringConfig { implicator, distance, lambda }
                    .validate()
                    .map_err(|e| e.to_string())
                    .and(matrix.as_ref().map_err(Clone::clone))
                    .and_then(|m| Ok((m, kb.as_ref().map_err(Clone::clone)?)));
                match cell {
                    Ok((m, kb)) => {
                        let scores = m.lower_memberships(implicator, lambda);
                        let mut data = Data::new(scores.clone());
                        row.avg_rule_conf = Some(mean(&scores));
                        row.avg_antecedent_conf = Some(kb.avg_antecedent_confidence());
                        row.p10 = Some(data.quantile(0.1));
                        row.p90 = Some(data.quantile(0.9));
                    }
                    Err(e) => row.error = e,
                }
                rows.push(row);
            }
        }
    }
    rows
}

/// Run the full grid. Failures are recorded per cell and never abort.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.cells());
    for (i, path) in spec.datasets.iter().enumerate() {
        let name = dataset_name(path);
        let pred_path = spec.predictions.get(i).cloned().flatten();
        let data = Prepared::load(path)
            .and_then(|p| {
                let preds = match &pred_path {
                    Some(pp) => load_predictions(&p.clean, pp)?,
                    None => run_baseline(&p.clean, spec.k, spec.split)?.predictions,
                };
                Ok((p, preds))
            })
            .map_err(|e| e.to_string());
        if let Err(e) = &data {
            log::warn!("{name}: {e}");
        }
        for &c in &spec.symbol_counts {
            rows.extend(sweep_symbol_count(spec, &name, &data, c));
        }
    }
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_csv<W: Write>(rows: &[SweepRow], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "dataset",
        "c",
        "lambda",
        "implicator",
        "distance",
        "avg_rule_conf",
        "avg_antecedent_conf",
        "p10",
        "p90",
        "error",
    ])?;
    for r in rows {
        w.write_record([
            r.dataset.clone(),
            r.c.to_string(),
            r.lambda.to_string(),
            r.implicator.name().to_string(),
            r.distance.to_string(),
            opt(r.avg_rule_conf),
            opt(r.avg_antecedent_conf),
            opt(r.p10),
            opt(r.p90),
            r.error.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// Line chart of average rule confidence against the symbol count, one line
/// per (implicator, distance), at the lambda closest to 1.
pub fn svg_chart(rows: &[SweepRow], dataset: &str) -> Option<String> {
    let mine: Vec<&SweepRow> = rows.iter().filter(|r| r.dataset == dataset && r.avg_rule_conf.is_some()).collect();
    let lambda = mine
        .iter()
        .map(|r| r.lambda)
        .min_by(|a, b| (a - 1.0).abs().total_cmp(&(b - 1.0).abs()))?;
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in mine.iter().filter(|r| r.lambda == lambda) {
        series
            .entry(format!("{}/{}", r.implicator.name(), r.distance))
            .or_default()
            .push((r.c as f64, r.avg_rule_conf.unwrap_or_default()));
    }
    let xs: Vec<f64> = series.values().flatten().map(|p| p.0).collect();
    let (x0, x1) = (xs.iter().copied().fold(f64::INFINITY, f64::min), xs.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let (w, h, m) = (640.0, 400.0, 50.0);
    let sx = |x: f64| if x1 > x0 { m + (x - x0) / (x1 - x0) * (w - 2.0 * m) } else { w / 2.0 };
    let sy = |y: f64| h - m - y.clamp(0.0, 1.0) * (h - 2.0 * m);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{dataset}: average rule confidence (lambda = {lambda})</text>"#, w / 2.0);
    let _ = writeln!(s, r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - m, w - m, h - m);
    let _ = writeln!(s, r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#, h - m);
    for t in 0..=4 {
        let y = t as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{y:.2}</text>"#, m - 5.0, sy(y) + 4.0);
    }
    let mut ticks: Vec<f64> = xs.clone();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for x in ticks {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x}</text>"#, sx(x), h - m + 15.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">symbols (c)</text>"#, w / 2.0, h - 10.0);
    for (i, (label, pts)) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let dash = if i >= PALETTE.len() { r#" stroke-dasharray="4 2""# } else { "" };
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{colour}"{dash} points="{}"/>"#, path.join(" "));
        let _ = writeln!(s, r#"<text x="{}" y="{}" fill="{colour}">{label}</text>"#, w - m - 110.0, m + 14.0 * i as f64);
    }
    s.push_str("</svg>\n");
    Some(s)
}

/// Write `sweep.csv` (and charts if requested) into `out`.
pub fn run_sweep_to_dir(spec: &SweepSpec, out: &Path) -> Result<Vec<SweepRow>> {
    let rows = run_sweep(spec)?;
    std::fs::create_dir_all(out)?;
    write_csv(&rows, std::fs::File::create(out.join("sweep.csv"))?)?;
    if spec.charts {
        let mut names: Vec<&str> = rows.iter().map(|r| r.dataset.as_str()).collect();
        names.dedup();
        for name in names {
            if let Some(svg) = svg_chart(&rows, name) {
                std::fs::write(out.join(format!("{name}_sweep.svg")), svg)?;
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_the_grid() {
        let spec: SweepSpec = toml::from_str("datasets = [\"a.arff\"]").unwrap();
        assert_eq!(spec.symbol_counts, (2..=10).collect::<Vec<_>>());
        assert_eq!(spec.lambdas.len(), 5);
        assert_eq!(spec.cells(), 9 * 5 * 4 * 2);
        spec.validate().unwrap();
    }

    #[test]
    fn empty_grids_are_rejected() {
        let mut spec = SweepSpec::new(vec!["a.arff".into()]);
        spec.lambdas.clear();
        assert!(spec.validate().is_err());
        let spec = SweepSpec::new(vec![]);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<SweepSpec>("datasets = []\nlambda = [1.0]").is_err());
    }

    #[test]
    fn unreadable_dataset_records_errors() {
        let mut spec = SweepSpec::new(vec!["/nonexistent/a.arff".into()]);
        spec.symbol_counts = vec![2, 3];
        spec.lambdas = vec![1.0];
        let rows = run_sweep(&spec).unwrap();
        assert_eq!(rows.len(), 2 * 4 * 2);
        assert!(rows.iter().all(|r| !r.error.is_empty() && r.avg_rule_conf.is_none()));
    }
}
