//! Per-instance predictions from any classifier, plus a small k-nearest
//! neighbour baseline so the pipeline can run without an external model.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureKind, Value};
use crate::error::{Error, Result};

pub const DEFAULT_NEIGHBORS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// 0-based row index in the dataset the prediction refers to.
    pub instance_id: usize,
    pub class_label: String,
    /// P(class | instance), in [0, 1].
    pub confidence: f64,
}

#[derive(Debug, Deserialize)]
struct Record {
    id: String,
    class: String,
    #[serde(default)]
    confidence: Option<String>,
}

/// Read a `id,class,confidence` CSV. The confidence column may be absent or
/// empty, in which case the prediction is taken as certain (1.0).
pub fn ingest_predictions<R: Read>(ds: &Dataset, reader: R) -> Result<Vec<Prediction>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut slots: Vec<Option<Prediction>> = vec![None; ds.len()];
    for (n, rec) in rdr.deserialize::<Record>().enumerate() {
        let rec = rec?;
        let line = n + 2;
        let id: usize = rec
            .id
            .parse()
            .map_err(|_| Error::Ingestion(format!("line {line}: bad id '{}'", rec.id)))?;
        if id >= ds.len() {
            return Err(Error::Ingestion(format!(
                "line {line}: id {id} out of range for {} instances",
                ds.len()
            )));
        }
        if slots[id].is_some() {
            return Err(Error::Ingestion(format!("line {line}: duplicate id {id}")));
        }
        let class_label = ds
            .class_domain()
            .iter()
            .find(|c| c.eq_ignore_ascii_case(&rec.class))
            .cloned()
            .ok_or_else(|| Error::domain(format!("line {line}: unknown class '{}'", rec.class)))?;
        let confidence = match rec.confidence.as_deref() {
            None | Some("") => 1.0,
            Some(s) => {
                let v: f64 = s
                    .parse()
                    .map_err(|_| Error::Ingestion(format!("line {line}: bad confidence '{s}'")))?;
                if v.is_nan() {
                    return Err(Error::Ingestion(format!("line {line}: confidence is NaN")));
                }
                if !(0.0..=1.0).contains(&v) {
                    log::warn!("line {line}: confidence {v} clamped to [0,1]");
                }
                v.clamp(0.0, 1.0)
            }
        };
        slots[id] = Some(Prediction {
            instance_id: id,
            class_label,
            confidence,
        });
    }
    let missing: Vec<usize> = slots
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_none())
        .map(|(i, _)| i)
        .collect();
    if !missing.is_empty() {
        let shown: Vec<String> = missing.iter().take(5).map(|i| i.to_string()).collect();
        return Err(Error::Ingestion(format!(
            "{} instance(s) without a prediction (first: {})",
            missing.len(),
            shown.join(", ")
        )));
    }
    Ok(slots.into_iter().map(Option::unwrap).collect())
}

/// Write predictions in the format read by [`ingest_predictions`].
pub fn emit_predictions<W: Write>(preds: &[Prediction], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "class", "confidence"])?;
    for p in preds {
        w.write_record([
            p.instance_id.to_string(),
            p.class_label.clone(),
            format!("{}", p.confidence),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Certain predictions equal to the dataset's own labels.
pub fn from_labels(ds: &Dataset) -> Vec<Prediction> {
    (0..ds.len())
        .map(|i| Prediction {
            instance_id: i,
            class_label: ds.class_label(i).to_string(),
            confidence: 1.0,
        })
        .collect()
}

fn instance_distance(ds_a: &Dataset, a: usize, ds_b: &Dataset, b: usize) -> f64 {
    let mut d = 0.0;
    for (j, f) in ds_a.features.iter().enumerate() {
        d += match (f.kind, ds_a.rows[a][j], ds_b.rows[b][j]) {
            (FeatureKind::Numeric, Value::Numeric(x), Value::Numeric(y)) => (x - y).abs(),
            (FeatureKind::Nominal, Value::Nominal(x), Value::Nominal(y)) => {
                if x == y {
                    0.0
                } else {
                    1.0
                }
            }
            _ => 1.0,
        };
    }
    d
}

/// k-nearest-neighbour vote over normalized features. Neighbour ties are
/// broken by training row order, vote ties by class domain order.
pub fn baseline_classify(train: &Dataset, target: &Dataset, k: usize) -> Result<Vec<Prediction>> {
    if train.is_empty() {
        return Err(Error::validation("baseline classifier needs training rows"));
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if train.features != target.features || train.class_feature != target.class_feature {
        return Err(Error::validation("train and target datasets have different schemas"));
    }
    let k = k.min(train.len());
    let n_classes = train.class_domain().len();
    let preds = (0..target.len())
        .map(|t| {
            let mut dists: Vec<(f64, usize)> = (0..train.len())
                .map(|i| (instance_distance(target, t, train, i), i))
                .collect();
            dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut votes = vec![0usize; n_classes];
            for &(_, i) in &dists[..k] {
                votes[train.labels[i]] += 1;
            }
            let mut best = 0;
            for (c, &v) in votes.iter().enumerate() {
                if v > votes[best] {
                    best = c;
                }
            }
            Prediction {
                instance_id: t,
                class_label: train.class_domain()[best].clone(),
                confidence: votes[best] as f64 / k as f64,
            }
        })
        .collect();
    Ok(preds)
}

/// Fraction of predictions whose label matches the dataset's class.
pub fn accuracy(preds: &[Prediction], truth: &Dataset) -> Result<f64> {
    if preds.len() != truth.len() {
        return Err(Error::validation(format!(
            "{} predictions for {} instances",
            preds.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::validation("accuracy of an empty dataset"));
    }
    let mut correct = 0usize;
    for (i, p) in preds.iter().enumerate() {
        if p.instance_id != i {
            return Err(Error::validation(format!(
                "prediction {i} refers to instance {}",
                p.instance_id
            )));
        }
        if p.class_label == truth.class_label(i) {
            correct += 1;
        }
    }
    Ok(correct as f64 / truth.len() as f64)
}
