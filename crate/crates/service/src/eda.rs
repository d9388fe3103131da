//! Exploratory statistics returned as JSON series for client-side charts.

use fuzzkb_core::dataset::Dataset;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::statistics::Statistics;

use crate::error::{Result, ServiceError};

pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSeries {
    pub feature: String,
    /// `bins + 1` ascending edges; the last bin is closed on the right.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSeries {
    pub a: String,
    pub b: String,
    pub r: f64,
    /// Two-sided p-value of the t-test for zero correlation.
    pub p_value: f64,
    /// Scatter points (a, b).
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub features: Vec<String>,
    /// Row-major Pearson coefficients.
    pub matrix: Vec<Vec<f64>>,
}

fn numeric_column(ds: &Dataset, feature: &str) -> Result<(String, Vec<f64>)> {
    let j = ds
        .feature_index(feature)
        .ok_or_else(|| ServiceError::BadRequest(format!("unknown feature '{feature}'")))?;
    let spec = &ds.features[j];
    if !spec.is_numeric() {
        return Err(ServiceError::BadRequest(format!("feature '{}' is not numeric", spec.name)));
    }
    Ok((spec.name.clone(), ds.numeric_column(j)))
}

pub fn histogram(ds: &Dataset, feature: &str, bins: usize) -> Result<HistogramSeries> {
    if bins == 0 {
        return Err(ServiceError::BadRequest("bins must be at least 1".into()));
    }
    let (name, values) = numeric_column(ds, feature)?;
    if values.is_empty() {
        return Err(ServiceError::BadRequest("dataset has no rows".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0usize; bins];
    for v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(HistogramSeries { feature: name, edges, counts })
}

/// Pearson's r with its two-sided p-value. Constant columns give NaN.
pub fn pearson(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len();
    if n < 3 || n != y.len() {
        return (f64::NAN, f64::NAN);
    }
    let cov = x.iter().copied().covariance(y.iter().copied());
    let r = (cov / (x.std_dev() * y.std_dev())).clamp(-1.0, 1.0);
    if !r.is_finite() {
        return (f64::NAN, f64::NAN);
    }
    let df = (n - 2) as f64;
    if r.abs() == 1.0 {
        return (r, 0.0);
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let p = match StudentsT::new(0.0, 1.0, df) {
        Ok(dist) => 2.0 * dist.sf(t.abs()),
        Err(_) => f64::NAN,
    };
    (r, p)
}

pub fn correlation(ds: &Dataset, a: &str, b: &str) -> Result<CorrelationSeries> {
    let (a, xs) = numeric_column(ds, a)?;
    let (b, ys) = numeric_column(ds, b)?;
    let (r, p_value) = pearson(&xs, &ys);
    let points = xs.iter().zip(&ys).map(|(&x, &y)| [x, y]).collect();
    Ok(CorrelationSeries { a, b, r, p_value, points })
}

/// Pairwise Pearson coefficients of all numeric features.
pub fn correlation_matrix(ds: &Dataset) -> CorrelationMatrix {
    let cols: Vec<(String, Vec<f64>)> = ds
        .features
        .iter()
        .enumerate()
        .filter(|(_, f)| f.is_numeric())
        .map(|(j, f)| (f.name.clone(), ds.numeric_column(j)))
        .collect();
    let matrix = cols
        .iter()
        .map(|(_, x)| cols.iter().map(|(_, y)| pearson(x, y).0).collect())
        .collect();
    CorrelationMatrix { features: cols.into_iter().map(|(n, _)| n).collect(), matrix }
}
