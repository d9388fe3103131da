//! Tabular datasets: ARFF parsing, imputation, min-max normalization and
//! stratified train/test splitting.
//!
//! Only the dense ARFF subset is supported: `numeric`/`real`/`integer`
//! attributes and nominal `{v1,...,vn}` attributes, with `?` marking a
//! missing cell. String, date and sparse data are rejected.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Nominal,
}

/// A declared attribute. `domain` is empty for numeric attributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default)]
    pub domain: Vec<String>,
}

impl FeatureSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Numeric,
            domain: Vec::new(),
        }
    }

    pub fn nominal<S: Into<String>>(name: impl Into<String>, domain: impl IntoIterator<Item = S>) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Nominal,
            domain: domain.into_iter().map(Into::into).collect(),
        }
    }

    pub fn is_numeric(&self) -> bool {
        self.kind == FeatureKind::Numeric
    }

    /// Index of `value` in the nominal domain (exact match).
    pub fn domain_index(&self, value: &str) -> Option<usize> {
        self.domain.iter().position(|v| v == value)
    }
}

/// One cell of the value grid. Nominal values are stored as indices into
/// the owning feature's domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Value {
    Numeric(f64),
    Nominal(usize),
    Missing,
}

impl Value {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Numeric(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub relation: String,
    /// Non-class features in declaration order.
    pub features: Vec<FeatureSpec>,
    pub class_feature: FeatureSpec,
    /// k rows of |features| cells each.
    pub rows: Vec<Vec<Value>>,
    /// Class index per row, into `class_feature.domain`.
    pub labels: Vec<usize>,
    /// Original (min, max) per numeric feature once normalized.
    #[serde(default)]
    pub normalization_ranges: Vec<Option<(f64, f64)>>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Parsing options. By default the last nominal attribute is the class.
#[derive(Debug, Clone, Default)]
pub struct ArffOptions {
    pub class_attribute: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 0.8,
            seed: 42,
        }
    }
}

/// Row indices (ascending) of a train/test partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub stratified: bool,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn class_domain(&self) -> &[String] {
        &self.class_feature.domain
    }

    pub fn class_label(&self, row: usize) -> &str {
        &self.class_feature.domain[self.labels[row]]
    }

    /// Case-insensitive lookup of a non-class feature.
    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features
            .iter()
            .position(|f| f.name.eq_ignore_ascii_case(name))
    }

    pub fn missing_mask(&self) -> Vec<Vec<bool>> {
        self.rows
            .iter()
            .map(|r| r.iter().map(Value::is_missing).collect())
            .collect()
    }

    pub fn has_missing(&self) -> bool {
        self.rows.iter().flatten().any(Value::is_missing)
    }

    /// Observed values of a numeric column, in row order.
    pub fn numeric_column(&self, feature: usize) -> Vec<f64> {
        self.rows
            .iter()
            .filter_map(|r| r[feature].as_f64())
            .collect()
    }

    /// New dataset holding the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            relation: self.relation.clone(),
            features: self.features.clone(),
            class_feature: self.class_feature.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            normalization_ranges: self.normalization_ranges.clone(),
            warnings: Vec::new(),
        }
    }

    /// Serialize back to ARFF. Features keep their order and the class is
    /// written last, so re-parsing with default options yields an equal
    /// dataset.
    pub fn to_arff(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "@relation {}\n", quote(&self.relation));
        for f in self.features.iter().chain(std::iter::once(&self.class_feature)) {
            match f.kind {
                FeatureKind::Numeric => {
                    let _ = writeln!(out, "@attribute {} numeric", quote(&f.name));
                }
                FeatureKind::Nominal => {
                    let dom: Vec<String> = f.domain.iter().map(|v| quote(v)).collect();
                    let _ = writeln!(out, "@attribute {} {{{}}}", quote(&f.name), dom.join(","));
                }
            }
        }
        out.push_str("\n@data\n");
        for (row, &label) in self.rows.iter().zip(&self.labels) {
            let mut cells: Vec<String> = row
                .iter()
                .zip(&self.features)
                .map(|(v, f)| match *v {
                    Value::Numeric(x) => format!("{x}"),
                    Value::Nominal(i) => quote(&f.domain[i]),
                    Value::Missing => "?".to_string(),
                })
                .collect();
            cells.push(quote(&self.class_feature.domain[label]));
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn needs_quotes(s: &str) -> bool {
    s.is_empty()
        || s == "?"
        || s.chars().any(|c| {
            c.is_whitespace() || matches!(c, ',' | '\'' | '"' | '{' | '}' | '%' | '\\')
        })
}

fn quote(s: &str) -> String {
    if !needs_quotes(s) {
        return s.to_string();
    }
    let mut q = String::with_capacity(s.len() + 2);
    q.push('\'');
    for c in s.chars() {
        if c == '\'' || c == '\\' {
            q.push('\\');
        }
        q.push(c);
    }
    q.push('\'');
    q
}

/// A token from a comma-separated ARFF list, with whether it was quoted.
#[derive(Debug, Clone, PartialEq)]
struct Cell {
    text: String,
    quoted: bool,
}

fn split_cells(s: &str, line: usize) -> Result<Vec<Cell>> {
    let mut cells = Vec::new();
    let mut chars = s.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        let mut text = String::new();
        let mut quoted = false;
        match chars.peek() {
            Some(&q) if q == '\'' || q == '"' => {
                chars.next();
                quoted = true;
                let mut closed = false;
                while let Some(c) = chars.next() {
                    if c == '\\' {
                        if let Some(e) = chars.next() {
                            text.push(e);
                        }
                    } else if c == q {
                        closed = true;
                        break;
                    } else {
                        text.push(c);
                    }
                }
                if !closed {
                    return Err(Error::parse(line, "unterminated quoted value"));
                }
                while chars.peek().is_some_and(|c| c.is_whitespace()) {
                    chars.next();
                }
            }
            _ => {
                while let Some(&c) = chars.peek() {
                    if c == ',' {
                        break;
                    }
                    text.push(c);
                    chars.next();
                }
                text = text.trim().to_string();
            }
        }
        cells.push(Cell { text, quoted });
        match chars.next() {
            None => break,
            Some(',') => continue,
            Some(c) => {
                return Err(Error::parse(line, format!("unexpected character '{c}' after value")))
            }
        }
    }
    Ok(cells)
}

/// Split off the first (possibly quoted) word of `s`.
fn take_word(s: &str, line: usize) -> Result<(String, &str)> {
    let s = s.trim_start();
    let mut chars = s.char_indices();
    match chars.next() {
        None => Err(Error::parse(line, "expected a name")),
        Some((_, q)) if q == '\'' || q == '"' => {
            let mut out = String::new();
            let mut escaped = false;
            for (i, c) in chars {
                if escaped {
                    out.push(c);
                    escaped = false;
                } else if c == '\\' {
                    escaped = true;
                } else if c == q {
                    return Ok((out, &s[i + c.len_utf8()..]));
                } else {
                    out.push(c);
                }
            }
            Err(Error::parse(line, "unterminated quoted name"))
        }
        Some(_) => {
            let end = s.find(|c: char| c.is_whitespace() || c == '{').unwrap_or(s.len());
            Ok((s[..end].to_string(), &s[end..]))
        }
    }
}

fn keyword<'a>(line: &'a str, kw: &str) -> Option<&'a str> {
    let head = line.get(..kw.len())?;
    if head.eq_ignore_ascii_case(kw) {
        let rest = &line[kw.len()..];
        if rest.is_empty() || rest.starts_with(char::is_whitespace) {
            return Some(rest);
        }
    }
    None
}

fn parse_attribute(rest: &str, line: usize) -> Result<FeatureSpec> {
    let (name, rest) = take_word(rest, line)?;
    if name.is_empty() {
        return Err(Error::parse(line, "empty attribute name"));
    }
    let ty = rest.trim();
    if let Some(body) = ty.strip_prefix('{') {
        let body = body
            .strip_suffix('}')
            .ok_or_else(|| Error::parse(line, "nominal domain missing closing '}'"))?;
        let values = split_cells(body, line)?;
        let mut seen = HashSet::new();
        let mut domain = Vec::with_capacity(values.len());
        for v in values {
            if v.text.is_empty() && !v.quoted {
                return Err(Error::parse(line, format!("empty value in domain of '{name}'")));
            }
            if !seen.insert(v.text.clone()) {
                return Err(Error::parse(
                    line,
                    format!("duplicate value '{}' in domain of '{name}'", v.text),
                ));
            }
            domain.push(v.text);
        }
        return Ok(FeatureSpec::nominal(name, domain));
    }
    match ty.to_ascii_lowercase().as_str() {
        "numeric" | "real" | "integer" => Ok(FeatureSpec::numeric(name)),
        "" => Err(Error::parse(line, format!("attribute '{name}' has no type"))),
        other => Err(Error::parse(
            line,
            format!("unsupported attribute type '{other}' for '{name}'"),
        )),
    }
}

/// Parse ARFF text into a [`Dataset`].
pub fn parse_arff(text: &str) -> Result<Dataset> {
    parse_arff_with(text, &ArffOptions::default())
}

pub fn parse_arff_with(text: &str, opts: &ArffOptions) -> Result<Dataset> {
    let mut relation: Option<String> = None;
    let mut attrs: Vec<FeatureSpec> = Vec::new();
    let mut data_lines: Vec<(usize, &str)> = Vec::new();
    let mut in_data = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        if in_data {
            data_lines.push((line_no, line));
            continue;
        }
        if let Some(rest) = keyword(line, "@relation") {
            let (name, _) = take_word(rest, line_no)?;
            relation = Some(name);
        } else if let Some(rest) = keyword(line, "@attribute") {
            if relation.is_none() {
                return Err(Error::parse(line_no, "@attribute before @relation"));
            }
            let spec = parse_attribute(rest, line_no)?;
            if attrs.iter().any(|a| a.name.eq_ignore_ascii_case(&spec.name)) {
                return Err(Error::parse(
                    line_no,
                    format!("duplicate attribute '{}'", spec.name),
                ));
            }
            attrs.push(spec);
        } else if keyword(line, "@data").is_some() {
            if attrs.is_empty() {
                return Err(Error::parse(line_no, "@data before any @attribute"));
            }
            in_data = true;
        } else {
            return Err(Error::parse(line_no, format!("unexpected header line '{line}'")));
        }
    }
    let relation = relation.ok_or_else(|| Error::parse(1, "missing @relation"))?;
    if !in_data {
        return Err(Error::parse(text.lines().count().max(1), "missing @data section"));
    }

    let class_pos = match &opts.class_attribute {
        Some(name) => {
            let pos = attrs
                .iter()
                .position(|a| a.name.eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::validation(format!("class attribute '{name}' not declared")))?;
            if attrs[pos].kind != FeatureKind::Nominal {
                return Err(Error::validation(format!(
                    "class attribute '{name}' must be nominal"
                )));
            }
            pos
        }
        None => attrs
            .iter()
            .rposition(|a| a.kind == FeatureKind::Nominal)
            .ok_or_else(|| Error::validation("no nominal attribute to use as class"))?,
    };

    let mut rows = Vec::with_capacity(data_lines.len());
    let mut labels = Vec::with_capacity(data_lines.len());
    for (line_no, line) in data_lines {
        if line.starts_with('{') {
            return Err(Error::parse(line_no, "sparse ARFF rows are not supported"));
        }
        let cells = split_cells(line, line_no)?;
        if cells.len() != attrs.len() {
            return Err(Error::parse(
                line_no,
                format!("expected {} values, found {}", attrs.len(), cells.len()),
            ));
        }
        let mut row = Vec::with_capacity(attrs.len() - 1);
        let mut label = None;
        for (pos, (cell, attr)) in cells.iter().zip(&attrs).enumerate() {
            let value = if cell.text == "?" && !cell.quoted {
                Value::Missing
            } else {
                match attr.kind {
                    FeatureKind::Numeric => {
                        let v: f64 = cell.text.parse().map_err(|_| {
                            Error::parse(
                                line_no,
                                format!("'{}' is not numeric (attribute '{}')", cell.text, attr.name),
                            )
                        })?;
                        if !v.is_finite() {
                            return Err(Error::parse(line_no, format!("non-finite value '{}'", cell.text)));
                        }
                        Value::Numeric(v)
                    }
                    FeatureKind::Nominal => {
                        let i = attr.domain_index(&cell.text).ok_or_else(|| {
                            Error::domain(format!(
                                "line {line_no}: value '{}' not in domain of '{}'",
                                cell.text, attr.name
                            ))
                        })?;
                        Value::Nominal(i)
                    }
                }
            };
            if pos == class_pos {
                match value {
                    Value::Nominal(i) => label = Some(i),
                    _ => {
                        return Err(Error::validation(format!(
                            "line {line_no}: missing class value"
                        )))
                    }
                }
            } else {
                row.push(value);
            }
        }
        rows.push(row);
        labels.push(label.expect("class position always visited"));
    }
    if rows.is_empty() {
        return Err(Error::validation("dataset has no instances"));
    }

    let class_feature = attrs.remove(class_pos);
    Ok(Dataset {
        relation,
        normalization_ranges: vec![None; attrs.len()],
        features: attrs,
        class_feature,
        rows,
        labels,
        warnings: Vec::new(),
    })
}

/// Replace missing numeric cells with the column mean and missing nominal
/// cells with the column mode (ties resolved toward domain order).
pub fn impute(ds: &Dataset) -> Result<Dataset> {
    let mut out = ds.clone();
    for (j, feature) in ds.features.iter().enumerate() {
        let observed = ds.rows.iter().filter(|r| !r[j].is_missing()).count();
        if observed == ds.len() {
            continue;
        }
        if observed == 0 {
            return Err(Error::validation(format!(
                "feature '{}' has no observed values",
                feature.name
            )));
        }
        let fill = match feature.kind {
            FeatureKind::Numeric => {
                let sum: f64 = ds.rows.iter().filter_map(|r| r[j].as_f64()).sum();
                Value::Numeric(sum / observed as f64)
            }
            FeatureKind::Nominal => {
                let mut counts = vec![0usize; feature.domain.len()];
                for r in &ds.rows {
                    if let Value::Nominal(i) = r[j] {
                        counts[i] += 1;
                    }
                }
                let mut best = 0;
                for (i, &c) in counts.iter().enumerate() {
                    if c > counts[best] {
                        best = i;
                    }
                }
                Value::Nominal(best)
            }
        };
        for r in &mut out.rows {
            if r[j].is_missing() {
                r[j] = fill;
            }
        }
    }
    Ok(out)
}

/// Min-max scale every numeric feature to [0, 1], recording the original
/// range. Constant columns map to 0.0 and leave a warning.
pub fn normalize(ds: &Dataset) -> Result<Dataset> {
    if ds.has_missing() {
        return Err(Error::validation("normalize requires an imputed dataset"));
    }
    let mut out = ds.clone();
    out.normalization_ranges = vec![None; ds.features.len()];
    for (j, feature) in ds.features.iter().enumerate() {
        if !feature.is_numeric() {
            continue;
        }
        let col = ds.numeric_column(j);
        let min = col.iter().copied().fold(f64::INFINITY, f64::min);
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.normalization_ranges[j] = Some((min, max));
        let span = max - min;
        if span <= 0.0 {
            let msg = format!("feature '{}' is constant; mapped to 0.0", feature.name);
            log::warn!("{msg}");
            out.warnings.push(msg);
        }
        for r in &mut out.rows {
            if let Value::Numeric(v) = r[j] {
                r[j] = Value::Numeric(if span > 0.0 {
                    ((v - min) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                });
            }
        }
    }
    Ok(out)
}

/// Map a normalized value back to the feature's original scale.
pub fn denormalize(ds: &Dataset, feature: usize, value: f64) -> f64 {
    match ds.normalization_ranges.get(feature).copied().flatten() {
        Some((min, max)) => min + value * (max - min),
        None => value,
    }
}

/// Stratified, seeded train/test partition of row indices.
pub fn split_indices(ds: &Dataset, cfg: &SplitConfig) -> Result<SplitIndices> {
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction must lie in (0,1), got {}",
            cfg.train_fraction
        )));
    }
    let k = ds.len();
    let n_train = (cfg.train_fraction * k as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let n_classes = ds.class_domain().len();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let present: Vec<&Vec<usize>> = by_class.iter().filter(|c| !c.is_empty()).collect();
    let stratified = present.iter().all(|c| c.len() >= 2);

    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(k - n_train);
    if stratified {
        // Largest-remainder allocation so per-class quotas sum to n_train.
        let quotas: Vec<f64> = by_class
            .iter()
            .map(|c| c.len() as f64 * n_train as f64 / k as f64)
            .collect();
        let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut remaining = n_train - alloc.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..n_classes).collect();
        order.sort_by(|&a, &b| {
            let fa = quotas[a] - quotas[a].floor();
            let fb = quotas[b] - quotas[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &c in &order {
            if remaining == 0 {
                break;
            }
            if alloc[c] < by_class[c].len() {
                alloc[c] += 1;
                remaining -= 1;
            }
        }
        for (c, members) in by_class.iter().enumerate() {
            let mut shuffled = members.clone();
            shuffled.shuffle(&mut rng);
            train.extend_from_slice(&shuffled[..alloc[c]]);
            test.extend_from_slice(&shuffled[alloc[c]..]);
        }
    } else {
        log::warn!("a class has fewer than 2 instances; falling back to an unstratified split");
        let mut all: Vec<usize> = (0..k).collect();
        all.shuffle(&mut rng);
        train.extend_from_slice(&all[..n_train]);
        test.extend_from_slice(&all[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices {
        train,
        test,
        stratified,
    })
}

/// Split into (train, test) datasets.
pub fn split(ds: &Dataset, cfg: &SplitConfig) -> Result<(Dataset, Dataset)> {
    let idx = split_indices(ds, cfg)?;
    let mut train = ds.select(&idx.train);
    let test = ds.select(&idx.test);
    if !idx.stratified {
        train
            .warnings
            .push("unstratified split: a class has fewer than 2 instances".to_string());
    }
    Ok((train, test))
}
