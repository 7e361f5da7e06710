//! Tabular datasets with an explicit continuous/binary feature schema.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Class label produced by the black box and by every surrogate.
pub type Label = u32;

/// Name of the label column in CSV files.
pub const LABEL_COLUMN: &str = "label";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    names: Vec<String>,
    kinds: Vec<FeatureKind>,
}

impl FeatureSchema {
    pub fn new(names: Vec<String>, kinds: Vec<FeatureKind>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::invalid("schema must contain at least one feature"));
        }
        if names.len() != kinds.len() {
            return Err(Error::invalid(format!(
                "schema has {} names but {} kinds",
                names.len(),
                kinds.len()
            )));
        }
        for (i, name) in names.iter().enumerate() {
            if name == LABEL_COLUMN {
                return Err(Error::invalid("`label` is reserved for the label column"));
            }
            if names[..i].contains(name) {
                return Err(Error::invalid(format!("duplicate feature name `{name}`")));
            }
        }
        Ok(Self { names, kinds })
    }

    /// Schema with generated names `c0.. , b0..`: continuous features first.
    pub fn generated(m_cont: usize, m_bin: usize) -> Result<Self> {
        let names = (0..m_cont)
            .map(|i| format!("c{i}"))
            .chain((0..m_bin).map(|i| format!("b{i}")))
            .collect();
        let kinds = std::iter::repeat_n(FeatureKind::Continuous, m_cont)
            .chain(std::iter::repeat_n(FeatureKind::Binary, m_bin))
            .collect();
        Self::new(names, kinds)
    }

    /// Builds a schema from column names, marking the listed ones binary.
    pub fn with_binary(names: Vec<String>, binary: &[String]) -> Result<Self> {
        for b in binary {
            if !names.contains(b) {
                return Err(Error::invalid(format!("binary feature `{b}` not in header")));
            }
        }
        let kinds = names
            .iter()
            .map(|n| {
                if binary.contains(n) {
                    FeatureKind::Binary
                } else {
                    FeatureKind::Continuous
                }
            })
            .collect();
        Self::new(names, kinds)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kinds(&self) -> &[FeatureKind] {
        &self.kinds
    }

    pub fn kind(&self, feature: usize) -> FeatureKind {
        self.kinds[feature]
    }

    pub fn name(&self, feature: usize) -> &str {
        &self.names[feature]
    }

    pub fn continuous(&self) -> Vec<usize> {
        self.indices_of(FeatureKind::Continuous)
    }

    pub fn binary(&self) -> Vec<usize> {
        self.indices_of(FeatureKind::Binary)
    }

    fn indices_of(&self, kind: FeatureKind) -> Vec<usize> {
        self.kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == kind)
            .map(|(i, _)| i)
            .collect()
    }

    pub(crate) fn check_row(&self, row_index: usize, row: &[f64]) -> Result<()> {
        if row.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: row.len(),
            });
        }
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: row_index,
                    message: format!("non-finite value in `{}`", self.names[j]),
                });
            }
            if self.kinds[j] == FeatureKind::Binary && v != 0.0 && v != 1.0 {
                return Err(Error::SchemaViolation {
                    row: row_index,
                    feature: self.names[j].clone(),
                    value: v,
                });
            }
        }
        Ok(())
    }
}

/// Per-feature affine map recorded by [`standardize`]. Binary features
/// carry `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub columns: Vec<Option<ColumnScale>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub shift: f64,
    pub scale: f64,
}

impl Scaler {
    pub fn inverse_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.columns)
            .map(|(&v, c)| match c {
                Some(cs) => v * cs.scale + cs.shift,
                None => v,
            })
            .collect()
    }

    pub fn forward_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.columns)
            .map(|(&v, c)| match c {
                Some(cs) => (v - cs.shift) / cs.scale,
                None => v,
            })
            .collect()
    }
}

/// Row-major feature matrix with labels. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    labels: Vec<Label>,
    schema: FeatureSchema,
    scaler: Option<Scaler>,
    warnings: Vec<String>,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<Label>, schema: FeatureSchema) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let mut values = Vec::with_capacity(rows.len() * schema.len());
        for (i, row) in rows.iter().enumerate() {
            schema.check_row(i, row)?;
            values.extend_from_slice(row);
        }
        Ok(Self {
            values,
            labels,
            schema,
            scaler: None,
            warnings: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn m(&self) -> usize {
        self.schema.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.m();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.m())
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn scaler(&self) -> Option<&Scaler> {
        self.scaler.as_ref()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Sorted distinct labels.
    pub fn label_set(&self) -> Vec<Label> {
        let mut l = self.labels.clone();
        l.sort_unstable();
        l.dedup();
        l
    }

    pub fn column(&self, feature: usize) -> Vec<f64> {
        self.rows().map(|r| r[feature]).collect()
    }

    /// Copy with labels replaced, e.g. by black-box predictions.
    pub fn with_labels(&self, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: labels.len(),
            });
        }
        Ok(Self { labels, ..self.clone() })
    }

    /// Writes the dataset as CSV: feature columns in schema order, then `label`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&self.schema.names().join(","));
        out.push(',');
        out.push_str(LABEL_COLUMN);
        out.push('\n');
        for (row, label) in self.rows().zip(&self.labels) {
            for v in row {
                out.push_str(&v.to_string());
                out.push(',');
            }
            out.push_str(&label.to_string());
            out.push('\n');
        }
        crate::io::write_atomic(path, out.as_bytes())
    }
}

/// Reads a headered CSV whose feature columns match `schema` by name and order,
/// plus an integer `label` column at any position.
pub fn load_dataset(path: &Path, schema: &FeatureSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => {
            return Err(Error::Parse {
                row: 0,
                message: e.to_string(),
            })
        }
    };
    if header.is_empty() {
        return Err(Error::NoDataRows);
    }
    let label_pos = header
        .iter()
        .position(|h| h == LABEL_COLUMN)
        .ok_or_else(|| Error::Parse {
            row: 0,
            message: "missing `label` column".into(),
        })?;
    let feature_cols: Vec<&str> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_pos)
        .map(|(_, h)| h)
        .collect();
    if feature_cols.len() != schema.len() {
        return Err(Error::DimensionMismatch {
            expected: schema.len(),
            got: feature_cols.len(),
        });
    }
    for (got, want) in feature_cols.iter().zip(schema.names()) {
        if got != want {
            return Err(Error::Parse {
                row: 0,
                message: format!("header column `{got}` does not match schema feature `{want}`"),
            });
        }
    }

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row: i,
            message: e.to_string(),
        })?;
        if record.len() != header.len() {
            return Err(Error::Parse {
                row: i,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let mut row = Vec::with_capacity(schema.len());
        let mut label = None;
        for (c, field) in record.iter().enumerate() {
            if field.is_empty() {
                return Err(Error::Parse {
                    row: i,
                    message: format!("missing value in column `{}`", &header[c]),
                });
            }
            if c == label_pos {
                label = Some(field.parse::<Label>().map_err(|e| Error::Parse {
                    row: i,
                    message: format!("label `{field}`: {e}"),
                })?);
            } else {
                row.push(field.parse::<f64>().map_err(|e| Error::Parse {
                    row: i,
                    message: format!("column `{}` value `{field}`: {e}", &header[c]),
                })?);
            }
        }
        schema.check_row(i, &row)?;
        rows.push(row);
        labels.push(label.expect("label column present"));
    }
    if rows.is_empty() {
        return Err(Error::NoDataRows);
    }
    Dataset::new(rows, labels, schema.clone())
}

/// Shifts and scales each continuous column to zero mean and unit
/// (population) standard deviation. Zero-variance columns keep scale 1 and
/// add a warning.
pub fn standardize(d: &Dataset) -> Result<Dataset> {
    if d.n() < 2 {
        return Err(Error::invalid("standardize needs at least 2 rows"));
    }
    let n = d.n() as f64;
    let mut warnings = d.warnings.clone();
    let columns: Vec<Option<ColumnScale>> = (0..d.m())
        .map(|j| {
            if d.schema.kind(j) == FeatureKind::Binary {
                return None;
            }
            let mean = d.rows().map(|r| r[j]).sum::<f64>() / n;
            let var = d.rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            let scale = if sd > 0.0 {
                sd
            } else {
                warnings.push(format!(
                    "continuous feature `{}` has zero variance; scale set to 1",
                    d.schema.name(j)
                ));
                1.0
            };
            Some(ColumnScale { shift: mean, scale })
        })
        .collect();
    let scaler = Scaler { columns };
    let values = d.rows().flat_map(|r| scaler.forward_row(r)).collect::<Vec<_>>();
    Ok(Dataset {
        values,
        labels: d.labels.clone(),
        schema: d.schema.clone(),
        scaler: Some(scaler),
        warnings,
    })
}

/// Tertile cut points of a standard normal; relevant continuous features
/// fall into three regions.
const NORMAL_TERTILES: [f64; 2] = [-0.430_727_299_295_457_6, 0.430_727_299_295_457_6];

/// Parameters of the planted-relevance generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub n: usize,
    pub m_cont: usize,
    pub m_bin: usize,
    pub classes: usize,
    /// Zero-based feature indices that determine the label.
    pub relevant: Vec<usize>,
}

/// Ground-truth labelling rule: a fixed partition of the relevant features'
/// regions into classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthRule {
    relevant: Vec<usize>,
    radix: Vec<usize>,
    kinds: Vec<FeatureKind>,
    cell_labels: Vec<Label>,
}

impl SynthRule {
    fn region(kind: FeatureKind, v: f64) -> usize {
        match kind {
            FeatureKind::Binary => (v != 0.0) as usize,
            FeatureKind::Continuous => NORMAL_TERTILES.iter().filter(|&&t| v > t).count(),
        }
    }

    pub fn label(&self, row: &[f64]) -> Label {
        let mut cell = 0;
        for ((&f, &r), &k) in self.relevant.iter().zip(&self.radix).zip(&self.kinds) {
            cell = cell * r + Self::region(k, row[f]);
        }
        self.cell_labels[cell]
    }

    pub fn relevant(&self) -> &[usize] {
        &self.relevant
    }
}

impl SynthSpec {
    pub fn schema(&self) -> Result<FeatureSchema> {
        FeatureSchema::generated(self.m_cont, self.m_bin)
    }

    pub fn rule(&self) -> Result<SynthRule> {
        let m = self.m_cont + self.m_bin;
        if self.relevant.is_empty() {
            return Err(Error::invalid("relevant feature set must not be empty"));
        }
        if self.classes < 2 {
            return Err(Error::invalid("need at least 2 classes"));
        }
        let mut relevant = self.relevant.clone();
        relevant.sort_unstable();
        relevant.dedup();
        if let Some(&bad) = relevant.iter().find(|&&f| f >= m) {
            return Err(Error::invalid(format!(
                "relevant feature {bad} out of range for {m} features"
            )));
        }
        let kinds: Vec<FeatureKind> = relevant
            .iter()
            .map(|&f| {
                if f < self.m_cont {
                    FeatureKind::Continuous
                } else {
                    FeatureKind::Binary
                }
            })
            .collect();
        let radix: Vec<usize> = kinds
            .iter()
            .map(|k| match k {
                FeatureKind::Continuous => 3,
                FeatureKind::Binary => 2,
            })
            .collect();
        let cells: usize = radix.iter().product();
        let mut order: Vec<usize> = (0..cells).collect();
        let mut rng = rng::rng_from(rng::derive_seed(self.seed, rng::stream::SYNTH, 1));
        order.shuffle(&mut rng);
        let mut cell_labels = vec![0; cells];
        for (pos, &cell) in order.iter().enumerate() {
            cell_labels[cell] = (pos % self.classes) as Label;
        }
        Ok(SynthRule {
            relevant,
            radix,
            kinds,
            cell_labels,
        })
    }

    /// Continuous features are standard normal, binary features fair coins.
    pub fn generate(&self) -> Result<Dataset> {
        let rule = self.rule()?;
        let schema = self.schema()?;
        let mut rng = rng::rng_from(rng::derive_seed(self.seed, rng::stream::SYNTH, 0));
        let mut rows = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            let mut row = Vec::with_capacity(schema.len());
            for _ in 0..self.m_cont {
                row.push(rng.sample::<f64, _>(StandardNormal));
            }
            for _ in 0..self.m_bin {
                row.push(if rng.random_bool(0.5) { 1.0 } else { 0.0 });
            }
            rows.push(row);
        }
        let labels = rows.iter().map(|r| rule.label(r)).collect();
        Dataset::new(rows, labels, schema)
    }
}

pub fn synth_multiclass(
    seed: u64,
    n: usize,
    m_cont: usize,
    m_bin: usize,
    classes: usize,
    relevant: &[usize],
) -> Result<Dataset> {
    SynthSpec {
        seed,
        n,
        m_cont,
        m_bin,
        classes,
        relevant: relevant.to_vec(),
    }
    .generate()
}
