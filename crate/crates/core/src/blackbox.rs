//! The black-box classifier every explainer is measured against.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::data::{Dataset, FeatureKind, FeatureSchema, Label};
use crate::error::{Error, Result};
use crate::rng;
use crate::sampler::mixed_distance;
use crate::tree::{tree_fit, DecisionTree, Rows, TreeParams};

pub const DEFAULT_TREES: usize = 50;

/// Hyperparameters of every tree in the forest.
pub const FOREST_TREE_PARAMS: TreeParams = TreeParams {
    max_depth: 12,
    min_leaf: 2,
};

const MODEL_MAGIC: &str = "aggrex-model";
const MODEL_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq)]
pub enum BlackBoxModel {
    BaggedForest {
        dim: usize,
        trees: Vec<DecisionTree>,
        label_set: Vec<Label>,
    },
    TableOracle {
        kinds: Vec<FeatureKind>,
        points: Vec<Vec<f64>>,
        labels: Vec<Label>,
        label_set: Vec<Label>,
    },
}

/// Majority vote with ties to the smaller label.
pub fn vote(ballots: impl IntoIterator<Item = Label>) -> Option<Label> {
    crate::tree::majority(ballots)
}

/// Fits `n_trees` Gini trees, each on a seeded bootstrap resample of size n.
pub fn train_bagged_forest(d: &Dataset, n_trees: usize, seed: u64) -> Result<BlackBoxModel> {
    if d.n() == 0 {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    if n_trees == 0 {
        return Err(Error::invalid("n_trees must be at least 1"));
    }
    let m = d.m();
    let values: Vec<f64> = d.rows().flatten().copied().collect();
    let features: Vec<usize> = (0..m).collect();
    let mut trees = Vec::with_capacity(n_trees);
    for t in 0..n_trees {
        let mut rng = rng::rng_from(rng::derive_seed(seed, rng::stream::FOREST, t as u64));
        let picks: Vec<usize> = (0..d.n()).map(|_| rng.random_range(0..d.n())).collect();
        let mut boot = Vec::with_capacity(d.n() * m);
        let mut labels = Vec::with_capacity(d.n());
        for &i in &picks {
            boot.extend_from_slice(&values[i * m..(i + 1) * m]);
            labels.push(d.labels()[i]);
        }
        trees.push(tree_fit(Rows::new(&boot, m), &labels, &features, FOREST_TREE_PARAMS)?);
    }
    let label_set = collect_labels(trees.iter().flat_map(|t| t.labels()));
    Ok(BlackBoxModel::BaggedForest {
        dim: m,
        trees,
        label_set,
    })
}

fn collect_labels(it: impl IntoIterator<Item = Label>) -> Vec<Label> {
    it.into_iter().collect::<BTreeSet<_>>().into_iter().collect()
}

/// Exact-lookup oracle; unseen queries go to the nearest stored point under
/// the mixed metric, ties to the lower index.
pub fn table_oracle(pairs: Vec<(Vec<f64>, Label)>, schema: &FeatureSchema) -> Result<BlackBoxModel> {
    if pairs.is_empty() {
        return Err(Error::invalid("table oracle needs at least one point"));
    }
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(pairs.len());
    let mut labels = Vec::with_capacity(pairs.len());
    for (i, (p, l)) in pairs.into_iter().enumerate() {
        schema.check_row(i, &p)?;
        if let Some(j) = points.iter().position(|q| q == &p) {
            if labels[j] != l {
                return Err(Error::ConflictingDuplicate(i));
            }
            continue;
        }
        points.push(p);
        labels.push(l);
    }
    let label_set = collect_labels(labels.iter().copied());
    Ok(BlackBoxModel::TableOracle {
        kinds: schema.kinds().to_vec(),
        points,
        labels,
        label_set,
    })
}

impl BlackBoxModel {
    pub fn dim(&self) -> usize {
        match self {
            BlackBoxModel::BaggedForest { dim, .. } => *dim,
            BlackBoxModel::TableOracle { kinds, .. } => kinds.len(),
        }
    }

    pub fn label_set(&self) -> &[Label] {
        match self {
            BlackBoxModel::BaggedForest { label_set, .. } | BlackBoxModel::TableOracle { label_set, .. } => label_set,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            BlackBoxModel::BaggedForest { .. } => "bagged_forest",
            BlackBoxModel::TableOracle { .. } => "table_oracle",
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> Label {
        match self {
            BlackBoxModel::BaggedForest { trees, .. } => {
                vote(trees.iter().map(|t| t.predict(x))).expect("forest has trees")
            }
            BlackBoxModel::TableOracle {
                kinds, points, labels, ..
            } => {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (i, p) in points.iter().enumerate() {
                    let d = mixed_distance(kinds, p, x);
                    if d < best_d {
                        best_d = d;
                        best = i;
                        if d == 0.0 {
                            break;
                        }
                    }
                }
                labels[best]
            }
        }
    }

    pub fn predict_rows(&self, rows: Rows<'_>) -> Result<Vec<Label>> {
        if rows.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: rows.dim(),
            });
        }
        Ok((0..rows.len()).map(|i| self.predict_unchecked(rows.row(i))).collect())
    }

    /// Serializes to the line-oriented model format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        match self {
            BlackBoxModel::BaggedForest { dim, trees, label_set } => {
                let _ = writeln!(s, "{MODEL_MAGIC} {MODEL_VERSION} bagged_forest {}", trees.len());
                let _ = writeln!(s, "dim {dim}");
                let _ = writeln!(s, "labels {}", join(label_set));
                for t in trees {
                    t.write_records(&mut s);
                }
            }
            BlackBoxModel::TableOracle {
                kinds,
                points,
                labels,
                label_set,
            } => {
                let _ = writeln!(s, "{MODEL_MAGIC} {MODEL_VERSION} table_oracle 0");
                let _ = writeln!(s, "dim {}", kinds.len());
                let kinds: Vec<&str> = kinds
                    .iter()
                    .map(|k| match k {
                        FeatureKind::Continuous => "c",
                        FeatureKind::Binary => "b",
                    })
                    .collect();
                let _ = writeln!(s, "kinds {}", kinds.join(" "));
                let _ = writeln!(s, "labels {}", join(label_set));
                for (p, l) in points.iter().zip(labels) {
                    let coords: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
                    let _ = writeln!(s, "entry {l} {}", coords.join(" "));
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let bad = |line: usize, message: String| Error::ModelFormat { line, message };
        let header: Vec<&str> = lines
            .first()
            .ok_or_else(|| bad(1, "empty model file".into()))?
            .split_whitespace()
            .collect();
        if header.len() != 4 || header[0] != MODEL_MAGIC {
            return Err(bad(1, "missing `aggrex-model` header".into()));
        }
        if header[1] != MODEL_VERSION {
            return Err(bad(1, format!("unsupported version `{}`", header[1])));
        }
        let count: usize = header[3]
            .parse()
            .map_err(|_| bad(1, format!("bad count `{}`", header[3])))?;
        let keyed = |idx: usize, key: &str| -> Result<Vec<&str>> {
            let toks: Vec<&str> = lines
                .get(idx)
                .ok_or_else(|| bad(idx + 1, format!("missing `{key}` line")))?
                .split_whitespace()
                .collect();
            if toks.first() != Some(&key) {
                return Err(bad(idx + 1, format!("expected `{key}` line")));
            }
            Ok(toks[1..].to_vec())
        };
        let dim: usize = keyed(1, "dim")?
            .first()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(2, "bad dim".into()))?;
        let parse_labels = |toks: Vec<&str>, line: usize| -> Result<Vec<Label>> {
            toks.iter()
                .map(|t| t.parse().map_err(|_| bad(line, format!("bad label `{t}`"))))
                .collect()
        };
        match header[2] {
            "bagged_forest" => {
                let label_set = parse_labels(keyed(2, "labels")?, 3)?;
                let mut pos = 3;
                let mut trees = Vec::with_capacity(count);
                for _ in 0..count {
                    let tree = DecisionTree::parse_records(&lines, &mut pos, 1)?;
                    if tree.max_feature().is_some_and(|f| f >= dim) {
                        return Err(bad(pos, "split feature exceeds dim".into()));
                    }
                    trees.push(tree);
                }
                if pos != lines.len() {
                    return Err(bad(pos + 1, "trailing records".into()));
                }
                if trees.is_empty() {
                    return Err(bad(1, "forest without trees".into()));
                }
                Ok(BlackBoxModel::BaggedForest { dim, trees, label_set })
            }
            "table_oracle" => {
                let kinds = keyed(2, "kinds")?
                    .iter()
                    .map(|k| match *k {
                        "c" => Ok(FeatureKind::Continuous),
                        "b" => Ok(FeatureKind::Binary),
                        other => Err(bad(3, format!("bad kind `{other}`"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                if kinds.len() != dim {
                    return Err(bad(3, "kinds length differs from dim".into()));
                }
                let label_set = parse_labels(keyed(3, "labels")?, 4)?;
                let mut points = Vec::new();
                let mut labels = Vec::new();
                for (idx, line) in lines.iter().enumerate().skip(4) {
                    let toks: Vec<&str> = line.split_whitespace().collect();
                    if toks.len() != dim + 2 || toks[0] != "entry" {
                        return Err(bad(idx + 1, "malformed entry".into()));
                    }
                    labels.push(toks[1].parse().map_err(|_| bad(idx + 1, "bad label".into()))?);
                    points.push(
                        toks[2..]
                            .iter()
                            .map(|t| t.parse::<f64>().map_err(|_| bad(idx + 1, format!("bad value `{t}`"))))
                            .collect::<Result<Vec<_>>>()?,
                    );
                }
                if points.is_empty() {
                    return Err(bad(1, "oracle without entries".into()));
                }
                Ok(BlackBoxModel::TableOracle {
                    kinds,
                    points,
                    labels,
                    label_set,
                })
            }
            other => Err(bad(1, format!("unknown model kind `{other}`"))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&crate::io::read_to_string(path)?)
    }
}

fn join(labels: &[Label]) -> String {
    labels.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" ")
}
