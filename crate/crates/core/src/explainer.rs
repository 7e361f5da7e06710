//! Local surrogate explainers: one decision tree per center, trained on
//! black-box labels of samples drawn from the ball around the center.

use serde::{Deserialize, Serialize};

use crate::blackbox::BlackBoxModel;
use crate::data::{FeatureSchema, Label};
use crate::error::{Error, Result};
use crate::fffs::{fffs_trace, FffsConfig, SelectionRound};
use crate::sampler::{sample_ball, DEFAULT_SAMPLES};
pub use crate::tree::{tree_fit, tree_fit_depth_path, DecisionTree, Rows, TreeParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainerParams {
    pub samples: usize,
    pub fffs: FffsConfig,
    pub tree: TreeParams,
}

impl Default for ExplainerParams {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            fffs: FffsConfig::default(),
            tree: TreeParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalExplainer {
    pub center_index: usize,
    pub center: Vec<f64>,
    pub radius: f64,
    /// Features the tree may use: the filter's output when `filtered`, all
    /// features otherwise.
    pub selected_features: Vec<usize>,
    pub tree: DecisionTree,
    pub filtered: bool,
    pub train_fidelity: f64,
    pub seed: u64,
}

impl LocalExplainer {
    pub fn predict(&self, x: &[f64]) -> Label {
        self.tree.predict(x)
    }

    pub fn leaf_count(&self) -> usize {
        self.tree.leaf_count()
    }
}

/// Result of one training run, including the sampled training set so that
/// callers can refit trees on it (e.g. complexity sweeps).
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub explainer: LocalExplainer,
    pub points: Vec<f64>,
    pub labels: Vec<Label>,
    pub trace: Vec<SelectionRound>,
}

/// Samples the ball, labels the samples with `f`, optionally filters
/// features, and fits a tree to the labels. An empty filtered set yields a
/// single majority leaf.
#[allow(clippy::too_many_arguments)]
pub fn train_local_explainer(
    f: &BlackBoxModel,
    schema: &FeatureSchema,
    center_index: usize,
    center: &[f64],
    radius: f64,
    filtered: bool,
    params: &ExplainerParams,
    seed: u64,
) -> Result<LocalExplainer> {
    Ok(train_local_explainer_run(f, schema, center_index, center, radius, filtered, params, seed)?.explainer)
}

#[allow(clippy::too_many_arguments)]
pub fn train_local_explainer_run(
    f: &BlackBoxModel,
    schema: &FeatureSchema,
    center_index: usize,
    center: &[f64],
    radius: f64,
    filtered: bool,
    params: &ExplainerParams,
    seed: u64,
) -> Result<TrainingRun> {
    if params.samples < 2 {
        return Err(Error::invalid("an explainer needs at least 2 samples"));
    }
    if f.dim() != schema.len() {
        return Err(Error::DimensionMismatch {
            expected: schema.len(),
            got: f.dim(),
        });
    }
    let samples = sample_ball(center, radius, params.samples, schema, seed)?;
    let labels = f.predict_rows(samples.rows())?;
    let (selected, trace) = if filtered {
        let state = fffs_trace(&samples, &labels, schema, &params.fffs)?;
        (state.selected, state.trace)
    } else {
        ((0..schema.len()).collect(), Vec::new())
    };
    let tree = if selected.is_empty() {
        DecisionTree::leaf(crate::tree::majority(labels.iter().copied()).expect("samples non-empty"))
    } else {
        tree_fit(samples.rows(), &labels, &selected, params.tree)?
    };
    let train_fidelity = crate::tree::agreement(&tree, samples.rows(), &labels);
    let explainer = LocalExplainer {
        center_index,
        center: center.to_vec(),
        radius,
        selected_features: selected,
        tree,
        filtered,
        train_fidelity,
        seed,
    };
    Ok(TrainingRun {
        explainer,
        points: samples.points,
        labels,
        trace,
    })
}

/// Fraction of `points` on which the explainer and the black box agree.
pub fn local_fidelity(g: &LocalExplainer, f: &BlackBoxModel, points: Rows<'_>) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::invalid("fidelity needs at least one point"));
    }
    let truth = f.predict_rows(points)?;
    let hits = (0..points.len())
        .filter(|&i| g.predict(points.row(i)) == truth[i])
        .count();
    Ok(hits as f64 / points.len() as f64)
}

/// Human-readable rule dump for a set of explainers.
pub fn explainers_to_rules(explainers: &[LocalExplainer], schema: &FeatureSchema) -> String {
    let mut out = String::new();
    for e in explainers {
        let names: Vec<&str> = e.selected_features.iter().map(|&f| schema.name(f)).collect();
        out.push_str(&format!(
            "# explainer center={} radius={} filtered={} leaves={} train_fidelity={:.4}\n# features: {}\n",
            e.center_index,
            e.radius,
            e.filtered,
            e.leaf_count(),
            e.train_fidelity,
            names.join(", ")
        ));
        out.push_str(&e.tree.to_rules(schema.names()));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blackbox::table_oracle;
    use crate::data::FeatureSchema;

    fn cube_oracle(schema: &FeatureSchema, label: impl Fn(&[f64]) -> Label) -> BlackBoxModel {
        let m = schema.len();
        let pairs = (0..1u32 << m)
            .map(|mask| {
                let p: Vec<f64> = (0..m).map(|k| ((mask >> k) & 1) as f64).collect();
                let l = label(&p);
                (p, l)
            })
            .collect();
        table_oracle(pairs, schema).unwrap()
    }

    fn params(samples: usize) -> ExplainerParams {
        ExplainerParams {
            samples,
            ..ExplainerParams::default()
        }
    }

    #[test]
    fn constant_black_box_gives_single_leaf() {
        let s = FeatureSchema::generated(0, 3).unwrap();
        let f = cube_oracle(&s, |_| 4);
        for filtered in [true, false] {
            let g = train_local_explainer(&f, &s, 0, &[0.0, 1.0, 0.0], 2.0, filtered, &params(300), 1).unwrap();
            assert_eq!(g.leaf_count(), 1);
            assert_eq!(g.train_fidelity, 1.0);
        }
    }

    #[test]
    fn indicator_of_binary_feature() {
        let s = FeatureSchema::generated(0, 6).unwrap();
        let f = cube_oracle(&s, |p| p[2] as Label);
        let g = train_local_explainer(&f, &s, 0, &[0.0; 6], 3.0, true, &params(2000), 7).unwrap();
        assert!(g.selected_features.contains(&2));
        assert_eq!(g.leaf_count(), 2);
        assert_eq!(g.tree.features_used().into_iter().collect::<Vec<_>>(), vec![2]);
        assert_eq!(g.train_fidelity, 1.0);
    }

    #[test]
    fn filtered_tree_only_uses_selected_features() {
        let d = crate::data::synth_multiclass(3, 200, 4, 4, 3, &[0, 5]).unwrap();
        let f = crate::blackbox::train_bagged_forest(&d, 5, 1).unwrap();
        let g = train_local_explainer(&f, d.schema(), 2, d.row(2), 1.5, true, &params(1500), 3).unwrap();
        assert!(g.tree.features_used().iter().all(|x| g.selected_features.contains(x)));
        assert!((0.0..=1.0).contains(&g.train_fidelity));
        let again = train_local_explainer(&f, d.schema(), 2, d.row(2), 1.5, true, &params(1500), 3).unwrap();
        assert_eq!(g, again);
    }

    #[test]
    fn local_fidelity_counts_agreement() {
        let s = FeatureSchema::generated(0, 2).unwrap();
        let f = cube_oracle(&s, |p| p[0] as Label);
        let g = LocalExplainer {
            center_index: 0,
            center: vec![0.0, 0.0],
            radius: 1.0,
            selected_features: vec![],
            tree: DecisionTree::leaf(0),
            filtered: true,
            train_fidelity: 1.0,
            seed: 0,
        };
        let pts = [0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0];
        assert_eq!(local_fidelity(&g, &f, Rows::new(&pts, 2)).unwrap(), 0.75);
        let agree = [0.0, 0.0, 0.0, 1.0];
        assert_eq!(local_fidelity(&g, &f, Rows::new(&agree, 2)).unwrap(), 1.0);
        assert!(local_fidelity(&g, &f, Rows::new(&[], 2)).is_err());
    }

    #[test]
    fn local_fidelity_matches_recount() {
        use rand::Rng;
        let s = FeatureSchema::generated(0, 4).unwrap();
        let mut rng = crate::rng::rng_from(99);
        let table: Vec<Label> = (0..16).map(|_| rng.random_range(0..3)).collect();
        let f = cube_oracle(&s, |p| {
            table[p.iter().enumerate().map(|(k, v)| (*v as usize) << k).sum::<usize>()]
        });
        let g = train_local_explainer(
            &f,
            &s,
            0,
            &[0.0; 4],
            2.0,
            false,
            &ExplainerParams {
                samples: 200,
                tree: TreeParams {
                    max_depth: 2,
                    min_leaf: 1,
                },
                ..ExplainerParams::default()
            },
            4,
        )
        .unwrap();
        let pts: Vec<f64> = (0..64).map(|_| rng.random_range(0..2) as f64).collect();
        let rows = Rows::new(&pts, 4);
        let mut hits = 0;
        for i in 0..16 {
            let p = rows.row(i);
            let idx: usize = p.iter().enumerate().map(|(k, v)| (*v as usize) << k).sum();
            if g.tree.predict(p) == table[idx] {
                hits += 1;
            }
        }
        assert_eq!(local_fidelity(&g, &f, rows).unwrap(), hits as f64 / 16.0);
    }

    #[test]
    fn rejects_too_few_samples() {
        let s = FeatureSchema::generated(0, 2).unwrap();
        let f = cube_oracle(&s, |_| 0);
        assert!(train_local_explainer(&f, &s, 0, &[0.0, 0.0], 1.0, true, &params(1), 0).is_err());
    }

    #[test]
    fn rules_mention_feature_names() {
        let s = FeatureSchema::generated(0, 3).unwrap();
        let f = cube_oracle(&s, |p| p[1] as Label);
        let g = train_local_explainer(&f, &s, 0, &[0.0; 3], 3.0, true, &params(400), 2).unwrap();
        let text = explainers_to_rules(&[g], &s);
        assert!(text.contains("if b1 <= 0.5000:"), "{text}");
    }
}
