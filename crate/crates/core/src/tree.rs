//! Greedy Gini decision trees (CART-style, axis-aligned, binary splits).
//!
//! A split sends `x[feature] <= threshold` to the left child. Trees are
//! stored in pre-order, so a node's id is its position in `nodes`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        label: Label,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

/// Borrowed row-major matrix.
#[derive(Debug, Clone, Copy)]
pub struct Rows<'a> {
    values: &'a [f64],
    m: usize,
}

impl<'a> Rows<'a> {
    pub fn new(values: &'a [f64], m: usize) -> Self {
        assert!(m > 0 && values.len().is_multiple_of(m), "ragged matrix");
        Self { values, m }
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize, feature: usize) -> f64 {
        self.values[i * self.m + feature]
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 12,
            min_leaf: 1,
        }
    }
}

impl DecisionTree {
    pub fn leaf(label: Label) -> Self {
        Self {
            nodes: vec![Node::Leaf { label }],
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict(&self, x: &[f64]) -> Label {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf { label } => return label,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn features_used(&self) -> BTreeSet<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect()
    }

    pub fn labels(&self) -> BTreeSet<Label> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { label } => Some(*label),
                Node::Split { .. } => None,
            })
            .collect()
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.features_used().into_iter().next_back()
    }

    /// Appends the node records (`node <id> split <f> <t>` / `node <id> leaf <l>`).
    pub fn write_records(&self, out: &mut String) {
        for (id, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Split { feature, threshold, .. } => writeln!(out, "node {id} split {feature} {threshold:?}"),
                Node::Leaf { label } => writeln!(out, "node {id} leaf {label}"),
            }
            .expect("writing to String");
        }
    }

    pub fn to_records(&self) -> String {
        let mut s = String::new();
        self.write_records(&mut s);
        s
    }

    /// Parses one pre-order tree from `lines`, starting at `*pos` and
    /// advancing it past the tree. `line_offset` is only used in errors.
    pub fn parse_records(lines: &[&str], pos: &mut usize, line_offset: usize) -> Result<Self> {
        let mut nodes = Vec::new();
        parse_subtree(lines, pos, line_offset, &mut nodes)?;
        Ok(Self { nodes })
    }

    pub fn from_records(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let mut pos = 0;
        let tree = Self::parse_records(&lines, &mut pos, 1)?;
        if pos != lines.len() {
            return Err(Error::ModelFormat {
                line: pos + 1,
                message: "trailing records after tree".into(),
            });
        }
        Ok(tree)
    }

    /// Nested if/else rules using the given feature names.
    pub fn to_rules(&self, names: &[String]) -> String {
        fn go(tree: &DecisionTree, names: &[String], id: usize, indent: usize, out: &mut String) {
            let pad = "  ".repeat(indent);
            match tree.nodes[id] {
                Node::Leaf { label } => {
                    let _ = writeln!(out, "{pad}predict {label}");
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let name = names.get(feature).cloned().unwrap_or_else(|| format!("x{feature}"));
                    let _ = writeln!(out, "{pad}if {name} <= {threshold:.4}:");
                    go(tree, names, left, indent + 1, out);
                    let _ = writeln!(out, "{pad}else:");
                    go(tree, names, right, indent + 1, out);
                }
            }
        }
        let mut out = String::new();
        go(self, names, 0, 0, &mut out);
        out
    }
}

fn parse_subtree(lines: &[&str], pos: &mut usize, line_offset: usize, nodes: &mut Vec<Node>) -> Result<usize> {
    let err = |at: usize, message: String| Error::ModelFormat {
        line: at + line_offset,
        message,
    };
    let at = *pos;
    let line = lines.get(at).ok_or_else(|| err(at, "unexpected end of tree".into()))?;
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() < 4 || toks[0] != "node" {
        return Err(err(at, format!("expected node record, got `{line}`")));
    }
    let id: usize = toks[1]
        .parse()
        .map_err(|_| err(at, format!("bad node id `{}`", toks[1])))?;
    if id != nodes.len() {
        return Err(err(
            at,
            format!("node id {id} out of pre-order (expected {})", nodes.len()),
        ));
    }
    *pos += 1;
    match (toks[2], toks.len()) {
        ("leaf", 4) => {
            let label = toks[3]
                .parse()
                .map_err(|_| err(at, format!("bad label `{}`", toks[3])))?;
            nodes.push(Node::Leaf { label });
        }
        ("split", 5) => {
            let feature = toks[3]
                .parse()
                .map_err(|_| err(at, format!("bad feature `{}`", toks[3])))?;
            let threshold: f64 = toks[4]
                .parse()
                .map_err(|_| err(at, format!("bad threshold `{}`", toks[4])))?;
            nodes.push(Node::Split {
                feature,
                threshold,
                left: 0,
                right: 0,
            });
            let left = parse_subtree(lines, pos, line_offset, nodes)?;
            let right = parse_subtree(lines, pos, line_offset, nodes)?;
            if let Node::Split { left: l, right: r, .. } = &mut nodes[id] {
                *l = left;
                *r = right;
            }
        }
        _ => return Err(err(at, format!("malformed node record `{line}`"))),
    }
    Ok(id)
}

/// Majority label, ties to the smaller label.
pub fn majority(labels: impl IntoIterator<Item = Label>) -> Option<Label> {
    let mut counts: Vec<(Label, usize)> = Vec::new();
    for l in labels {
        match counts.iter_mut().find(|(k, _)| *k == l) {
            Some((_, c)) => *c += 1,
            None => counts.push((l, 1)),
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(l, _)| l)
}

/// Grown tree that keeps the majority label of every internal node, so it
/// can be cut at any depth.
struct Grown {
    majority: Label,
    split: Option<(usize, f64, Box<Grown>, Box<Grown>)>,
}

struct Fitter<'a> {
    rows: Rows<'a>,
    codes: Vec<usize>,
    classes: Vec<Label>,
    features: Vec<usize>,
    params: TreeParams,
}

impl Fitter<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.classes.len()];
        for &i in idx {
            c[self.codes[i]] += 1;
        }
        c
    }

    fn majority_of(&self, counts: &[usize]) -> Label {
        // classes are sorted, so the first maximum is the smallest label
        let mut best = 0;
        for (k, &c) in counts.iter().enumerate() {
            if c > counts[best] {
                best = k;
            }
        }
        self.classes[best]
    }

    fn best_split(&self, idx: &[usize]) -> Option<(usize, f64)> {
        let n = idx.len();
        let min_leaf = self.params.min_leaf.max(1);
        if n < 2 * min_leaf {
            return None;
        }
        let total = self.counts(idx);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        let mut left = vec![0usize; self.classes.len()];
        for &f in &self.features {
            order.sort_by(|&a, &b| self.rows.get(a, f).total_cmp(&self.rows.get(b, f)));
            left.iter_mut().for_each(|c| *c = 0);
            let mut left_sq = 0.0f64;
            let mut right_sq: f64 = total.iter().map(|&c| (c * c) as f64).sum();
            let mut right = total.clone();
            for k in 0..n - 1 {
                let code = self.codes[order[k]];
                left_sq += (2 * left[code] + 1) as f64;
                left[code] += 1;
                right_sq -= (2 * right[code] - 1) as f64;
                right[code] -= 1;
                let nl = k + 1;
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let a = self.rows.get(order[k], f);
                let b = self.rows.get(order[k + 1], f);
                if a == b {
                    continue;
                }
                let impurity = (nl as f64 - left_sq / nl as f64) + (nr as f64 - right_sq / nr as f64);
                let better = match best {
                    None => true,
                    Some((s, _, _)) => impurity < s - 1e-12,
                };
                if better {
                    let mut t = a + (b - a) / 2.0;
                    if t >= b {
                        t = a;
                    }
                    best = Some((impurity, f, t));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn grow(&self, idx: Vec<usize>, depth: usize) -> Grown {
        let counts = self.counts(&idx);
        let majority = self.majority_of(&counts);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.params.max_depth {
            return Grown { majority, split: None };
        }
        let Some((f, t)) = self.best_split(&idx) else {
            return Grown { majority, split: None };
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| self.rows.get(i, f) <= t);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        Grown {
            majority,
            split: Some((f, t, Box::new(left), Box::new(right))),
        }
    }
}

fn flatten(g: &Grown, cut: usize, depth: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    match &g.split {
        Some((f, t, l, r)) if depth < cut => {
            nodes.push(Node::Split {
                feature: *f,
                threshold: *t,
                left: 0,
                right: 0,
            });
            let left = flatten(l, cut, depth + 1, nodes);
            let right = flatten(r, cut, depth + 1, nodes);
            nodes[id] = Node::Split {
                feature: *f,
                threshold: *t,
                left,
                right,
            };
        }
        _ => nodes.push(Node::Leaf { label: g.majority }),
    }
    id
}

fn grow_full(rows: Rows<'_>, labels: &[Label], features: &[usize], params: TreeParams) -> Result<Grown> {
    if rows.is_empty() {
        return Err(Error::invalid("cannot fit a tree on zero points"));
    }
    if rows.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            got: labels.len(),
        });
    }
    if features.is_empty() {
        return Err(Error::invalid("tree needs at least one feature"));
    }
    if let Some(&f) = features.iter().find(|&&f| f >= rows.dim()) {
        return Err(Error::invalid(format!("feature {f} out of range")));
    }
    let mut classes: Vec<Label> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let codes = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label in class list"))
        .collect();
    let mut feats = features.to_vec();
    feats.sort_unstable();
    feats.dedup();
    let fitter = Fitter {
        rows,
        codes,
        classes,
        features: feats,
        params,
    };
    Ok(fitter.grow((0..rows.len()).collect(), 0))
}

/// Fits a greedy Gini tree restricted to `features`. Impure nodes are split
/// whenever a valid split exists, even at zero impurity decrease, so XOR-type
/// targets are still resolved. Split ties go to the lower feature index,
/// then the lower threshold; leaf ties to the smaller label.
pub fn tree_fit(rows: Rows<'_>, labels: &[Label], features: &[usize], params: TreeParams) -> Result<DecisionTree> {
    let grown = grow_full(rows, labels, features, params)?;
    let mut nodes = Vec::new();
    flatten(&grown, usize::MAX, 0, &mut nodes);
    Ok(DecisionTree { nodes })
}

/// Trees for every depth cap `0..=params.max_depth` from a single growth.
/// Entry `d` equals `tree_fit` with `max_depth = d`.
pub fn tree_fit_depth_path(
    rows: Rows<'_>,
    labels: &[Label],
    features: &[usize],
    params: TreeParams,
) -> Result<Vec<DecisionTree>> {
    let grown = grow_full(rows, labels, features, params)?;
    let mut out = Vec::new();
    for cut in 0..=params.max_depth {
        let mut nodes = Vec::new();
        flatten(&grown, cut, 0, &mut nodes);
        let tree = DecisionTree { nodes };
        let done = out
            .last()
            .is_some_and(|t: &DecisionTree| t.nodes.len() == tree.nodes.len());
        out.push(tree);
        if done {
            // deeper cuts are identical
            let last = out.last().cloned().expect("non-empty");
            out.resize(params.max_depth + 1, last);
            break;
        }
    }
    Ok(out)
}

pub fn agreement(tree: &DecisionTree, rows: Rows<'_>, labels: &[Label]) -> f64 {
    let hits = (0..rows.len())
        .filter(|&i| tree.predict(rows.row(i)) == labels[i])
        .count();
    hits as f64 / rows.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pure_input_is_single_leaf() {
        let v = [0.0, 1.0, 2.0, 3.0];
        let t = tree_fit(Rows::new(&v, 1), &[5, 5, 5, 5], &[0], TreeParams::default()).unwrap();
        assert_eq!(t.leaf_count(), 1);
        assert_eq!(t.predict(&[10.0]), 5);
    }

    #[test]
    fn xor_needs_four_leaves() {
        // truth table of x0 XOR x1, each cell twice
        let pts = [0., 0., 0., 1., 1., 0., 1., 1., 0., 0., 0., 1., 1., 0., 1., 1.];
        let y = [0, 1, 1, 0, 0, 1, 1, 0];
        let rows = Rows::new(&pts, 2);
        let t = tree_fit(
            rows,
            &y,
            &[0, 1],
            TreeParams {
                max_depth: 2,
                min_leaf: 1,
            },
        )
        .unwrap();
        assert_eq!(t.leaf_count(), 4);
        assert_eq!(agreement(&t, rows, &y), 1.0);
        for (x, l) in [([0., 0.], 0), ([0., 1.], 1), ([1., 0.], 1), ([1., 1.], 0)] {
            assert_eq!(t.predict(&x), l);
        }
    }

    #[test]
    fn min_leaf_equal_to_n_gives_majority_leaf() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        let t = tree_fit(
            Rows::new(&v, 1),
            &[1, 2, 2, 1, 2],
            &[0],
            TreeParams {
                max_depth: 10,
                min_leaf: 5,
            },
        )
        .unwrap();
        assert_eq!(t.nodes(), &[Node::Leaf { label: 2 }]);
    }

    #[test]
    fn majority_ties_go_to_smaller_label() {
        assert_eq!(majority([3, 1, 3, 1]), Some(1));
        assert_eq!(majority([2, 2, 3]), Some(2));
        assert_eq!(majority(std::iter::empty()), None);
        let v = [0.0, 0.0];
        let t = tree_fit(Rows::new(&v, 1), &[4, 2], &[0], TreeParams::default()).unwrap();
        assert_eq!(t.predict(&[0.0]), 2);
    }

    #[test]
    fn split_ties_prefer_lower_feature() {
        // features 0 and 2 are identical copies of the label; 1 is noise
        let pts = [0., 5., 0., 0., 3., 0., 1., 5., 1., 1., 3., 1.];
        let y = [0, 0, 1, 1];
        let t = tree_fit(Rows::new(&pts, 3), &y, &[2, 0, 1], TreeParams::default()).unwrap();
        assert_eq!(t.features_used().into_iter().collect::<Vec<_>>(), vec![0]);
        let t = tree_fit(Rows::new(&pts, 3), &y, &[2, 1], TreeParams::default()).unwrap();
        assert_eq!(t.features_used().into_iter().collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn records_round_trip() {
        let pts = [0., 0., 0., 1., 1., 0., 1., 1.];
        let y = [0, 1, 1, 0];
        let t = tree_fit(Rows::new(&pts, 2), &y, &[0, 1], TreeParams::default()).unwrap();
        let text = t.to_records();
        assert!(text.starts_with("node 0 split 0 0.5\n"));
        assert_eq!(DecisionTree::from_records(&text).unwrap(), t);
        assert!(DecisionTree::from_records("node 0 split 0 0.5\nnode 1 leaf 1\n").is_err());
        assert!(DecisionTree::from_records("node 1 leaf 1\n").is_err());
    }

    #[test]
    fn depth_path_matches_individual_fits() {
        let spec = crate::data::SynthSpec {
            seed: 3,
            n: 120,
            m_cont: 3,
            m_bin: 2,
            classes: 3,
            relevant: vec![0, 1, 3],
        };
        let d = spec.generate().unwrap();
        let values: Vec<f64> = d.rows().flatten().copied().collect();
        let rows = Rows::new(&values, d.m());
        let feats = [0, 1, 2, 3, 4];
        let params = TreeParams {
            max_depth: 6,
            min_leaf: 2,
        };
        let path = tree_fit_depth_path(rows, d.labels(), &feats, params).unwrap();
        assert_eq!(path.len(), 7);
        for (depth, t) in path.iter().enumerate() {
            let direct = tree_fit(
                rows,
                d.labels(),
                &feats,
                TreeParams {
                    max_depth: depth,
                    min_leaf: 2,
                },
            )
            .unwrap();
            assert_eq!(&direct, t, "depth {depth}");
        }
    }

    proptest! {
        #[test]
        fn unrestricted_tree_fits_consistent_data(
            pts in proptest::collection::vec((0u8..4, 0u8..3, 0u8..2), 1..60),
            table in proptest::collection::vec(0u32..3, 24),
        ) {
            // label is a function of the point, so no conflicting duplicates
            let mut values = Vec::new();
            let mut y = Vec::new();
            for &(a, b, c) in &pts {
                values.extend_from_slice(&[a as f64, b as f64, c as f64]);
                y.push(table[(a as usize) * 6 + (b as usize) * 2 + c as usize]);
            }
            let rows = Rows::new(&values, 3);
            let t = tree_fit(rows, &y, &[0, 1, 2], TreeParams { max_depth: 64, min_leaf: 1 }).unwrap();
            prop_assert_eq!(agreement(&t, rows, &y), 1.0);
            let distinct: BTreeSet<Label> = y.iter().copied().collect();
            prop_assert!(t.leaf_count() >= distinct.len());
            let back = DecisionTree::from_records(&t.to_records()).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
