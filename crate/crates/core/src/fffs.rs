//! Fast forward feature selection.
//!
//! Features are discretized into histogram bins, then chosen greedily by
//! plug-in conditional mutual information with the black-box label. The
//! conditioning on already-selected features is carried by a set of
//! partition leaves: every leaf holds the samples sharing one combination of
//! selected-feature bins, so each round costs `O(N)` per candidate feature.
//!
//! The bin-membership tensor (bin × feature × sample) is stored as a
//! feature-major array of bin indices: `M[b, f, x] = 1` iff
//! `assignment(x, f) == b`.

use serde::{Deserialize, Serialize};

use crate::data::{FeatureKind, FeatureSchema, Label};
use crate::error::{Error, Result};
use crate::sampler::SampleSet;

pub const DEFAULT_BINS: usize = 3;
pub const DEFAULT_EPS_MI: f64 = 1e-9;
pub const MIN_LEAF_SIZE: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FffsConfig {
    /// Bins for continuous features; binary features always get two.
    pub bins: usize,
    /// A candidate is selected only if its estimated MI exceeds this (nats).
    pub eps_mi: f64,
    pub max_features: Option<usize>,
}

impl Default for FffsConfig {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            eps_mi: DEFAULT_EPS_MI,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinAssignment {
    /// Per-feature bin boundaries. For `k` bins there are `k + 1` edges,
    /// except a zero-width continuous range, which stores its single value.
    pub edges: Vec<Vec<f64>>,
    pub bin_counts: Vec<usize>,
    pub max_bins: usize,
    n: usize,
    /// Feature-major: `assignment[f * n + x]`.
    assignment: Vec<u16>,
}

impl BinAssignment {
    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn n_features(&self) -> usize {
        self.bin_counts.len()
    }

    #[inline]
    pub fn bin(&self, sample: usize, feature: usize) -> usize {
        self.assignment[feature * self.n + sample] as usize
    }

    pub fn column(&self, feature: usize) -> &[u16] {
        &self.assignment[feature * self.n..(feature + 1) * self.n]
    }

    /// Dense view of the membership tensor entry `M[b, f, x]`.
    pub fn membership(&self, bin: usize, feature: usize, sample: usize) -> bool {
        self.bin(sample, feature) == bin
    }
}

/// Equal-width bins over each continuous feature's sample range
/// (zero-width range: one bin; the maximum lands in the top bin); binary
/// features get bins `{0}` and `{1}`.
pub fn build_histograms(samples: &SampleSet, schema: &FeatureSchema, bins: usize) -> Result<BinAssignment> {
    if bins < 2 {
        return Err(Error::invalid("need at least 2 bins"));
    }
    if bins > u16::MAX as usize {
        return Err(Error::invalid("too many bins"));
    }
    if samples.is_empty() {
        return Err(Error::invalid("no samples to bin"));
    }
    if samples.dim != schema.len() {
        return Err(Error::DimensionMismatch {
            expected: schema.len(),
            got: samples.dim,
        });
    }
    let n = samples.len();
    let m = schema.len();
    let rows = samples.rows();
    let mut edges = Vec::with_capacity(m);
    let mut bin_counts = Vec::with_capacity(m);
    let mut assignment = vec![0u16; n * m];
    for f in 0..m {
        let col = &mut assignment[f * n..(f + 1) * n];
        match schema.kind(f) {
            FeatureKind::Binary => {
                edges.push(vec![0.0, 0.5, 1.0]);
                bin_counts.push(2);
                for (x, slot) in col.iter_mut().enumerate() {
                    *slot = (rows.get(x, f) != 0.0) as u16;
                }
            }
            FeatureKind::Continuous => {
                let (lo, hi) = (0..n).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                    let v = rows.get(x, f);
                    (lo.min(v), hi.max(v))
                });
                if hi <= lo {
                    edges.push(vec![lo]);
                    bin_counts.push(1);
                    continue;
                }
                let width = (hi - lo) / bins as f64;
                let mut e: Vec<f64> = (0..bins).map(|k| lo + k as f64 * width).collect();
                e.push(hi);
                edges.push(e);
                bin_counts.push(bins);
                for (x, slot) in col.iter_mut().enumerate() {
                    let b = ((rows.get(x, f) - lo) / width).floor() as usize;
                    *slot = b.min(bins - 1) as u16;
                }
            }
        }
    }
    Ok(BinAssignment {
        edges,
        bin_counts,
        max_bins: bins,
        n,
        assignment,
    })
}

/// Disjoint sample-index sets, one per realized combination of the selected
/// features' bins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionLeaves {
    pub leaves: Vec<Vec<u32>>,
}

impl PartitionLeaves {
    /// Single leaf holding every sample (dropped if it has fewer than 2).
    pub fn root(n: usize) -> Self {
        let leaves = if n >= MIN_LEAF_SIZE {
            vec![(0..n as u32).collect()]
        } else {
            Vec::new()
        };
        Self { leaves }
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn total_samples(&self) -> usize {
        self.leaves.iter().map(Vec::len).sum()
    }
}

/// Splits every leaf by the bins of `feature`, keeping cells of size >= 2 in
/// bin order.
pub fn bin_partition(bins: &BinAssignment, leaves: &PartitionLeaves, feature: usize) -> PartitionLeaves {
    let k = bins.bin_counts[feature];
    let col = bins.column(feature);
    let mut out = Vec::new();
    let mut cells: Vec<Vec<u32>> = vec![Vec::new(); k];
    for leaf in &leaves.leaves {
        for &x in leaf {
            cells[col[x as usize] as usize].push(x);
        }
        for cell in cells.iter_mut() {
            if cell.len() >= MIN_LEAF_SIZE {
                out.push(std::mem::take(cell));
            } else {
                cell.clear();
            }
        }
    }
    PartitionLeaves { leaves: out }
}

/// Labels mapped to dense codes `0..classes`.
#[derive(Debug, Clone)]
struct LabelCodes {
    codes: Vec<u32>,
    classes: usize,
}

impl LabelCodes {
    fn new(y: &[Label]) -> Self {
        let mut set: Vec<Label> = y.to_vec();
        set.sort_unstable();
        set.dedup();
        let codes = y
            .iter()
            .map(|l| set.binary_search(l).expect("present") as u32)
            .collect();
        Self {
            codes,
            classes: set.len(),
        }
    }
}

/// Reusable count tables; cells touched by a leaf are reset after it.
struct Scratch {
    joint: Vec<u32>,
    by_bin: Vec<u32>,
    by_label: Vec<u32>,
}

impl Scratch {
    fn new(max_bins: usize, classes: usize) -> Self {
        Self {
            joint: vec![0; max_bins * classes],
            by_bin: vec![0; max_bins],
            by_label: vec![0; classes],
        }
    }
}

fn cmi_coded(col: &[u16], y: &LabelCodes, leaves: &PartitionLeaves, n_total: usize, scratch: &mut Scratch) -> f64 {
    let c = y.classes;
    let mut total = 0.0;
    for leaf in &leaves.leaves {
        for &x in leaf {
            let b = col[x as usize] as usize;
            let l = y.codes[x as usize] as usize;
            scratch.joint[b * c + l] += 1;
            scratch.by_bin[b] += 1;
            scratch.by_label[l] += 1;
        }
        let size = leaf.len() as f64;
        // sum over occupied cells: count/N * ln(count * |leaf| / (count_b * count_y))
        for &x in leaf {
            let b = col[x as usize] as usize;
            let l = y.codes[x as usize] as usize;
            let cell = scratch.joint[b * c + l];
            if cell == 0 {
                continue;
            }
            let cb = scratch.by_bin[b] as f64;
            let cy = scratch.by_label[l] as f64;
            let cf = cell as f64;
            total += cf * (cf * size / (cb * cy)).ln();
            scratch.joint[b * c + l] = 0;
        }
        for &x in leaf {
            scratch.by_bin[col[x as usize] as usize] = 0;
            scratch.by_label[y.codes[x as usize] as usize] = 0;
        }
    }
    total / n_total as f64
}

/// Plug-in estimate of `I(feature; Y | selected)` in nats: the per-sample
/// average over retained leaves of
/// `ln[ p(b, y) / (p(b) p(y)) ]`, with frequencies taken within each leaf.
/// Samples in dropped leaves contribute zero; the average is over all N.
pub fn cond_mutual_info(feature: usize, y: &[Label], leaves: &PartitionLeaves, bins: &BinAssignment) -> Result<f64> {
    if feature >= bins.n_features() {
        return Err(Error::invalid(format!(
            "feature {feature} out of range for {} features",
            bins.n_features()
        )));
    }
    if y.len() != bins.n_samples() {
        return Err(Error::DimensionMismatch {
            expected: bins.n_samples(),
            got: y.len(),
        });
    }
    let codes = LabelCodes::new(y);
    let mut scratch = Scratch::new(bins.max_bins.max(2), codes.classes.max(1));
    Ok(cmi_coded(
        bins.column(feature),
        &codes,
        leaves,
        bins.n_samples(),
        &mut scratch,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRound {
    /// `(feature, estimated MI)` for every candidate evaluated this round.
    pub candidates: Vec<(usize, f64)>,
    pub chosen: Option<usize>,
    pub leaves_after: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionState {
    pub selected: Vec<usize>,
    /// Unselected candidates, ascending.
    pub unselected: Vec<usize>,
    pub leaves: PartitionLeaves,
    pub trace: Vec<SelectionRound>,
}

impl SelectionState {
    pub fn initial(n_features: usize, n_samples: usize) -> Self {
        Self {
            selected: Vec::new(),
            unselected: (0..n_features).collect(),
            leaves: PartitionLeaves::root(n_samples),
            trace: Vec::new(),
        }
    }

    /// Features appended to `selected`, with the MI that earned them a slot.
    pub fn mi_trace(&self) -> Vec<(usize, f64)> {
        self.trace
            .iter()
            .filter_map(|r| {
                let f = r.chosen?;
                r.candidates.iter().find(|(c, _)| *c == f).copied()
            })
            .collect()
    }
}

fn select_coded(
    mut state: SelectionState,
    bins: &BinAssignment,
    y: &LabelCodes,
    cfg: &FffsConfig,
    scratch: &mut Scratch,
) -> SelectionState {
    let n = bins.n_samples();
    let candidates: Vec<(usize, f64)> = state
        .unselected
        .iter()
        .map(|&f| (f, cmi_coded(bins.column(f), y, &state.leaves, n, scratch)))
        .collect();
    // ascending feature order + strict comparison: ties go to the lower index
    let mut best: Option<(usize, f64)> = None;
    for &(f, mi) in &candidates {
        if best.is_none_or(|(_, b)| mi > b) {
            best = Some((f, mi));
        }
    }
    match best {
        Some((f, mi)) if mi > cfg.eps_mi => {
            state.unselected.retain(|&u| u != f);
            state.selected.push(f);
            state.leaves = bin_partition(bins, &state.leaves, f);
            if cfg.max_features.is_some_and(|cap| state.selected.len() >= cap) {
                state.unselected.clear();
            }
            state.trace.push(SelectionRound {
                candidates,
                chosen: Some(f),
                leaves_after: state.leaves.len(),
            });
        }
        _ => {
            state.unselected.clear();
            state.trace.push(SelectionRound {
                candidates,
                chosen: None,
                leaves_after: state.leaves.len(),
            });
        }
    }
    state
}

/// One forward step: moves the candidate with the largest estimated MI into
/// the selected set and refines the leaves, or empties the candidate set when
/// no estimate exceeds `eps_mi`.
pub fn select_feature(state: SelectionState, bins: &BinAssignment, y: &[Label], cfg: &FffsConfig) -> SelectionState {
    if state.unselected.is_empty() {
        return state;
    }
    let codes = LabelCodes::new(y);
    let mut scratch = Scratch::new(bins.max_bins.max(2), codes.classes.max(1));
    select_coded(state, bins, &codes, cfg, &mut scratch)
}

/// Repeats [`select_feature`] until no candidates or no leaves remain.
pub fn recursion_ffs(state: SelectionState, bins: &BinAssignment, y: &[Label], cfg: &FffsConfig) -> SelectionState {
    let codes = LabelCodes::new(y);
    let mut scratch = Scratch::new(bins.max_bins.max(2), codes.classes.max(1));
    let mut state = state;
    while !state.unselected.is_empty() && !state.leaves.is_empty() {
        state = select_coded(state, bins, &codes, cfg, &mut scratch);
    }
    state
}

/// Full selection run; returns the final state (selected features in order
/// of selection, plus the per-round trace).
pub fn fffs_trace(
    samples: &SampleSet,
    y: &[Label],
    schema: &FeatureSchema,
    cfg: &FffsConfig,
) -> Result<SelectionState> {
    if y.len() != samples.len() {
        return Err(Error::DimensionMismatch {
            expected: samples.len(),
            got: y.len(),
        });
    }
    let bins = build_histograms(samples, schema, cfg.bins)?;
    let state = SelectionState::initial(schema.len(), samples.len());
    Ok(recursion_ffs(state, &bins, y, cfg))
}

pub fn fffs(samples: &SampleSet, y: &[Label], schema: &FeatureSchema, bins: usize) -> Result<Vec<usize>> {
    let cfg = FffsConfig {
        bins,
        ..FffsConfig::default()
    };
    Ok(fffs_trace(samples, y, schema, &cfg)?.selected)
}

/// JSON dump of the selection trace.
pub fn trace_json(state: &SelectionState) -> Result<String> {
    serde_json::to_string_pretty(&state.trace).map_err(|e| Error::Serde(e.to_string()))
}
