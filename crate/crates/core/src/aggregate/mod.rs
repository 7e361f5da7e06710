//! Aggregation of local explainers into a near-global explainer.
//!
//! Candidates are local explainers centered at dataset points. The coverage
//! integer program selects at most `K` of them and assigns each selected
//! candidate a set of claimed in-ball points whose agreement rate meets the
//! fidelity floor, maximizing the number of claimed points.

mod bits;
pub mod instances;
pub mod ip;
pub mod lp;
pub mod solve;
pub mod verify;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blackbox::BlackBoxModel;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::explainer::LocalExplainer;
use crate::sampler::within_ball;

pub use ip::{build_ip, ConstraintFamily, IpModel};
pub use lp::{export_lp, parse_lp, write_lp, ParsedLp};
pub use solve::{brute_force, solve_exact, solve_greedy, SolverOptions};
pub use verify::verify_solution;

/// Absolute slack allowed on a fidelity row `Σ (agree − φ) z ≥ 0`.
pub const FIDELITY_EPS: f64 = 1e-9;

/// Precomputed candidate data for the coverage program: `within[i][j]` is
/// point `j` lying in candidate `i`'s ball, `agree[i][j]` is candidate `i`'s
/// surrogate matching the black box at point `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    n_points: usize,
    centers: Vec<usize>,
    radii: Vec<f64>,
    within: Vec<bool>,
    agree: Vec<bool>,
    pub metric: String,
}

impl CandidatePool {
    /// Pool from explicit matrices (`rows[i][j]`). Candidate `i` is centered
    /// at `centers[i]`, and must contain its own center.
    pub fn from_matrices(
        centers: Vec<usize>,
        radii: Vec<f64>,
        within: Vec<Vec<bool>>,
        agree: Vec<Vec<bool>>,
    ) -> Result<Self> {
        let nc = centers.len();
        if radii.len() != nc || within.len() != nc || agree.len() != nc {
            return Err(Error::invalid("pool matrices disagree on candidate count"));
        }
        let n_points = within.first().map_or(0, Vec::len);
        for (i, (w, a)) in within.iter().zip(&agree).enumerate() {
            if w.len() != n_points || a.len() != n_points {
                return Err(Error::invalid(format!("ragged pool row {i}")));
            }
            if centers[i] >= n_points {
                return Err(Error::invalid(format!("candidate {i} center out of range")));
            }
            if radii[i] >= 0.0 && !w[centers[i]] {
                return Err(Error::invalid(format!("candidate {i} ball misses its own center")));
            }
        }
        Ok(Self {
            n_points,
            centers,
            radii,
            within: within.into_iter().flatten().collect(),
            agree: agree.into_iter().flatten().collect(),
            metric: "explicit".into(),
        })
    }

    pub fn n_candidates(&self) -> usize {
        self.centers.len()
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn centers(&self) -> &[usize] {
        &self.centers
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    #[inline]
    pub fn within(&self, i: usize, j: usize) -> bool {
        self.within[i * self.n_points + j]
    }

    #[inline]
    pub fn agree(&self, i: usize, j: usize) -> bool {
        self.agree[i * self.n_points + j]
    }

    pub fn ball(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_points).filter(move |&j| self.within(i, j))
    }

    /// Number of `(i, j)` pairs with `j` in ball `i` and disagreement.
    pub fn disagreeing_pairs(&self) -> usize {
        self.within.iter().zip(&self.agree).filter(|(w, a)| **w && !**a).count()
    }
}

/// One candidate per explainer; explainer centers must be dataset points.
pub fn build_pool(d: &Dataset, explainers: &[LocalExplainer], f: &BlackBoxModel) -> Result<CandidatePool> {
    if f.dim() != d.m() {
        return Err(Error::DimensionMismatch {
            expected: d.m(),
            got: f.dim(),
        });
    }
    for e in explainers {
        if e.center.len() != d.m() {
            return Err(Error::DimensionMismatch {
                expected: d.m(),
                got: e.center.len(),
            });
        }
        if e.center_index >= d.n() {
            return Err(Error::invalid(format!(
                "explainer center {} is not a dataset point",
                e.center_index
            )));
        }
    }
    let kinds = d.schema().kinds();
    let truth: Vec<_> = d.rows().map(|x| f.predict_unchecked(x)).collect();
    let rows: Vec<(Vec<bool>, Vec<bool>)> = explainers
        .par_iter()
        .map(|e| {
            let center = d.row(e.center_index);
            let within = d.rows().map(|x| within_ball(kinds, center, x, e.radius)).collect();
            let agree = d.rows().zip(&truth).map(|(x, &t)| e.predict(x) == t).collect();
            (within, agree)
        })
        .collect();
    let (within, agree): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let mut pool = CandidatePool::from_matrices(
        explainers.iter().map(|e| e.center_index).collect(),
        explainers.iter().map(|e| e.radius).collect(),
        within,
        agree,
    )?;
    pool.metric = "max(linf_continuous, l1_binary)".into();
    Ok(pool)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
        })
    }
}

/// Points claimed by one selected candidate (its `z` row).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub candidate: usize,
    pub points: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSolution {
    pub selected: Vec<usize>,
    pub z_assignment: Vec<Claim>,
    /// Objective of the program: points claimed by some selected candidate.
    pub ip_coverage: usize,
    /// Points inside some selected candidate's full ball.
    pub ball_coverage: usize,
    /// Minimum full-ball fidelity over selected candidates.
    pub ball_min_fidelity: Option<f64>,
    /// Minimum fidelity over the claimed sets.
    pub claimed_min_fidelity: Option<f64>,
    pub status: SolveStatus,
    pub nodes_explored: u64,
    pub wall_time_ms: f64,
}

impl AggregateSolution {
    /// Assembles a solution from selected candidates and their claims,
    /// evaluating both coverage notions.
    pub(crate) fn assemble(pool: &CandidatePool, mut claims: Vec<Claim>, status: SolveStatus) -> Self {
        claims.sort_by_key(|c| c.candidate);
        for c in &mut claims {
            c.points.sort_unstable();
        }
        let selected: Vec<usize> = claims.iter().map(|c| c.candidate).collect();
        let mut claimed = vec![false; pool.n_points()];
        for c in &claims {
            for &j in &c.points {
                claimed[j] = true;
            }
        }
        let claimed_min_fidelity = claims
            .iter()
            .map(|c| {
                if c.points.is_empty() {
                    1.0
                } else {
                    c.points.iter().filter(|&&j| pool.agree(c.candidate, j)).count() as f64 / c.points.len() as f64
                }
            })
            .reduce(f64::min);
        let mut sol = Self {
            ball_coverage: 0,
            ball_min_fidelity: None,
            selected,
            z_assignment: claims,
            ip_coverage: claimed.iter().filter(|&&c| c).count(),
            claimed_min_fidelity,
            status,
            nodes_explored: 0,
            wall_time_ms: 0.0,
        };
        sol.ball_coverage = coverage(&sol, pool);
        sol.ball_min_fidelity = fidelity(&sol, pool).ok();
        sol
    }
}

/// Points covered by the full balls of the selected candidates.
pub fn coverage(sol: &AggregateSolution, pool: &CandidatePool) -> usize {
    (0..pool.n_points())
        .filter(|&j| sol.selected.iter().any(|&i| pool.within(i, j)))
        .count()
}

/// Minimum over selected candidates of the agreement rate on their full
/// ball; an empty ball counts as fidelity 1.
pub fn fidelity(sol: &AggregateSolution, pool: &CandidatePool) -> Result<f64> {
    if sol.selected.is_empty() {
        return Err(Error::EmptyAggregate);
    }
    Ok(sol
        .selected
        .iter()
        .map(|&i| {
            let ball: Vec<usize> = pool.ball(i).collect();
            if ball.is_empty() {
                1.0
            } else {
                ball.iter().filter(|&&j| pool.agree(i, j)).count() as f64 / ball.len() as f64
            }
        })
        .fold(f64::INFINITY, f64::min))
}
