//! Solvers for the coverage program.
//!
//! For a fixed selection the inner `z` problem is solved exactly: every
//! agreeing in-ball point is claimed (each adds slack `1 − φ ≥ 0`), which
//! fixes a per-candidate capacity for disagreeing points, and the remaining
//! uncovered disagreeing points are assigned by a maximum bipartite
//! b-matching.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::bits::Bits;
use super::ip::IpModel;
use super::{AggregateSolution, CandidatePool, Claim, SolveStatus, FIDELITY_EPS};
use crate::error::{Error, Result};

/// Largest instance `brute_force` accepts.
pub const BRUTE_MAX_POINTS: usize = 12;
pub const BRUTE_MAX_DISAGREEING: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Branch-and-bound node budget; exceeding it returns the incumbent
    /// with status `feasible`.
    pub node_limit: Option<u64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            node_limit: Some(50_000_000),
        }
    }
}

/// Number of disagreeing points a candidate with `a` claimed agreeing
/// points may add while keeping `a − φ(a + k) ≥ −ε`.
pub(crate) fn capacity(a: usize, phi: f64) -> usize {
    if phi <= 0.0 {
        return usize::MAX;
    }
    let k = (a as f64 * (1.0 - phi) + FIDELITY_EPS) / phi;
    let mut k = k.floor().max(0.0) as usize;
    // guard the floor against rounding either way
    while k > 0 && (a as f64) - phi * ((a + k) as f64) < -FIDELITY_EPS {
        k -= 1;
    }
    while (a as f64) - phi * ((a + k + 1) as f64) >= -FIDELITY_EPS {
        k += 1;
    }
    k
}

/// Per-candidate data derived from the pool for a fixed `φ`.
pub(crate) struct Prepared {
    n: usize,
    agree: Vec<Bits>,
    dis: Vec<Vec<usize>>,
    dis_bits: Vec<Bits>,
    cap: Vec<usize>,
    /// Points a candidate can ever claim.
    reach: Vec<Bits>,
}

impl Prepared {
    pub fn new(pool: &CandidatePool, phi: f64) -> Self {
        let n = pool.n_points();
        let nc = pool.n_candidates();
        let mut agree = Vec::with_capacity(nc);
        let mut dis = Vec::with_capacity(nc);
        let mut dis_bits = Vec::with_capacity(nc);
        let mut cap = Vec::with_capacity(nc);
        let mut reach = Vec::with_capacity(nc);
        for i in 0..nc {
            let a = Bits::from_indices(n, pool.ball(i).filter(|&j| pool.agree(i, j)));
            let d: Vec<usize> = pool.ball(i).filter(|&j| !pool.agree(i, j)).collect();
            let c = capacity(a.count(), phi).min(d.len());
            let db = Bits::from_indices(n, d.iter().copied());
            let mut r = a.clone();
            if c > 0 {
                r.union_with(&db);
            }
            reach.push(r);
            agree.push(a);
            dis.push(d);
            dis_bits.push(db);
            cap.push(c);
        }
        Self {
            n,
            agree,
            dis,
            dis_bits,
            cap,
            reach,
        }
    }

    fn n_candidates(&self) -> usize {
        self.cap.len()
    }

    /// Union of agreeing sets of `sel`.
    fn agreed(&self, sel: &[usize]) -> Bits {
        let mut f = Bits::new(self.n);
        for &i in sel {
            f.union_with(&self.agree[i]);
        }
        f
    }

    /// Optimal inner objective for `sel` and the matching that attains it
    /// (`owner[j]` is the candidate claiming disagreeing point `j`).
    fn inner(&self, sel: &[usize]) -> (usize, Bits, Vec<Option<usize>>) {
        let f = self.agreed(sel);
        let mut owner: Vec<Option<usize>> = vec![None; self.n];
        let mut load = vec![0usize; self.n_candidates()];
        let mut matched = 0;
        let mut points: Vec<usize> = sel
            .iter()
            .filter(|&&i| self.cap[i] > 0)
            .flat_map(|&i| self.dis[i].iter().copied())
            .filter(|&j| !f.contains(j))
            .collect();
        points.sort_unstable();
        points.dedup();
        let usable: Vec<usize> = sel.iter().copied().filter(|&i| self.cap[i] > 0).collect();
        for &j in &points {
            let mut seen = vec![false; self.n_candidates()];
            if self.augment(j, &usable, &mut owner, &mut load, &mut seen) {
                matched += 1;
            }
        }
        (f.count() + matched, f, owner)
    }

    fn augment(
        &self,
        j: usize,
        usable: &[usize],
        owner: &mut [Option<usize>],
        load: &mut [usize],
        seen: &mut [bool],
    ) -> bool {
        for &i in usable {
            if seen[i] || !self.dis_bits[i].contains(j) {
                continue;
            }
            seen[i] = true;
            if load[i] < self.cap[i] {
                owner[j] = Some(i);
                load[i] += 1;
                return true;
            }
            // try to move one of i's points elsewhere
            for k in 0..self.n {
                if owner[k] == Some(i) && self.augment(k, usable, owner, load, seen) {
                    // augment(k) placed k with another candidate and bumped its load
                    owner[j] = Some(i);
                    return true;
                }
            }
        }
        false
    }

    fn value(&self, sel: &[usize]) -> usize {
        self.inner(sel).0
    }

    fn claims(&self, sel: &[usize]) -> Vec<Claim> {
        let (_, _, owner) = self.inner(sel);
        sel.iter()
            .map(|&i| {
                let mut points: Vec<usize> = self.agree[i].iter().collect();
                points.extend((0..self.n).filter(|&j| owner[j] == Some(i)));
                Claim { candidate: i, points }
            })
            .collect()
    }

    /// Whether swapping `t` for `u` never loses coverage in any selection
    /// containing the agreeing union `f`.
    fn dominates(&self, u: usize, t: usize, f: &Bits) -> bool {
        if self.agree[t].count_outside(&self.agree[u], f, f) > 0 {
            return false;
        }
        if self.cap[t] == 0 {
            return true;
        }
        if self.dis_bits[t].count_outside(&self.agree[u], &self.dis_bits[u], f) > 0 {
            return false;
        }
        let moved = self.dis_bits[t].count_common_outside(&self.dis_bits[u], &self.agree[u], f);
        self.cap[t].min(moved) <= self.cap[u]
    }

    /// Upper bound on what candidate `t` can add on top of a selection whose
    /// agreeing union is `f`.
    fn gain_bound(&self, t: usize, f: &Bits) -> usize {
        let a = self.agree[t].count_minus(f);
        let d = if self.cap[t] == 0 {
            0
        } else {
            self.cap[t].min(self.dis_bits[t].count_minus(f))
        };
        a + d
    }
}

fn finish(
    pool: &CandidatePool,
    prep: &Prepared,
    sel: &[usize],
    budget: usize,
    status: SolveStatus,
) -> AggregateSolution {
    let claims = prep.claims(sel);
    let mut sol = AggregateSolution::assemble(pool, claims, status);
    if budget > 0 && sol.ip_coverage == 0 {
        sol.status = SolveStatus::Infeasible;
    }
    sol
}

fn check_phi(phi: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(Error::invalid(format!("fidelity floor must lie in [0, 1], got {phi}")));
    }
    Ok(())
}

fn greedy_selection(prep: &Prepared, budget: usize) -> (Vec<usize>, usize) {
    let mut sel: Vec<usize> = Vec::new();
    let mut value = 0;
    while sel.len() < budget {
        let mut best: Option<(usize, usize)> = None;
        let f = prep.agreed(&sel);
        for t in 0..prep.n_candidates() {
            if sel.contains(&t) {
                continue;
            }
            if prep.gain_bound(t, &f) == 0 {
                continue;
            }
            sel.push(t);
            let v = prep.value(&sel);
            sel.pop();
            if v > value && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((t, v));
            }
        }
        match best {
            Some((t, v)) => {
                sel.push(t);
                value = v;
            }
            None => break,
        }
    }
    sel.sort_unstable();
    (sel, value)
}

/// Greedy marginal-gain selection with exact inner assignment.
pub fn solve_greedy(pool: &CandidatePool, budget: usize, phi: f64) -> Result<AggregateSolution> {
    check_phi(phi)?;
    let start = Instant::now();
    let prep = Prepared::new(pool, phi);
    let (sel, _) = greedy_selection(&prep, budget);
    let mut sol = finish(pool, &prep, &sel, budget, SolveStatus::Feasible);
    sol.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(sol)
}

struct Search<'a> {
    prep: &'a Prepared,
    budget: usize,
    best: usize,
    best_sel: Vec<usize>,
    nodes: u64,
    limit: Option<u64>,
    truncated: bool,
}

impl Search<'_> {
    /// `rem` holds the undecided candidates. The inner value is a
    /// coverage-plus-flow function and hence submodular, so the sum of the
    /// `slots` largest marginal gains bounds any completion and a zero-gain
    /// candidate stays useless for the whole subtree. Candidates are branched
    /// in decreasing gain; once `u` is excluded, every candidate it dominates
    /// is dropped as well.
    fn run(&mut self, rem: &[usize], sel: &mut Vec<usize>, value: usize) {
        self.nodes += 1;
        if self.limit.is_some_and(|l| self.nodes > l) {
            self.truncated = true;
            return;
        }
        if value > self.best {
            self.best = value;
            self.best_sel = sel.clone();
        }
        let slots = self.budget - sel.len();
        if slots == 0 || rem.is_empty() || self.best == self.prep.n {
            return;
        }
        let f = self.prep.agreed(sel);
        let mut live: Vec<(usize, usize)> = Vec::with_capacity(rem.len());
        for &t in rem {
            if self.prep.gain_bound(t, &f) == 0 {
                continue;
            }
            sel.push(t);
            let g = self.prep.value(sel) - value;
            sel.pop();
            if g > 0 {
                live.push((t, g));
            }
        }
        if live.is_empty() {
            return;
        }
        live.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let by_gain = value + live.iter().take(slots).map(|&(_, g)| g).sum::<usize>();
        let mut reach = f.clone();
        for &i in sel.iter() {
            reach.union_with(&self.prep.reach[i]);
        }
        for &(t, _) in &live {
            reach.union_with(&self.prep.reach[t]);
        }
        if by_gain.min(reach.count()) <= self.best {
            return;
        }
        let (u, gu) = live[0];
        let rest: Vec<usize> = live[1..].iter().map(|&(t, _)| t).collect();
        sel.push(u);
        self.run(&rest, sel, value + gu);
        sel.pop();
        if self.truncated {
            return;
        }
        let rest: Vec<usize> = rest.into_iter().filter(|&t| !self.prep.dominates(u, t, &f)).collect();
        self.run(&rest, sel, value);
    }
}

/// Provably optimal solution by depth-first branch and bound over `w`
/// (include-branch first), warm-started by greedy.
pub fn solve_exact(m: &IpModel, pool: &CandidatePool, opts: &SolverOptions) -> Result<AggregateSolution> {
    if m.n_candidates != pool.n_candidates() || m.n_points != pool.n_points() {
        return Err(Error::invalid("model and pool dimensions differ"));
    }
    check_phi(m.phi)?;
    let start = Instant::now();
    let prep = Prepared::new(pool, m.phi);
    let budget = m.budget.min(pool.n_candidates());
    if budget == 0 {
        let mut sol = finish(pool, &prep, &[], m.budget, SolveStatus::Optimal);
        sol.nodes_explored = 1;
        sol.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
        return Ok(sol);
    }
    let (greedy_sel, greedy_val) = greedy_selection(&prep, budget);
    let empty = Bits::new(pool.n_points());
    let order: Vec<usize> = (0..pool.n_candidates())
        .filter(|&t| prep.gain_bound(t, &empty) > 0)
        .collect();
    let mut search = Search {
        prep: &prep,
        budget,
        best: greedy_val,
        best_sel: greedy_sel,
        nodes: 0,
        limit: opts.node_limit,
        truncated: false,
    };
    search.run(&order, &mut Vec::new(), 0);
    let status = if search.truncated {
        SolveStatus::Feasible
    } else {
        SolveStatus::Optimal
    };
    let mut sel = search.best_sel.clone();
    sel.sort_unstable();
    let mut sol = finish(pool, &prep, &sel, m.budget, status);
    sol.nodes_explored = search.nodes;
    sol.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(sol)
}

/// Exhaustive oracle: every selection of size ≤ K, every subset of the
/// selection's disagreeing in-ball pairs, all agreeing in-ball points
/// claimed. Ties keep the lexicographically first selection.
pub fn brute_force(pool: &CandidatePool, budget: usize, phi: f64) -> Result<AggregateSolution> {
    check_phi(phi)?;
    if pool.n_points() > BRUTE_MAX_POINTS || pool.n_candidates() > BRUTE_MAX_POINTS {
        return Err(Error::TooLarge(format!(
            "{} points, limit {BRUTE_MAX_POINTS}",
            pool.n_points()
        )));
    }
    let pairs = pool.disagreeing_pairs();
    if pairs > BRUTE_MAX_DISAGREEING {
        return Err(Error::TooLarge(format!(
            "{pairs} disagreeing pairs, limit {BRUTE_MAX_DISAGREEING}"
        )));
    }
    let start = Instant::now();
    let nc = pool.n_candidates();
    let n = pool.n_points();
    let mut best: Option<(usize, Vec<Claim>)> = None;
    let mut sel: Vec<usize> = Vec::new();
    let mut subsets: Vec<Vec<usize>> = vec![Vec::new()];
    // lexicographic enumeration of subsets of size <= K
    fn rec(start: usize, nc: usize, budget: usize, sel: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        for i in start..nc {
            sel.push(i);
            out.push(sel.clone());
            if sel.len() < budget {
                rec(i + 1, nc, budget, sel, out);
            }
            sel.pop();
        }
    }
    if budget > 0 {
        rec(0, nc, budget, &mut sel, &mut subsets);
    }
    let mut nodes = 0u64;
    for s in &subsets {
        let agree: Vec<Vec<usize>> = s
            .iter()
            .map(|&i| pool.ball(i).filter(|&j| pool.agree(i, j)).collect())
            .collect();
        let dis: Vec<(usize, usize)> = s
            .iter()
            .enumerate()
            .flat_map(|(k, &i)| pool.ball(i).filter(move |&j| !pool.agree(i, j)).map(move |j| (k, j)))
            .collect();
        for mask in 0u32..(1u32 << dis.len()) {
            nodes += 1;
            let mut claims: Vec<Vec<usize>> = agree.clone();
            for (b, &(k, j)) in dis.iter().enumerate() {
                if mask >> b & 1 == 1 {
                    claims[k].push(j);
                }
            }
            let feasible = s.iter().zip(&claims).all(|(&i, c)| {
                let slack: f64 = c.iter().map(|&j| if pool.agree(i, j) { 1.0 - phi } else { -phi }).sum();
                slack >= -FIDELITY_EPS
            });
            if !feasible {
                continue;
            }
            let mut covered = vec![false; n];
            for c in &claims {
                for &j in c {
                    covered[j] = true;
                }
            }
            let v = covered.iter().filter(|&&c| c).count();
            if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                let cl = s
                    .iter()
                    .zip(claims)
                    .map(|(&candidate, points)| Claim { candidate, points })
                    .collect();
                best = Some((v, cl));
            }
        }
    }
    let (_, claims) = best.expect("the empty selection is always admissible");
    let mut sol = AggregateSolution::assemble(pool, claims, SolveStatus::Optimal);
    if budget > 0 && sol.ip_coverage == 0 {
        sol.status = SolveStatus::Infeasible;
    }
    sol.nodes_explored = nodes;
    sol.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(sol)
}
