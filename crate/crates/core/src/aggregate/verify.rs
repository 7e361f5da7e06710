//! Independent re-check of a solution against every row of the coverage
//! program, evaluated from raw pool data.

use std::collections::BTreeSet;

use super::{coverage, AggregateSolution, CandidatePool, FIDELITY_EPS};

/// Returns one message per violated row; empty means the solution is valid.
pub fn verify_solution(sol: &AggregateSolution, pool: &CandidatePool, budget: usize, phi: f64) -> Vec<String> {
    let mut bad = Vec::new();
    let nc = pool.n_candidates();
    let n = pool.n_points();

    let w: BTreeSet<usize> = sol.selected.iter().copied().collect();
    if w.len() != sol.selected.len() {
        bad.push("selected contains duplicates".to_string());
    }
    if let Some(&i) = w.iter().find(|&&i| i >= nc) {
        bad.push(format!("selected candidate {i} out of range"));
        return bad;
    }
    if w.len() > budget {
        bad.push(format!("budget: {} selected > K = {budget}", w.len()));
    }

    let mut y = vec![false; n];
    let mut seen_claims = BTreeSet::new();
    for c in &sol.z_assignment {
        let i = c.candidate;
        if !seen_claims.insert(i) {
            bad.push(format!("candidate {i} has two claim rows"));
        }
        if !w.contains(&i) {
            bad.push(format!("z <= w: candidate {i} claims points but w_{i} = 0"));
        }
        if i >= nc {
            continue;
        }
        let pts: BTreeSet<usize> = c.points.iter().copied().collect();
        if pts.len() != c.points.len() {
            bad.push(format!("candidate {i} claims a point twice"));
        }
        let mut slack = 0.0;
        for &j in &pts {
            if j >= n {
                bad.push(format!("candidate {i} claims point {j} out of range"));
                continue;
            }
            if !pool.within(i, j) {
                bad.push(format!("radius: z_{i}_{j} = 1 with point outside the ball"));
            }
            let a = if pool.agree(i, j) { 1.0 } else { 0.0 };
            slack += a - phi;
            y[j] = true;
        }
        if slack < -FIDELITY_EPS {
            bad.push(format!("fidelity: row {i} has slack {slack}"));
        }
    }
    let y_count = y.iter().filter(|&&v| v).count();
    if y_count != sol.ip_coverage {
        bad.push(format!(
            "y linking: {y_count} points claimed but ip_coverage = {}",
            sol.ip_coverage
        ));
    }
    let ball = coverage(sol, pool);
    if ball != sol.ball_coverage {
        bad.push(format!(
            "ball_coverage {} differs from recount {ball}",
            sol.ball_coverage
        ));
    }
    if ball < y_count {
        bad.push(format!("ball_coverage {ball} below ip_coverage {y_count}"));
    }
    bad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::instances::pool_from_balls;
    use crate::aggregate::{Claim, SolveStatus};

    fn sol(pool: &CandidatePool, claims: Vec<Claim>) -> AggregateSolution {
        AggregateSolution::assemble(pool, claims, SolveStatus::Feasible)
    }

    #[test]
    fn accepts_valid_solution() {
        let pool = pool_from_balls(3, &[&[0, 1, 2]], &[(0, 2)]);
        let s = sol(
            &pool,
            vec![Claim {
                candidate: 0,
                points: vec![0, 1, 2],
            }],
        );
        assert!(verify_solution(&s, &pool, 1, 0.5).is_empty());
    }

    #[test]
    fn flags_each_row_family() {
        let pool = pool_from_balls(4, &[&[0, 1], &[2], &[3]], &[(0, 1)]);
        let s = sol(
            &pool,
            vec![
                Claim {
                    candidate: 0,
                    points: vec![0, 1],
                },
                Claim {
                    candidate: 1,
                    points: vec![2, 3],
                },
            ],
        );
        let v = verify_solution(&s, &pool, 1, 0.9);
        assert!(v.iter().any(|m| m.starts_with("budget")), "{v:?}");
        assert!(v.iter().any(|m| m.starts_with("radius")), "{v:?}");
        assert!(v.iter().any(|m| m.starts_with("fidelity")), "{v:?}");

        let mut s2 = sol(
            &pool,
            vec![Claim {
                candidate: 2,
                points: vec![3],
            }],
        );
        s2.selected.clear();
        s2.ball_coverage = 0;
        let v = verify_solution(&s2, &pool, 1, 0.5);
        assert!(v.iter().any(|m| m.starts_with("z <= w")), "{v:?}");

        let mut s3 = sol(
            &pool,
            vec![Claim {
                candidate: 2,
                points: vec![3],
            }],
        );
        s3.ip_coverage = 2;
        let v = verify_solution(&s3, &pool, 1, 0.5);
        assert!(v.iter().any(|m| m.starts_with("y linking")), "{v:?}");
    }
}
