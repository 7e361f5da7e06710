//! The coverage integer program as an explicit model.
//!
//! ```text
//! max  Σ_j y_j
//! s.t. z_ij <= w_i                         (one row per z variable)
//!      y_j  >= z_ij                        (one row per z variable)
//!      y_j  <= Σ_i z_ij                    (one row per point)
//!      Σ_j (agree_ij − φ) z_ij >= 0        (one row per candidate)
//!      Σ_i w_i <= K
//!      w, y, z binary
//! ```
//!
//! The radius rows `d(x_i, x_j) z_ij <= r_i` are presolved: `z_ij` exists
//! only where `x_j` lies in candidate `i`'s ball.

use serde::{Deserialize, Serialize};

use super::CandidatePool;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    W(usize),
    Y(usize),
    Z(usize, usize),
}

impl VarKind {
    pub fn name(&self) -> String {
        match self {
            VarKind::W(i) => format!("w_{i}"),
            VarKind::Y(j) => format!("y_{j}"),
            VarKind::Z(i, j) => format!("z_{i}_{j}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
}

impl Sense {
    pub fn symbol(&self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintFamily {
    ZLeW,
    YGeZ,
    YLeSumZ,
    Fidelity,
    Budget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub family: ConstraintFamily,
    /// `(variable index, coefficient)`
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpModel {
    pub n_candidates: usize,
    pub n_points: usize,
    pub budget: usize,
    pub phi: f64,
    pub variables: Vec<VarKind>,
    pub objective: Vec<(usize, f64)>,
    pub constraints: Vec<Constraint>,
    /// `(i, j)` pairs whose `z` is fixed at 0 by the radius rows.
    pub presolved_out: usize,
}

impl IpModel {
    pub fn count_family(&self, family: ConstraintFamily) -> usize {
        self.constraints.iter().filter(|c| c.family == family).count()
    }

    pub fn z_count(&self) -> usize {
        self.variables.iter().filter(|v| matches!(v, VarKind::Z(..))).count()
    }

    pub fn has_z(&self, i: usize, j: usize) -> bool {
        self.variables.contains(&VarKind::Z(i, j))
    }
}

pub fn build_ip(pool: &CandidatePool, budget: usize, phi: f64) -> Result<IpModel> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(Error::invalid(format!("fidelity floor must lie in [0, 1], got {phi}")));
    }
    let nc = pool.n_candidates();
    let np = pool.n_points();
    let mut variables: Vec<VarKind> = (0..nc).map(VarKind::W).collect();
    variables.extend((0..np).map(VarKind::Y));
    let w_idx = |i: usize| i;
    let y_idx = |j: usize| nc + j;
    let mut z_of: Vec<Vec<(usize, usize)>> = vec![Vec::new(); np];
    let mut z_rows: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nc];
    let mut presolved_out = 0;
    for (i, row) in z_rows.iter_mut().enumerate() {
        for (j, col) in z_of.iter_mut().enumerate() {
            if pool.within(i, j) {
                let v = variables.len();
                variables.push(VarKind::Z(i, j));
                col.push((i, v));
                row.push((j, v));
            } else {
                presolved_out += 1;
            }
        }
    }

    let mut constraints = Vec::new();
    for (i, row) in z_rows.iter().enumerate() {
        for &(j, v) in row {
            constraints.push(Constraint {
                name: format!("zw_{i}_{j}"),
                family: ConstraintFamily::ZLeW,
                terms: vec![(v, 1.0), (w_idx(i), -1.0)],
                sense: Sense::Le,
                rhs: 0.0,
            });
        }
    }
    for (i, row) in z_rows.iter().enumerate() {
        for &(j, v) in row {
            constraints.push(Constraint {
                name: format!("yz_{i}_{j}"),
                family: ConstraintFamily::YGeZ,
                terms: vec![(y_idx(j), 1.0), (v, -1.0)],
                sense: Sense::Ge,
                rhs: 0.0,
            });
        }
    }
    for (j, col) in z_of.iter().enumerate() {
        let mut terms = vec![(y_idx(j), 1.0)];
        terms.extend(col.iter().map(|&(_, v)| (v, -1.0)));
        constraints.push(Constraint {
            name: format!("ysum_{j}"),
            family: ConstraintFamily::YLeSumZ,
            terms,
            sense: Sense::Le,
            rhs: 0.0,
        });
    }
    for (i, row) in z_rows.iter().enumerate() {
        let terms = row
            .iter()
            .map(|&(j, v)| (v, if pool.agree(i, j) { 1.0 - phi } else { 0.0 - phi }))
            .collect();
        constraints.push(Constraint {
            name: format!("fid_{i}"),
            family: ConstraintFamily::Fidelity,
            terms,
            sense: Sense::Ge,
            rhs: 0.0,
        });
    }
    constraints.push(Constraint {
        name: "budget".into(),
        family: ConstraintFamily::Budget,
        terms: (0..nc).map(|i| (w_idx(i), 1.0)).collect(),
        sense: Sense::Le,
        rhs: budget as f64,
    });

    Ok(IpModel {
        n_candidates: nc,
        n_points: np,
        budget,
        phi,
        objective: (0..np).map(|j| (y_idx(j), 1.0)).collect(),
        variables,
        constraints,
        presolved_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::instances::pool_from_balls;

    #[test]
    fn two_point_model_counts() {
        let pool = pool_from_balls(2, &[&[0, 1], &[1, 0]], &[]);
        let m = build_ip(&pool, 1, 0.5).unwrap();
        assert_eq!(m.variables.len(), 8);
        assert_eq!(m.z_count(), 4);
        assert_eq!(m.count_family(ConstraintFamily::ZLeW), 4);
        assert_eq!(m.count_family(ConstraintFamily::YGeZ), 4);
        assert_eq!(m.count_family(ConstraintFamily::YLeSumZ), 2);
        assert_eq!(m.count_family(ConstraintFamily::Fidelity), 2);
        assert_eq!(m.count_family(ConstraintFamily::Budget), 1);
        assert_eq!(m.constraints.len(), 13);
    }

    #[test]
    fn zero_floor_has_nonnegative_fidelity_coefficients() {
        let pool = pool_from_balls(3, &[&[0, 1, 2], &[1, 2], &[2]], &[(0, 1), (1, 2)]);
        let m = build_ip(&pool, 2, 0.0).unwrap();
        for c in m.constraints.iter().filter(|c| c.family == ConstraintFamily::Fidelity) {
            assert!(c.terms.iter().all(|&(_, a)| a >= 0.0));
        }
    }

    #[test]
    fn identity_within_keeps_diagonal_z_only() {
        let pool = pool_from_balls(4, &[&[0], &[1], &[2], &[3]], &[]);
        let m = build_ip(&pool, 1, 0.7).unwrap();
        assert_eq!(m.z_count(), 4);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m.has_z(i, j), i == j);
            }
        }
        assert_eq!(m.presolved_out, 12);
    }

    #[test]
    fn fidelity_coefficients_follow_agreement() {
        let pool = pool_from_balls(2, &[&[0, 1]], &[(0, 1)]);
        let m = build_ip(&pool, 1, 0.7).unwrap();
        let fid = m.constraints.iter().find(|c| c.name == "fid_0").unwrap();
        let coeffs: Vec<f64> = fid.terms.iter().map(|t| t.1).collect();
        assert_eq!(coeffs, vec![1.0 - 0.7, -0.7]);
    }

    #[test]
    fn rejects_bad_floor() {
        let pool = pool_from_balls(1, &[&[0]], &[]);
        assert!(build_ip(&pool, 1, 1.5).is_err());
        assert!(build_ip(&pool, 1, -0.1).is_err());
    }
}
