//! Small synthetic pools for solver testing and benchmarking.

use rand::Rng;

use super::CandidatePool;
use crate::rng;

/// Pool over `n` points where candidate `i` is centered at point `i` and
/// owns the listed ball; `(i, j)` pairs in `disagree` are disagreements.
pub fn pool_from_balls(n: usize, balls: &[&[usize]], disagree: &[(usize, usize)]) -> CandidatePool {
    let within = balls.iter().map(|b| (0..n).map(|j| b.contains(&j)).collect()).collect();
    let agree = (0..balls.len())
        .map(|i| (0..n).map(|j| !disagree.contains(&(i, j))).collect())
        .collect();
    let centers = balls.iter().map(|b| b[0]).collect();
    CandidatePool::from_matrices(centers, vec![1.0; balls.len()], within, agree)
        .expect("ball lists start with their center")
}

/// Random pool with one candidate per point: each off-diagonal pair is in
/// the ball with probability `p_within`, and each pair disagrees with
/// probability `p_disagree`.
pub fn random_pool(seed: u64, n: usize, p_within: f64, p_disagree: f64) -> CandidatePool {
    let mut rng = rng::rng_from(rng::derive_seed(seed, rng::stream::INSTANCE, n as u64));
    let within = (0..n)
        .map(|i| (0..n).map(|j| i == j || rng.random_bool(p_within)).collect())
        .collect();
    let agree = (0..n)
        .map(|_| (0..n).map(|_| !rng.random_bool(p_disagree)).collect())
        .collect();
    CandidatePool::from_matrices((0..n).collect(), vec![1.0; n], within, agree).expect("diagonal is within")
}
