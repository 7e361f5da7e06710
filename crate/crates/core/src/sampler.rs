//! Uniform perturbation samples from the mixed-metric ball around a point.
//!
//! The metric is `max(ℓ∞ over continuous features, ℓ1 over binary features)`.
//! Since binary ℓ1 distances are integers, `d(x, c) <= r` is the same as the
//! product ball `ℓ∞_c <= r` and `hamming_b <= floor(r)` that the sampler
//! draws from.

use rand::seq::index;
use rand::Rng;

use crate::data::{FeatureKind, FeatureSchema};
use crate::error::{Error, Result};
use crate::rng;
use crate::tree::Rows;

pub const DEFAULT_SAMPLES: usize = 10_000;

pub fn mixed_distance(kinds: &[FeatureKind], a: &[f64], b: &[f64]) -> f64 {
    let mut linf = 0.0f64;
    let mut hamming = 0.0f64;
    for ((k, x), y) in kinds.iter().zip(a).zip(b) {
        match k {
            FeatureKind::Continuous => linf = linf.max((x - y).abs()),
            FeatureKind::Binary => hamming += (x - y).abs(),
        }
    }
    linf.max(hamming)
}

pub fn within_ball(kinds: &[FeatureKind], center: &[f64], x: &[f64], r: f64) -> bool {
    mixed_distance(kinds, center, x) <= r
}

/// Samples drawn around `center`; `points` is row-major N×m.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub center: Vec<f64>,
    pub radius: f64,
    pub points: Vec<f64>,
    pub dim: usize,
    pub seed: u64,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn rows(&self) -> Rows<'_> {
        Rows::new(&self.points, self.dim)
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
}

/// Continuous coordinates are uniform on `[c - r, c + r]`; for binary ones a
/// flip count `k` is drawn uniformly from `0..=min(floor(r), |binary|)` and a
/// uniform `k`-subset of binary features is flipped. Each sample is drawn
/// independently from the center.
pub fn sample_ball(center: &[f64], r: f64, n: usize, schema: &FeatureSchema, seed: u64) -> Result<SampleSet> {
    if r < 0.0 || !r.is_finite() {
        return Err(Error::invalid(format!("radius must be a finite value >= 0, got {r}")));
    }
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    if center.len() != schema.len() {
        return Err(Error::DimensionMismatch {
            expected: schema.len(),
            got: center.len(),
        });
    }
    let continuous = schema.continuous();
    let binary = schema.binary();
    let max_flips = (r.floor() as usize).min(binary.len());
    let m = schema.len();
    let mut rng = rng::rng_from(seed);
    let mut points = Vec::with_capacity(n * m);
    for _ in 0..n {
        let start = points.len();
        points.extend_from_slice(center);
        let row = &mut points[start..start + m];
        if r > 0.0 {
            for &f in &continuous {
                row[f] = rng.random_range(center[f] - r..=center[f] + r);
            }
        }
        if max_flips > 0 {
            let k = rng.random_range(0..=max_flips);
            for pick in index::sample(&mut rng, binary.len(), k) {
                let f = binary[pick];
                row[f] = 1.0 - row[f];
            }
        }
    }
    Ok(SampleSet {
        center: center.to_vec(),
        radius: r,
        points,
        dim: m,
        seed,
    })
}
