//! I.i.d. jump inputs `v` with draws keyed by `(seed, jump index)`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Result, ShdsError};

pub type SamplerFn = Arc<dyn Fn(&mut ChaCha8Rng) -> Vec<f64> + Send + Sync>;

/// Tolerance on the total mass of a finite-support distribution.
pub const PROBABILITY_SUM_TOL: f64 = 1e-12;

/// Distribution `mu` of the jump input.
///
/// Draws never depend on how many draws were made before: the `k`-th jump
/// of a path with seed `s` always receives `draw(s, k)`, so refining the
/// integrator step leaves the realized jump sequence unchanged.
#[derive(Clone)]
pub enum JumpNoise {
    FiniteSupport {
        values: Vec<Vec<f64>>,
        probs: Vec<f64>,
    },
    Sampler {
        dim: usize,
        sample: SamplerFn,
    },
}

impl fmt::Debug for JumpNoise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JumpNoise::FiniteSupport { values, probs } => f
                .debug_struct("FiniteSupport")
                .field("values", values)
                .field("probs", probs)
                .finish(),
            JumpNoise::Sampler { dim, .. } => {
                f.debug_struct("Sampler").field("dim", dim).finish_non_exhaustive()
            }
        }
    }
}

impl JumpNoise {
    pub fn finite(support: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        if support.is_empty() {
            return Err(ShdsError::InvalidParameter("empty noise support".into()));
        }
        let dim = support[0].0.len();
        let mut values = Vec::with_capacity(support.len());
        let mut probs = Vec::with_capacity(support.len());
        for (v, p) in support {
            if v.len() != dim {
                return Err(ShdsError::DimensionMismatch {
                    what: "noise support value".into(),
                    expected: dim,
                    got: v.len(),
                });
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(ShdsError::InvalidParameter(format!(
                    "probability {p} outside [0, 1]"
                )));
            }
            values.push(v);
            probs.push(p);
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROBABILITY_SUM_TOL {
            return Err(ShdsError::ProbabilitySum(total));
        }
        Ok(JumpNoise::FiniteSupport { values, probs })
    }

    pub fn sampler(dim: usize, sample: SamplerFn) -> Self {
        JumpNoise::Sampler { dim, sample }
    }

    /// Scaled Bernoulli input: `value_hi` with probability `p`, else `value_lo`.
    pub fn bernoulli(p: f64, value_hi: f64, value_lo: f64) -> Result<Self> {
        Self::finite(vec![(vec![value_hi], p), (vec![value_lo], 1.0 - p)])
    }

    pub fn dim(&self) -> usize {
        match self {
            JumpNoise::FiniteSupport { values, .. } => values[0].len(),
            JumpNoise::Sampler { dim, .. } => *dim,
        }
    }

    pub fn draw(&self, seed: u64, jump_index: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, jump_index);
        match self {
            JumpNoise::FiniteSupport { values, probs } => {
                let u: f64 = rng.gen();
                values[pick(probs, u)].clone()
            }
            JumpNoise::Sampler { sample, .. } => sample(&mut rng),
        }
    }

    /// Points of the support used by grid checks. For sampler-only noise
    /// this is `count` draws from a fixed stream.
    pub fn support_sample(&self, count: usize) -> Vec<Vec<f64>> {
        match self {
            JumpNoise::FiniteSupport { values, .. } => values.clone(),
            JumpNoise::Sampler { .. } => (0..count as u64).map(|k| self.draw(0, k)).collect(),
        }
    }
}

/// Independent ChaCha stream for one `(seed, index)` pair.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn pick(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc && p > 0.0 {
            return i;
        }
    }
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probabilities_must_sum_to_one() {
        let err = JumpNoise::finite(vec![(vec![0.0], 0.6), (vec![1.0], 0.5)]).unwrap_err();
        assert_eq!(err.to_string(), "probabilities sum to 1.1");
        assert!(JumpNoise::finite(vec![(vec![0.0], 0.25), (vec![1.0], 0.75)]).is_ok());
    }

    #[test]
    fn draws_are_keyed_by_seed_and_index() {
        let noise = JumpNoise::bernoulli(0.3, 0.75, -0.75).unwrap();
        for k in 0..50 {
            assert_eq!(noise.draw(7, k), noise.draw(7, k));
        }
        let a: Vec<_> = (0..64).map(|k| noise.draw(1, k)).collect();
        let b: Vec<_> = (0..64).map(|k| noise.draw(2, k)).collect();
        assert_ne!(a, b);
    }

    #[test]
    fn degenerate_distributions() {
        let never = JumpNoise::bernoulli(0.0, 0.75, -0.75).unwrap();
        let always = JumpNoise::bernoulli(1.0, 0.75, -0.75).unwrap();
        for k in 0..1000 {
            assert_eq!(never.draw(3, k), vec![-0.75]);
            assert_eq!(always.draw(3, k), vec![0.75]);
        }
    }

    #[test]
    fn empirical_frequencies_match_probabilities() {
        let p = 0.1;
        let noise = JumpNoise::bernoulli(p, 0.75, -0.75).unwrap();
        let n = 100_000u64;
        let hits = (0..n).filter(|&k| noise.draw(11, k)[0] == 0.75).count() as f64;
        let freq = hits / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() < 3.0 * se, "freq {freq}");
    }
}
