//! Temperature and nucleus (top-p) sampling over the output heads.

use ndarray::ArrayView1;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::OutputDistributions;
use crate::tokenizer::N_SPECIALS;

/// Temperatures below this are treated as greedy decoding.
pub const ARGMAX_TEMPERATURE: f64 = 1e-6;

/// Sampled value tokens for the non-pad positions of one segment.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SampledTokens {
    pub velocity: Vec<u32>,
    pub ioi: Vec<u32>,
    pub duration: Vec<u32>,
}

impl SampledTokens {
    pub fn task(&self, k: usize) -> &[u32] {
        match k {
            0 => &self.velocity,
            1 => &self.ioi,
            _ => &self.duration,
        }
    }

    fn task_mut(&mut self, k: usize) -> &mut Vec<u32> {
        match k {
            0 => &mut self.velocity,
            1 => &mut self.ioi,
            _ => &mut self.duration,
        }
    }
}

fn argmax_value_token(logits: ArrayView1<'_, f64>) -> u32 {
    let mut best = N_SPECIALS as usize;
    for i in best + 1..logits.len() {
        if logits[i] > logits[best] {
            best = i;
        }
    }
    best as u32
}

/// Draws one token from a logit row. Special tokens are never drawn.
pub fn sample_row<R: Rng + ?Sized>(
    logits: ArrayView1<'_, f64>,
    temperature: f64,
    top_p: f64,
    rng: &mut R,
) -> u32 {
    if temperature < ARGMAX_TEMPERATURE {
        return argmax_value_token(logits);
    }
    let first = N_SPECIALS as usize;
    let scaled: Vec<f64> = logits.iter().skip(first).map(|l| l / temperature).collect();
    let max = scaled.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let weights: Vec<f64> = scaled.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // stable sort keeps lower ids first among equal probabilities
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]));
    let mut nucleus = order.len();
    let mut cum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        cum += weights[i] / total;
        if cum >= top_p {
            nucleus = rank + 1;
            break;
        }
    }
    let kept = &order[..nucleus];
    if kept.len() == 1 {
        return (kept[0] + first) as u32;
    }
    let mass: f64 = kept.iter().map(|&i| weights[i]).sum();
    let mut u = rng.random::<f64>() * mass;
    for &i in kept {
        u -= weights[i];
        if u < 0.0 {
            return (i + first) as u32;
        }
    }
    (kept[kept.len() - 1] + first) as u32
}

/// Samples every non-pad position of every head with a caller-owned RNG.
/// Rows are visited in position order, velocity then IOI then duration.
pub fn sample_with_rng<R: Rng + ?Sized>(
    dist: &OutputDistributions,
    temperature: f64,
    top_p: f64,
    rng: &mut R,
) -> SampledTokens {
    assert!(top_p > 0.0 && top_p <= 1.0, "top_p must lie in (0, 1]");
    let mut out = SampledTokens::default();
    for row in 0..dist.n_valid {
        for k in 0..3 {
            let tok = sample_row(dist.logits(k).row(row), temperature, top_p, rng);
            out.task_mut(k).push(tok);
        }
    }
    out
}

pub fn sample(dist: &OutputDistributions, temperature: f64, top_p: f64, seed: u64) -> SampledTokens {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with_rng(dist, temperature, top_p, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, Array2};

    fn row(values: &[f64]) -> ndarray::Array1<f64> {
        // four special slots that would win if they were not masked
        let mut v = vec![100.0; 4];
        v.extend_from_slice(values);
        arr1(&v)
    }

    #[test]
    fn near_zero_temperature_is_argmax() {
        let r = row(&[0.1, 3.0, 2.9, 3.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_row(r.view(), 1e-9, 0.9, &mut rng), 5);
    }

    #[test]
    fn tiny_nucleus_is_deterministic() {
        let r = row(&[0.0, 2.0, 1.0]);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            assert_eq!(sample_row(r.view(), 1.0, 0.05, &mut rng), 5);
        }
    }

    #[test]
    fn nucleus_excludes_tail() {
        // probabilities 1/7, 2/7, 4/7: top_p 0.6 keeps the two largest
        let r = row(&[0.0, 2f64.ln(), 4f64.ln()]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..2000 {
            assert_ne!(sample_row(r.view(), 1.0, 0.6, &mut rng), 4);
        }
    }

    #[test]
    fn pads_are_not_sampled() {
        let dist = OutputDistributions {
            velocity: Array2::zeros((8, 68)),
            ioi: Array2::zeros((8, 772)),
            duration: Array2::zeros((8, 1156)),
            n_valid: 3,
        };
        let s = sample(&dist, 1.0, 1.0, 0);
        assert_eq!(s.velocity.len(), 3);
        assert!(s.ioi.iter().all(|&t| t >= 4));
        assert_eq!(s, sample(&dist, 1.0, 1.0, 0));
    }
}
