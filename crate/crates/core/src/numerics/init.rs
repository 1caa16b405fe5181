//! Seeded weight initialisation.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

/// Embedding tables: U(-0.05, 0.05).
pub fn embedding<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let dist = Uniform::new_inclusive(-0.05, 0.05);
    (0..n).map(|_| dist.sample(rng)).collect()
}

/// Projection weights: N(0, std^2) with std = 1/sqrt(fan_in).
pub fn projection<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Vec<f64> {
    let std = 1.0 / (fan_in as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("finite std");
    (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect()
}

pub fn zeros(n: usize) -> Vec<f64> {
    vec![0.0; n]
}

pub fn ones(n: usize) -> Vec<f64> {
    vec![1.0; n]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn embedding_respects_bound() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let w = embedding(2048, &mut rng);
        assert!(w.iter().all(|x| x.abs() <= 0.05));
    }

    #[test]
    fn same_seed_same_weights() {
        let mut r1 = ChaCha20Rng::seed_from_u64(42);
        let mut r2 = ChaCha20Rng::seed_from_u64(42);
        assert_eq!(embedding(64, &mut r1), embedding(64, &mut r2));
        assert_eq!(projection(8, 8, &mut r1), projection(8, 8, &mut r2));
    }

    #[test]
    fn projection_std_scales_with_fan_in() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let w = projection(64, 1000, &mut rng);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / w.len() as f64;
        let expected_std = 1.0 / 8.0;
        assert!(mean.abs() < 2e-3);
        assert!((var.sqrt() - expected_std).abs() < 2e-3);
    }
}
