//! Ornstein-Uhlenbeck exploration noise.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Discrete OU recurrence with `dt = 1`:
/// `x <- x + theta * (mean - x) + sigma * N(0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuNoise {
    pub value: Vec<f64>,
    pub theta: f64,
    pub sigma: f64,
    pub mean: Vec<f64>,
}

impl OuNoise {
    pub fn new(dim: usize, theta: f64, sigma: f64) -> Self {
        OuNoise { value: vec![0.0; dim], theta, sigma, mean: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.value.len()
    }

    /// Advance the process one step and return the new value.
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        for (v, &m) in self.value.iter_mut().zip(&self.mean) {
            let eps: f64 = rng.sample(StandardNormal);
            *v += self.theta * (m - *v) + self.sigma * eps;
        }
        self.value.clone()
    }

    pub fn reset(&mut self) {
        self.value.clone_from(&self.mean);
    }

    /// Stationary standard deviation of the recurrence, `sigma / sqrt(2 theta - theta^2)`.
    pub fn stationary_std(&self) -> f64 {
        self.sigma / (2.0 * self.theta - self.theta * self.theta).sqrt()
    }
}

/// An OU process together with the random stream that drives it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explorer {
    pub noise: OuNoise,
    pub rng: ChaCha8Rng,
}

impl Explorer {
    pub fn new(dim: usize, theta: f64, sigma: f64, seed: u64) -> Self {
        Explorer { noise: OuNoise::new(dim, theta, sigma), rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn sample(&mut self) -> Vec<f64> {
        self.noise.sample(&mut self.rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_recurrence_without_diffusion() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ou = OuNoise::new(1, 0.15, 0.0);
        ou.value = vec![1.0];
        assert!((ou.sample(&mut rng)[0] - 0.85).abs() < 1e-15);
        let mut still = OuNoise::new(2, 0.15, 0.0);
        assert_eq!(still.sample(&mut rng), vec![0.0, 0.0]);
    }

    #[test]
    fn reset_returns_to_mean() {
        let mut e = Explorer::new(3, 0.15, 0.2, 1);
        e.sample();
        e.noise.reset();
        assert_eq!(e.noise.value, vec![0.0; 3]);
    }

    #[test]
    fn stationary_std_formula() {
        let ou = OuNoise::new(1, 0.15, 0.2);
        assert!((ou.stationary_std() - 0.2 / 0.2775f64.sqrt()).abs() < 1e-15);
    }
}
