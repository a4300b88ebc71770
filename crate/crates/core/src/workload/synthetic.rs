use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::VectorDataset;

/// Isotropic Gaussian mixture: centers uniform in `[-spread, spread]^dim`,
/// unit-free `std` per coordinate, components drawn with equal probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaussianMixture {
    pub n: usize,
    pub dim: usize,
    pub clusters: usize,
    pub spread: f64,
    pub std: f64,
    pub seed: u64,
}

impl Default for GaussianMixture {
    fn default() -> Self {
        Self {
            n: 100_000,
            dim: 32,
            clusters: 100,
            spread: 10.0,
            std: 2.0,
            seed: 0,
        }
    }
}

impl GaussianMixture {
    /// Vectors with ids `0..n` and the component label of each row.
    pub fn generate(&self) -> Result<(VectorDataset<f32>, Vec<usize>)> {
        if self.n == 0 || self.dim == 0 || self.clusters == 0 {
            return Err(Error::Spec("mixture needs n, dim and clusters >= 1".into()));
        }
        let normal = Normal::new(0.0, self.std).map_err(|e| Error::Spec(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let centers: Vec<f64> = (0..self.clusters * self.dim)
            .map(|_| rng.random_range(-self.spread..=self.spread))
            .collect();
        let mut data = Vec::with_capacity(self.n * self.dim);
        let mut labels = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            let c = rng.random_range(0..self.clusters);
            labels.push(c);
            let center = &centers[c * self.dim..(c + 1) * self.dim];
            data.extend(center.iter().map(|m| (m + normal.sample(&mut rng)) as f32));
        }
        Ok((VectorDataset::from_flat(self.dim, data)?, labels))
    }
}
