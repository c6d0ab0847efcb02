//! Synthetic clustered unit vectors for testing the embedding end to end.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{normalize_unit, LabeledDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub dim: usize,
    /// Standard deviation of the isotropic Gaussian added to each class mean.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_classes: 20,
            samples_per_class: 50,
            dim: 512,
            noise_sigma: 0.4,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if self.num_classes < 2 {
            return fail(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if self.samples_per_class < 2 {
            return fail(format!(
                "need at least 2 samples per class, got {}",
                self.samples_per_class
            ));
        }
        if self.dim < 2 {
            return fail(format!("dimension must be at least 2, got {}", self.dim));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail(format!(
                "noise sigma must be >= 0, got {}",
                self.noise_sigma
            ));
        }
        Ok(())
    }
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        if let Ok(v) = normalize_unit(&g) {
            return v.into_inner();
        }
    }
}

/// Generates `num_classes × samples_per_class` labeled unit vectors.
///
/// Draw order: all class means first (each a normalized standard Gaussian
/// vector), then the samples of class 0, class 1, and so on. Each sample is
/// `normalize(mean + σ ε)` with `ε ~ N(0, I)`. With `σ = 0` samples are exact
/// copies of their mean and no noise is drawn. Labels are `0..num_classes`
/// and rows are grouped by class.
pub fn generate_clusters(cfg: &SynthConfig) -> Result<LabeledDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let means: Vec<Vec<f64>> = (0..cfg.num_classes)
        .map(|_| unit_gaussian(&mut rng, cfg.dim))
        .collect();

    let total = cfg.num_classes * cfg.samples_per_class;
    let mut features = Vec::with_capacity(total * cfg.dim);
    let mut labels = Vec::with_capacity(total);
    let mut buf = vec![0.0; cfg.dim];
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..cfg.samples_per_class {
            if cfg.noise_sigma == 0.0 {
                features.extend_from_slice(mean);
            } else {
                loop {
                    for (b, m) in buf.iter_mut().zip(mean) {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        *b = m + cfg.noise_sigma * e;
                    }
                    if let Ok(v) = normalize_unit(&buf) {
                        features.extend_from_slice(v.as_slice());
                        break;
                    }
                }
            }
            labels.push(c as u64);
        }
    }
    LabeledDataset::new(cfg.dim, features, labels)
}
