//! Triplet similarity embedding.
//!
//! Learns `W` so that `(W a)·(W p)` exceeds `(W a)·(W n)` by a margin:
//!
//! ```text
//! loss = max(0, α + aᵀWᵀW n − aᵀWᵀW p)
//! W   ← W − η W (a (n − p)ᵀ + (n − p) aᵀ)      when loss > 0
//! ```
//!
//! The hardest negative for a fixed anchor and positive is the one with the
//! largest projected similarity to the anchor.

use rand::Rng;

use crate::dataset::LabeledDataset;
use crate::error::Result;
use crate::linalg;
use crate::pca::EmbeddingMatrix;
use crate::triplet::{self, Objective, RankOne, TrainConfig, TrainReport};

#[derive(Debug, Clone, Copy)]
pub struct Similarity;

impl Objective for Similarity {
    const NAME: &'static str = "tse";

    fn loss(pa: &[f64], pp: &[f64], pn: &[f64], alpha: f64) -> f64 {
        (alpha + linalg::dot(pa, pn) - linalg::dot(pa, pp)).max(0.0)
    }

    fn hardness(pa: &[f64], pn: &[f64]) -> f64 {
        linalg::dot(pa, pn)
    }

    // ∇W = (W a)(n − p)ᵀ + (W (n − p)) aᵀ
    fn gradient() -> [RankOne; 2] {
        [
            RankOne {
                scale: 1.0,
                left: [1.0, 0.0, 0.0],
                right: [0.0, -1.0, 1.0],
            },
            RankOne {
                scale: 1.0,
                left: [0.0, -1.0, 1.0],
                right: [1.0, 0.0, 0.0],
            },
        ]
    }
}

pub fn tse_loss(w: &EmbeddingMatrix, a: &[f64], p: &[f64], n: &[f64], alpha: f64) -> Result<f64> {
    triplet::triplet_loss::<Similarity>(w, a, p, n, alpha)
}

/// One unconditional SGD step. Callers apply it only when `tse_loss > 0`.
pub fn tse_update(
    w: &EmbeddingMatrix,
    a: &[f64],
    p: &[f64],
    n: &[f64],
    eta: f64,
) -> Result<EmbeddingMatrix> {
    triplet::gradient_step::<Similarity>(w, a, p, n, eta)
}

/// Draws `pool_size` negatives for anchor row `a` and returns the one most
/// similar to it under `W`.
pub fn mine_hard_negative<R: Rng>(
    w: &EmbeddingMatrix,
    ds: &LabeledDataset,
    a: usize,
    pool_size: usize,
    rng: &mut R,
) -> Result<usize> {
    triplet::mine::<Similarity, R>(w, ds, a, pool_size, rng)
}

pub fn train_tse(ds: &LabeledDataset, cfg: &TrainConfig) -> Result<(EmbeddingMatrix, TrainReport)> {
    triplet::train::<Similarity>(ds, cfg)
}
