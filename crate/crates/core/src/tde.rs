//! Triplet distance embedding, the squared-distance baseline:
//!
//! ```text
//! loss = max(0, α + ‖W(a − p)‖² − ‖W(a − n)‖²)
//! W   ← W − 2η W ((a − p)(a − p)ᵀ − (a − n)(a − n)ᵀ)      when loss > 0
//! ```
//!
//! Trained with the same harness as the similarity objective; the hardest
//! negative is the pool candidate closest to the anchor after projection.

use rand::Rng;

use crate::dataset::LabeledDataset;
use crate::error::Result;
use crate::linalg;
use crate::pca::EmbeddingMatrix;
use crate::triplet::{self, Objective, RankOne, TrainConfig, TrainReport};

#[derive(Debug, Clone, Copy)]
pub struct Distance;

impl Objective for Distance {
    const NAME: &'static str = "tde";

    fn loss(pa: &[f64], pp: &[f64], pn: &[f64], alpha: f64) -> f64 {
        (alpha + linalg::sq_dist(pa, pp) - linalg::sq_dist(pa, pn)).max(0.0)
    }

    fn hardness(pa: &[f64], pn: &[f64]) -> f64 {
        -linalg::sq_dist(pa, pn)
    }

    // ∇W = 2 (W u) uᵀ − 2 (W v) vᵀ with u = a − p, v = a − n
    fn gradient() -> [RankOne; 2] {
        [
            RankOne {
                scale: 2.0,
                left: [1.0, -1.0, 0.0],
                right: [1.0, -1.0, 0.0],
            },
            RankOne {
                scale: -2.0,
                left: [1.0, 0.0, -1.0],
                right: [1.0, 0.0, -1.0],
            },
        ]
    }
}

pub fn tde_loss(w: &EmbeddingMatrix, a: &[f64], p: &[f64], n: &[f64], alpha: f64) -> Result<f64> {
    triplet::triplet_loss::<Distance>(w, a, p, n, alpha)
}

/// One unconditional SGD step. Callers apply it only when `tde_loss > 0`.
pub fn tde_update(
    w: &EmbeddingMatrix,
    a: &[f64],
    p: &[f64],
    n: &[f64],
    eta: f64,
) -> Result<EmbeddingMatrix> {
    triplet::gradient_step::<Distance>(w, a, p, n, eta)
}

/// Draws `pool_size` negatives for anchor row `a` and returns the one nearest
/// to it under `W`.
pub fn mine_hard_negative_tde<R: Rng>(
    w: &EmbeddingMatrix,
    ds: &LabeledDataset,
    a: usize,
    pool_size: usize,
    rng: &mut R,
) -> Result<usize> {
    triplet::mine::<Distance, R>(w, ds, a, pool_size, rng)
}

pub fn train_tde(ds: &LabeledDataset, cfg: &TrainConfig) -> Result<(EmbeddingMatrix, TrainReport)> {
    triplet::train::<Distance>(ds, cfg)
}
