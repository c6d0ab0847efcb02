//! Synthetic end-to-end experiment: generate clusters, hold out samples per
//! class, train both objectives on the rest, and score raw features and both
//! embeddings on the held-out rows.
//!
//! Data and matrices are rounded to single precision before use so that
//! running the CLI evaluation commands on the files written for an
//! experiment reproduces its numbers exactly.

use std::fmt::Write as _;

use crate::dataset::{LabeledDataset, PairProtocol, Template, TemplateSet};
use crate::error::{Error, Result};
use crate::eval::{self, Identification, ScoreMode, VerificationReport};
use crate::pca::EmbeddingMatrix;
use crate::synth::{generate_clusters, SynthConfig};
use crate::tde::train_tde;
use crate::triplet::{TrainConfig, TrainReport};
use crate::tse::train_tse;

/// Ranks reported for identification.
pub const RANKS: [usize; 2] = [1, 5];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub synth: SynthConfig,
    /// Samples per class withheld from training.
    pub holdout_per_class: usize,
    pub train: TrainConfig,
    pub mode: ScoreMode,
    pub run_tde: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            holdout_per_class: 10,
            train: TrainConfig::default(),
            mode: ScoreMode::Inner,
            run_tde: true,
        }
    }
}

/// Train/evaluation split and the evaluation protocol over the full dataset.
#[derive(Debug, Clone)]
pub struct Split {
    pub train_rows: Vec<usize>,
    pub eval_rows: Vec<usize>,
    /// One template per held-out row; template id = row index.
    pub eval_templates: TemplateSet,
    /// Every unordered pair of held-out rows.
    pub pairs: PairProtocol,
    /// Per subject, one template averaging the first half of its held-out rows.
    pub gallery: TemplateSet,
    /// The remaining held-out rows as single-row templates.
    pub probes: TemplateSet,
}

/// Withholds the last `per_class` rows of every class.
pub fn holdout_split(ds: &LabeledDataset, per_class: usize) -> Result<Split> {
    let mut train_rows = Vec::new();
    let mut eval_rows = Vec::new();
    let mut gallery = Vec::new();
    let mut probes = Vec::new();
    for (label, rows) in ds.indices_by_label() {
        if rows.len() < per_class + 2 {
            return Err(Error::InvalidConfig(format!(
                "class {label} has {} rows; holding out {per_class} leaves fewer than 2 for training",
                rows.len()
            )));
        }
        let cut = rows.len() - per_class;
        train_rows.extend_from_slice(&rows[..cut]);
        let held = &rows[cut..];
        eval_rows.extend_from_slice(held);
        let g = held.len().div_ceil(2);
        if g > 0 {
            // id offset keeps gallery ids disjoint from row ids
            gallery.push(Template::new(ds.len() as u64 + label, held[..g].to_vec())?);
        }
        probes.extend(held[g..].iter().map(|&r| Template::single(r as u64, r)));
    }
    eval_rows.sort_unstable();
    let eval_templates =
        TemplateSet::new(eval_rows.iter().map(|&r| Template::single(r as u64, r)))?;
    let pairs = PairProtocol::all_pairs(&eval_templates, ds)?;
    Ok(Split {
        train_rows,
        eval_rows,
        eval_templates,
        pairs,
        gallery: TemplateSet::new(gallery)?,
        probes: TemplateSet::new(probes)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub verification: VerificationReport,
    /// `None` when there are no probes to identify.
    pub identification: Option<Identification>,
}

/// Verification over the split's pair protocol plus closed-set identification.
pub fn evaluate(
    w: &EmbeddingMatrix,
    ds: &LabeledDataset,
    split: &Split,
    mode: ScoreMode,
) -> Result<Evaluation> {
    let (verification, _) = eval::verify(w, &split.pairs, &split.eval_templates, ds, mode)?;
    let identification = if split.probes.is_empty() {
        None
    } else {
        Some(eval::identify(
            w,
            &split.gallery,
            &split.probes,
            ds,
            &RANKS,
            mode,
        )?)
    };
    Ok(Evaluation {
        verification,
        identification,
    })
}

#[derive(Debug, Clone)]
pub struct TrainedEmbedding {
    pub matrix: EmbeddingMatrix,
    pub report: TrainReport,
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub dataset: LabeledDataset,
    pub split: Split,
    pub raw: Evaluation,
    pub tse: TrainedEmbedding,
    pub tde: Option<TrainedEmbedding>,
}

impl ExperimentResult {
    /// Plain-text `key=value` report, one section per representation.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut section =
            |name: &str, e: &Evaluation, r: Option<&TrainReport>, w: Option<&EmbeddingMatrix>| {
                writeln!(out, "[{name}]").unwrap();
                if let Some(w) = w {
                    writeln!(out, "d_out={}", w.d_out()).unwrap();
                    writeln!(out, "d_in={}", w.d_in()).unwrap();
                }
                if let Some(r) = r {
                    writeln!(out, "iterations={}", r.iterations_run).unwrap();
                    writeln!(out, "updates={}", r.violations_updated).unwrap();
                    if let Some((_, l)) = r.loss_trace.last() {
                        writeln!(out, "final_window_loss={l:.6}").unwrap();
                    }
                }
                out.push_str(&e.verification.to_text());
                if let Some(id) = &e.identification {
                    out.push_str(&id.to_text());
                }
                out.push('\n');
            };
        section("raw", &self.raw, None, None);
        section(
            "tse",
            &self.tse.evaluation,
            Some(&self.tse.report),
            Some(&self.tse.matrix),
        );
        if let Some(tde) = &self.tde {
            section("tde", &tde.evaluation, Some(&tde.report), Some(&tde.matrix));
        }
        out
    }
}

fn train_and_evaluate(
    train: fn(&LabeledDataset, &TrainConfig) -> Result<(EmbeddingMatrix, TrainReport)>,
    train_set: &LabeledDataset,
    ds: &LabeledDataset,
    split: &Split,
    cfg: &ExperimentConfig,
) -> Result<TrainedEmbedding> {
    let (w, report) = train(train_set, &cfg.train)?;
    let matrix = w.quantized();
    let evaluation = evaluate(&matrix, ds, split, cfg.mode)?;
    Ok(TrainedEmbedding {
        matrix,
        report,
        evaluation,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let ds = generate_clusters(&cfg.synth)?.quantized();
    run_on_dataset(ds, cfg)
}

/// Runs the experiment on an existing dataset; `cfg.synth` is ignored.
pub fn run_on_dataset(ds: LabeledDataset, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let split = holdout_split(&ds, cfg.holdout_per_class)?;
    let train_set = ds.subset(&split.train_rows)?;
    let raw = evaluate(&EmbeddingMatrix::identity(ds.dim()), &ds, &split, cfg.mode)?;
    let tse = train_and_evaluate(train_tse, &train_set, &ds, &split, cfg)?;
    let tde = if cfg.run_tde {
        Some(train_and_evaluate(train_tde, &train_set, &ds, &split, cfg)?)
    } else {
        None
    };
    Ok(ExperimentResult {
        dataset: ds,
        split,
        raw,
        tse,
        tde,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            synth: SynthConfig {
                num_classes: 4,
                samples_per_class: 8,
                dim: 12,
                noise_sigma: 0.3,
                seed: 3,
            },
            holdout_per_class: 3,
            train: TrainConfig {
                max_iter: 300,
                negative_pool: 10,
                d_out: 4,
                seed: 5,
                ..TrainConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn split_shapes() {
        let ds = generate_clusters(&small().synth).unwrap();
        let s = holdout_split(&ds, 3).unwrap();
        assert_eq!(s.train_rows.len(), 20);
        assert_eq!(s.eval_rows.len(), 12);
        assert_eq!(s.pairs.pairs.len(), 66);
        assert_eq!(s.pairs.pairs.iter().filter(|p| p.genuine).count(), 12);
        assert_eq!(s.gallery.len(), 4);
        assert_eq!(s.probes.len(), 4);
        assert!(holdout_split(&ds, 7).is_err());
    }

    #[test]
    fn small_experiment_runs() {
        let r = run_experiment(&small()).unwrap();
        assert_eq!(r.tse.matrix.d_out(), 4);
        assert_eq!(r.tse.report.iterations_run, 300);
        let text = r.to_text();
        assert!(text.contains("[raw]") && text.contains("[tse]") && text.contains("[tde]"));
        assert!(text.contains("rank_5="));
    }
}
