mod common;

use common::*;
use proptest::prelude::*;
use tse_core::dataset::{LabeledDataset, TemplateSet};
use tse_core::eval::{self, ScoreMode, ScoreSet};
use tse_core::pca::EmbeddingMatrix;
use tse_core::tde::{mine_hard_negative_tde, Distance};
use tse_core::triplet::{TrainConfig, Trainer};
use tse_core::tse::Similarity;
use tse_core::{
    generate_clusters, mine_hard_negative, tde_loss, tde_update, tse_loss, tse_update, Execution,
    PairProtocol, SynthConfig,
};

const D_IN: usize = 6;
const D_OUT: usize = 3;

fn vector(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, len)
}

fn unit(len: usize) -> impl Strategy<Value = Vec<f64>> {
    vector(len)
        .prop_filter("non-degenerate", |v| dot(v, v) > 1e-3)
        .prop_map(|v| {
            let n = dot(&v, &v).sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
}

fn matrix() -> impl Strategy<Value = EmbeddingMatrix> {
    vector(D_OUT * D_IN).prop_map(|d| EmbeddingMatrix::from_rows(D_OUT, D_IN, d).unwrap())
}

fn dataset() -> impl Strategy<Value = LabeledDataset> {
    (2usize..5, 2usize..6, any::<u64>()).prop_map(|(k, n, seed)| {
        generate_clusters(&SynthConfig {
            num_classes: k,
            samples_per_class: n,
            dim: D_IN,
            noise_sigma: 0.7,
            seed,
        })
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn losses_are_non_negative(w in matrix(), a in vector(D_IN), p in vector(D_IN), n in vector(D_IN), alpha in 0.0f64..1.0) {
        prop_assert!(tse_loss(&w, &a, &p, &n, alpha).unwrap() >= 0.0);
        prop_assert!(tde_loss(&w, &a, &p, &n, alpha).unwrap() >= 0.0);
    }

    #[test]
    fn tse_update_matches_finite_differences(w in matrix(), a in unit(D_IN), p in unit(D_IN), n in unit(D_IN)) {
        let wd = to_dense(D_OUT, D_IN, w.as_slice());
        prop_assume!(naive_tse_loss(&wd, &a, &p, &n, 0.1) > 1e-6);
        let fd = fd_gradient(&wd, 1e-6, |m| naive_tse_loss(m, &a, &p, &n, 0.1));
        let step = tse_update(&w, &a, &p, &n, 1.0).unwrap();
        let grad: Vec<f64> = w.as_slice().iter().zip(step.as_slice()).map(|(x0, x1)| x0 - x1).collect();
        prop_assert!(max_rel_error(&to_dense(D_OUT, D_IN, &grad), &fd) < 1e-5);
    }

    #[test]
    fn tde_update_matches_finite_differences(w in matrix(), a in unit(D_IN), p in unit(D_IN), n in unit(D_IN)) {
        let wd = to_dense(D_OUT, D_IN, w.as_slice());
        prop_assume!(naive_tde_loss(&wd, &a, &p, &n, 0.1) > 1e-6);
        let fd = fd_gradient(&wd, 1e-6, |m| naive_tde_loss(m, &a, &p, &n, 0.1));
        let step = tde_update(&w, &a, &p, &n, 1.0).unwrap();
        let grad: Vec<f64> = w.as_slice().iter().zip(step.as_slice()).map(|(x0, x1)| x0 - x1).collect();
        prop_assert!(max_rel_error(&to_dense(D_OUT, D_IN, &grad), &fd) < 1e-5);
    }

    #[test]
    fn degenerate_updates_are_exact_no_ops(w in matrix(), a in unit(D_IN), p in unit(D_IN), n in unit(D_IN)) {
        prop_assert_eq!(&tse_update(&w, &a, &p, &p, 0.3).unwrap(), &w);
        prop_assert_eq!(&tde_update(&w, &a, &p, &p, 0.3).unwrap(), &w);
        prop_assert_eq!(&tse_update(&w, &a, &p, &n, 0.0).unwrap(), &w);
        prop_assert_eq!(&tde_update(&w, &a, &p, &n, 0.0).unwrap(), &w);
    }

    #[test]
    fn rescaling_w_keeps_the_mined_negative(ds in dataset(), w in matrix(), c in 0.01f64..100.0, seed in any::<u64>(), pool in 1usize..40) {
        let scaled = w.scaled(c);
        let a = (seed % ds.len() as u64) as usize;
        let mut r = [rng(seed), rng(seed), rng(seed), rng(seed)];
        prop_assert_eq!(
            mine_hard_negative(&w, &ds, a, pool, &mut r[0]).unwrap(),
            mine_hard_negative(&scaled, &ds, a, pool, &mut r[1]).unwrap()
        );
        prop_assert_eq!(
            mine_hard_negative_tde(&w, &ds, a, pool, &mut r[2]).unwrap(),
            mine_hard_negative_tde(&scaled, &ds, a, pool, &mut r[3]).unwrap()
        );
    }

    #[test]
    fn roc_is_a_monotone_staircase(g in prop::collection::vec(-3.0f64..3.0, 1..60), i in prop::collection::vec(-3.0f64..3.0, 1..60), t in 0.0f64..1.0) {
        let curve = eval::roc(&ScoreSet::new(g, i).unwrap()).unwrap();
        let first = curve.points[0];
        let last = *curve.points.last().unwrap();
        prop_assert_eq!((first.far, first.tar), (0.0, 0.0));
        prop_assert_eq!((last.far, last.tar), (1.0, 1.0));
        for w in curve.points.windows(2) {
            prop_assert!(w[1].far >= w[0].far && w[1].tar >= w[0].tar);
            prop_assert!(w[1].far > w[0].far || w[1].tar > w[0].tar);
        }
        let e = eval::eer(&curve);
        prop_assert!((0.0..=1.0).contains(&e));
        let tar = eval::tar_at_far(&curve, t);
        prop_assert!((0.0..=1.0).contains(&tar));
        prop_assert!(eval::tar_at_far(&curve, (t + 0.1).min(1.0)) >= tar);
    }

    #[test]
    fn execution_modes_agree(ds in dataset(), seed in any::<u64>()) {
        let cfg = TrainConfig { d_out: 2, negative_pool: 7, seed, eta: 0.05, ..TrainConfig::default() };
        let mut seq = Trainer::<Similarity>::new(&ds, cfg.clone()).unwrap().execution(Execution::Sequential);
        let mut par = Trainer::<Similarity>::new(&ds, cfg.clone()).unwrap().execution(Execution::Parallel);
        let mut seq_d = Trainer::<Distance>::new(&ds, cfg.clone()).unwrap().execution(Execution::Sequential);
        let mut par_d = Trainer::<Distance>::new(&ds, cfg).unwrap().execution(Execution::Parallel);
        for _ in 0..100 {
            prop_assert_eq!(seq.step().unwrap(), par.step().unwrap());
            prop_assert_eq!(seq_d.step().unwrap(), par_d.step().unwrap());
        }
        prop_assert_eq!(seq.matrix(), par.matrix());
        prop_assert_eq!(seq_d.matrix(), par_d.matrix());

        let templates = TemplateSet::singletons(&ds);
        let protocol = PairProtocol::all_pairs(&templates, &ds).unwrap();
        for mode in [ScoreMode::Inner, ScoreMode::Cosine] {
            let w = seq.matrix();
            let s = eval::score_protocol_with(w, &protocol, &templates, &ds, mode, Execution::Sequential);
            let p = eval::score_protocol_with(w, &protocol, &templates, &ds, mode, Execution::Parallel);
            prop_assert_eq!(s.ok(), p.ok());
        }
    }
}
