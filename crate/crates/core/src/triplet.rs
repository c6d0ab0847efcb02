//! Online triplet SGD harness shared by the similarity and distance objectives.
//!
//! One iteration draws an anchor, a positive and a pool of negative
//! candidates from a single seeded generator, in that order. The hardest
//! candidate under the current matrix is kept, and the matrix takes one SGD
//! step only when the hinge loss of the triplet is strictly positive.
//!
//! Both objectives have gradients of the form `Σ s · (W x) yᵀ` where `x` and
//! `y` are fixed combinations of the triplet rows. The trainer keeps the
//! projected dataset `W X` in memory and applies the same rank-two correction
//! to it after each update, so mining a pool costs `pool × d_out` instead of
//! `pool × d_out × d_in`.

use std::marker::PhantomData;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::linalg;
use crate::pca::{self, EmbeddingMatrix};

/// Hinge losses are averaged over windows of this many iterations.
pub const LOSS_WINDOW: usize = 1000;

/// The projected cache is recomputed from scratch after this many updates.
const REFRESH_EVERY: usize = 1000;

/// Row-similarity tables are precomputed for datasets up to this size.
const GRAM_MAX_ROWS: usize = 2048;

/// Row indices of an anchor, a positive of the same class and a negative of
/// another class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub a: usize,
    pub p: usize,
    pub n: usize,
}

impl Triplet {
    pub fn new(ds: &LabeledDataset, a: usize, p: usize, n: usize) -> Result<Self> {
        let bad = |reason| Err(Error::InvalidTriplet { a, p, n, reason });
        if a >= ds.len() || p >= ds.len() || n >= ds.len() {
            return bad("index out of range");
        }
        if a == p {
            return bad("anchor and positive are the same row");
        }
        if ds.label(a) != ds.label(p) {
            return bad("positive has a different label");
        }
        if ds.label(n) == ds.label(a) {
            return bad("negative shares the anchor label");
        }
        Ok(Self { a, p, n })
    }
}

/// Learning-rate schedule. The default holds the rate constant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum EtaSchedule {
    #[default]
    Constant,
    /// Multiply the rate by `factor` every `every` iterations.
    Step { factor: f64, every: usize },
}

impl EtaSchedule {
    pub fn rate(&self, eta: f64, iteration: usize) -> f64 {
        match *self {
            EtaSchedule::Constant => eta,
            EtaSchedule::Step { factor, every } => eta * factor.powi((iteration / every) as i32),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Hinge margin.
    pub alpha: f64,
    /// Learning rate.
    pub eta: f64,
    pub max_iter: usize,
    /// Negative candidates drawn per iteration.
    pub negative_pool: usize,
    pub d_out: usize,
    pub seed: u64,
    pub schedule: EtaSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            eta: 0.01,
            max_iter: 50_000,
            negative_pool: 2000,
            d_out: 128,
            seed: 0,
            schedule: EtaSchedule::Constant,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return fail(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return fail(format!("eta must be positive, got {}", self.eta));
        }
        if self.max_iter == 0 {
            return fail("max_iter must be at least 1".into());
        }
        if self.negative_pool == 0 {
            return fail("negative pool must hold at least one candidate".into());
        }
        if self.d_out == 0 {
            return fail("d_out must be at least 1".into());
        }
        if let EtaSchedule::Step { factor, every } = self.schedule {
            if !(factor > 0.0 && factor <= 1.0) || every == 0 {
                return fail(format!(
                    "step schedule needs 0 < factor <= 1 and every >= 1, got {factor}, {every}"
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub iterations_run: usize,
    pub violations_updated: usize,
    /// `(iteration, mean hinge loss over the window ending there)`.
    pub loss_trace: Vec<(usize, f64)>,
}

/// Uniform draws of anchors, positives and negative pools.
///
/// Rows are kept grouped by label so that "any row of another class" is a
/// single uniform draw over two contiguous ranges.
#[derive(Debug, Clone)]
pub struct TripletSampler {
    order: Vec<usize>,
    position: Vec<usize>,
    span: Vec<(usize, usize)>,
    anchors: Vec<usize>,
}

impl TripletSampler {
    pub fn new(ds: &LabeledDataset) -> Self {
        let n = ds.len();
        let mut order = Vec::with_capacity(n);
        let mut position = vec![0; n];
        let mut span = vec![(0, 0); n];
        for rows in ds.indices_by_label().values() {
            let start = order.len();
            let end = start + rows.len();
            for &r in rows {
                position[r] = order.len();
                span[r] = (start, end);
                order.push(r);
            }
        }
        let anchors = (0..n).filter(|&r| span[r].1 - span[r].0 >= 2).collect();
        Self {
            order,
            position,
            span,
            anchors,
        }
    }

    /// Anchor uniform over rows whose class has at least two members, then a
    /// positive uniform over the other members of that class.
    pub fn sample_anchor_positive<R: Rng>(&self, rng: &mut R) -> Result<(usize, usize)> {
        if self.anchors.is_empty() {
            return Err(Error::NoValidAnchor);
        }
        let a = self.anchors[rng.random_range(0..self.anchors.len())];
        let (start, end) = self.span[a];
        let mut idx = start + rng.random_range(0..end - start - 1);
        if idx >= self.position[a] {
            idx += 1;
        }
        Ok((a, self.order[idx]))
    }

    /// Number of rows whose label differs from row `a`'s.
    pub fn negatives_for(&self, a: usize) -> usize {
        let (start, end) = self.span[a];
        self.order.len() - (end - start)
    }

    /// `size` rows of other classes, uniform with replacement, in draw order.
    pub fn draw_pool<R: Rng>(
        &self,
        ds: &LabeledDataset,
        a: usize,
        size: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        let mut pool = Vec::with_capacity(size);
        self.draw_pool_into(ds, a, size, rng, &mut pool)?;
        Ok(pool)
    }

    fn draw_pool_into<R: Rng>(
        &self,
        ds: &LabeledDataset,
        a: usize,
        size: usize,
        rng: &mut R,
        pool: &mut Vec<usize>,
    ) -> Result<()> {
        let available = self.negatives_for(a);
        if available == 0 {
            return Err(Error::NoNegatives { label: ds.label(a) });
        }
        let (start, end) = self.span[a];
        pool.clear();
        for _ in 0..size {
            let r = rng.random_range(0..available);
            let idx = if r < start { r } else { r + (end - start) };
            pool.push(self.order[idx]);
        }
        Ok(())
    }
}

/// `scale · (W x) yᵀ`, with `x` and `y` given as coefficients on the
/// (anchor, positive, negative) rows.
#[derive(Debug, Clone, Copy)]
pub struct RankOne {
    pub scale: f64,
    pub left: [f64; 3],
    pub right: [f64; 3],
}

/// A triplet hinge objective over a linear embedding.
pub trait Objective: Send + Sync {
    const NAME: &'static str;

    /// Hinge loss from projected anchor, positive and negative.
    fn loss(pa: &[f64], pp: &[f64], pn: &[f64], alpha: f64) -> f64;

    /// How strongly candidate `pn` violates the constraint for anchor `pa`;
    /// the pool candidate with the largest value is mined.
    fn hardness(pa: &[f64], pn: &[f64]) -> f64;

    /// Gradient of the active hinge with respect to `W`, as two rank-one terms.
    fn gradient() -> [RankOne; 2];
}

fn combine(coeffs: [f64; 3], vs: [&[f64]; 3]) -> Vec<f64> {
    let mut out = vec![0.0; vs[0].len()];
    for (c, v) in coeffs.into_iter().zip(vs) {
        if c != 0.0 {
            linalg::axpy(c, v, &mut out);
        }
    }
    out
}

/// The rank-one pieces of `η ∇W`, evaluated at the current `W`.
struct Step {
    /// `η · s · W x` per term.
    left: Vec<Vec<f64>>,
    /// `y` per term, dense in input space.
    right: Vec<Vec<f64>>,
    right_coeffs: Vec<[f64; 3]>,
}

fn prepare_step<O: Objective>(w: &EmbeddingMatrix, rows: [&[f64]; 3], eta: f64) -> Step {
    let projected = rows.map(|r| w.apply(r));
    let proj_refs = [&projected[0][..], &projected[1][..], &projected[2][..]];
    let terms = O::gradient();
    Step {
        left: terms
            .iter()
            .map(|t| {
                let mut v = combine(t.left, proj_refs);
                v.iter_mut().for_each(|x| *x *= eta * t.scale);
                v
            })
            .collect(),
        right: terms.iter().map(|t| combine(t.right, rows)).collect(),
        right_coeffs: terms.iter().map(|t| t.right).collect(),
    }
}

fn apply_step(w: &mut EmbeddingMatrix, step: &Step) {
    let d_in = w.d_in();
    // terms are summed per entry first so that cancelling terms cancel exactly
    for (i, row) in w.as_mut_slice().chunks_exact_mut(d_in).enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            let delta: f64 = step
                .left
                .iter()
                .zip(&step.right)
                .map(|(l, r)| l[i] * r[j])
                .sum();
            *x -= delta;
        }
    }
}

/// `W - η ∇W` for one triplet, ignoring the hinge gate.
pub fn gradient_step<O: Objective>(
    w: &EmbeddingMatrix,
    a: &[f64],
    p: &[f64],
    n: &[f64],
    eta: f64,
) -> Result<EmbeddingMatrix> {
    check_dims(w, a, p, n)?;
    let step = prepare_step::<O>(w, [a, p, n], eta);
    let mut next = w.clone();
    apply_step(&mut next, &step);
    Ok(next)
}

/// Hinge loss of one triplet under `W`.
pub fn triplet_loss<O: Objective>(
    w: &EmbeddingMatrix,
    a: &[f64],
    p: &[f64],
    n: &[f64],
    alpha: f64,
) -> Result<f64> {
    check_dims(w, a, p, n)?;
    Ok(O::loss(&w.apply(a), &w.apply(p), &w.apply(n), alpha))
}

fn check_dims(w: &EmbeddingMatrix, a: &[f64], p: &[f64], n: &[f64]) -> Result<()> {
    for (name, v) in [("anchor", a), ("positive", p), ("negative", n)] {
        if v.len() != w.d_in() {
            return Err(Error::dim(w.d_in(), v.len(), format!("{name} length")));
        }
    }
    Ok(())
}

/// Draws a pool for anchor `a` and returns the candidate with the largest
/// hardness under `W`, first in draw order on ties.
pub fn mine<O: Objective, R: Rng>(
    w: &EmbeddingMatrix,
    ds: &LabeledDataset,
    a: usize,
    pool_size: usize,
    rng: &mut R,
) -> Result<usize> {
    if w.d_in() != ds.dim() {
        return Err(Error::dim(w.d_in(), ds.dim(), "dataset dimension"));
    }
    if a >= ds.len() {
        return Err(Error::dim(ds.len(), a, "anchor index out of range"));
    }
    if pool_size == 0 {
        return Err(Error::InvalidConfig(
            "negative pool must be non-empty".into(),
        ));
    }
    let pool = TripletSampler::new(ds).draw_pool(ds, a, pool_size, rng)?;
    let pa = w.apply(ds.row(a));
    let projected: Vec<Vec<f64>> = pool.iter().map(|&n| w.apply(ds.row(n))).collect();
    let best = exec::argmax_first(pool.len(), Execution::default(), |k| {
        O::hardness(&pa, &projected[k])
    })
    .expect("pool is non-empty");
    Ok(pool[best])
}

/// What one training iteration did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationOutcome {
    pub triplet: Triplet,
    pub loss: f64,
    pub updated: bool,
}

/// Stateful single-triplet SGD loop for objective `O`.
pub struct Trainer<'a, O: Objective> {
    ds: &'a LabeledDataset,
    cfg: TrainConfig,
    exec: Execution,
    sampler: TripletSampler,
    rng: ChaCha8Rng,
    w: EmbeddingMatrix,
    /// `W x` for every row, `N × d_out`.
    projected: Vec<f64>,
    /// Row inner products `X Xᵀ`, when small enough to keep.
    gram: Option<Vec<f64>>,
    pool: Vec<usize>,
    row_scores: Vec<f64>,
    iteration: usize,
    updates_since_refresh: usize,
    window_sum: f64,
    window_len: usize,
    report: TrainReport,
    _objective: PhantomData<O>,
}

impl<'a, O: Objective> Trainer<'a, O> {
    /// Starts from the principal-component initialization.
    pub fn new(ds: &'a LabeledDataset, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let w0 = pca::pca(ds, cfg.d_out, Execution::default())?.components;
        Self::with_initial(ds, cfg, w0)
    }

    /// Starts from a caller-supplied matrix.
    pub fn with_initial(
        ds: &'a LabeledDataset,
        cfg: TrainConfig,
        w0: EmbeddingMatrix,
    ) -> Result<Self> {
        cfg.validate()?;
        if w0.d_in() != ds.dim() {
            return Err(Error::dim(
                ds.dim(),
                w0.d_in(),
                "initial matrix input dimension",
            ));
        }
        let sampler = TripletSampler::new(ds);
        if sampler.anchors.is_empty() {
            return Err(Error::NoValidAnchor);
        }
        if let Some(&a) = sampler
            .anchors
            .iter()
            .find(|&&a| sampler.negatives_for(a) == 0)
        {
            return Err(Error::NoNegatives { label: ds.label(a) });
        }
        let exec = Execution::default();
        let mut trainer = Self {
            ds,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            pool: Vec::with_capacity(cfg.negative_pool),
            row_scores: Vec::new(),
            cfg,
            exec,
            sampler,
            w: w0,
            projected: Vec::new(),
            gram: None,
            iteration: 0,
            updates_since_refresh: 0,
            window_sum: 0.0,
            window_len: 0,
            report: TrainReport::default(),
            _objective: PhantomData,
        };
        trainer.gram = (ds.len() <= GRAM_MAX_ROWS).then(|| trainer.row_gram());
        trainer.refresh_projection();
        Ok(trainer)
    }

    /// Selects sequential or parallel kernels. Results are identical.
    pub fn execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn matrix(&self) -> &EmbeddingMatrix {
        &self.w
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    fn row_gram(&self) -> Vec<f64> {
        let ds = self.ds;
        let n = ds.len();
        let mut g = vec![0.0; n * n];
        exec::for_each_row_mut(&mut g, n, self.exec, |i, out| {
            let ri = ds.row(i);
            for (j, o) in out.iter_mut().enumerate() {
                *o = linalg::dot(ri, ds.row(j));
            }
        });
        g
    }

    fn refresh_projection(&mut self) {
        let (ds, w) = (self.ds, &self.w);
        let d_out = w.d_out();
        self.projected.resize(ds.len() * d_out, 0.0);
        exec::for_each_row_mut(&mut self.projected, d_out, self.exec, |r, out| {
            let x = ds.row(r);
            for (o, wr) in out.iter_mut().zip(w.as_slice().chunks_exact(w.d_in())) {
                *o = linalg::dot(wr, x);
            }
        });
        self.updates_since_refresh = 0;
    }

    fn proj(&self, r: usize) -> &[f64] {
        let d = self.w.d_out();
        &self.projected[r * d..(r + 1) * d]
    }

    /// Runs one iteration.
    pub fn step(&mut self) -> Result<IterationOutcome> {
        let ds = self.ds;
        let (a, p) = self.sampler.sample_anchor_positive(&mut self.rng)?;
        let mut pool = std::mem::take(&mut self.pool);
        self.sampler
            .draw_pool_into(ds, a, self.cfg.negative_pool, &mut self.rng, &mut pool)?;
        let best = if pool.len() > ds.len() {
            // pool has repeats: score each row once, then scan the pool
            let mut scores = std::mem::take(&mut self.row_scores);
            scores.resize(ds.len(), 0.0);
            {
                let pa = self.proj(a);
                exec::for_each_row_mut(&mut scores, 1, self.exec, |r, s| {
                    s[0] = O::hardness(pa, self.proj(r));
                });
            }
            let best = exec::argmax_first(pool.len(), Execution::Sequential, |k| scores[pool[k]]);
            self.row_scores = scores;
            best
        } else {
            let pa = self.proj(a);
            exec::argmax_first(pool.len(), self.exec, |k| {
                O::hardness(pa, self.proj(pool[k]))
            })
        }
        .expect("pool is non-empty");
        let n = pool[best];
        self.pool = pool;

        let loss = O::loss(self.proj(a), self.proj(p), self.proj(n), self.cfg.alpha);
        let updated = loss > 0.0;
        if updated {
            let eta = self.cfg.schedule.rate(self.cfg.eta, self.iteration);
            self.update(Triplet { a, p, n }, eta);
        }

        self.iteration += 1;
        self.report.iterations_run = self.iteration;
        self.report.violations_updated += usize::from(updated);
        self.window_sum += loss;
        self.window_len += 1;
        if self.window_len == LOSS_WINDOW {
            self.flush_window();
        }
        Ok(IterationOutcome {
            triplet: Triplet { a, p, n },
            loss,
            updated,
        })
    }

    fn flush_window(&mut self) {
        if self.window_len > 0 {
            self.report
                .loss_trace
                .push((self.iteration, self.window_sum / self.window_len as f64));
            self.window_sum = 0.0;
            self.window_len = 0;
        }
    }

    fn update(&mut self, t: Triplet, eta: f64) {
        let ds = self.ds;
        let idx = [t.a, t.p, t.n];
        let step = prepare_step::<O>(&self.w, idx.map(|i| ds.row(i)), eta);
        apply_step(&mut self.w, &step);

        self.updates_since_refresh += 1;
        if self.updates_since_refresh >= REFRESH_EVERY {
            self.refresh_projection();
            return;
        }
        // P_r -= Σ (η s W x)(y · x_r)
        let n = ds.len();
        let gram = self.gram.as_deref();
        exec::for_each_row_mut(&mut self.projected, self.w.d_out(), self.exec, |r, out| {
            let y_dot: [f64; 2] = std::array::from_fn(|k| match gram {
                Some(g) => step.right_coeffs[k]
                    .iter()
                    .zip(idx)
                    .filter(|(c, _)| **c != 0.0)
                    .map(|(c, i)| c * g[i * n + r])
                    .sum::<f64>(),
                None => linalg::dot(&step.right[k], ds.row(r)),
            });
            for (j, o) in out.iter_mut().enumerate() {
                *o -= y_dot[0] * step.left[0][j] + y_dot[1] * step.left[1][j];
            }
        });
    }

    /// Runs the remaining iterations and returns the learned matrix.
    pub fn run(mut self) -> Result<(EmbeddingMatrix, TrainReport)> {
        while self.iteration < self.cfg.max_iter {
            self.step()?;
        }
        self.flush_window();
        Ok((self.w, self.report))
    }
}

/// PCA initialization followed by `cfg.max_iter` iterations of objective `O`.
pub fn train<O: Objective>(
    ds: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(EmbeddingMatrix, TrainReport)> {
    Trainer::<O>::new(ds, cfg.clone())?.run()
}
