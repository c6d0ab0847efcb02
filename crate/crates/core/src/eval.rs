//! Verification and closed-set identification metrics.
//!
//! Thresholds follow "accept if score ≥ t". The ROC is the piecewise-linear
//! curve through the operating points of every distinct score, so TAR at a
//! fixed FAR and the equal error rate are read off by linear interpolation.
//! All metrics depend on scores only through their order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::dataset::{flatten_template, LabeledDataset, PairProtocol, TemplateSet};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::linalg;
use crate::pca::EmbeddingMatrix;

/// FAR operating points reported for verification.
pub const FAR_GRID: [f64; 4] = [1e-4, 1e-3, 1e-2, 1e-1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreMode {
    /// `(W x)·(W y)`
    #[default]
    Inner,
    /// Inner product divided by both projected norms.
    Cosine,
}

impl FromStr for ScoreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "inner" => Ok(ScoreMode::Inner),
            "cosine" => Ok(ScoreMode::Cosine),
            other => Err(Error::InvalidConfig(format!(
                "unknown score mode {other:?} (expected inner or cosine)"
            ))),
        }
    }
}

impl fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreMode::Inner => "inner",
            ScoreMode::Cosine => "cosine",
        })
    }
}

fn score_projected(px: &[f64], py: &[f64], mode: ScoreMode) -> Result<f64> {
    let inner = linalg::dot(px, py);
    match mode {
        ScoreMode::Inner => Ok(inner),
        ScoreMode::Cosine => {
            let denom = linalg::norm(px) * linalg::norm(py);
            if denom == 0.0 {
                Err(Error::ZeroProjection)
            } else {
                Ok(inner / denom)
            }
        }
    }
}

/// Similarity of two vectors after projecting both through `W`.
pub fn score_pair(w: &EmbeddingMatrix, x: &[f64], y: &[f64], mode: ScoreMode) -> Result<f64> {
    for v in [x, y] {
        if v.len() != w.d_in() {
            return Err(Error::dim(w.d_in(), v.len(), "scored vector length"));
        }
    }
    score_projected(&w.apply(x), &w.apply(y), mode)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

impl ScoreSet {
    pub fn new(genuine: Vec<f64>, impostor: Vec<f64>) -> Result<Self> {
        if let Some(index) = genuine.iter().chain(&impostor).position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { genuine, impostor })
    }
}

/// Flattened and projected templates, keyed by template id.
fn project_templates(
    w: &EmbeddingMatrix,
    ids: impl IntoIterator<Item = u64>,
    templates: &TemplateSet,
    ds: &LabeledDataset,
) -> Result<BTreeMap<u64, Vec<f64>>> {
    if w.d_in() != ds.dim() {
        return Err(Error::dim(
            w.d_in(),
            ds.dim(),
            "dataset dimension vs matrix",
        ));
    }
    let ids: BTreeSet<u64> = ids.into_iter().collect();
    let flat = ids
        .into_iter()
        .map(|id| {
            let t = templates.get(id)?;
            Ok((id, flatten_template(t, ds)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let projected = exec::map_indices(flat.len(), Execution::default(), |i| {
        w.apply(flat[i].1.as_slice())
    });
    Ok(flat.into_iter().map(|(id, _)| id).zip(projected).collect())
}

/// Scores every protocol pair on flattened templates. Scores keep protocol
/// order within each list; duplicate pairs are scored twice.
pub fn score_protocol(
    w: &EmbeddingMatrix,
    protocol: &PairProtocol,
    templates: &TemplateSet,
    ds: &LabeledDataset,
    mode: ScoreMode,
) -> Result<ScoreSet> {
    score_protocol_with(w, protocol, templates, ds, mode, Execution::default())
}

pub fn score_protocol_with(
    w: &EmbeddingMatrix,
    protocol: &PairProtocol,
    templates: &TemplateSet,
    ds: &LabeledDataset,
    mode: ScoreMode,
    exec: Execution,
) -> Result<ScoreSet> {
    let ids = protocol.pairs.iter().flat_map(|p| [p.a, p.b]);
    let proj = project_templates(w, ids, templates, ds)?;
    let pairs = &protocol.pairs;
    let scores = exec::map_indices(pairs.len(), exec, |i| {
        score_projected(&proj[&pairs[i].a], &proj[&pairs[i].b], mode)
    });
    let mut set = ScoreSet::default();
    for (pair, s) in pairs.iter().zip(scores) {
        let s = s?;
        if pair.genuine {
            set.genuine.push(s);
        } else {
            set.impostor.push(s);
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub far: f64,
    pub tar: f64,
}

/// Operating points ordered by decreasing threshold, hence by increasing FAR
/// and, within one FAR, increasing TAR. Starts at (0, 0) and ends at (1, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    /// Threshold producing each point; the first is `+∞`.
    pub thresholds: Vec<f64>,
}

pub fn roc(s: &ScoreSet) -> Result<RocCurve> {
    if s.genuine.is_empty() {
        return Err(Error::EmptyScores("genuine"));
    }
    if s.impostor.is_empty() {
        return Err(Error::EmptyScores("impostor"));
    }
    let desc = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    };
    let (g, i) = (desc(&s.genuine), desc(&s.impostor));
    let (ng, ni) = (g.len() as f64, i.len() as f64);

    let mut points = vec![RocPoint { far: 0.0, tar: 0.0 }];
    let mut thresholds = vec![f64::INFINITY];
    let (mut gi, mut ii) = (0, 0);
    while gi < g.len() || ii < i.len() {
        let t = match (g.get(gi), i.get(ii)) {
            (Some(&a), Some(&b)) => a.max(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        while gi < g.len() && g[gi] >= t {
            gi += 1;
        }
        while ii < i.len() && i[ii] >= t {
            ii += 1;
        }
        points.push(RocPoint {
            far: ii as f64 / ni,
            tar: gi as f64 / ng,
        });
        thresholds.push(t);
    }
    Ok(RocCurve { points, thresholds })
}

/// TAR at `far_target`, interpolated linearly along the curve. Where the
/// curve is vertical at exactly `far_target` the highest TAR is returned.
/// Targets outside `[0, 1]` are clamped.
pub fn tar_at_far(curve: &RocCurve, far_target: f64) -> f64 {
    let target = if far_target.is_nan() {
        0.0
    } else {
        far_target.clamp(0.0, 1.0)
    };
    let pts = &curve.points;
    let Some(hi) = pts.iter().position(|p| p.far > target) else {
        return pts.last().map_or(0.0, |p| p.tar);
    };
    if hi == 0 {
        return pts[0].tar;
    }
    let (l, h) = (pts[hi - 1], pts[hi]);
    if l.far == target {
        return l.tar;
    }
    l.tar + (target - l.far) / (h.far - l.far) * (h.tar - l.tar)
}

/// The rate `e` where FAR = FRR = `e`, located on the piecewise-linear curve.
pub fn eer(curve: &RocCurve) -> f64 {
    let pts = &curve.points;
    let gap = |p: &RocPoint| p.far + p.tar - 1.0;
    let Some(i) = pts.iter().position(|p| gap(p) >= 0.0) else {
        return pts.last().map_or(1.0, |p| p.far).clamp(0.0, 1.0);
    };
    if i == 0 {
        return pts[0].far.clamp(0.0, 1.0);
    }
    let (l, h) = (pts[i - 1], pts[i]);
    let (gl, gh) = (gap(&l), gap(&h));
    let t = -gl / (gh - gl);
    (l.far + t * (h.far - l.far)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub mode: ScoreMode,
    pub genuine: usize,
    pub impostor: usize,
    pub eer: f64,
    /// `(far, tar)` over [`FAR_GRID`].
    pub tar_at_far: Vec<(f64, f64)>,
}

impl VerificationReport {
    pub fn from_scores(scores: &ScoreSet, mode: ScoreMode) -> Result<(Self, RocCurve)> {
        let curve = roc(scores)?;
        let report = Self {
            mode,
            genuine: scores.genuine.len(),
            impostor: scores.impostor.len(),
            eer: eer(&curve),
            tar_at_far: FAR_GRID
                .iter()
                .map(|&f| (f, tar_at_far(&curve, f)))
                .collect(),
        };
        Ok((report, curve))
    }

    /// `key=value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "mode={}", self.mode).unwrap();
        writeln!(out, "genuine_pairs={}", self.genuine).unwrap();
        writeln!(out, "impostor_pairs={}", self.impostor).unwrap();
        writeln!(out, "eer={:.6}", self.eer).unwrap();
        for (far, tar) in &self.tar_at_far {
            writeln!(out, "tar_at_far_{}={:.6}", far_label(*far), tar).unwrap();
        }
        out
    }
}

/// `1e-3` style label for a FAR value.
pub fn far_label(far: f64) -> String {
    format!("{far:e}")
}

/// Scores a protocol and summarizes it.
pub fn verify(
    w: &EmbeddingMatrix,
    protocol: &PairProtocol,
    templates: &TemplateSet,
    ds: &LabeledDataset,
    mode: ScoreMode,
) -> Result<(VerificationReport, RocCurve)> {
    protocol.validate(templates)?;
    let scores = score_protocol(w, protocol, templates, ds, mode)?;
    VerificationReport::from_scores(&scores, mode)
}

/// `far,tar` lines.
pub fn roc_csv(curve: &RocCurve) -> String {
    let mut out = String::from("far,tar\n");
    for p in &curve.points {
        writeln!(out, "{},{}", p.far, p.tar).unwrap();
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Identification {
    /// `(k, fraction of probes whose subject is within the top k)`.
    pub rank_accuracy: Vec<(usize, f64)>,
    pub probes_used: usize,
    /// Probes whose subject has no gallery template.
    pub probes_dropped: usize,
}

impl Identification {
    pub fn rank(&self, k: usize) -> Option<f64> {
        self.rank_accuracy
            .iter()
            .find(|(r, _)| *r == k)
            .map(|(_, a)| *a)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "probes_used={}", self.probes_used).unwrap();
        writeln!(out, "probes_dropped={}", self.probes_dropped).unwrap();
        for (k, acc) in &self.rank_accuracy {
            writeln!(out, "rank_{k}={acc:.6}").unwrap();
        }
        out
    }
}

/// Closed-set identification.
///
/// Each probe ranks every gallery template by descending score, ties by
/// ascending template id, and records the first position holding its own
/// subject. Probes whose subject is absent from the gallery are dropped.
pub fn identify(
    w: &EmbeddingMatrix,
    gallery: &TemplateSet,
    probes: &TemplateSet,
    ds: &LabeledDataset,
    k_list: &[usize],
    mode: ScoreMode,
) -> Result<Identification> {
    if gallery.is_empty() {
        return Err(Error::EmptyGallery);
    }
    let gallery_subjects: Vec<(u64, u64)> = gallery
        .iter()
        .map(|t| Ok((t.template_id, t.subject(ds)?)))
        .collect::<Result<_>>()?;
    let known: BTreeSet<u64> = gallery_subjects.iter().map(|&(_, s)| s).collect();

    let mut kept = Vec::new();
    let mut dropped = 0;
    for t in probes.iter() {
        let subject = t.subject(ds)?;
        if known.contains(&subject) {
            kept.push((t.template_id, subject));
        } else {
            dropped += 1;
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyProbeSet);
    }

    let g_proj = project_templates(w, gallery_subjects.iter().map(|&(id, _)| id), gallery, ds)?;
    let p_proj = project_templates(w, kept.iter().map(|&(id, _)| id), probes, ds)?;

    let ranks = exec::map_indices(kept.len(), Execution::default(), |i| -> Result<usize> {
        let (pid, subject) = kept[i];
        let px = &p_proj[&pid];
        let mut scored = gallery_subjects
            .iter()
            .map(|&(gid, gs)| Ok((score_projected(px, &g_proj[&gid], mode)?, gid, gs)))
            .collect::<Result<Vec<_>>>()?;
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        Ok(1 + scored
            .iter()
            .position(|&(_, _, gs)| gs == subject)
            .expect("closed set"))
    });
    let ranks = ranks.into_iter().collect::<Result<Vec<_>>>()?;
    let total = ranks.len() as f64;
    Ok(Identification {
        rank_accuracy: k_list
            .iter()
            .map(|&k| (k, ranks.iter().filter(|&&r| r <= k).count() as f64 / total))
            .collect(),
        probes_used: ranks.len(),
        probes_dropped: dropped,
    })
}

/// Mean and sample standard deviation over splits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6} ± {:.6}", self.mean, self.std)
    }
}

/// Averages verification reports over several protocol splits, as
/// `key=mean ± std` lines.
pub fn summarize_splits(reports: &[VerificationReport]) -> String {
    let mut out = String::new();
    writeln!(out, "splits={}", reports.len()).unwrap();
    if let Some(first) = reports.first() {
        writeln!(out, "mode={}", first.mode).unwrap();
    }
    let eers: Vec<f64> = reports.iter().map(|r| r.eer).collect();
    writeln!(out, "eer={}", Summary::of(&eers)).unwrap();
    for (k, far) in FAR_GRID.iter().enumerate() {
        let tars: Vec<f64> = reports.iter().map(|r| r.tar_at_far[k].1).collect();
        writeln!(out, "tar_at_far_{}={}", far_label(*far), Summary::of(&tars)).unwrap();
    }
    out
}
