//! Independent reference implementations used as test oracles. Nothing here
//! calls into the code paths it checks.
#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn unit_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let v = gaussian_vec(rng, n);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Row-major `rows × cols` matrix as nested vectors.
pub type Dense = Vec<Vec<f64>>;

pub fn to_dense(rows: usize, cols: usize, flat: &[f64]) -> Dense {
    (0..rows)
        .map(|i| flat[i * cols..(i + 1) * cols].to_vec())
        .collect()
}

pub fn matvec(m: &Dense, x: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| {
            let mut s = 0.0;
            for j in 0..x.len() {
                s += row[j] * x[j];
            }
            s
        })
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// `WᵀW`, `d_in × d_in`.
pub fn wtw(w: &Dense) -> Dense {
    let d_in = w[0].len();
    let mut m = vec![vec![0.0; d_in]; d_in];
    for i in 0..d_in {
        for j in 0..d_in {
            for row in w {
                m[i][j] += row[i] * row[j];
            }
        }
    }
    m
}

/// `xᵀ M y`
pub fn bilinear(x: &[f64], m: &Dense, y: &[f64]) -> f64 {
    dot(x, &matvec(m, y))
}

/// Triplet similarity hinge, evaluated literally as
/// `max(0, α + aᵀWᵀWn − aᵀWᵀWp)`.
pub fn naive_tse_loss(w: &Dense, a: &[f64], p: &[f64], n: &[f64], alpha: f64) -> f64 {
    let m = wtw(w);
    (alpha + bilinear(a, &m, n) - bilinear(a, &m, p)).max(0.0)
}

/// Triplet distance hinge, `max(0, α + (a−p)ᵀWᵀW(a−p) − (a−n)ᵀWᵀW(a−n))`.
pub fn naive_tde_loss(w: &Dense, a: &[f64], p: &[f64], n: &[f64], alpha: f64) -> f64 {
    let m = wtw(w);
    let u: Vec<f64> = a.iter().zip(p).map(|(x, y)| x - y).collect();
    let v: Vec<f64> = a.iter().zip(n).map(|(x, y)| x - y).collect();
    (alpha + bilinear(&u, &m, &u) - bilinear(&v, &m, &v)).max(0.0)
}

/// Central finite differences of `f` with respect to every entry of `w`.
pub fn fd_gradient(w: &Dense, h: f64, f: impl Fn(&Dense) -> f64) -> Dense {
    let mut g = vec![vec![0.0; w[0].len()]; w.len()];
    let mut probe = w.clone();
    for i in 0..w.len() {
        for j in 0..w[0].len() {
            let orig = probe[i][j];
            probe[i][j] = orig + h;
            let up = f(&probe);
            probe[i][j] = orig - h;
            let down = f(&probe);
            probe[i][j] = orig;
            g[i][j] = (up - down) / (2.0 * h);
        }
    }
    g
}

/// Entrywise relative error, with the denominator floored at `1e-3 ×` the
/// largest reference magnitude so that near-zero entries are not amplified.
pub fn max_rel_error(got: &Dense, reference: &Dense) -> f64 {
    let scale = reference
        .iter()
        .flatten()
        .fold(0.0f64, |m, x| m.max(x.abs()));
    let floor = 1e-3 * scale.max(1e-300);
    got.iter()
        .flatten()
        .zip(reference.iter().flatten())
        .map(|(g, r)| (g - r).abs() / r.abs().max(g.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Sample covariance (divisor N − 1) by explicit double loops.
pub fn naive_covariance(rows: &[Vec<f64>]) -> Dense {
    let n = rows.len();
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        for j in 0..d {
            mean[j] += r[j] / n as f64;
        }
    }
    let mut c = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                c[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    for row in &mut c {
        for x in row.iter_mut() {
            *x /= (n - 1) as f64;
        }
    }
    c
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns eigenvalues
/// descending with unit eigenvectors whose first non-negligible entry is
/// positive.
pub fn jacobi_eigen(m: &Dense) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = m.len();
    let mut a = m.clone();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|k| {
            let mut col: Vec<f64> = (0..n).map(|i| v[i][k]).collect();
            if col
                .iter()
                .find(|x| x.abs() > 1e-12)
                .is_some_and(|&x| x < 0.0)
            {
                col.iter_mut().for_each(|x| *x = -*x);
            }
            (a[k][k], col)
        })
        .collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    pairs.into_iter().unzip()
}

/// (FAR, TAR) at threshold `t` under "accept if score ≥ t", by counting.
pub fn rates_at(genuine: &[f64], impostor: &[f64], t: f64) -> (f64, f64) {
    let far = impostor.iter().filter(|&&s| s >= t).count() as f64 / impostor.len() as f64;
    let tar = genuine.iter().filter(|&&s| s >= t).count() as f64 / genuine.len() as f64;
    (far, tar)
}

/// Every achievable operating point, by sweeping all candidate thresholds.
pub fn brute_points(genuine: &[f64], impostor: &[f64]) -> Vec<(f64, f64)> {
    let mut ts: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    ts.push(f64::INFINITY);
    ts.iter().map(|&t| rates_at(genuine, impostor, t)).collect()
}

/// TAR at a FAR target: the best TAR among points with FAR exactly at the
/// target, otherwise linear interpolation between the best point just below
/// and the worst point just above.
pub fn brute_tar_at_far(genuine: &[f64], impostor: &[f64], target: f64) -> f64 {
    let pts = brute_points(genuine, impostor);
    let at: Vec<f64> = pts.iter().filter(|p| p.0 == target).map(|p| p.1).collect();
    if !at.is_empty() {
        return at.into_iter().fold(f64::MIN, f64::max);
    }
    let lo_far = pts
        .iter()
        .filter(|p| p.0 < target)
        .map(|p| p.0)
        .fold(f64::MIN, f64::max);
    let lo_tar = pts
        .iter()
        .filter(|p| p.0 == lo_far)
        .map(|p| p.1)
        .fold(f64::MIN, f64::max);
    let hi = pts
        .iter()
        .filter(|p| p.0 > target)
        .map(|p| p.0)
        .fold(f64::MAX, f64::min);
    if hi == f64::MAX {
        return lo_tar;
    }
    let hi_tar = pts
        .iter()
        .filter(|p| p.0 == hi)
        .map(|p| p.1)
        .fold(f64::MAX, f64::min);
    lo_tar + (target - lo_far) / (hi - lo_far) * (hi_tar - lo_tar)
}

/// EER from a dense threshold scan: the threshold minimizing |FAR − FRR|,
/// reported as the mean of the two rates there.
pub fn brute_eer(genuine: &[f64], impostor: &[f64]) -> f64 {
    let mut ts: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    ts.sort_by(f64::total_cmp);
    let mut candidates = ts.clone();
    for w in ts.windows(2) {
        candidates.push(0.5 * (w[0] + w[1]));
    }
    candidates.push(f64::INFINITY);
    candidates.push(f64::NEG_INFINITY);
    let mut best = (f64::MAX, 0.0);
    for t in candidates {
        let (far, tar) = rates_at(genuine, impostor, t);
        let frr = 1.0 - tar;
        let gap = (far - frr).abs();
        if gap < best.0 {
            best = (gap, 0.5 * (far + frr));
        }
    }
    best.1
}
