//! k-means with NMI scoring, PCA projection, and embedding arithmetic.

use std::collections::HashMap;
use std::hash::Hash;
use std::io;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng as _;
use thiserror::Error;

use crate::diffcore::squared_distance;
use crate::seed::{derive_seed, rng_from_seed};

pub const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("{k} clusters requested but only {distinct} distinct points")]
    TooFewDistinct { k: usize, distinct: usize },
    #[error("label vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("vectors differ in length")]
    Ragged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    /// Assignments of the lowest-inertia run.
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub runs: usize,
    pub seed: u64,
    /// Assignments of every run, in run order.
    pub run_assignments: Vec<Vec<usize>>,
    pub run_inertia: Vec<f64>,
}

impl ClusterResult {
    /// NMI of the best run against `truth`.
    pub fn nmi_best<T: Eq + Hash>(&self, truth: &[T]) -> Result<f64, AnalysisError> {
        nmi(truth, &self.assignments)
    }

    /// NMI against `truth` averaged over runs.
    pub fn nmi_mean<T: Eq + Hash>(&self, truth: &[T]) -> Result<f64, AnalysisError> {
        let mut s = 0.0;
        for a in &self.run_assignments {
            s += nmi(truth, a)?;
        }
        Ok(s / self.run_assignments.len() as f64)
    }
}

fn check_rect(x: &[Vec<f64>]) -> Result<usize, AnalysisError> {
    let d = x.first().ok_or(AnalysisError::Empty)?.len();
    if x.iter().any(|r| r.len() != d) {
        return Err(AnalysisError::Ragged);
    }
    Ok(d)
}

/// k-means++ seeding and Lloyd iterations, repeated `runs` times with seeds
/// derived from `seed`; the lowest-inertia run is reported.
pub fn kmeans(x: &[Vec<f64>], k: usize, runs: usize, seed: u64) -> Result<ClusterResult, AnalysisError> {
    check_rect(x)?;
    if k == 0 || x.len() < k {
        return Err(AnalysisError::TooFewRows { needed: k.max(1), got: x.len() });
    }
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for r in x {
        if distinct.len() >= k {
            break;
        }
        if !distinct.iter().any(|d| *d == r) {
            distinct.push(r);
        }
    }
    if distinct.len() < k {
        return Err(AnalysisError::TooFewDistinct { k, distinct: distinct.len() });
    }
    let runs = runs.max(1);
    let mut run_assignments = Vec::with_capacity(runs);
    let mut run_inertia = Vec::with_capacity(runs);
    for r in 0..runs {
        let (a, inertia) = kmeans_once(x, k, derive_seed(seed, &format!("kmeans/{r}")));
        run_assignments.push(a);
        run_inertia.push(inertia);
    }
    let best = (0..runs)
        .min_by(|&a, &b| run_inertia[a].total_cmp(&run_inertia[b]))
        .unwrap();
    Ok(ClusterResult {
        assignments: run_assignments[best].clone(),
        inertia: run_inertia[best],
        runs,
        seed,
        run_assignments,
        run_inertia,
    })
}

fn nearest_center(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = squared_distance(p, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_once(x: &[Vec<f64>], k: usize, seed: u64) -> (Vec<usize>, f64) {
    let mut rng = rng_from_seed(seed);
    let mut centers = vec![x[rng.gen_range(0..x.len())].clone()];
    let mut d2: Vec<f64> = x.iter().map(|p| squared_distance(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut t = rng.gen::<f64>() * total;
            let mut pick = x.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if t < w {
                    pick = i;
                    break;
                }
                t -= w;
            }
            // Guard against rounding landing on an already-chosen point.
            if d2[pick] == 0.0 {
                pick = (0..x.len()).max_by(|&a, &b| d2[a].total_cmp(&d2[b])).unwrap();
            }
            pick
        } else {
            rng.gen_range(0..x.len())
        };
        centers.push(x[next].clone());
        for (i, p) in x.iter().enumerate() {
            d2[i] = d2[i].min(squared_distance(p, &centers[centers.len() - 1]));
        }
    }

    let dim = x[0].len();
    let mut assign: Vec<usize> = x.iter().map(|p| nearest_center(p, &centers).0).collect();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in x.iter().zip(&assign) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let next: Vec<usize> = x.iter().map(|p| nearest_center(p, &centers).0).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    let inertia = x.iter().zip(&assign).map(|(p, &a)| squared_distance(p, &centers[a])).sum();
    (assign, inertia)
}

/// Sum in sorted order, so the result does not depend on label order.
fn sorted_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    sorted_sum(
        counts
            .filter(|&c| c > 0)
            .map(|c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .collect(),
    )
}

/// Normalized mutual information with arithmetic-mean normalization and
/// natural logarithms; `0/0` is 0.
pub fn nmi<A: Eq + Hash, B: Eq + Hash>(truth: &[A], predicted: &[B]) -> Result<f64, AnalysisError> {
    if truth.len() != predicted.len() {
        return Err(AnalysisError::LengthMismatch(truth.len(), predicted.len()));
    }
    if truth.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let n = truth.len() as f64;
    let mut ti: HashMap<&A, usize> = HashMap::new();
    let mut pi: HashMap<&B, usize> = HashMap::new();
    let t: Vec<usize> = truth.iter().map(|l| { let len = ti.len(); *ti.entry(l).or_insert(len) }).collect();
    let p: Vec<usize> = predicted.iter().map(|l| { let len = pi.len(); *pi.entry(l).or_insert(len) }).collect();
    let mut joint = vec![vec![0usize; pi.len()]; ti.len()];
    let mut tc = vec![0usize; ti.len()];
    let mut pc = vec![0usize; pi.len()];
    for (&a, &b) in t.iter().zip(&p) {
        joint[a][b] += 1;
        tc[a] += 1;
        pc[b] += 1;
    }
    let ht = entropy(tc.iter().copied(), n);
    let hp = entropy(pc.iter().copied(), n);
    let mut terms = Vec::new();
    for (a, row) in joint.iter().enumerate() {
        for (b, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                terms.push(c / n * (c * n / (tc[a] as f64 * pc[b] as f64)).ln());
            }
        }
    }
    let mi = sorted_sum(terms);
    let denom = (ht + hp) / 2.0;
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// One row per input row, `dims` columns.
    pub points: Vec<Vec<f64>>,
    pub explained_variance_ratio: Vec<f64>,
    /// Unit principal axes, one per output dimension.
    pub components: Vec<Vec<f64>>,
}

/// Centered SVD projection. Each axis is oriented so its largest-magnitude
/// loading is positive.
pub fn pca_project(x: &[Vec<f64>], dims: usize) -> Result<Projection, AnalysisError> {
    let d = check_rect(x)?;
    if x.len() < 2 {
        return Err(AnalysisError::TooFewRows { needed: 2, got: x.len() });
    }
    let n = x.len();
    let mut mean = vec![0.0; d];
    for r in x {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n as f64;
        }
    }
    let centered = DMatrix::from_fn(n, d, |i, j| x[i][j] - mean[j]);
    let svd = centered.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
    let mut components = Vec::with_capacity(dims);
    let mut ratios = Vec::with_capacity(dims);
    for k in 0..dims {
        match order.get(k) {
            Some(&idx) if svd.singular_values[idx] > 0.0 => {
                let mut axis: Vec<f64> = v_t.row(idx).iter().copied().collect();
                let lead = axis.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
                if lead < 0.0 {
                    axis.iter_mut().for_each(|v| *v = -*v);
                }
                let s = svd.singular_values[idx];
                ratios.push(if total > 0.0 { s * s / total } else { 0.0 });
                components.push(axis);
            }
            _ => {
                ratios.push(0.0);
                components.push(vec![0.0; d]);
            }
        }
    }
    let points = (0..n)
        .map(|i| {
            components
                .iter()
                .map(|c| (0..d).map(|j| centered[(i, j)] * c[j]).sum())
                .collect()
        })
        .collect();
    Ok(Projection {
        points,
        explained_variance_ratio: ratios,
        components,
    })
}

pub fn column_mean(x: &[Vec<f64>]) -> Result<Vec<f64>, AnalysisError> {
    let d = check_rect(x)?;
    let mut m = vec![0.0; d];
    for r in x {
        for (a, v) in m.iter_mut().zip(r) {
            *a += v;
        }
    }
    m.iter_mut().for_each(|a| *a /= x.len() as f64);
    Ok(m)
}

/// Shifts each row of `minuend` by `-(mean(subtrahend) - mean(addend))`.
pub fn vector_arith(
    minuend: &[Vec<f64>],
    subtrahend: &[Vec<f64>],
    addend: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, AnalysisError> {
    let d = check_rect(minuend)?;
    let ms = column_mean(subtrahend)?;
    let ma = column_mean(addend)?;
    if ms.len() != d || ma.len() != d {
        return Err(AnalysisError::Ragged);
    }
    let dir: Vec<f64> = ms.iter().zip(&ma).map(|(s, a)| s - a).collect();
    Ok(minuend
        .iter()
        .map(|r| r.iter().zip(&dir).map(|(v, t)| v - t).collect())
        .collect())
}

/// `1 - cos(a, b)`; 1 when either vector is zero.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - dot / (na * nb)
}

pub fn mean_cosine_distance(x: &[Vec<f64>], target: &[f64]) -> f64 {
    x.iter().map(|r| cosine_distance(r, target)).sum::<f64>() / x.len() as f64
}

pub struct ClusterRow<'a> {
    pub instance: &'a str,
    pub family: &'a str,
    pub size: &'a str,
    pub cluster: usize,
}

pub fn write_cluster_csv(path: &Path, rows: &[ClusterRow<'_>]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["instance", "family", "size", "cluster"])?;
    for r in rows {
        w.write_record([r.instance, r.family, r.size, &r.cluster.to_string()])?;
    }
    w.flush()
}

pub fn write_projection_csv(path: &Path, names: &[&str], points: &[Vec<f64>]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["instance", "x", "y"])?;
    for (n, p) in names.iter().zip(points) {
        let x = p.first().copied().unwrap_or(0.0);
        let y = p.get(1).copied().unwrap_or(0.0);
        w.write_record([n.to_string(), x.to_string(), y.to_string()])?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr_free::blob;

    mod rand_distr_free {
        use crate::seed::Rng;
        use rand::Rng as _;

        pub fn blob(center: &[f64], spread: f64, n: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| center.iter().map(|c| c + rng.gen_range(-spread..spread)).collect())
                .collect()
        }
    }

    #[test]
    fn nmi_exact_cases() {
        assert_eq!(nmi(&[0, 0, 1, 1, 2], &[0, 0, 1, 1, 2]).unwrap(), 1.0);
        assert_eq!(nmi(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(nmi(&[0, 1, 2, 0], &[7, 7, 7, 7]).unwrap(), 0.0);
        assert!(nmi(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn nmi_matches_hand_value() {
        // truth [0,0,1,1], pred [0,0,0,1]: I = ln2 - (3/4)ln(4/3)... computed by hand
        let t = [0, 0, 1, 1];
        let p = [0, 0, 0, 1];
        let ht = std::f64::consts::LN_2;
        let hp = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
        let mi = 0.5 * (0.5f64 / (0.5 * 0.75)).ln() + 0.25 * (0.25f64 / (0.5 * 0.75)).ln()
            + 0.25 * (0.25f64 / (0.5 * 0.25)).ln();
        let expected = mi / ((ht + hp) / 2.0);
        assert!((nmi(&t, &p).unwrap() - expected).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn nmi_symmetric_and_relabel_invariant(
            t in proptest::collection::vec(0usize..4, 1..40),
            seed in 0u64..1000,
        ) {
            let mut rng = rng_from_seed(seed);
            let p: Vec<usize> = t.iter().map(|_| rng.gen_range(0..3)).collect();
            let a = nmi(&t, &p).unwrap();
            prop_assert_eq!(a, nmi(&p, &t).unwrap());
            let relabeled: Vec<usize> = p.iter().map(|v| (v + 1) % 3 + 10).collect();
            prop_assert_eq!(a, nmi(&t, &relabeled).unwrap());
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn separable_blobs_recovered() {
        let mut rng = rng_from_seed(1);
        let mut x = blob(&[0.0, 0.0], 0.5, 20, &mut rng);
        x.extend(blob(&[10.0, 10.0], 0.5, 20, &mut rng));
        let truth: Vec<usize> = (0..40).map(|i| i / 20).collect();
        let r = kmeans(&x, 2, 3, 4).unwrap();
        assert_eq!(r.nmi_best(&truth).unwrap(), 1.0);
        let one = kmeans(&x, 1, 1, 4).unwrap();
        assert_eq!(one.nmi_best(&truth).unwrap(), 0.0);
    }

    #[test]
    fn best_of_runs_not_worse_than_single() {
        let mut rng = rng_from_seed(2);
        let mut x = blob(&[0.0, 0.0], 2.0, 30, &mut rng);
        x.extend(blob(&[4.0, 0.0], 2.0, 30, &mut rng));
        x.extend(blob(&[2.0, 4.0], 2.0, 30, &mut rng));
        let many = kmeans(&x, 3, 10, 9).unwrap();
        assert!(many.inertia <= many.run_inertia[0]);
        let single = kmeans(&x, 3, 1, 9).unwrap();
        assert!(many.inertia <= single.inertia);
    }

    #[test]
    fn kmeans_invariant_to_translation_and_scale() {
        let mut rng = rng_from_seed(3);
        let x: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.gen(), rng.gen(), rng.gen()]).collect();
        let y: Vec<Vec<f64>> = x.iter().map(|r| r.iter().map(|v| 4.0 * v + 8.0).collect()).collect();
        assert_eq!(kmeans(&x, 4, 2, 1).unwrap().assignments, kmeans(&y, 4, 2, 1).unwrap().assignments);
    }

    #[test]
    fn kmeans_rejects_too_few_distinct() {
        let x = vec![vec![1.0], vec![1.0], vec![1.0]];
        assert_eq!(kmeans(&x, 2, 1, 0), Err(AnalysisError::TooFewDistinct { k: 2, distinct: 1 }));
    }

    #[test]
    fn pca_plane_and_hand_case() {
        let mut rng = rng_from_seed(5);
        let x: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                let (a, b): (f64, f64) = (rng.gen(), rng.gen());
                vec![a, b, a + b, a - b, 2.0 * a]
            })
            .collect();
        let p = pca_project(&x, 2).unwrap();
        let s: f64 = p.explained_variance_ratio.iter().sum();
        assert!((s - 1.0).abs() < 1e-10);

        // Points (-1,0), (0,0), (1,0): one axis (1,0), coordinates -1, 0, 1.
        let x = vec![vec![-1.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0]];
        let p = pca_project(&x, 2).unwrap();
        assert!((p.components[0][0] - 1.0).abs() < 1e-12);
        let xs: Vec<f64> = p.points.iter().map(|r| r[0]).collect();
        for (a, b) in xs.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((p.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
        assert_eq!(p.explained_variance_ratio[1], 0.0);

        let dup = vec![vec![2.0, 3.0]; 4];
        let p = pca_project(&dup, 2).unwrap();
        assert!(p.points.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn arithmetic_identity_and_inverse() {
        let e = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let s = vec![vec![1.0, 1.0]];
        assert_eq!(vector_arith(&e, &s, &s).unwrap(), e);
        let a = vec![vec![0.0, 2.0], vec![2.0, 0.0]];
        let shifted = vector_arith(&e, &s, &a).unwrap();
        assert_eq!(shifted, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = vec![vec![3.0, -1.0]];
        let fwd = vector_arith(&e, &b, &s).unwrap();
        assert_eq!(fwd, vec![vec![-1.0, 4.0], vec![1.0, 6.0]]);
        assert_eq!(vector_arith(&fwd, &s, &b).unwrap(), e);
        assert!(vector_arith(&e, &[], &s).is_err());
    }

    #[test]
    fn cosine_cases() {
        assert!(cosine_distance(&[1.0, 0.0], &[2.0, 0.0]).abs() < 1e-15);
        assert!((cosine_distance(&[1.0, 0.0], &[0.0, 1.0]) - 1.0).abs() < 1e-15);
        assert_eq!(cosine_distance(&[0.0, 0.0], &[0.0, 1.0]), 1.0);
    }
}
