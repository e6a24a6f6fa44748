//! Sliced 2-Wasserstein distances between label-conditional embedding clouds.
//!
//! For every task and class a cloud `P(X | Y = y)` is formed from the
//! embeddings of the bundles carrying that label. Two clouds are compared by
//! projecting both onto random low-dimensional subspaces and transporting
//! the projections: one-dimensional slices use the exact quantile coupling,
//! `k`-dimensional slices the closed-form W2 between the moment-matched
//! Gaussians. The squared per-slice distance is divided by `k`, so every
//! slice estimates the same per-direction quantity, and the estimate is the
//! root of the mean over slices.
//!
//! Directions of one-dimensional slices are drawn in orthonormal blocks of up
//! to `d` vectors (Gram-Schmidt on Gaussian draws). Each direction is still
//! uniform on the sphere; the blocks only remove redundancy between them.

use std::cmp::Ordering;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::EmbeddingIndex;
use crate::hashing::fnv1a64;
use crate::model::{PathologyTask, SegmentBundle};

/// Points stored row-major, `n × dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cloud {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Cloud {
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().ok_or(Error::EmptyInput("cloud"))?.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::InconsistentDimension {
                    first: dim,
                    other: r.len(),
                });
            }
            if let Some(&v) = r.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidValue {
                    key: "cloud point".into(),
                    value: v,
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { dim, data })
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.len().cmp(&other.len()).then_with(|| {
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a.total_cmp(b))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CloudLabel {
    pub task: PathologyTask,
    pub class_index: usize,
}

impl fmt::Display for CloudLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.task, self.task.class_names()[self.class_index])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalCloud {
    pub task: PathologyTask,
    pub class_index: usize,
    pub points: Cloud,
}

impl ConditionalCloud {
    pub const MIN_POINTS: usize = 2;

    pub fn label(&self) -> CloudLabel {
        CloudLabel {
            task: self.task,
            class_index: self.class_index,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Clouds below [`ConditionalCloud::MIN_POINTS`] are reported as absent.
    pub fn is_usable(&self) -> bool {
        self.len() >= Self::MIN_POINTS
    }
}

/// One cloud per `(task, class)` present among `bundles`, in canonical task
/// and class order. Class 0 is included only when `include_class0` is set.
pub fn slice_conditionals(
    bundles: &[SegmentBundle],
    embeddings: &EmbeddingIndex,
    include_class0: bool,
) -> Result<Vec<ConditionalCloud>> {
    let mut groups: Vec<Vec<&[f64]>> = (0..10).map(|_| Vec::new()).collect();
    let offset = |t: PathologyTask| PathologyTask::ALL[..t.index()].iter().map(|t| t.arity()).sum::<usize>();
    for b in bundles {
        let x = embeddings.get(&b.key())?;
        for label in b.labels.iter() {
            if label.class_index >= label.task.arity() {
                return Err(Error::ClassOutOfRange {
                    task: label.task,
                    class_index: label.class_index,
                    arity: label.task.arity(),
                });
            }
            groups[offset(label.task) + label.class_index].push(x);
        }
    }
    let mut out = Vec::new();
    for task in PathologyTask::ALL {
        for class_index in 0..task.arity() {
            let rows = &groups[offset(task) + class_index];
            if rows.is_empty() || (class_index == 0 && !include_class0) {
                continue;
            }
            out.push(ConditionalCloud {
                task,
                class_index,
                points: Cloud::from_rows(rows)?,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwConfig {
    pub n_projections: usize,
    /// Subspace dimension per slice, cycled over the slices.
    pub projection_dims: Vec<usize>,
    pub seed: u64,
}

impl Default for SwConfig {
    fn default() -> Self {
        Self {
            n_projections: 60,
            projection_dims: vec![1],
            seed: 0,
        }
    }
}

impl SwConfig {
    /// `count` integer dimensions log-spaced over `[1, max_dim]`, deduplicated.
    pub fn log_spaced_dims(max_dim: usize, count: usize) -> Vec<usize> {
        let top = (max_dim.max(1) as f64).ln();
        let mut dims: Vec<usize> = (0..count.max(1))
            .map(|i| {
                let t = if count <= 1 { 0.0 } else { i as f64 / (count - 1) as f64 };
                (t * top).exp().round() as usize
            })
            .collect();
        dims.dedup();
        dims
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.n_projections == 0 {
            return Err(Error::InvalidConfig("n_projections must be at least 1".into()));
        }
        if self.projection_dims.is_empty() {
            return Err(Error::InvalidConfig("projection_dims is empty".into()));
        }
        if let Some(k) = self.projection_dims.iter().find(|&&k| k == 0 || k > dim) {
            return Err(Error::InvalidConfig(format!("projection dim {k} outside [1, {dim}]")));
        }
        Ok(())
    }
}

/// Exact 1-D W2 between uniform empirical measures (inputs need not be sorted).
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("wasserstein_1d"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(w2_sq_sorted(&a, &b).sqrt())
}

/// Squared W2 of sorted samples via the quantile coupling. The merged grid
/// of breakpoints `i/n` and `j/m` is walked with integer arithmetic.
fn w2_sq_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    if n == m {
        return a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n as f64;
    }
    let total = (n * m) as f64;
    let (mut i, mut j, mut prev) = (0, 0, 0usize);
    let mut acc = 0.0;
    while i < n && j < m {
        let next_a = (i + 1) * m;
        let next_b = (j + 1) * n;
        let next = next_a.min(next_b);
        let d = a[i] - b[j];
        acc += (next - prev) as f64 * d * d;
        prev = next;
        if next_a == next {
            i += 1;
        }
        if next_b == next {
            j += 1;
        }
    }
    acc / total
}

fn project_1d(cloud: &Cloud, theta: &[f64]) -> Vec<f64> {
    let mut p: Vec<f64> = cloud
        .rows()
        .map(|r| r.iter().zip(theta).map(|(x, t)| x * t).sum())
        .collect();
    p.sort_by(f64::total_cmp);
    p
}

/// Gram-Schmidt on `k` Gaussian draws in `R^d`; redraws near-dependent vectors.
fn orthonormal_rows(k: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(k);
    while rows.len() < k {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        for _ in 0..2 {
            for r in &rows {
                let dot: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(r).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            rows.push(v);
        }
    }
    rows
}

fn gaussian_moments(proj: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
    let k = proj.len();
    let n = proj[0].len() as f64;
    let mean: Vec<f64> = proj.iter().map(|p| p.iter().sum::<f64>() / n).collect();
    let cov = DMatrix::from_fn(k, k, |r, c| {
        proj[r]
            .iter()
            .zip(&proj[c])
            .map(|(x, y)| (x - mean[r]) * (y - mean[c]))
            .sum::<f64>()
            / n
    });
    (mean, cov)
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Squared W2 between Gaussians `N(m1, s1)` and `N(m2, s2)`.
pub fn bures_w2_sq(m1: &[f64], s1: &DMatrix<f64>, m2: &[f64], s2: &DMatrix<f64>) -> f64 {
    let mean_term: f64 = m1.iter().zip(m2).map(|(a, b)| (a - b) * (a - b)).sum();
    let r1 = psd_sqrt(s1);
    let cross = psd_sqrt(&(&r1 * s2 * &r1));
    (mean_term + s1.trace() + s2.trace() - 2.0 * cross.trace()).max(0.0)
}

fn project_k(cloud: &Cloud, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|theta| {
            cloud
                .rows()
                .map(|r| r.iter().zip(theta).map(|(x, t)| x * t).sum())
                .collect()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwEstimate {
    pub estimate: f64,
    /// Delta-method standard error of the estimate over slices.
    pub stderr: f64,
}

/// Per-slice squared distances, each divided by its slice dimension.
fn slice_costs(a: &Cloud, b: &Cloud, config: &SwConfig) -> Vec<f64> {
    let d = a.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut costs = Vec::with_capacity(config.n_projections);
    let mut block: Vec<Vec<f64>> = Vec::new();
    for s in 0..config.n_projections {
        let k = config.projection_dims[s % config.projection_dims.len()];
        if k == 1 {
            if block.is_empty() {
                let ones_left = (s..config.n_projections)
                    .filter(|t| config.projection_dims[t % config.projection_dims.len()] == 1)
                    .count();
                block = orthonormal_rows(ones_left.min(d), d, &mut rng);
                block.reverse();
            }
            let theta = block.pop().expect("block refilled above");
            costs.push(w2_sq_sorted(&project_1d(a, &theta), &project_1d(b, &theta)));
        } else {
            let rows = orthonormal_rows(k, d, &mut rng);
            let (ma, sa) = gaussian_moments(&project_k(a, &rows));
            let (mb, sb) = gaussian_moments(&project_k(b, &rows));
            costs.push(bures_w2_sq(&ma, &sa, &mb, &sb) / k as f64);
        }
    }
    costs
}

/// Sliced W2 between two clouds. The operands are put in a canonical order
/// first, so swapping them gives bit-identical results.
pub fn sliced_w2(a: &Cloud, b: &Cloud, config: &SwConfig) -> Result<SwEstimate> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch {
            expected: a.dim,
            found: b.dim,
        });
    }
    config.validate(a.dim)?;
    for c in [a, b] {
        if c.len() < ConditionalCloud::MIN_POINTS {
            return Err(Error::InsufficientSamples {
                needed: ConditionalCloud::MIN_POINTS,
                got: c.len(),
            });
        }
    }
    let (a, b) = if a.canonical_cmp(b) == Ordering::Greater { (b, a) } else { (a, b) };
    if a == b {
        return Ok(SwEstimate {
            estimate: 0.0,
            stderr: 0.0,
        });
    }
    let costs = slice_costs(a, b, config);
    let n = costs.len() as f64;
    let mean = costs.iter().sum::<f64>() / n;
    let estimate = mean.sqrt();
    let stderr = if costs.len() < 2 || mean == 0.0 {
        0.0
    } else {
        let var = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt() / (2.0 * estimate)
    };
    Ok(SwEstimate { estimate, stderr })
}

/// Seed for the cell `(a, b)`; independent of the operand order.
pub fn cell_seed(master: u64, a: CloudLabel, b: CloudLabel) -> u64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    fnv1a64(master, format!("{}#{}|{}#{}", lo.task, lo.class_index, hi.task, hi.class_index).as_bytes())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskDistanceMatrix {
    pub labels: Vec<CloudLabel>,
    pub sizes: Vec<usize>,
    /// `None` where a cloud has too few points.
    pub values: Vec<Vec<Option<f64>>>,
    pub stderr: Vec<Vec<Option<f64>>>,
}

impl TaskDistanceMatrix {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Largest computed off-diagonal value.
    pub fn max_value(&self) -> Option<f64> {
        self.values
            .iter()
            .flatten()
            .flatten()
            .copied()
            .fold(None, |m, v| Some(m.map_or(v, |m: f64| m.max(v))))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label");
        for l in &self.labels {
            out.push(',');
            out.push_str(&l.to_string());
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.values) {
            out.push_str(&l.to_string());
            for v in row {
                out.push(',');
                match v {
                    Some(v) => out.push_str(&format!("{v:.6}")),
                    None => out.push_str("NA"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// All pairwise sliced distances, each unordered pair computed once with a
/// seed derived from `config.seed` and the two labels.
pub fn distance_matrix(clouds: &[ConditionalCloud], config: &SwConfig) -> Result<TaskDistanceMatrix> {
    if clouds.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: clouds.len(),
        });
    }
    let dim = clouds[0].points.dim;
    if let Some(c) = clouds.iter().find(|c| c.points.dim != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: c.points.dim,
        });
    }
    config.validate(dim)?;
    let n = clouds.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let cells: Vec<Option<SwEstimate>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (&clouds[i], &clouds[j]);
            if !a.is_usable() || !b.is_usable() {
                return Ok(None);
            }
            let cfg = SwConfig {
                seed: cell_seed(config.seed, a.label(), b.label()),
                ..config.clone()
            };
            sliced_w2(&a.points, &b.points, &cfg).map(Some)
        })
        .collect::<Result<_>>()?;

    let mut values = vec![vec![None; n]; n];
    let mut stderr = vec![vec![None; n]; n];
    for i in 0..n {
        if clouds[i].is_usable() {
            values[i][i] = Some(0.0);
            stderr[i][i] = Some(0.0);
        }
    }
    for (&(i, j), cell) in pairs.iter().zip(cells) {
        if let Some(e) = cell {
            values[i][j] = Some(e.estimate);
            values[j][i] = Some(e.estimate);
            stderr[i][j] = Some(e.stderr);
            stderr[j][i] = Some(e.stderr);
        }
    }
    Ok(TaskDistanceMatrix {
        labels: clouds.iter().map(ConditionalCloud::label).collect(),
        sizes: clouds.iter().map(ConditionalCloud::len).collect(),
        values,
        stderr,
    })
}

/// `diameter × tv`, the transport bound for measures on a set of the given
/// diameter.
pub fn upper_bound(diameter: f64, tv: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&tv) {
        return Err(Error::InvalidTotalVariation(tv));
    }
    if !(diameter >= 0.0) {
        return Err(Error::InvalidConfig(format!("diameter {diameter} must be non-negative")));
    }
    Ok(diameter * tv)
}

/// Largest pairwise Euclidean distance over the union of all points
/// (exhaustive O(n²) scan over distinct points).
pub fn estimate_diameter(clouds: &[&Cloud]) -> Result<f64> {
    let mut rows: Vec<&[f64]> = clouds.iter().flat_map(|c| c.rows()).collect();
    let bits = |r: &[f64]| r.iter().map(|v| v.to_bits()).collect::<Vec<u64>>();
    rows.sort_by_cached_key(|r| bits(r));
    rows.dedup_by(|a, b| bits(a) == bits(b));
    if rows.is_empty() {
        return Err(Error::EmptyInput("estimate_diameter"));
    }
    let max_sq = (0..rows.len())
        .into_par_iter()
        .map(|i| {
            rows[i + 1..]
                .iter()
                .map(|r| r.iter().zip(rows[i]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(max_sq.sqrt())
}
