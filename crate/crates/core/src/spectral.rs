//! Spectral embedding and clustering: self-tuned kNN similarity graph,
//! normalized-Laplacian eigenvectors, k-means with k-means++ restarts, and
//! permutation-matched clustering accuracy.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::learners::Standardizer;
use crate::rng::{derive_seed, rng_from_seed};

/// Weights below this are treated as absent edges.
const WEIGHT_FLOOR: f64 = 1e-12;

/// Symmetric non-negative similarity graph with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    n: usize,
    /// Dense n x n weights, row-major.
    weights: Vec<f64>,
    pub k_neighbors: usize,
}

impl SimilarityGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.weights[i * self.n..(i + 1) * self.n].iter().sum()
    }
}

/// Connect each row to its `k_neighbors` nearest rows (Euclidean) with
/// self-tuning Gaussian weights `exp(-d² / (σ_i σ_j))`, where `σ_i` is the
/// distance to the ⌈k/2⌉-th neighbor (floored at 1e-12). Weights are
/// symmetrized by max.
pub fn build_knn_graph(rows: &[&[f64]], k_neighbors: usize) -> Result<SimilarityGraph> {
    let n = rows.len();
    if k_neighbors == 0 {
        return Err(Error::contract("build_knn_graph: k_neighbors must be ≥ 1"));
    }
    if n <= k_neighbors {
        return Err(Error::contract(format!(
            "build_knn_graph: need more rows ({n}) than neighbors ({k_neighbors})"
        )));
    }
    let d2 = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    };

    // Per row: sorted neighbor list (distance², index) and self-tuning scale.
    let sigma_rank = k_neighbors.div_ceil(2);
    let mut neighbor_lists: Vec<Vec<(f64, usize)>> = Vec::with_capacity(n);
    let mut sigma = vec![0.0; n];
    for i in 0..n {
        let mut dists: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (d2(rows[i], rows[j]), j))
            .collect();
        dists.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        dists.truncate(k_neighbors);
        sigma[i] = dists[sigma_rank - 1].0.sqrt().max(WEIGHT_FLOOR);
        neighbor_lists.push(dists);
    }

    let mut weights = vec![0.0; n * n];
    for i in 0..n {
        for &(dist2, j) in &neighbor_lists[i] {
            let w = (-dist2 / (sigma[i] * sigma[j])).exp();
            if w >= WEIGHT_FLOOR {
                // max-symmetrization: an edge exists if either endpoint
                // selects the other.
                if w > weights[i * n + j] {
                    weights[i * n + j] = w;
                    weights[j * n + i] = w;
                }
            }
        }
    }
    Ok(SimilarityGraph {
        n,
        weights,
        k_neighbors,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEmbedding {
    /// n rows x k_dims coordinates, rows L2-normalized (zero rows stay zero).
    pub coordinates: Vec<Vec<f64>>,
    /// The k_dims smallest eigenvalues of the normalized Laplacian, ascending.
    pub eigenvalues: Vec<f64>,
}

/// Orient an eigenvector so its largest-magnitude entry (lowest index on
/// ties) is positive.
fn orient(v: &mut DVector<f64>) {
    let mut best = 0usize;
    let mut best_mag = 0.0;
    for (i, &x) in v.iter().enumerate() {
        if x.abs() > best_mag {
            best_mag = x.abs();
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Eigenvectors of L_sym = I - D^{-1/2} W D^{-1/2} for the `k_dims` smallest
/// eigenvalues, rows L2-normalized.
pub fn spectral_embedding(graph: &SimilarityGraph, k_dims: usize) -> Result<SpectralEmbedding> {
    let n = graph.n;
    if k_dims == 0 {
        return Err(Error::contract("spectral_embedding: k_dims must be ≥ 1"));
    }
    if n < k_dims + 1 {
        return Err(Error::contract(format!(
            "spectral_embedding: need at least {} nodes for {k_dims} dims, got {n}",
            k_dims + 1
        )));
    }
    let mut inv_sqrt_deg = vec![0.0; n];
    for i in 0..n {
        let mut deg = graph.degree(i);
        if deg < WEIGHT_FLOOR {
            eprintln!("warning: node {i} is isolated; degree floored at {WEIGHT_FLOOR:e}");
            deg = WEIGHT_FLOOR;
        }
        inv_sqrt_deg[i] = 1.0 / deg.sqrt();
    }
    let mut l_sym = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let w = graph.weight(i, j) * inv_sqrt_deg[i] * inv_sqrt_deg[j];
            l_sym[(i, j)] = if i == j { 1.0 - w } else { -w };
        }
    }
    // The graph construction leaves the diagonal zero, so l_sym[(i,i)] = 1.

    let eig = l_sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap()
            .then(a.cmp(&b))
    });

    let mut eigenvalues = Vec::with_capacity(k_dims);
    let mut vectors: Vec<DVector<f64>> = Vec::with_capacity(k_dims);
    for &idx in order.iter().take(k_dims) {
        eigenvalues.push(eig.eigenvalues[idx]);
        let mut v: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
        orient(&mut v);
        vectors.push(v);
    }

    let mut coordinates = vec![vec![0.0; k_dims]; n];
    for i in 0..n {
        for (k, v) in vectors.iter().enumerate() {
            coordinates[i][k] = v[i];
        }
        let norm: f64 = coordinates[i].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > WEIGHT_FLOOR {
            for x in coordinates[i].iter_mut() {
                *x /= norm;
            }
        } else {
            for x in coordinates[i].iter_mut() {
                *x = 0.0;
            }
        }
    }
    Ok(SpectralEmbedding {
        coordinates,
        eigenvalues,
    })
}

fn point_d2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn lloyd(
    points: &[Vec<f64>],
    k: usize,
    max_iter: usize,
    seed: u64,
) -> (Vec<usize>, f64) {
    let n = points.len();
    let dims = points[0].len();
    let mut rng = rng_from_seed(seed);

    // k-means++ seeding.
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(points[rng.gen_range(0..n)].clone());
    let mut min_d2: Vec<f64> = points.iter().map(|p| point_d2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = min_d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in min_d2.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centers.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            let d = point_d2(p, centers.last().unwrap());
            if d < min_d2[i] {
                min_d2[i] = d;
            }
        }
    }

    let mut assign = vec![0usize; n];
    for _ in 0..max_iter {
        // Assignment step; ties go to the lowest center index.
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = point_d2(p, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }

        // Update step.
        let mut sums = vec![vec![0.0; dims]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assign[i]] += 1;
            for (s, &v) in sums[assign[i]].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut reseeded = Vec::new();
        for c in 0..k {
            if counts[c] == 0 {
                // Reseed an empty cluster to the farthest point from its
                // current center (lowest index on ties, each point once).
                let mut far = None::<(f64, usize)>;
                for (i, p) in points.iter().enumerate() {
                    if reseeded.contains(&i) {
                        continue;
                    }
                    let d = point_d2(p, &centers[assign[i]]);
                    if far.map_or(true, |(fd, _)| d > fd) {
                        far = Some((d, i));
                    }
                }
                let (_, i) = far.unwrap();
                centers[c] = points[i].clone();
                reseeded.push(i);
            } else {
                for (s, ctr) in sums[c].iter().zip(centers[c].iter_mut()) {
                    *ctr = s / counts[c] as f64;
                }
            }
        }
        if !changed && reseeded.is_empty() {
            break;
        }
    }

    let inertia: f64 = points
        .iter()
        .zip(&assign)
        .map(|(p, &c)| point_d2(p, &centers[c]))
        .sum();
    (assign, inertia)
}

/// k-means with k-means++ seeding and `restarts` independent starts; returns
/// the best-inertia labeling (ties to the lowest restart index).
pub fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    restarts: usize,
    max_iter: usize,
    rng: &mut impl Rng,
) -> Result<(Vec<usize>, f64)> {
    if k == 0 {
        return Err(Error::contract("kmeans: k must be ≥ 1"));
    }
    if restarts == 0 {
        return Err(Error::contract("kmeans: restarts must be ≥ 1"));
    }
    let n = points.len();
    if n < k {
        return Err(Error::contract(format!(
            "kmeans: {n} points cannot form {k} clusters"
        )));
    }
    let base: u64 = rng.gen();
    let mut best: Option<(Vec<usize>, f64)> = None;
    for r in 0..restarts {
        let (assign, inertia) = lloyd(points, k, max_iter, derive_seed(base, r as u64));
        if best.as_ref().map_or(true, |(_, bi)| inertia < *bi) {
            best = Some((assign, inertia));
        }
    }
    Ok(best.unwrap())
}

/// Standardize (full-data statistics — legitimate without labels), build the
/// kNN graph, embed to `k` dims, and k-means the embedding into `k` clusters.
pub fn spectral_clustering(
    rows: &[&[f64]],
    k: usize,
    k_neighbors: usize,
    rng: &mut impl Rng,
) -> Result<(Vec<usize>, SpectralEmbedding)> {
    let standardizer = Standardizer::fit(rows)?;
    let flat = standardizer.transform_matrix(rows);
    let d = standardizer.dim();
    let std_rows: Vec<&[f64]> = (0..rows.len()).map(|i| &flat[i * d..(i + 1) * d]).collect();
    let graph = build_knn_graph(&std_rows, k_neighbors)?;
    let embedding = spectral_embedding(&graph, k)?;
    let (labels, _) = kmeans(&embedding.coordinates, k, 10, 300, rng)?;
    Ok((labels, embedding))
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, remaining: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if remaining.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..remaining.len() {
            let v = remaining.remove(i);
            prefix.push(v);
            rec(prefix, remaining, out);
            prefix.pop();
            remaining.insert(i, v);
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut (0..m).collect(), &mut out);
    out
}

/// Best-permutation match fraction plus the per-class accuracies under that
/// permutation.
pub fn clustering_accuracy_detailed(
    pred: &[usize],
    truth: &[String],
) -> Result<(f64, BTreeMap<String, f64>)> {
    if pred.len() != truth.len() {
        return Err(Error::contract(format!(
            "clustering_accuracy: {} predictions vs {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::contract("clustering_accuracy: empty input"));
    }
    let classes: Vec<&String> = truth
        .iter()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let clusters: Vec<usize> = pred
        .iter()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let m = classes.len().max(clusters.len());
    if m > 8 {
        return Err(Error::contract(format!(
            "clustering_accuracy: permutation search supports ≤ 8 clusters, got {m}"
        )));
    }

    // counts[cluster_slot][class_slot], padded to m x m.
    let mut counts = vec![vec![0u64; m]; m];
    for (p, t) in pred.iter().zip(truth) {
        let ci = clusters.iter().position(|c| c == p).unwrap();
        let ti = classes.iter().position(|c| *c == t).unwrap();
        counts[ci][ti] += 1;
    }
    let mut best_perm = None;
    let mut best_correct = 0u64;
    for perm in permutations(m) {
        let correct: u64 = (0..m).map(|c| counts[c][perm[c]]).sum();
        if best_perm.is_none() || correct > best_correct {
            best_correct = correct;
            best_perm = Some(perm);
        }
    }
    let perm = best_perm.unwrap();

    let mut per_class = BTreeMap::new();
    for (ti, class) in classes.iter().enumerate() {
        let class_total: u64 = (0..m).map(|c| counts[c][ti]).sum();
        let class_correct: u64 = (0..m)
            .filter(|&c| perm[c] == ti)
            .map(|c| counts[c][ti])
            .sum();
        per_class.insert((*class).clone(), class_correct as f64 / class_total as f64);
    }
    Ok((best_correct as f64 / pred.len() as f64, per_class))
}

/// Fraction of rows matched under the best cluster-to-class permutation.
pub fn clustering_accuracy(pred: &[usize], truth: &[String]) -> Result<f64> {
    clustering_accuracy_detailed(pred, truth).map(|(a, _)| a)
}

/// CSV `id,x,y,label` for a 2-D embedding; ids are row indices.
pub fn export_scatter_to<W: Write>(
    embedding: &SpectralEmbedding,
    labels: &[String],
    mut out: W,
) -> Result<()> {
    if embedding.coordinates.is_empty() {
        return Err(Error::contract("export_scatter: empty embedding"));
    }
    if embedding.coordinates[0].len() != 2 {
        return Err(Error::contract(format!(
            "export_scatter: needs a 2-D embedding, got {} dims",
            embedding.coordinates[0].len()
        )));
    }
    if labels.len() != embedding.coordinates.len() {
        return Err(Error::contract(format!(
            "export_scatter: {} labels for {} rows",
            labels.len(),
            embedding.coordinates.len()
        )));
    }
    writeln!(out, "id,x,y,label")?;
    for (i, (row, label)) in embedding.coordinates.iter().zip(labels).enumerate() {
        writeln!(out, "{i},{},{},{label}", row[0], row[1])?;
    }
    Ok(())
}

pub fn export_scatter(
    embedding: &SpectralEmbedding,
    labels: &[String],
    path: &std::path::Path,
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    export_scatter_to(embedding, labels, std::io::BufWriter::new(file))
}
