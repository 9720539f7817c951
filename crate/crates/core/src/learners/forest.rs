use std::collections::HashMap;

use rand::Rng;

use super::{RandomForestParams, TrainData};
use crate::rng::{derive_seed, rng_from_seed};

/// Random forest: per-tree bootstrap resample, Gini impurity, sqrt(d)
/// features per node, midpoint thresholds.
///
/// Duplicate training rows are collapsed up front into unique
/// (features, label) rows; each tree's bootstrap then draws row *indices* and
/// accumulates them as integer weights on the unique rows. That is exactly
/// equivalent to growing the tree on the multiset of drawn rows (Gini and
/// majority counts only ever see summed weights), and keeps node sorting
/// proportional to unique rows even when the input is heavily duplicated.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ForestModel {
    trees: Vec<Tree>,
    n_classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf { class: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

struct UniqueRows {
    x: Vec<f64>,
    y: Vec<usize>,
    m: usize,
    d: usize,
    /// Map from original row index to unique-row index.
    of_input: Vec<usize>,
}

fn dedupe(data: &TrainData) -> UniqueRows {
    let mut key_to_uid: HashMap<(Vec<u64>, usize), usize> = HashMap::new();
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut of_input = Vec::with_capacity(data.n);
    for i in 0..data.n {
        let bits: Vec<u64> = data.row(i).iter().map(|v| v.to_bits()).collect();
        let key = (bits, data.y[i]);
        let uid = *key_to_uid.entry(key).or_insert_with(|| {
            x.extend_from_slice(data.row(i));
            y.push(data.y[i]);
            y.len() - 1
        });
        of_input.push(uid);
    }
    UniqueRows {
        m: y.len(),
        d: data.d,
        x,
        y,
        of_input,
    }
}

struct TreeBuilder<'a> {
    rows: &'a UniqueRows,
    n_classes: usize,
    n_feat_per_node: usize,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    /// Grow the subtree over `active` (unique-row ids with weight > 0 in
    /// `weights`) and return its node index.
    fn grow(&mut self, active: Vec<usize>, weights: &[u64], rng: &mut impl Rng) -> usize {
        let mut counts = vec![0u64; self.n_classes];
        for &u in &active {
            counts[self.rows.y[u]] += weights[u];
        }
        let total: u64 = counts.iter().sum();
        let majority = || -> usize {
            let top = *counts.iter().max().unwrap();
            counts.iter().position(|&c| c == top).unwrap()
        };
        if counts.iter().filter(|&&c| c > 0).count() <= 1 {
            let class = majority();
            self.nodes.push(Node::Leaf { class });
            return self.nodes.len() - 1;
        }

        // Sample distinct candidate features by partial Fisher-Yates.
        let d = self.rows.d;
        let mut feat_pool: Vec<usize> = (0..d).collect();
        for i in 0..self.n_feat_per_node.min(d) {
            let j = rng.gen_range(i..d);
            feat_pool.swap(i, j);
        }

        let mut best: Option<(f64, usize, f64)> = None; // (score, feature, threshold)
        let mut column: Vec<(f64, usize)> = Vec::with_capacity(active.len());
        for &f in feat_pool.iter().take(self.n_feat_per_node.min(d)) {
            column.clear();
            for &u in &active {
                column.push((self.rows.x[u * d + f], u));
            }
            column.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));

            let mut left_counts = vec![0u64; self.n_classes];
            let mut left_total = 0u64;
            for w in 0..column.len() - 1 {
                let (v, u) = column[w];
                left_counts[self.rows.y[u]] += weights[u];
                left_total += weights[u];
                let next_v = column[w + 1].0;
                if next_v == v {
                    continue;
                }
                let right_total = total - left_total;
                let gini = |cts: &dyn Fn(usize) -> u64, tot: u64| -> f64 {
                    if tot == 0 {
                        return 0.0;
                    }
                    let mut s = 0.0;
                    for k in 0..self.n_classes {
                        let p = cts(k) as f64 / tot as f64;
                        s += p * p;
                    }
                    1.0 - s
                };
                let gl = gini(&|k| left_counts[k], left_total);
                let gr = gini(&|k| counts[k] - left_counts[k], right_total);
                let score = (left_total as f64 * gl + right_total as f64 * gr) / total as f64;
                let threshold = 0.5 * (v + next_v);
                if best.map_or(true, |(bs, _, _)| score < bs) {
                    best = Some((score, f, threshold));
                }
            }
        }

        let Some((_, feature, threshold)) = best else {
            // No candidate feature had two distinct values: cannot split.
            let class = majority();
            self.nodes.push(Node::Leaf { class });
            return self.nodes.len() - 1;
        };

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = active
            .iter()
            .partition(|&&u| self.rows.x[u * self.rows.d + feature] <= threshold);
        let placeholder = self.nodes.len();
        self.nodes.push(Node::Leaf { class: 0 });
        let left = self.grow(left_rows, weights, rng);
        let right = self.grow(right_rows, weights, rng);
        self.nodes[placeholder] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        placeholder
    }
}

pub(crate) fn fit(params: &RandomForestParams, data: &TrainData, seed: u64) -> ForestModel {
    let rows = dedupe(data);
    let n_feat_per_node = ((data.d as f64).sqrt().floor() as usize).max(1);
    let trees = (0..params.trees)
        .map(|t| {
            let mut rng = rng_from_seed(derive_seed(seed, t as u64));
            let mut weights = vec![0u64; rows.m];
            for _ in 0..data.n {
                let i = rng.gen_range(0..data.n);
                weights[rows.of_input[i]] += 1;
            }
            let active: Vec<usize> = (0..rows.m).filter(|&u| weights[u] > 0).collect();
            let mut builder = TreeBuilder {
                rows: &rows,
                n_classes: data.n_classes,
                n_feat_per_node,
                nodes: Vec::new(),
            };
            let root = builder.grow(active, &weights, &mut rng);
            debug_assert_eq!(root, 0);
            Tree {
                nodes: builder.nodes,
            }
        })
        .collect();
    ForestModel {
        trees,
        n_classes: data.n_classes,
    }
}

impl ForestModel {
    pub fn predict(&self, x: &[f64], n: usize, d: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let row = &x[i * d..(i + 1) * d];
            let mut votes = vec![0u32; self.n_classes];
            for tree in &self.trees {
                let mut node = 0usize;
                loop {
                    match &tree.nodes[node] {
                        Node::Leaf { class } => {
                            votes[*class] += 1;
                            break;
                        }
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => {
                            node = if row[*feature] <= *threshold { *left } else { *right };
                        }
                    }
                }
            }
            let top = *votes.iter().max().unwrap();
            out.push(votes.iter().position(|&v| v == top).unwrap());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use crate::learners::tests::blob_data;
    use crate::learners::{fit as fit_model, AlgorithmSpec, ClassifierSpec, RandomForestParams};

    fn forest_spec(trees: usize, seed: u64) -> ClassifierSpec {
        ClassifierSpec::new(AlgorithmSpec::RandomForest(RandomForestParams { trees }), seed)
    }

    #[test]
    fn memorizes_separable_training_data() {
        let (rows, labels) = blob_data(40, 3, 6.0, 21);
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let lab_refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
        let model = fit_model(&forest_spec(25, 4), &refs, &lab_refs).unwrap();
        let pred = model.predict(&refs).unwrap();
        let correct = pred.iter().zip(&labels).filter(|(p, t)| p == t).count();
        assert!(
            correct as f64 / labels.len() as f64 >= 0.99,
            "training accuracy {correct}/{}",
            labels.len()
        );
    }

    #[test]
    fn learns_a_nonlinear_boundary() {
        // XOR-style quadrants; a linear model cannot do better than chance.
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                let x = -1.0 + 0.22 * i as f64 + 0.01;
                let y = -1.0 + 0.22 * j as f64 + 0.013;
                rows.push(vec![x, y]);
                labels.push(if (x > 0.0) == (y > 0.0) { "same" } else { "diff" });
            }
        }
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let model = fit_model(&forest_spec(50, 9), &refs, &labels).unwrap();
        let pred = model.predict(&refs).unwrap();
        let correct = pred.iter().zip(&labels).filter(|(p, t)| p == t).count();
        assert!(correct >= 97, "XOR training accuracy {correct}/100");
    }

    #[test]
    fn duplicated_dataset_gives_same_trees_as_reweighting_implies() {
        // Exact-duplicate rows collapse to weights; a forest trained on a
        // dataset where every row appears twice must behave sensibly (and
        // deterministically) rather than blowing up node sorts.
        let (rows, labels) = blob_data(25, 2, 5.0, 33);
        let mut doubled = rows.clone();
        doubled.extend(rows.iter().cloned());
        let mut doubled_labels = labels.clone();
        doubled_labels.extend(labels.iter().cloned());
        let refs: Vec<&[f64]> = doubled.iter().map(|r| r.as_slice()).collect();
        let lab_refs: Vec<&str> = doubled_labels.iter().map(|s| s.as_str()).collect();
        let model = fit_model(&forest_spec(10, 2), &refs, &lab_refs).unwrap();
        let probe: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let pred = model.predict(&probe).unwrap();
        let correct = pred.iter().zip(&labels).filter(|(p, t)| p == t).count();
        assert!(correct >= 48, "doubled-data accuracy {correct}/50");
    }

    #[test]
    fn single_tree_is_deterministic() {
        let (rows, labels) = blob_data(30, 4, 1.0, 8);
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let lab_refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
        let a = fit_model(&forest_spec(1, 77), &refs, &lab_refs).unwrap();
        let b = fit_model(&forest_spec(1, 77), &refs, &lab_refs).unwrap();
        assert_eq!(a, b);
    }
}
