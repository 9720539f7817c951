use rand::seq::SliceRandom;

use super::{LinearSvmParams, TrainData};
use crate::rng::{derive_seed, rng_from_seed};

/// Linear SVM trained with the Pegasos stochastic subgradient method.
///
/// The bias is carried as an appended always-1 coordinate (so it is
/// regularized with the weights), and `lambda = 1 / (C * n)`. Two-class
/// problems train a single machine and classify by score sign; with more
/// classes one machine per class (one-vs-rest) feeds an argmax.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LinearSvmModel {
    /// One weight vector of length d+1 per machine.
    machines: Vec<Vec<f64>>,
    n_classes: usize,
}

fn train_binary(
    data: &TrainData,
    positive: impl Fn(usize) -> bool,
    c: f64,
    epochs: usize,
    seed: u64,
) -> Vec<f64> {
    let (n, d) = (data.n, data.d);
    let lambda = 1.0 / (c * n as f64);
    let mut w = vec![0.0; d + 1];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng_from_seed(seed);
    let mut t: u64 = 1;
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let row = data.row(i);
            let y = if positive(data.y[i]) { 1.0 } else { -1.0 };
            let mut score = w[d]; // bias coordinate times the implicit 1
            for j in 0..d {
                score += w[j] * row[j];
            }
            let eta = 1.0 / (lambda * t as f64);
            let shrink = 1.0 - 1.0 / t as f64;
            for wj in w.iter_mut() {
                *wj *= shrink;
            }
            if y * score < 1.0 {
                let step = eta * y;
                for j in 0..d {
                    w[j] += step * row[j];
                }
                w[d] += step;
            }
            t += 1;
        }
    }
    w
}

pub(crate) fn fit(params: &LinearSvmParams, data: &TrainData, seed: u64) -> LinearSvmModel {
    let machines = if data.n_classes == 2 {
        // One machine: positive = class index 1; sign decides.
        vec![train_binary(
            data,
            |k| k == 1,
            params.c,
            params.epochs,
            derive_seed(seed, 1),
        )]
    } else {
        (0..data.n_classes)
            .map(|target| {
                train_binary(
                    data,
                    |k| k == target,
                    params.c,
                    params.epochs,
                    derive_seed(seed, target as u64),
                )
            })
            .collect()
    };
    LinearSvmModel {
        machines,
        n_classes: data.n_classes,
    }
}

impl LinearSvmModel {
    fn score(w: &[f64], row: &[f64]) -> f64 {
        let d = row.len();
        let mut s = w[d];
        for j in 0..d {
            s += w[j] * row[j];
        }
        s
    }

    pub fn predict(&self, x: &[f64], n: usize, d: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let row = &x[i * d..(i + 1) * d];
            let k = if self.n_classes == 2 {
                if Self::score(&self.machines[0], row) > 0.0 {
                    1
                } else {
                    0
                }
            } else {
                let mut best = 0usize;
                let mut best_score = f64::NEG_INFINITY;
                for (c, w) in self.machines.iter().enumerate() {
                    let s = Self::score(w, row);
                    if s > best_score {
                        best_score = s;
                        best = c;
                    }
                }
                best
            };
            out.push(k);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use crate::learners::{fit as fit_model, AlgorithmSpec, ClassifierSpec, LinearSvmParams};

    fn svm_spec(c: f64, epochs: usize, seed: u64) -> ClassifierSpec {
        ClassifierSpec::new(AlgorithmSpec::LinearSvm(LinearSvmParams { c, epochs }), seed)
    }

    #[test]
    fn separable_data_is_fit_without_training_errors() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..20 {
            let t = i as f64 * 0.1;
            rows.push(vec![t, 1.5 + t * 0.5]);
            labels.push("up");
            rows.push(vec![t, -1.5 + t * 0.5]);
            labels.push("down");
        }
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let model = fit_model(&svm_spec(10.0, 100, 7), &refs, &labels).unwrap();
        assert_eq!(model.predict(&refs).unwrap(), labels);
    }

    #[test]
    fn asymmetric_offset_needs_the_bias_term() {
        // Both classes on the same side of the origin: without a bias the
        // separator through 0 cannot split them.
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let base = if i < 15 { 3.0 } else { 6.0 };
                vec![base + (i % 5) as f64 * 0.1]
            })
            .collect();
        let labels: Vec<&str> = (0..30).map(|i| if i < 15 { "lo" } else { "hi" }).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let model = fit_model(&svm_spec(10.0, 200, 3), &refs, &labels).unwrap();
        let pred = model.predict(&refs).unwrap();
        assert_eq!(pred, labels);
    }

    #[test]
    fn three_class_one_vs_rest() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, center) in [("a", [-5.0, 0.0]), ("b", [0.0, 5.0]), ("c", [5.0, 0.0])] {
            for k in 0..10 {
                rows.push(vec![
                    center[0] + (k % 3) as f64 * 0.1,
                    center[1] + (k % 4) as f64 * 0.1,
                ]);
                labels.push(c);
            }
        }
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let model = fit_model(&svm_spec(1.0, 100, 5), &refs, &labels).unwrap();
        let pred = model.predict(&refs).unwrap();
        let correct = pred.iter().zip(&labels).filter(|(p, t)| p == t).count();
        assert_eq!(correct, 30);
    }
}
