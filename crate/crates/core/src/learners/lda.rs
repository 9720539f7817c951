use nalgebra::{DMatrix, DVector};

use super::{LdaParams, TrainData};
use crate::error::{Error, Result};

/// Linear discriminant analysis with a pooled within-class covariance.
///
/// The pooled covariance uses the unbiased `n - C` denominator and is ridge-
/// regularized by `1e-6 * trace / d` before inversion, so collinear feature
/// sets (e.g. one-hot groups) still factor.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LdaModel {
    /// One linear score per class: w·x + b.
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

pub(crate) fn fit(_params: &LdaParams, data: &TrainData) -> Result<LdaModel> {
    let (n, d, c) = (data.n, data.d, data.n_classes);
    let mut counts = vec![0usize; c];
    let mut means = vec![DVector::<f64>::zeros(d); c];
    for i in 0..n {
        counts[data.y[i]] += 1;
        for j in 0..d {
            means[data.y[i]][j] += data.row(i)[j];
        }
    }
    for k in 0..c {
        means[k] /= counts[k] as f64;
    }

    let mut pooled = DMatrix::<f64>::zeros(d, d);
    let mut centered = DVector::<f64>::zeros(d);
    for i in 0..n {
        let k = data.y[i];
        for j in 0..d {
            centered[j] = data.row(i)[j] - means[k][j];
        }
        // Accumulate the upper triangle of the outer product.
        for a in 0..d {
            let ca = centered[a];
            for b in a..d {
                pooled[(a, b)] += ca * centered[b];
            }
        }
    }
    let denom = (n.saturating_sub(c)).max(1) as f64;
    for a in 0..d {
        for b in a..d {
            let v = pooled[(a, b)] / denom;
            pooled[(a, b)] = v;
            pooled[(b, a)] = v;
        }
    }

    let trace: f64 = (0..d).map(|j| pooled[(j, j)]).sum();
    let mut ridge = (1e-6 * trace / d as f64).max(1e-12);
    let chol = loop {
        let mut reg = pooled.clone();
        for j in 0..d {
            reg[(j, j)] += ridge;
        }
        match reg.cholesky() {
            Some(ch) => break ch,
            None => {
                ridge *= 10.0;
                if ridge > 1e6 {
                    return Err(Error::Degenerate(
                        "lda: pooled covariance is not factorable even with heavy ridge".into(),
                    ));
                }
            }
        }
    };

    let mut weights = Vec::with_capacity(c);
    let mut biases = Vec::with_capacity(c);
    for k in 0..c {
        let w = chol.solve(&means[k]);
        let prior = counts[k] as f64 / n as f64;
        let b = -0.5 * means[k].dot(&w) + prior.ln();
        weights.push(w.iter().copied().collect());
        biases.push(b);
    }
    Ok(LdaModel { weights, biases })
}

impl LdaModel {
    pub fn predict(&self, x: &[f64], n: usize, d: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let row = &x[i * d..(i + 1) * d];
            let mut best = 0usize;
            let mut best_score = f64::NEG_INFINITY;
            for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
                let score: f64 = w.iter().zip(row).map(|(wj, xj)| wj * xj).sum::<f64>() + b;
                if score > best_score {
                    best_score = score;
                    best = k;
                }
            }
            out.push(best);
        }
        out
    }
}
