use super::{GaussianNbParams, TrainData};

/// Gaussian naive Bayes with per-class population variances.
///
/// Variances are floored at `max(1e-9 * largest overall feature variance,
/// 1e-12)` so constant-within-class features cannot produce infinite
/// log-densities.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct GnbModel {
    /// Per class: feature means, then feature variances (floored).
    means: Vec<Vec<f64>>,
    vars: Vec<Vec<f64>>,
    log_priors: Vec<f64>,
}

pub(crate) fn fit(_params: &GaussianNbParams, data: &TrainData) -> GnbModel {
    let (n, d, c) = (data.n, data.d, data.n_classes);
    let mut counts = vec![0usize; c];
    let mut means = vec![vec![0.0; d]; c];
    for i in 0..n {
        let k = data.y[i];
        counts[k] += 1;
        for j in 0..d {
            means[k][j] += data.row(i)[j];
        }
    }
    for k in 0..c {
        for j in 0..d {
            means[k][j] /= counts[k] as f64;
        }
    }

    let mut vars = vec![vec![0.0; d]; c];
    for i in 0..n {
        let k = data.y[i];
        for j in 0..d {
            let diff = data.row(i)[j] - means[k][j];
            vars[k][j] += diff * diff;
        }
    }
    for k in 0..c {
        for j in 0..d {
            vars[k][j] /= counts[k] as f64;
        }
    }

    // Overall (class-blind) population variance per feature sets the floor.
    let mut overall_mean = vec![0.0; d];
    for i in 0..n {
        for j in 0..d {
            overall_mean[j] += data.row(i)[j];
        }
    }
    for m in &mut overall_mean {
        *m /= n as f64;
    }
    let mut max_var: f64 = 0.0;
    for j in 0..d {
        let v = (0..n)
            .map(|i| (data.row(i)[j] - overall_mean[j]).powi(2))
            .sum::<f64>()
            / n as f64;
        max_var = max_var.max(v);
    }
    let floor = (1e-9 * max_var).max(1e-12);
    for k in 0..c {
        for j in 0..d {
            vars[k][j] = vars[k][j].max(floor);
        }
    }

    let log_priors = counts
        .iter()
        .map(|&cnt| (cnt as f64 / n as f64).ln())
        .collect();
    GnbModel {
        means,
        vars,
        log_priors,
    }
}

impl GnbModel {
    pub fn predict(&self, x: &[f64], n: usize, d: usize) -> Vec<usize> {
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let row = &x[i * d..(i + 1) * d];
            let mut best = 0usize;
            let mut best_score = f64::NEG_INFINITY;
            for k in 0..self.log_priors.len() {
                let mut score = self.log_priors[k];
                for j in 0..d {
                    let v = self.vars[k][j];
                    let diff = row[j] - self.means[k][j];
                    score -= 0.5 * (ln_2pi + v.ln() + diff * diff / v);
                }
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

#[cfg(test)]
mod tests {
    use crate::learners::{fit as fit_model, AlgorithmSpec, ClassifierSpec, GaussianNbParams};

    fn gnb_spec() -> ClassifierSpec {
        ClassifierSpec::new(AlgorithmSpec::GaussianNb(GaussianNbParams::default()), 0)
    }

    #[test]
    fn posterior_matches_hand_computation() {
        // Class A holds {-1.1, -0.9}, class B holds {0.9, 1.1}: equal priors,
        // equal variances (0.01), means -1 and 1. A probe at 0.9 is 1.9 from
        // mean A and 0.0 from mean B, so B wins by a huge margin; at -0.9
        // symmetric reasoning gives A. The midpoint 0.0 ties in likelihood and
        // must fall to the lower-indexed class (A).
        let rows: Vec<Vec<f64>> = vec![vec![-1.1], vec![-0.9], vec![0.9], vec![1.1]];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let labels = ["A", "A", "B", "B"];
        let model = fit_model(&gnb_spec(), &refs, &labels).unwrap();
        let probes = [vec![0.9], vec![-0.9], vec![0.0]];
        let probe_refs: Vec<&[f64]> = probes.iter().map(|p| p.as_slice()).collect();
        assert_eq!(model.predict(&probe_refs).unwrap(), vec!["B", "A", "A"]);
    }

    #[test]
    fn variance_differences_matter() {
        // Both classes centred at 0 in feature 1; class "wide" has much larger
        // spread in feature 0. A far-out probe belongs to "wide" even though
        // both means are equidistant.
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for v in [-4.0, -2.0, 2.0, 4.0] {
            rows.push(vec![v, 0.0]);
            labels.push("wide");
        }
        for v in [-0.2, -0.1, 0.1, 0.2] {
            rows.push(vec![v, 0.0]);
            labels.push("narrow");
        }
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let model = fit_model(&gnb_spec(), &refs, &labels).unwrap();
        let probes = [vec![3.0, 0.0], vec![0.05, 0.0]];
        let probe_refs: Vec<&[f64]> = probes.iter().map(|p| p.as_slice()).collect();
        assert_eq!(model.predict(&probe_refs).unwrap(), vec!["wide", "narrow"]);
    }

    #[test]
    fn unbalanced_priors_break_likelihood_ties() {
        // 3:1 prior towards "maj" decides an otherwise symmetric probe.
        let rows: Vec<Vec<f64>> = vec![
            vec![-1.0],
            vec![-1.2],
            vec![-0.8],
            vec![1.0],
        ];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let labels = ["maj", "maj", "maj", "min"];
        let model = fit_model(&gnb_spec(), &refs, &labels).unwrap();
        let probe = vec![0.0];
        assert_eq!(model.predict(&[probe.as_slice()]).unwrap(), vec!["maj"]);
    }
}
