//! Seven classifiers behind one `fit`/`predict` interface.
//!
//! Everything is deterministic: fitting consumes randomness only from
//! `ClassifierSpec::seed`, and prediction consumes none. All learners see
//! z-scored features through a train-fitted `Standardizer`; test rows are
//! transformed with the training statistics, never refitted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod forest;
mod knn;
mod lda;
mod linear_svm;
mod naive_bayes;
mod neural;
mod rbf_svm;
mod standardize;

pub use standardize::Standardizer;

/// Algorithm choice plus hyperparameters. Serializes as
/// `{"algorithm": "...", "params": {...}}` with defaults for missing fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", content = "params", rename_all = "snake_case")]
pub enum AlgorithmSpec {
    Knn(KnnParams),
    Lda(LdaParams),
    GaussianNb(GaussianNbParams),
    LinearSvm(LinearSvmParams),
    RbfSvm(RbfSvmParams),
    RandomForest(RandomForestParams),
    NeuralNet(NeuralNetParams),
}

impl AlgorithmSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmSpec::Knn(_) => "knn",
            AlgorithmSpec::Lda(_) => "lda",
            AlgorithmSpec::GaussianNb(_) => "gaussian_nb",
            AlgorithmSpec::LinearSvm(_) => "linear_svm",
            AlgorithmSpec::RbfSvm(_) => "rbf_svm",
            AlgorithmSpec::RandomForest(_) => "random_forest",
            AlgorithmSpec::NeuralNet(_) => "neural_net",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KnnParams {
    /// Neighbourhood size; clamped to the training-set size at fit time.
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams { k: 25 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LdaParams {}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaussianNbParams {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearSvmParams {
    pub c: f64,
    /// Passes of the deterministic-schedule stochastic subgradient solver.
    pub epochs: usize,
}

impl Default for LinearSvmParams {
    fn default() -> Self {
        LinearSvmParams { c: 1.0, epochs: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RbfSvmParams {
    pub c: f64,
    /// Kernel width; `None` means 1 / (d * mean feature variance) on the
    /// standardized training matrix.
    pub gamma: Option<f64>,
    /// KKT violation tolerance for the SMO solver.
    pub tol: f64,
}

impl Default for RbfSvmParams {
    fn default() -> Self {
        RbfSvmParams {
            c: 1.0,
            gamma: None,
            tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RandomForestParams {
    pub trees: usize,
}

impl Default for RandomForestParams {
    fn default() -> Self {
        RandomForestParams { trees: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NeuralNetParams {
    pub hidden: Vec<usize>,
    /// Dropout rate applied between consecutive hidden layers.
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Initial learning-rate multiplier on the adadelta step.
    pub learning_rate: f64,
    /// Fractional decay of the learning rate after each epoch.
    pub lr_decay_per_epoch: f64,
    /// Adadelta accumulator decay.
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for NeuralNetParams {
    fn default() -> Self {
        NeuralNetParams {
            hidden: vec![100, 1000, 5000],
            dropout: 0.4,
            epochs: 100,
            batch_size: 32,
            learning_rate: 1.0,
            lr_decay_per_epoch: 0.10,
            rho: 0.95,
            epsilon: 1e-6,
        }
    }
}

impl NeuralNetParams {
    /// Small profile for audits and tests: same recipe, desk-scale size.
    pub fn compact() -> Self {
        NeuralNetParams {
            hidden: vec![64, 64],
            epochs: 30,
            ..Default::default()
        }
    }
}

/// A classifier choice, its hyperparameters and its fit-time seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    #[serde(flatten)]
    pub algorithm: AlgorithmSpec,
    #[serde(default)]
    pub seed: u64,
}

impl ClassifierSpec {
    pub fn new(algorithm: AlgorithmSpec, seed: u64) -> Self {
        ClassifierSpec { algorithm, seed }
    }

    pub fn name(&self) -> &'static str {
        self.algorithm.name()
    }

    /// Same spec with a different seed; multi-trial drivers reseed per trial.
    pub fn with_seed(&self, seed: u64) -> Self {
        ClassifierSpec {
            algorithm: self.algorithm.clone(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Contract(msg));
        match &self.algorithm {
            AlgorithmSpec::Knn(p) => {
                if p.k == 0 {
                    return bad("knn: k must be at least 1".into());
                }
            }
            AlgorithmSpec::Lda(_) | AlgorithmSpec::GaussianNb(_) => {}
            AlgorithmSpec::LinearSvm(p) => {
                if !(p.c > 0.0) || !p.c.is_finite() {
                    return bad(format!("linear_svm: C must be positive, got {}", p.c));
                }
                if p.epochs == 0 {
                    return bad("linear_svm: epochs must be at least 1".into());
                }
            }
            AlgorithmSpec::RbfSvm(p) => {
                if !(p.c > 0.0) || !p.c.is_finite() {
                    return bad(format!("rbf_svm: C must be positive, got {}", p.c));
                }
                if let Some(g) = p.gamma {
                    if !(g > 0.0) || !g.is_finite() {
                        return bad(format!("rbf_svm: gamma must be positive, got {g}"));
                    }
                }
                if !(p.tol > 0.0) {
                    return bad(format!("rbf_svm: tol must be positive, got {}", p.tol));
                }
            }
            AlgorithmSpec::RandomForest(p) => {
                if p.trees == 0 {
                    return bad("random_forest: needs at least 1 tree".into());
                }
            }
            AlgorithmSpec::NeuralNet(p) => {
                if p.hidden.is_empty() || p.hidden.contains(&0) {
                    return bad("neural_net: hidden layer sizes must all be at least 1".into());
                }
                if !(0.0..1.0).contains(&p.dropout) {
                    return bad(format!(
                        "neural_net: dropout must be in [0, 1), got {}",
                        p.dropout
                    ));
                }
                if p.epochs == 0 || p.batch_size == 0 {
                    return bad("neural_net: epochs and batch_size must be at least 1".into());
                }
                if !(p.learning_rate > 0.0) {
                    return bad("neural_net: learning_rate must be positive".into());
                }
                if !(0.0..1.0).contains(&p.lr_decay_per_epoch) {
                    return bad("neural_net: lr_decay_per_epoch must be in [0, 1)".into());
                }
                if !(0.0 < p.rho && p.rho < 1.0) {
                    return bad("neural_net: rho must be in (0, 1)".into());
                }
                if !(p.epsilon > 0.0) {
                    return bad("neural_net: epsilon must be positive".into());
                }
            }
        }
        Ok(())
    }
}

/// Standardized training matrix handed to the per-algorithm fitters.
pub(crate) struct TrainData {
    pub x: Vec<f64>,
    pub n: usize,
    pub d: usize,
    pub y: Vec<usize>,
    pub n_classes: usize,
}

impl TrainData {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum ModelKind {
    Knn(knn::KnnModel),
    Lda(lda::LdaModel),
    Gnb(naive_bayes::GnbModel),
    LinearSvm(linear_svm::LinearSvmModel),
    RbfSvm(rbf_svm::RbfSvmModel),
    Forest(forest::ForestModel),
    Neural(neural::NeuralModel),
}

/// A trained classifier: spec echo, class list, the training standardizer and
/// the algorithm-specific parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    spec: ClassifierSpec,
    classes: Vec<String>,
    standardizer: Standardizer,
    kind: ModelKind,
}

impl FittedModel {
    pub fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn n_features(&self) -> usize {
        self.standardizer.dim()
    }

    /// Predicted class indices into `classes()`.
    pub fn predict_indices(&self, rows: &[&[f64]]) -> Result<Vec<usize>> {
        let d = self.standardizer.dim();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::contract(format!(
                    "predict: row {i} has {} features, model expects {d}",
                    r.len()
                )));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::data(format!("predict: row {i} has non-finite values")));
            }
        }
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let x = self.standardizer.transform_matrix(rows);
        let n = rows.len();
        Ok(match &self.kind {
            ModelKind::Knn(m) => m.predict(&x, n, d),
            ModelKind::Lda(m) => m.predict(&x, n, d),
            ModelKind::Gnb(m) => m.predict(&x, n, d),
            ModelKind::LinearSvm(m) => m.predict(&x, n, d),
            ModelKind::RbfSvm(m) => m.predict(&x, n, d),
            ModelKind::Forest(m) => m.predict(&x, n, d),
            ModelKind::Neural(m) => m.predict(&x, n, d),
        })
    }

    pub fn predict(&self, rows: &[&[f64]]) -> Result<Vec<String>> {
        Ok(self
            .predict_indices(rows)?
            .into_iter()
            .map(|i| self.classes[i].clone())
            .collect())
    }
}

/// Train a classifier on the given rows. The label set defines the class
/// ordering (sorted); training requires at least two classes.
pub fn fit(spec: &ClassifierSpec, rows: &[&[f64]], labels: &[&str]) -> Result<FittedModel> {
    spec.validate()?;
    if rows.is_empty() {
        return Err(Error::contract("fit: no training rows"));
    }
    if rows.len() != labels.len() {
        return Err(Error::contract(format!(
            "fit: {} rows but {} labels",
            rows.len(),
            labels.len()
        )));
    }
    let d = rows[0].len();
    if d == 0 {
        return Err(Error::contract("fit: rows have no features"));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(Error::contract(format!(
                "fit: row {i} has {} features, row 0 has {d}",
                r.len()
            )));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(format!("fit: row {i} has non-finite values")));
        }
    }

    let mut classes: Vec<String> = labels
        .iter()
        .map(|s| s.to_string())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    classes.sort();
    if classes.len() < 2 {
        return Err(Error::contract(
            "fit: training data contains a single class",
        ));
    }
    let y: Vec<usize> = labels
        .iter()
        .map(|l| classes.iter().position(|c| c == l).unwrap())
        .collect();

    let standardizer = Standardizer::fit(rows)?;
    let data = TrainData {
        x: standardizer.transform_matrix(rows),
        n: rows.len(),
        d,
        y,
        n_classes: classes.len(),
    };

    let kind = match &spec.algorithm {
        AlgorithmSpec::Knn(p) => ModelKind::Knn(knn::fit(p, data)),
        AlgorithmSpec::Lda(p) => ModelKind::Lda(lda::fit(p, &data)?),
        AlgorithmSpec::GaussianNb(p) => ModelKind::Gnb(naive_bayes::fit(p, &data)),
        AlgorithmSpec::LinearSvm(p) => ModelKind::LinearSvm(linear_svm::fit(p, &data, spec.seed)),
        AlgorithmSpec::RbfSvm(p) => ModelKind::RbfSvm(rbf_svm::fit(p, &data)),
        AlgorithmSpec::RandomForest(p) => ModelKind::Forest(forest::fit(p, &data, spec.seed)),
        AlgorithmSpec::NeuralNet(p) => ModelKind::Neural(neural::fit(p, &data, spec.seed)),
    };

    Ok(FittedModel {
        spec: spec.clone(),
        classes,
        standardizer,
        kind,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    pub(crate) fn blob_data(
        n_per_class: usize,
        dims: usize,
        separation: f64,
        seed: u64,
    ) -> (Vec<Vec<f64>>, Vec<String>) {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rng_from_seed(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for class in 0..2 {
            let offset = if class == 0 {
                -separation / 2.0
            } else {
                separation / 2.0
            };
            for _ in 0..n_per_class {
                let mut row: Vec<f64> = (0..dims)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect();
                row[0] += offset;
                rows.push(row);
                labels.push(if class == 0 { "a".to_string() } else { "b".to_string() });
            }
        }
        (rows, labels)
    }

    fn all_default_specs(seed: u64) -> Vec<ClassifierSpec> {
        vec![
            ClassifierSpec::new(AlgorithmSpec::Knn(KnnParams::default()), seed),
            ClassifierSpec::new(AlgorithmSpec::Lda(LdaParams::default()), seed),
            ClassifierSpec::new(AlgorithmSpec::GaussianNb(GaussianNbParams::default()), seed),
            ClassifierSpec::new(AlgorithmSpec::LinearSvm(LinearSvmParams::default()), seed),
            ClassifierSpec::new(AlgorithmSpec::RbfSvm(RbfSvmParams::default()), seed),
            ClassifierSpec::new(
                AlgorithmSpec::RandomForest(RandomForestParams { trees: 30 }),
                seed,
            ),
            ClassifierSpec::new(AlgorithmSpec::NeuralNet(NeuralNetParams::compact()), seed),
        ]
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = ClassifierSpec::new(AlgorithmSpec::Knn(KnnParams { k: 1 }), 7);
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"algorithm\":\"knn\""), "{json}");
        assert!(json.contains("\"seed\":7"), "{json}");
        let back: ClassifierSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);

        // Defaults fill in for missing params fields.
        let sparse: ClassifierSpec =
            serde_json::from_str(r#"{"algorithm":"knn","params":{},"seed":3}"#).unwrap();
        assert_eq!(sparse.algorithm, AlgorithmSpec::Knn(KnnParams { k: 25 }));

        let nn: ClassifierSpec = serde_json::from_str(
            r#"{"algorithm":"neural_net","params":{"hidden":[8,8],"epochs":5},"seed":1}"#,
        )
        .unwrap();
        match &nn.algorithm {
            AlgorithmSpec::NeuralNet(p) => {
                assert_eq!(p.hidden, vec![8, 8]);
                assert_eq!(p.epochs, 5);
                assert_eq!(p.dropout, 0.4);
                assert_eq!(p.batch_size, 32);
            }
            _ => panic!("wrong variant"),
        }
    }

    #[test]
    fn invalid_params_are_rejected() {
        let bad = [
            ClassifierSpec::new(AlgorithmSpec::Knn(KnnParams { k: 0 }), 1),
            ClassifierSpec::new(
                AlgorithmSpec::LinearSvm(LinearSvmParams { c: 0.0, epochs: 10 }),
                1,
            ),
            ClassifierSpec::new(
                AlgorithmSpec::RbfSvm(RbfSvmParams {
                    c: -1.0,
                    ..Default::default()
                }),
                1,
            ),
            ClassifierSpec::new(AlgorithmSpec::RandomForest(RandomForestParams { trees: 0 }), 1),
            ClassifierSpec::new(
                AlgorithmSpec::NeuralNet(NeuralNetParams {
                    dropout: 1.0,
                    ..NeuralNetParams::compact()
                }),
                1,
            ),
            ClassifierSpec::new(
                AlgorithmSpec::NeuralNet(NeuralNetParams {
                    hidden: vec![],
                    ..NeuralNetParams::compact()
                }),
                1,
            ),
        ];
        for spec in bad {
            assert!(spec.validate().is_err(), "{:?} should be invalid", spec);
        }
    }

    #[test]
    fn single_class_training_is_rejected() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let spec = ClassifierSpec::new(AlgorithmSpec::Lda(LdaParams::default()), 1);
        let err = fit(&spec, &refs, &["same", "same"]).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn predict_checks_width() {
        let (rows, labels) = blob_data(20, 3, 4.0, 11);
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let lab_refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
        let spec = ClassifierSpec::new(AlgorithmSpec::Knn(KnnParams { k: 3 }), 1);
        let model = fit(&spec, &refs, &lab_refs).unwrap();
        let bad = vec![1.0, 2.0];
        assert!(model.predict(&[bad.as_slice()]).is_err());
    }

    #[test]
    fn every_learner_separates_wide_blobs() {
        let (rows, labels) = blob_data(60, 2, 8.0, 5);
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let lab_refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
        let (test_rows, test_labels) = blob_data(30, 2, 8.0, 99);
        let test_refs: Vec<&[f64]> = test_rows.iter().map(|r| r.as_slice()).collect();

        for spec in all_default_specs(42) {
            let model = fit(&spec, &refs, &lab_refs).unwrap();
            let pred = model.predict(&test_refs).unwrap();
            let correct = pred
                .iter()
                .zip(test_labels.iter())
                .filter(|(p, t)| p == t)
                .count();
            let acc = correct as f64 / test_labels.len() as f64;
            assert!(
                acc >= 0.95,
                "{} scored {acc:.3} on well-separated blobs",
                spec.name()
            );
        }
    }

    #[test]
    fn fits_are_deterministic_given_seed() {
        let (rows, labels) = blob_data(40, 4, 2.0, 17);
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let lab_refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
        let (probe_rows, _) = blob_data(25, 4, 2.0, 53);
        let probe: Vec<&[f64]> = probe_rows.iter().map(|r| r.as_slice()).collect();

        for spec in all_default_specs(1234) {
            let a = fit(&spec, &refs, &lab_refs).unwrap();
            let b = fit(&spec, &refs, &lab_refs).unwrap();
            assert_eq!(a, b, "{} refit differs", spec.name());
            assert_eq!(
                a.predict(&probe).unwrap(),
                b.predict(&probe).unwrap(),
                "{} predictions differ",
                spec.name()
            );
        }
    }

    #[test]
    fn standardization_absorbs_feature_scale() {
        // Multiplying one input column by 1000 must not change any prediction.
        let (rows, labels) = blob_data(50, 3, 3.0, 23);
        let scaled: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r[1] *= 1000.0;
                r
            })
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let scaled_refs: Vec<&[f64]> = scaled.iter().map(|r| r.as_slice()).collect();
        let lab_refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();

        let (probe_rows, _) = blob_data(30, 3, 3.0, 71);
        let probe: Vec<&[f64]> = probe_rows.iter().map(|r| r.as_slice()).collect();
        let probe_scaled: Vec<Vec<f64>> = probe_rows
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r[1] *= 1000.0;
                r
            })
            .collect();
        let probe_scaled_refs: Vec<&[f64]> = probe_scaled.iter().map(|r| r.as_slice()).collect();

        for name in ["knn", "lda", "linear_svm"] {
            let spec = all_default_specs(9)
                .into_iter()
                .find(|s| s.name() == name)
                .unwrap();
            let plain = fit(&spec, &refs, &lab_refs).unwrap();
            let scaled = fit(&spec, &scaled_refs, &lab_refs).unwrap();
            assert_eq!(
                plain.predict(&probe).unwrap(),
                scaled.predict(&probe_scaled_refs).unwrap(),
                "{name} predictions changed under column scaling"
            );
        }
    }

    #[test]
    fn constant_features_stay_finite() {
        // A constant column engages the variance floor everywhere.
        let mut rng = rng_from_seed(3);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![7.5, rng.gen::<f64>() + if i < 15 { 0.0 } else { 2.0 }])
            .collect();
        let labels: Vec<&str> = (0..30).map(|i| if i < 15 { "a" } else { "b" }).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();

        for name in ["lda", "gaussian_nb"] {
            let spec = all_default_specs(2)
                .into_iter()
                .find(|s| s.name() == name)
                .unwrap();
            let model = fit(&spec, &refs, &labels).unwrap();
            let pred = model.predict(&refs).unwrap();
            assert_eq!(pred.len(), 30, "{name} must predict despite constant column");
        }
    }
}
