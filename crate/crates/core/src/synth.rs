//! Synthetic datasets and the randomized leakage audit: three evaluation
//! protocols run over pure-noise data to show which pipelines inflate
//! accuracy and which stay honest at 50%.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureTable, TableLevel};
use crate::error::{Error, Result};
use crate::eval::{bootstrap_inflate, group_split, majority_vote};
use crate::learners::{
    fit, AlgorithmSpec, ClassifierSpec, FittedModel, KnnParams, LdaParams, LinearSvmParams,
    NeuralNetParams, RandomForestParams, RbfSvmParams,
};
use crate::rng::{derive_seed, rng_from_seed};

/// Shape of the random (pure-noise) dataset: per-fragment features copied to
/// each of the fragment's breaks, plus per-break features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomDatasetConfig {
    pub n_fragments: usize,
    pub breaks_per_fragment: usize,
    pub n_fragment_features: usize,
    pub n_break_features: usize,
    pub seed: u64,
}

impl Default for RandomDatasetConfig {
    fn default() -> Self {
        RandomDatasetConfig {
            n_fragments: 200,
            breaks_per_fragment: 7,
            n_fragment_features: 34,
            n_break_features: 6,
            seed: 0,
        }
    }
}

impl RandomDatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_fragments < 2 {
            return Err(Error::contract("random dataset needs ≥ 2 fragments"));
        }
        if self.breaks_per_fragment < 1
            || self.n_fragment_features < 1
            || self.n_break_features < 1
        {
            return Err(Error::contract("random dataset counts must be ≥ 1"));
        }
        Ok(())
    }
}

/// Break-level table of standard-normal noise: fragment labels are uniform
/// coin flips, copied to every break of the fragment. The data carry no
/// signal whatsoever — that is the point.
pub fn generate_random_dataset(cfg: &RandomDatasetConfig) -> Result<FeatureTable> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let mut columns: Vec<String> = (0..cfg.n_fragment_features)
        .map(|i| format!("frag_f{i:02}"))
        .collect();
    columns.extend((0..cfg.n_break_features).map(|i| format!("brk_f{i:02}")));

    let total = cfg.n_fragments * cfg.breaks_per_fragment;
    let mut rows = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    let mut groups = Vec::with_capacity(total);
    let mut row_ids = Vec::with_capacity(total);
    for f in 0..cfg.n_fragments {
        let label = rng.gen_range(0..2u8).to_string();
        let frag_feats: Vec<f64> = (0..cfg.n_fragment_features)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let frag_id = format!("frag_{f:03}");
        for b in 0..cfg.breaks_per_fragment {
            let mut row = frag_feats.clone();
            row.extend((0..cfg.n_break_features).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
            rows.push(row);
            labels.push(label.clone());
            groups.push(frag_id.clone());
            row_ids.push(format!("{frag_id}/b{b}"));
        }
    }
    FeatureTable::new(TableLevel::Break, columns, rows, labels, groups, row_ids)
}

/// Collapse a break-level table to one row per fragment, keeping the first
/// `n_fragment_columns` columns (which must be constant within each group).
pub fn fragment_level_view(table: &FeatureTable, n_fragment_columns: usize) -> Result<FeatureTable> {
    if table.level() != TableLevel::Break {
        return Err(Error::contract(
            "fragment_level_view expects a break-level table",
        ));
    }
    if n_fragment_columns == 0 || n_fragment_columns > table.n_features() {
        return Err(Error::contract(format!(
            "fragment_level_view: cannot keep {n_fragment_columns} of {} columns",
            table.n_features()
        )));
    }
    let columns: Vec<String> = table.columns()[..n_fragment_columns].to_vec();
    let mut first_row: BTreeMap<&str, usize> = BTreeMap::new();
    for i in 0..table.n_rows() {
        let g = table.group_ids()[i].as_str();
        if let Some(&j) = first_row.get(g) {
            if table.rows()[i][..n_fragment_columns] != table.rows()[j][..n_fragment_columns] {
                return Err(Error::data(format!(
                    "fragment '{g}': fragment-level columns differ between rows"
                )));
            }
            if table.labels()[i] != table.labels()[j] {
                return Err(Error::data(format!(
                    "fragment '{g}': conflicting labels across breaks"
                )));
            }
        } else {
            first_row.insert(g, i);
        }
    }
    let mut rows = Vec::with_capacity(first_row.len());
    let mut labels = Vec::with_capacity(first_row.len());
    let mut ids = Vec::with_capacity(first_row.len());
    for (g, &i) in &first_row {
        rows.push(table.rows()[i][..n_fragment_columns].to_vec());
        labels.push(table.labels()[i].clone());
        ids.push(g.to_string());
    }
    FeatureTable::new(
        TableLevel::Fragment,
        columns,
        rows,
        labels,
        ids.clone(),
        ids,
    )
}

/// Two spherical Gaussian classes ("0" and "1") whose means sit
/// `separation_sigmas` standard deviations apart along the first axis.
pub fn generate_blob_dataset(
    n_per_class: usize,
    dims: usize,
    separation_sigmas: f64,
    seed: u64,
) -> Result<FeatureTable> {
    if n_per_class < 1 || dims < 1 {
        return Err(Error::contract("blob dataset needs n_per_class ≥ 1 and dims ≥ 1"));
    }
    if !(separation_sigmas >= 0.0) {
        return Err(Error::contract(format!(
            "separation must be non-negative, got {separation_sigmas}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let columns: Vec<String> = (0..dims).map(|i| format!("f{i:02}")).collect();
    let mut rows = Vec::with_capacity(2 * n_per_class);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    let mut ids = Vec::with_capacity(2 * n_per_class);
    for class in 0..2 {
        let offset = if class == 0 {
            -separation_sigmas / 2.0
        } else {
            separation_sigmas / 2.0
        };
        for i in 0..n_per_class {
            let mut row: Vec<f64> = (0..dims).map(|_| StandardNormal.sample(&mut rng)).collect();
            row[0] += offset;
            rows.push(row);
            labels.push(class.to_string());
            ids.push(format!("blob_{class}_{i:04}"));
        }
    }
    FeatureTable::new(TableLevel::Fragment, columns, rows, labels, ids.clone(), ids)
}

/// The three pipelines compared by the audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditProtocol {
    /// Split break rows ignoring fragments; score per break row.
    BreakLevelSplit,
    /// Bootstrap-inflate the fragment table x100, then split; score per row.
    FragSplitBootstrapped,
    /// Grouped fragment split with break-vote aggregation; score per fragment.
    FragSplitProper,
}

pub const AUDIT_PROTOCOLS: [AuditProtocol; 3] = [
    AuditProtocol::BreakLevelSplit,
    AuditProtocol::FragSplitBootstrapped,
    AuditProtocol::FragSplitProper,
];

impl fmt::Display for AuditProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AuditProtocol::BreakLevelSplit => "break_level_split",
            AuditProtocol::FragSplitBootstrapped => "frag_split_bootstrapped",
            AuditProtocol::FragSplitProper => "frag_split_proper",
        };
        f.write_str(s)
    }
}

/// The audited algorithm roster: nearest neighbor runs with k=1 and the
/// neural net with its compact profile.
pub fn default_audit_algorithms() -> Vec<ClassifierSpec> {
    vec![
        ClassifierSpec::new(AlgorithmSpec::Lda(LdaParams::default()), 0),
        ClassifierSpec::new(AlgorithmSpec::RandomForest(RandomForestParams::default()), 0),
        ClassifierSpec::new(AlgorithmSpec::LinearSvm(LinearSvmParams::default()), 0),
        ClassifierSpec::new(AlgorithmSpec::RbfSvm(RbfSvmParams::default()), 0),
        ClassifierSpec::new(AlgorithmSpec::Knn(KnnParams { k: 1 }), 0),
        ClassifierSpec::new(AlgorithmSpec::NeuralNet(NeuralNetParams::compact()), 0),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditCell {
    pub protocol: AuditProtocol,
    pub algorithm: String,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub n_trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    /// Protocol-major: every algorithm under protocol A, then B, then C.
    pub cells: Vec<AuditCell>,
    pub seed: u64,
    pub n_trials: usize,
    pub test_fraction: f64,
}

impl AuditReport {
    pub fn cell(&self, protocol: AuditProtocol, algorithm: &str) -> Option<&AuditCell> {
        self.cells
            .iter()
            .find(|c| c.protocol == protocol && c.algorithm == algorithm)
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let algorithms: Vec<&str> = self
            .cells
            .iter()
            .filter(|c| c.protocol == AUDIT_PROTOCOLS[0])
            .map(|c| c.algorithm.as_str())
            .collect();
        writeln!(
            f,
            "leakage audit: {} trials, seed {}, test fraction {}",
            self.n_trials, self.seed, self.test_fraction
        )?;
        writeln!(
            f,
            "{:<14} {:>28} {:>28} {:>28}",
            "algorithm", "break_level_split", "frag_split_bootstrapped", "frag_split_proper"
        )?;
        for algo in algorithms {
            write!(f, "{algo:<14}")?;
            for p in AUDIT_PROTOCOLS {
                let c = self.cell(p, algo).expect("complete grid");
                let text = format!(
                    "{:.1} ({:.1})",
                    100.0 * c.mean_accuracy,
                    100.0 * c.std_accuracy
                );
                write!(f, " {text:>28}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// `protocol,algorithm,mean_accuracy,std_accuracy,n_trials,seed` per cell.
pub fn write_audit_csv_to<W: Write>(report: &AuditReport, mut out: W) -> Result<()> {
    writeln!(out, "protocol,algorithm,mean_accuracy,std_accuracy,n_trials,seed")?;
    for c in &report.cells {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            c.protocol, c.algorithm, c.mean_accuracy, c.std_accuracy, c.n_trials, report.seed
        )?;
    }
    Ok(())
}

pub fn write_audit_csv(report: &AuditReport, path: &std::path::Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_audit_csv_to(report, std::io::BufWriter::new(file))
}

/// Predict with per-unique-row caching. Bootstrap-inflated tables repeat a
/// small set of rows thousands of times; the model sees each distinct row
/// once. Output is identical to a direct `predict` call because prediction is
/// a pure function of the row.
pub fn predict_memoized(model: &FittedModel, rows: &[&[f64]]) -> Result<Vec<String>> {
    let mut key_of: Vec<usize> = Vec::with_capacity(rows.len());
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut unique: Vec<&[f64]> = Vec::new();
    for row in rows {
        let bits: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
        let next = unique.len();
        let id = *index.entry(bits).or_insert(next);
        if id == next {
            unique.push(row);
        }
        key_of.push(id);
    }
    let preds = model.predict(&unique)?;
    Ok(key_of.into_iter().map(|id| preds[id].clone()).collect())
}

fn row_split_indices(
    table: &FeatureTable,
    test_fraction: f64,
    rng: &mut impl Rng,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let ids: BTreeSet<String> = table.row_ids().iter().cloned().collect();
    let plan = group_split(&ids, test_fraction, rng)?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for i in 0..table.n_rows() {
        if plan.test_fragments.contains(&table.row_ids()[i]) {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    Ok((train, test))
}

fn row_accuracy(table: &FeatureTable, test_idx: &[usize], preds: &[String]) -> f64 {
    let correct = test_idx
        .iter()
        .zip(preds)
        .filter(|(&i, p)| &table.labels()[i] == *p)
        .count();
    correct as f64 / test_idx.len() as f64
}

const BOOTSTRAP_FACTOR: usize = 100;

fn audit_trial(
    cfg: &RandomDatasetConfig,
    algorithms: &[ClassifierSpec],
    test_fraction: f64,
    trial: u64,
) -> Result<Vec<f64>> {
    let trial_master = derive_seed(cfg.seed, trial);
    let data_cfg = RandomDatasetConfig {
        seed: derive_seed(trial_master, 0),
        ..*cfg
    };
    let breaks = generate_random_dataset(&data_cfg)?;
    let frags = fragment_level_view(&breaks, cfg.n_fragment_features)?;

    let mut out = Vec::with_capacity(AUDIT_PROTOCOLS.len() * algorithms.len());
    for (p_idx, protocol) in AUDIT_PROTOCOLS.iter().enumerate() {
        let mut proto_rng = rng_from_seed(derive_seed(trial_master, 1 + p_idx as u64));

        // One dataset arrangement and split per protocol, shared by all
        // algorithms in the trial.
        let inflated_storage;
        let (work_table, train_idx, test_idx) = match protocol {
            AuditProtocol::BreakLevelSplit => {
                let (train, test) = row_split_indices(&breaks, test_fraction, &mut proto_rng)?;
                (&breaks, train, test)
            }
            AuditProtocol::FragSplitBootstrapped => {
                inflated_storage = bootstrap_inflate(&frags, BOOTSTRAP_FACTOR, &mut proto_rng)?;
                let (train, test) =
                    row_split_indices(&inflated_storage, test_fraction, &mut proto_rng)?;
                (&inflated_storage, train, test)
            }
            AuditProtocol::FragSplitProper => {
                let groups: BTreeSet<String> = breaks.group_ids().iter().cloned().collect();
                let plan = group_split(&groups, test_fraction, &mut proto_rng)?;
                let mut train = Vec::new();
                let mut test = Vec::new();
                for i in 0..breaks.n_rows() {
                    if plan.test_fragments.contains(&breaks.group_ids()[i]) {
                        test.push(i);
                    } else {
                        train.push(i);
                    }
                }
                (&breaks, train, test)
            }
        };

        let (train_rows, train_labels) = work_table.gather(&train_idx);
        let (test_rows, _) = work_table.gather(&test_idx);
        for (a_idx, spec) in algorithms.iter().enumerate() {
            let algo_seed = derive_seed(derive_seed(trial_master, 0x10 + p_idx as u64), a_idx as u64);
            let fit_spec = spec.with_seed(derive_seed(algo_seed, 0));
            let model = fit(&fit_spec, &train_rows, &train_labels)?;
            let preds = predict_memoized(&model, &test_rows)?;
            let acc = match protocol {
                AuditProtocol::FragSplitProper => {
                    let mut by_frag: BTreeMap<String, Vec<String>> = BTreeMap::new();
                    let mut truth: BTreeMap<String, String> = BTreeMap::new();
                    for (k, &i) in test_idx.iter().enumerate() {
                        let frag = work_table.group_ids()[i].clone();
                        truth
                            .entry(frag.clone())
                            .or_insert_with(|| work_table.labels()[i].clone());
                        by_frag.entry(frag).or_default().push(preds[k].clone());
                    }
                    let mut vote_rng = rng_from_seed(derive_seed(algo_seed, 1));
                    let voted = majority_vote(&by_frag, &mut vote_rng)?;
                    let correct = voted
                        .iter()
                        .filter(|(frag, pred)| &truth[*frag] == *pred)
                        .count();
                    correct as f64 / voted.len() as f64
                }
                _ => row_accuracy(work_table, &test_idx, &preds),
            };
            out.push(acc);
        }
    }
    Ok(out)
}

/// Run the full audit grid: `n_trials` independent trials, each with a fresh
/// random dataset, evaluated under all three protocols for every algorithm.
/// Trials run in parallel and aggregate by index, so the report depends only
/// on (config, algorithms, n_trials, test_fraction).
pub fn run_leakage_audit(
    cfg: &RandomDatasetConfig,
    n_trials: usize,
    test_fraction: f64,
    algorithms: &[ClassifierSpec],
) -> Result<AuditReport> {
    cfg.validate()?;
    if n_trials == 0 {
        return Err(Error::contract("run_leakage_audit: n_trials must be ≥ 1"));
    }
    if algorithms.is_empty() {
        return Err(Error::contract("run_leakage_audit: no algorithms"));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::contract(format!(
            "run_leakage_audit: test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    for spec in algorithms {
        spec.validate()?;
    }

    let per_trial: Vec<Vec<f64>> = (0..n_trials as u64)
        .into_par_iter()
        .map(|t| audit_trial(cfg, algorithms, test_fraction, t))
        .collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::with_capacity(AUDIT_PROTOCOLS.len() * algorithms.len());
    for (p_idx, protocol) in AUDIT_PROTOCOLS.iter().enumerate() {
        for (a_idx, spec) in algorithms.iter().enumerate() {
            let slot = p_idx * algorithms.len() + a_idx;
            let accs: Vec<f64> = per_trial.iter().map(|t| t[slot]).collect();
            let mean = accs.iter().sum::<f64>() / accs.len() as f64;
            let std = if accs.len() > 1 {
                (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>()
                    / (accs.len() - 1) as f64)
                    .sqrt()
            } else {
                0.0
            };
            cells.push(AuditCell {
                protocol: *protocol,
                algorithm: spec.name().to_string(),
                mean_accuracy: mean,
                std_accuracy: std,
                n_trials,
            });
        }
    }
    Ok(AuditReport {
        cells,
        seed: cfg.seed,
        n_trials,
        test_fraction,
    })
}
