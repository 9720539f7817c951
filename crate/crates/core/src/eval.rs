//! Experiment protocols: fragment-grouped splits, repeated trials, break-vote
//! aggregation, k-fold plans, and the bootstrap-then-split antipattern kept
//! around (loudly) for the leakage audit.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureTable, TableLevel};
use crate::error::{Error, Result};
use crate::learners::{fit, ClassifierSpec};
use crate::rng::{derive_seed, rng_from_seed};

/// A disjoint train/test partition of fragment ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub train_fragments: BTreeSet<String>,
    pub test_fragments: BTreeSet<String>,
}

/// Uniform random partition of fragments; `round(test_fraction * total)` test
/// fragments, clamped so both sides keep at least one.
pub fn group_split(
    fragment_ids: &BTreeSet<String>,
    test_fraction: f64,
    rng: &mut impl Rng,
) -> Result<SplitPlan> {
    let total = fragment_ids.len();
    if total < 2 {
        return Err(Error::contract(format!(
            "group_split needs at least 2 fragments, got {total}"
        )));
    }
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(Error::contract(format!(
            "test_fraction must lie in [0, 1], got {test_fraction}"
        )));
    }
    let n_test = ((test_fraction * total as f64).round() as usize).clamp(1, total - 1);
    let mut ids: Vec<&String> = fragment_ids.iter().collect();
    // Partial Fisher-Yates: the first n_test slots become the test set.
    for i in 0..n_test {
        let j = rng.gen_range(i..total);
        ids.swap(i, j);
    }
    let test_fragments: BTreeSet<String> = ids[..n_test].iter().map(|s| (*s).clone()).collect();
    let train_fragments: BTreeSet<String> = ids[n_test..].iter().map(|s| (*s).clone()).collect();
    Ok(SplitPlan {
        train_fragments,
        test_fragments,
    })
}

/// Modal label per fragment; exact ties resolved by a uniform draw from the
/// tied labels (sorted order) using `rng`. Fragments are processed in sorted
/// id order so rng consumption is deterministic.
pub fn majority_vote(
    predictions: &BTreeMap<String, Vec<String>>,
    rng: &mut impl Rng,
) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (frag, preds) in predictions {
        if preds.is_empty() {
            return Err(Error::contract(format!(
                "majority_vote: fragment '{frag}' has no predictions"
            )));
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for p in preds {
            *counts.entry(p.as_str()).or_insert(0) += 1;
        }
        let top = *counts.values().max().unwrap();
        let tied: Vec<&str> = counts
            .iter()
            .filter(|(_, &c)| c == top)
            .map(|(&l, _)| l)
            .collect();
        let winner = if tied.len() == 1 {
            tied[0]
        } else {
            tied[rng.gen_range(0..tied.len())]
        };
        out.insert(frag.clone(), winner.to_string());
    }
    Ok(out)
}

/// Disjoint (train, test) row-index folds whose test sizes differ by ≤ 1.
pub fn kfold_plan(
    row_count: usize,
    folds: usize,
    rng: &mut impl Rng,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if folds < 2 {
        return Err(Error::contract(format!(
            "kfold_plan needs at least 2 folds, got {folds}"
        )));
    }
    if row_count < folds {
        return Err(Error::contract(format!(
            "kfold_plan: {row_count} rows cannot fill {folds} folds"
        )));
    }
    let mut order: Vec<usize> = (0..row_count).collect();
    order.shuffle(rng);
    let base = row_count / folds;
    let extra = row_count % folds;
    let mut plans = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        let mut test: Vec<usize> = order[start..start + size].to_vec();
        let mut train: Vec<usize> = order[..start]
            .iter()
            .chain(order[start + size..].iter())
            .copied()
            .collect();
        test.sort_unstable();
        train.sort_unstable();
        plans.push((train, test));
        start += size;
    }
    Ok(plans)
}

/// ANTIPATTERN — audit use only. Resample `factor * N` rows uniformly with
/// replacement and give every copy a fresh row and group id, exactly the
/// "treat resampled rows as independent samples" mistake under study. Any
/// accuracy measured downstream of this call is invalid as a generalization
/// estimate; a warning is printed on every call.
pub fn bootstrap_inflate(
    table: &FeatureTable,
    factor: usize,
    rng: &mut impl Rng,
) -> Result<FeatureTable> {
    if factor < 1 {
        return Err(Error::contract("bootstrap_inflate: factor must be ≥ 1"));
    }
    eprintln!(
        "warning: bootstrap_inflate duplicates rows BEFORE any split; downstream accuracies are leakage-inflated and do not estimate generalization"
    );
    let n = table.n_rows();
    let total = factor * n;
    let mut rows = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    let mut group_ids = Vec::with_capacity(total);
    let mut row_ids = Vec::with_capacity(total);
    for i in 0..total {
        let src = rng.gen_range(0..n);
        rows.push(table.rows()[src].clone());
        labels.push(table.labels()[src].clone());
        let id = format!("boot_{i}");
        group_ids.push(id.clone());
        row_ids.push(id);
    }
    FeatureTable::new(
        table.level(),
        table.columns().to_vec(),
        rows,
        labels,
        group_ids,
        row_ids,
    )
}

/// How rows are partitioned and scored across repeated trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Grouped split of a fragment-level table; accuracy per fragment row.
    FragmentLevel,
    /// Grouped split of a break-level table; per-break predictions are
    /// majority-voted into fragment labels, accuracy per fragment.
    BreakLevelVoted,
    /// Rows split with no grouping at all. Named unsafe on purpose: only for
    /// replicating external studies that lack fragment ids.
    RowLevelUnsafe,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Protocol::FragmentLevel => "fragment_level",
            Protocol::BreakLevelVoted => "break_level_voted",
            Protocol::RowLevelUnsafe => "row_level_unsafe",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial_index: usize,
    pub fragment_accuracy: f64,
    /// Per-class fragment accuracy; classes absent from the trial's test set
    /// are omitted.
    pub per_class_accuracy: BTreeMap<String, f64>,
    /// confusion[true_label][predicted_label] = fragment count.
    pub confusion: BTreeMap<String, BTreeMap<String, u64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub algorithm: String,
    pub level: TableLevel,
    pub protocol: Protocol,
    pub n_trials: usize,
    pub test_fraction: f64,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    /// Mean per-class accuracy over the trials where the class appeared.
    pub per_class_mean: BTreeMap<String, f64>,
    pub master_seed: u64,
    pub trials: Vec<TrialResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    pub master_seed: u64,
}

fn default_trials() -> usize {
    300
}

fn default_test_fraction() -> f64 {
    0.25
}

/// Stream tag separating the fit seed from the trial rng (splits, vote ties).
const FIT_SEED_STREAM: u64 = 1;

fn run_trial(
    table: &FeatureTable,
    spec: &ClassifierSpec,
    cfg: &ExperimentConfig,
    trial: usize,
) -> Result<TrialResult> {
    let trial_seed = derive_seed(cfg.master_seed, trial as u64);
    let fail = |msg: String| {
        Error::data(format!(
            "trial {trial} (seed {trial_seed:#018x}) failed: {msg}"
        ))
    };
    let mut rng = rng_from_seed(trial_seed);

    // Effective grouping: table groups, or each row on its own for the
    // ungrouped protocol.
    let effective_group = |i: usize| -> &str {
        match cfg.protocol {
            Protocol::RowLevelUnsafe => &table.row_ids()[i],
            _ => &table.group_ids()[i],
        }
    };
    let group_set: BTreeSet<String> = (0..table.n_rows())
        .map(|i| effective_group(i).to_string())
        .collect();
    let plan = group_split(&group_set, cfg.test_fraction, &mut rng)?;

    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for i in 0..table.n_rows() {
        if plan.test_fragments.contains(effective_group(i)) {
            test_idx.push(i);
        } else {
            train_idx.push(i);
        }
    }

    let (train_rows, train_labels) = table.gather(&train_idx);
    let fit_spec = spec.with_seed(derive_seed(trial_seed, FIT_SEED_STREAM));
    let model = fit(&fit_spec, &train_rows, &train_labels).map_err(|e| fail(e.to_string()))?;
    let (test_rows, _) = table.gather(&test_idx);
    let preds = model.predict(&test_rows).map_err(|e| fail(e.to_string()))?;

    // Reduce to one (true, predicted) pair per fragment.
    let fragment_outcomes: Vec<(String, String)> = if cfg.protocol == Protocol::BreakLevelVoted {
        let mut by_frag: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut truth: BTreeMap<String, String> = BTreeMap::new();
        for (k, &i) in test_idx.iter().enumerate() {
            let frag = table.group_ids()[i].clone();
            let label = &table.labels()[i];
            if let Some(prev) = truth.get(&frag) {
                if prev != label {
                    return Err(fail(format!(
                        "fragment '{frag}' carries conflicting labels '{prev}' and '{label}'"
                    )));
                }
            } else {
                truth.insert(frag.clone(), label.clone());
            }
            by_frag.entry(frag).or_default().push(preds[k].clone());
        }
        let voted = majority_vote(&by_frag, &mut rng)?;
        voted
            .into_iter()
            .map(|(frag, pred)| {
                let t = truth.remove(&frag).unwrap();
                (t, pred)
            })
            .collect()
    } else {
        test_idx
            .iter()
            .enumerate()
            .map(|(k, &i)| (table.labels()[i].clone(), preds[k].clone()))
            .collect()
    };

    let mut confusion: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    for (truth, pred) in &fragment_outcomes {
        *confusion
            .entry(truth.clone())
            .or_default()
            .entry(pred.clone())
            .or_insert(0) += 1;
    }
    let total: u64 = confusion.values().flat_map(|m| m.values()).sum();
    let correct: u64 = confusion
        .iter()
        .map(|(t, m)| m.get(t).copied().unwrap_or(0))
        .sum();
    let per_class_accuracy = confusion
        .iter()
        .map(|(t, m)| {
            let class_total: u64 = m.values().sum();
            let class_correct = m.get(t).copied().unwrap_or(0);
            (t.clone(), class_correct as f64 / class_total as f64)
        })
        .collect();
    Ok(TrialResult {
        trial_index: trial,
        fragment_accuracy: correct as f64 / total as f64,
        per_class_accuracy,
        confusion,
    })
}

/// Repeated grouped-split evaluation. Per trial: derive a trial seed from
/// (master_seed, index), split, fit on the training side, score fragment
/// accuracy. Trials run in parallel; results are collected by index, so the
/// report is identical regardless of thread count.
pub fn run_experiment(
    table: &FeatureTable,
    spec: &ClassifierSpec,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    spec.validate()?;
    if cfg.n_trials == 0 {
        return Err(Error::contract("run_experiment: n_trials must be ≥ 1"));
    }
    if !(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0) {
        return Err(Error::contract(format!(
            "run_experiment: test_fraction must lie in (0, 1), got {}",
            cfg.test_fraction
        )));
    }
    match (cfg.protocol, table.level()) {
        (Protocol::FragmentLevel, TableLevel::Fragment) => {}
        (Protocol::BreakLevelVoted, TableLevel::Break) => {}
        (Protocol::RowLevelUnsafe, _) => {}
        (p, l) => {
            return Err(Error::contract(format!(
                "protocol {p} does not accept a {l}-level table"
            )));
        }
    }

    let trials: Vec<TrialResult> = (0..cfg.n_trials)
        .into_par_iter()
        .map(|t| run_trial(table, spec, cfg, t))
        .collect::<Result<Vec<_>>>()?;

    let accs: Vec<f64> = trials.iter().map(|t| t.fragment_accuracy).collect();
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let std = if accs.len() > 1 {
        (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (accs.len() - 1) as f64).sqrt()
    } else {
        0.0
    };

    let mut per_class_mean = BTreeMap::new();
    for class in table.class_list() {
        let vals: Vec<f64> = trials
            .iter()
            .filter_map(|t| t.per_class_accuracy.get(&class).copied())
            .collect();
        let m = if vals.is_empty() {
            f64::NAN
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        per_class_mean.insert(class, m);
    }

    Ok(ExperimentReport {
        algorithm: spec.name().to_string(),
        level: table.level(),
        protocol: cfg.protocol,
        n_trials: cfg.n_trials,
        test_fraction: cfg.test_fraction,
        mean_accuracy: mean,
        std_accuracy: std,
        per_class_mean,
        master_seed: cfg.master_seed,
        trials,
    })
}

/// One summary row per report:
/// `algorithm,level,protocol,n_trials,mean_accuracy,std_accuracy,acc_class_<name>...,master_seed`.
/// All reports must share one class list (they come from the same table).
pub fn write_report_csv_to<W: Write>(reports: &[ExperimentReport], mut out: W) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::contract("write_report_csv: no reports"));
    }
    let classes: Vec<&String> = reports[0].per_class_mean.keys().collect();
    for r in reports {
        let theirs: Vec<&String> = r.per_class_mean.keys().collect();
        if theirs != classes {
            return Err(Error::contract(
                "write_report_csv: reports disagree on class lists",
            ));
        }
    }
    let mut header = String::from("algorithm,level,protocol,n_trials,mean_accuracy,std_accuracy");
    for c in &classes {
        header.push_str(&format!(",acc_class_{c}"));
    }
    header.push_str(",master_seed");
    writeln!(out, "{header}")?;
    for r in reports {
        let mut line = format!(
            "{},{},{},{},{},{}",
            r.algorithm, r.level, r.protocol, r.n_trials, r.mean_accuracy, r.std_accuracy
        );
        for c in &classes {
            line.push_str(&format!(",{}", r.per_class_mean[*c]));
        }
        line.push_str(&format!(",{}", r.master_seed));
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn write_report_csv(reports: &[ExperimentReport], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_report_csv_to(reports, std::io::BufWriter::new(file))
}
