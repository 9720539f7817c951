use std::collections::{HashMap, VecDeque};

use super::{RbfSvmParams, TrainData};

/// RBF-kernel SVM trained by sequential minimal optimization.
///
/// Duplicate (features, label) rows are collapsed before solving, with each
/// unique row's box constraint scaled to `C * multiplicity`. The dual
/// objective of the collapsed problem is identical to the original one (equal
/// inputs share a kernel column, so their alphas can be summed), which makes
/// heavily duplicated training sets — e.g. bootstrap-inflated tables — cheap
/// instead of quadratic in the duplication factor.
///
/// Two-class problems train one machine and classify by sign; multi-class
/// trains one-vs-rest machines and takes the argmax of decision values.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RbfSvmModel {
    gamma: f64,
    d: usize,
    n_classes: usize,
    machines: Vec<BinarySvm>,
}

#[derive(Debug, Clone, PartialEq)]
struct BinarySvm {
    /// Support vectors, row-major.
    sv_x: Vec<f64>,
    /// alpha_i * y_i per support vector.
    coef: Vec<f64>,
    b: f64,
}

/// Gram rows are fully materialized below this row count; above it a bounded
/// FIFO row cache keeps memory flat at the cost of recomputing cold rows.
const FULL_GRAM_MAX_ROWS: usize = 3000;
const ROW_CACHE_BYTES: usize = 24 << 20;

fn rbf(a: &[f64], bx: &[f64], gamma: f64) -> f64 {
    let mut d2 = 0.0;
    for j in 0..a.len() {
        let diff = a[j] - bx[j];
        d2 += diff * diff;
    }
    (-gamma * d2).exp()
}

struct Kernel<'a> {
    x: &'a [f64],
    m: usize,
    d: usize,
    gamma: f64,
    full: Option<Vec<f64>>,
    cache: HashMap<usize, Vec<f64>>,
    cache_order: VecDeque<usize>,
    cache_rows_max: usize,
}

impl<'a> Kernel<'a> {
    fn new(x: &'a [f64], m: usize, d: usize, gamma: f64) -> Self {
        let full = if m <= FULL_GRAM_MAX_ROWS {
            let mut g = vec![0.0; m * m];
            for i in 0..m {
                g[i * m + i] = 1.0;
                for j in i + 1..m {
                    let v = rbf(&x[i * d..(i + 1) * d], &x[j * d..(j + 1) * d], gamma);
                    g[i * m + j] = v;
                    g[j * m + i] = v;
                }
            }
            Some(g)
        } else {
            None
        };
        let cache_rows_max = (ROW_CACHE_BYTES / (m.max(1) * 8)).max(2);
        Kernel {
            x,
            m,
            d,
            gamma,
            full,
            cache: HashMap::new(),
            cache_order: VecDeque::new(),
            cache_rows_max,
        }
    }

    fn entry(&mut self, i: usize, j: usize) -> f64 {
        if let Some(g) = &self.full {
            return g[i * self.m + j];
        }
        if let Some(row) = self.cache.get(&i) {
            return row[j];
        }
        if let Some(row) = self.cache.get(&j) {
            return row[i];
        }
        rbf(
            &self.x[i * self.d..(i + 1) * self.d],
            &self.x[j * self.d..(j + 1) * self.d],
            self.gamma,
        )
    }

    /// Full kernel row against every training point.
    fn row(&mut self, i: usize) -> &[f64] {
        if let Some(g) = &self.full {
            return &g[i * self.m..(i + 1) * self.m];
        }
        if !self.cache.contains_key(&i) {
            let xi = &self.x[i * self.d..(i + 1) * self.d];
            let mut row = vec![0.0; self.m];
            for j in 0..self.m {
                row[j] = rbf(xi, &self.x[j * self.d..(j + 1) * self.d], self.gamma);
            }
            if self.cache_order.len() >= self.cache_rows_max {
                if let Some(old) = self.cache_order.pop_front() {
                    self.cache.remove(&old);
                }
            }
            self.cache.insert(i, row);
            self.cache_order.push_back(i);
        }
        self.cache.get(&i).unwrap()
    }
}

struct Smo<'a> {
    kernel: Kernel<'a>,
    m: usize,
    y: Vec<f64>,
    cap: Vec<f64>,
    alpha: Vec<f64>,
    b: f64,
    /// E_i = f(x_i) - y_i, maintained for every row.
    err: Vec<f64>,
    tol: f64,
    /// Deterministic rotating start for the second-choice scans.
    rotor: usize,
}

/// Minimum relative alpha movement for a step to count (Platt's epsilon).
const STEP_EPS: f64 = 1e-3;
const MAX_OUTER_PASSES: usize = 2000;

impl Smo<'_> {
    fn solve(&mut self) {
        let mut examine_all = true;
        let mut passes = 0;
        loop {
            let mut changed = 0usize;
            if examine_all {
                for i in 0..self.m {
                    changed += self.examine(i) as usize;
                }
            } else {
                for i in 0..self.m {
                    if self.alpha[i] > 0.0 && self.alpha[i] < self.cap[i] {
                        changed += self.examine(i) as usize;
                    }
                }
            }
            passes += 1;
            if examine_all {
                if changed == 0 {
                    break;
                }
                examine_all = false;
            } else if changed == 0 {
                examine_all = true;
            }
            if passes >= MAX_OUTER_PASSES {
                eprintln!(
                    "warning: SMO stopped after {MAX_OUTER_PASSES} passes without full KKT convergence"
                );
                break;
            }
        }
    }

    fn examine(&mut self, i2: usize) -> bool {
        let y2 = self.y[i2];
        let a2 = self.alpha[i2];
        let e2 = self.err[i2];
        let r2 = e2 * y2;
        let violates =
            (r2 < -self.tol && a2 < self.cap[i2]) || (r2 > self.tol && a2 > 0.0);
        if !violates {
            return false;
        }

        // Heuristic 1: the non-bound point with the largest |E1 - E2|.
        let mut best: Option<(f64, usize)> = None;
        for i in 0..self.m {
            if i != i2 && self.alpha[i] > 0.0 && self.alpha[i] < self.cap[i] {
                let gap = (self.err[i] - e2).abs();
                if best.map_or(true, |(g, _)| gap > g) {
                    best = Some((gap, i));
                }
            }
        }
        if let Some((_, i1)) = best {
            if self.take_step(i1, i2) {
                return true;
            }
        }

        // Heuristic 2: all non-bound points from a rotating offset.
        self.rotor = self.rotor.wrapping_add(1);
        let start = self.rotor % self.m;
        for k in 0..self.m {
            let i1 = (start + k) % self.m;
            if i1 != i2 && self.alpha[i1] > 0.0 && self.alpha[i1] < self.cap[i1] {
                if self.take_step(i1, i2) {
                    return true;
                }
            }
        }
        // Heuristic 3: everything else.
        for k in 0..self.m {
            let i1 = (start + k) % self.m;
            if i1 != i2 && (self.alpha[i1] <= 0.0 || self.alpha[i1] >= self.cap[i1]) {
                if self.take_step(i1, i2) {
                    return true;
                }
            }
        }
        false
    }

    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1, a2) = (self.alpha[i1], self.alpha[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let (e1, e2) = (self.err[i1], self.err[i2]);
        let (c1, c2) = (self.cap[i1], self.cap[i2]);
        let s = y1 * y2;

        let (lo, hi) = if (y1 - y2).abs() > 0.5 {
            ((a2 - a1).max(0.0), c2.min(c1 + a2 - a1))
        } else {
            ((a1 + a2 - c1).max(0.0), c2.min(a1 + a2))
        };
        if lo >= hi {
            return false;
        }

        let k11 = self.kernel.entry(i1, i1);
        let k12 = self.kernel.entry(i1, i2);
        let k22 = self.kernel.entry(i2, i2);
        let eta = k11 + k22 - 2.0 * k12;
        let a2_new = if eta > 0.0 {
            (a2 + y2 * (e1 - e2) / eta).clamp(lo, hi)
        } else {
            // Degenerate curvature: compare the objective at both clip ends.
            let f1 = y1 * (e1 + self.b) - a1 * k11 - s * a2 * k12;
            let f2 = y2 * (e2 + self.b) - s * a1 * k12 - a2 * k22;
            let l1 = a1 + s * (a2 - lo);
            let h1 = a1 + s * (a2 - hi);
            let obj_lo =
                l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11 + 0.5 * lo * lo * k22 + s * lo * l1 * k12;
            let obj_hi =
                h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11 + 0.5 * hi * hi * k22 + s * hi * h1 * k12;
            if obj_lo < obj_hi - 1e-12 {
                lo
            } else if obj_lo > obj_hi + 1e-12 {
                hi
            } else {
                a2
            }
        };
        if (a2_new - a2).abs() < STEP_EPS * (a2_new + a2 + STEP_EPS) {
            return false;
        }
        let a1_new = (a1 + s * (a2 - a2_new)).clamp(0.0, c1);

        let d1 = y1 * (a1_new - a1);
        let d2 = y2 * (a2_new - a2);
        let b1 = self.b - e1 - d1 * k11 - d2 * k12;
        let b2 = self.b - e2 - d1 * k12 - d2 * k22;
        let b_new = if a1_new > 0.0 && a1_new < c1 {
            b1
        } else if a2_new > 0.0 && a2_new < c2 {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        let db = b_new - self.b;

        {
            let row1 = self.kernel.row(i1).to_vec();
            let row2 = self.kernel.row(i2);
            for i in 0..self.m {
                self.err[i] += d1 * row1[i] + d2 * row2[i] + db;
            }
        }
        self.alpha[i1] = a1_new;
        self.alpha[i2] = a2_new;
        self.b = b_new;
        true
    }
}

struct UniqueRows {
    x: Vec<f64>,
    class: Vec<usize>,
    count: Vec<u64>,
    m: usize,
}

fn dedupe(data: &TrainData) -> UniqueRows {
    let mut key_to_uid: HashMap<(Vec<u64>, usize), usize> = HashMap::new();
    let mut x = Vec::new();
    let mut class = Vec::new();
    let mut count: Vec<u64> = Vec::new();
    for i in 0..data.n {
        let bits: Vec<u64> = data.row(i).iter().map(|v| v.to_bits()).collect();
        match key_to_uid.entry((bits, data.y[i])) {
            std::collections::hash_map::Entry::Occupied(e) => count[*e.get()] += 1,
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(class.len());
                x.extend_from_slice(data.row(i));
                class.push(data.y[i]);
                count.push(1);
            }
        }
    }
    UniqueRows {
        m: class.len(),
        x,
        class,
        count,
    }
}

fn solve_machine(
    rows: &UniqueRows,
    d: usize,
    target: usize,
    gamma: f64,
    c: f64,
    tol: f64,
) -> BinarySvm {
    let m = rows.m;
    let y: Vec<f64> = rows
        .class
        .iter()
        .map(|&k| if k == target { 1.0 } else { -1.0 })
        .collect();
    let cap: Vec<f64> = rows.count.iter().map(|&n| c * n as f64).collect();
    let mut smo = Smo {
        kernel: Kernel::new(&rows.x, m, d, gamma),
        m,
        err: y.iter().map(|&yi| -yi).collect(),
        y,
        cap,
        alpha: vec![0.0; m],
        b: 0.0,
        tol,
        rotor: 0,
    };
    smo.solve();

    let mut sv_x = Vec::new();
    let mut coef = Vec::new();
    for i in 0..m {
        if smo.alpha[i] > 0.0 {
            sv_x.extend_from_slice(&rows.x[i * d..(i + 1) * d]);
            coef.push(smo.alpha[i] * smo.y[i]);
        }
    }
    BinarySvm {
        sv_x,
        coef,
        b: smo.b,
    }
}

pub(crate) fn fit(params: &RbfSvmParams, data: &TrainData) -> RbfSvmModel {
    let gamma = params.gamma.unwrap_or_else(|| {
        let (n, d) = (data.n, data.d);
        let mut mean_var = 0.0;
        for j in 0..d {
            let mean = (0..n).map(|i| data.row(i)[j]).sum::<f64>() / n as f64;
            let var = (0..n).map(|i| (data.row(i)[j] - mean).powi(2)).sum::<f64>() / n as f64;
            mean_var += var;
        }
        mean_var /= d as f64;
        1.0 / (d as f64 * mean_var.max(1e-12))
    });

    let rows = dedupe(data);
    let machines = if data.n_classes == 2 {
        vec![solve_machine(&rows, data.d, 1, gamma, params.c, params.tol)]
    } else {
        (0..data.n_classes)
            .map(|target| solve_machine(&rows, data.d, target, gamma, params.c, params.tol))
            .collect()
    };
    RbfSvmModel {
        gamma,
        d: data.d,
        n_classes: data.n_classes,
        machines,
    }
}

impl BinarySvm {
    fn decision(&self, row: &[f64], gamma: f64) -> f64 {
        let d = row.len();
        let mut f = self.b;
        for (k, coef) in self.coef.iter().enumerate() {
            f += coef * rbf(&self.sv_x[k * d..(k + 1) * d], row, gamma);
        }
        f
    }
}

impl RbfSvmModel {
    pub fn predict(&self, x: &[f64], n: usize, d: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let row = &x[i * d..(i + 1) * d];
            let k = if self.n_classes == 2 {
                if self.machines[0].decision(row, self.gamma) > 0.0 {
                    1
                } else {
                    0
                }
            } else {
                let mut best = 0usize;
                let mut best_score = f64::NEG_INFINITY;
                for (c, mach) in self.machines.iter().enumerate() {
                    let s = mach.decision(row, self.gamma);
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
    use super::*;
    use crate::learners::{
        fit as fit_model, AlgorithmSpec, ClassifierSpec, LinearSvmParams, RbfSvmParams,
    };
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn ring_data(seed: u64, n_per_class: usize) -> (Vec<Vec<f64>>, Vec<&'static str>) {
        let mut rng = rng_from_seed(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..2 * n_per_class {
            let inner = i < n_per_class;
            let r = if inner {
                rng.gen::<f64>() * 0.8
            } else {
                2.0 + rng.gen::<f64>()
            };
            let th = rng.gen::<f64>() * std::f64::consts::TAU;
            rows.push(vec![r * th.cos(), r * th.sin()]);
            labels.push(if inner { "in" } else { "out" });
        }
        (rows, labels)
    }

    #[test]
    fn ring_data_needs_the_kernel() {
        let (rows, labels) = ring_data(31, 60);
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let rbf_spec =
            ClassifierSpec::new(AlgorithmSpec::RbfSvm(RbfSvmParams::default()), 1);
        let lin_spec = ClassifierSpec::new(
            AlgorithmSpec::LinearSvm(LinearSvmParams::default()),
            1,
        );
        let rbf_model = fit_model(&rbf_spec, &refs, &labels).unwrap();
        let lin_model = fit_model(&lin_spec, &refs, &labels).unwrap();
        let rbf_acc = rbf_model
            .predict(&refs)
            .unwrap()
            .iter()
            .zip(&labels)
            .filter(|(p, t)| p == *t)
            .count() as f64
            / labels.len() as f64;
        let lin_acc = lin_model
            .predict(&refs)
            .unwrap()
            .iter()
            .zip(&labels)
            .filter(|(p, t)| p == *t)
            .count() as f64
            / labels.len() as f64;
        assert!(rbf_acc >= 0.95, "rbf training accuracy {rbf_acc}");
        assert!(lin_acc <= 0.75, "rings should defeat a linear machine: {lin_acc}");
    }

    #[test]
    fn duplicate_rows_equal_scaled_box_constraints() {
        // Solving with every row duplicated and C=1 must give bit-identical
        // machines to solving unique rows with C=2: the dual problems match.
        let (rows, labels) = ring_data(7, 20);
        let class_of = |l: &str| usize::from(l == "out");
        let mut x = Vec::new();
        for r in &rows {
            x.extend_from_slice(r);
        }
        let data_single = TrainData {
            x: x.clone(),
            n: rows.len(),
            d: 2,
            y: labels.iter().map(|l| class_of(l)).collect(),
            n_classes: 2,
        };
        let mut x2 = x.clone();
        x2.extend_from_slice(&x);
        let mut y2: Vec<usize> = labels.iter().map(|l| class_of(l)).collect();
        y2.extend(y2.clone());
        let data_doubled = TrainData {
            x: x2,
            n: rows.len() * 2,
            d: 2,
            y: y2,
            n_classes: 2,
        };
        let gamma = Some(0.5);
        let m1 = fit(
            &RbfSvmParams {
                c: 2.0,
                gamma,
                tol: 1e-3,
            },
            &data_single,
        );
        let m2 = fit(
            &RbfSvmParams {
                c: 1.0,
                gamma,
                tol: 1e-3,
            },
            &data_doubled,
        );
        assert_eq!(m1, m2);
    }

    #[test]
    fn gamma_heuristic_uses_mean_feature_variance() {
        // Two features with variances 1 and 3: gamma = 1/(2 * 2) = 0.25.
        let vals = [-1.0f64, 1.0];
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (i, &a) in vals.iter().enumerate() {
            for &b in &vals {
                x.extend_from_slice(&[a, 3f64.sqrt() * b]);
                y.push(i);
            }
        }
        let data = TrainData {
            x,
            n: 4,
            d: 2,
            y,
            n_classes: 2,
        };
        let model = fit(&RbfSvmParams::default(), &data);
        assert!((model.gamma - 0.25).abs() < 1e-12, "gamma {}", model.gamma);
    }

    #[test]
    fn three_class_one_vs_rest_argmax() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, center) in [("a", [-4.0, 0.0]), ("b", [0.0, 4.0]), ("c", [4.0, 0.0])] {
            for k in 0..8 {
                rows.push(vec![
                    center[0] + (k % 3) as f64 * 0.2,
                    center[1] + (k % 4) as f64 * 0.2,
                ]);
                labels.push(c);
            }
        }
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let spec = ClassifierSpec::new(AlgorithmSpec::RbfSvm(RbfSvmParams::default()), 1);
        let model = fit_model(&spec, &refs, &labels).unwrap();
        assert_eq!(model.predict(&refs).unwrap(), labels);
    }
}
