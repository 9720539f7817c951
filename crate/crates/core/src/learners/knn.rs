use super::{KnnParams, TrainData};

/// k-nearest-neighbour classifier over standardized Euclidean distance.
///
/// Ties are fully deterministic: neighbours are ordered by (distance, training
/// index), and a vote tie between classes goes to whichever tied class owns
/// the nearest neighbour in that ordering.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct KnnModel {
    x: Vec<f64>,
    n: usize,
    d: usize,
    y: Vec<usize>,
    k: usize,
    n_classes: usize,
}

pub(crate) fn fit(params: &KnnParams, data: TrainData) -> KnnModel {
    let k = params.k.min(data.n);
    KnnModel {
        k,
        x: data.x,
        n: data.n,
        d: data.d,
        y: data.y,
        n_classes: data.n_classes,
    }
}

impl KnnModel {
    pub fn predict(&self, x: &[f64], n: usize, d: usize) -> Vec<usize> {
        debug_assert_eq!(d, self.d);
        let mut out = Vec::with_capacity(n);
        let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(self.n);
        for q in 0..n {
            let query = &x[q * d..(q + 1) * d];
            scratch.clear();
            for i in 0..self.n {
                let row = &self.x[i * self.d..(i + 1) * self.d];
                let mut d2 = 0.0;
                for j in 0..self.d {
                    let diff = query[j] - row[j];
                    d2 += diff * diff;
                }
                scratch.push((d2, i));
            }
            // Partial selection, then a total order on the k winners. The
            // boundary is tie-safe because the comparator includes the index.
            let k = self.k;
            if k < scratch.len() {
                scratch.select_nth_unstable_by(k - 1, |a, b| {
                    a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1))
                });
                scratch.truncate(k);
            }
            scratch.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));

            let mut votes = vec![0usize; self.n_classes];
            for &(_, i) in &scratch {
                votes[self.y[i]] += 1;
            }
            let top = *votes.iter().max().unwrap();
            let winner = scratch
                .iter()
                .map(|&(_, i)| self.y[i])
                .find(|&c| votes[c] == top)
                .unwrap();
            out.push(winner);
        }
        out
    }
}
