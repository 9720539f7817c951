use crate::error::{Error, Result};

/// Per-column z-scoring fitted on training data only.
///
/// Uses population standard deviation with a `1e-12` floor. An exactly
/// constant column standardizes to exactly `0.0` (its mean is taken to be the
/// constant itself, avoiding accumulation round-off).
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    means: Vec<f64>,
    stds: Vec<f64>,
}

const STD_FLOOR: f64 = 1e-12;

impl Standardizer {
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::contract("standardizer: no rows to fit"));
        }
        let d = rows[0].len();
        let n = rows.len() as f64;
        let mut means = vec![0.0; d];
        let mut stds = vec![0.0; d];
        for j in 0..d {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            let mut sum = 0.0;
            for r in rows {
                let v = r[j];
                sum += v;
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if lo == hi {
                means[j] = lo;
                stds[j] = STD_FLOOR;
                continue;
            }
            let mean = sum / n;
            let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            means[j] = mean;
            stds[j] = var.sqrt().max(STD_FLOOR);
        }
        Ok(Standardizer { means, stds })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn transform_into(&self, row: &[f64], out: &mut [f64]) {
        for j in 0..self.means.len() {
            out[j] = (row[j] - self.means[j]) / self.stds[j];
        }
    }

    /// Row-major flat matrix of the standardized rows.
    pub fn transform_matrix(&self, rows: &[&[f64]]) -> Vec<f64> {
        let d = self.dim();
        let mut x = vec![0.0; rows.len() * d];
        for (i, r) in rows.iter().enumerate() {
            self.transform_into(r, &mut x[i * d..(i + 1) * d]);
        }
        x
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn population_statistics() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let s = Standardizer::fit(&refs).unwrap();
        assert_relative_eq!(s.means()[0], 2.5);
        // Population variance of 1..4 is 1.25.
        assert_relative_eq!(s.stds()[0], 1.25f64.sqrt());
        let mut out = [0.0];
        s.transform_into(&[2.5], &mut out);
        assert_relative_eq!(out[0], 0.0);
    }

    #[test]
    fn constant_column_maps_to_exact_zero() {
        let rows: Vec<Vec<f64>> = (0..5).map(|_| vec![0.1, 3.0]).collect();
        let mut rows = rows;
        for (i, r) in rows.iter_mut().enumerate() {
            r[1] = i as f64;
        }
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let s = Standardizer::fit(&refs).unwrap();
        let mut out = [0.0, 0.0];
        s.transform_into(&[0.1, 2.0], &mut out);
        assert_eq!(out[0], 0.0);
        assert_relative_eq!(out[1], 0.0);
    }

    #[test]
    fn transform_uses_training_statistics() {
        let rows: Vec<Vec<f64>> = vec![vec![0.0], vec![10.0]];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let s = Standardizer::fit(&refs).unwrap();
        // Test value outside the training range transforms consistently.
        let mut out = [0.0];
        s.transform_into(&[20.0], &mut out);
        assert_relative_eq!(out[0], 3.0); // mean 5, std 5
    }
}
