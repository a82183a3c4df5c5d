//! Logistic regression with a non-convex regularizer.
//!
//! Local objective of client `i` over its shard of `m` samples:
//! `f_i(x) = (1/m) sum_j log(1 + exp(-b_ij a_ij^T x)) + lambda sum_k x_k^2 / (1 + x_k^2)`.

use super::{Oracle, SparseRow};
use crate::error::{Result, SimError};
use crate::rng::Stream;
use nalgebra::DVector;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct LogRegNc {
    shards: Vec<Vec<SparseRow>>,
    d: usize,
    reg_lambda: f64,
    batch: usize,
    smoothness: f64,
}

/// Wrap dataset shards as an oracle suite. `batch` is the default minibatch
/// size for stochastic draws (rows sampled uniformly with replacement).
pub fn logreg_oracles(
    shards: Vec<Vec<SparseRow>>,
    d: usize,
    reg_lambda: f64,
    batch: usize,
) -> Result<LogRegNc> {
    if shards.is_empty() || shards.iter().any(Vec::is_empty) {
        return Err(SimError::InvalidParam("every shard must be non-empty".into()));
    }
    if reg_lambda < 0.0 {
        return Err(SimError::InvalidParam("reg_lambda must be >= 0".into()));
    }
    if batch == 0 {
        return Err(SimError::InvalidParam("batch must be >= 1".into()));
    }
    // data term: Hessian bounded by (1/4m) sum_j ||a_j||^2; regularizer
    // curvature peaks at 2 lambda
    let smoothness = shards
        .iter()
        .map(|rows| {
            let sq: f64 = rows
                .iter()
                .map(|r| r.features.iter().map(|(_, v)| v * v).sum::<f64>())
                .sum();
            0.25 * sq / rows.len() as f64
        })
        .fold(0.0f64, f64::max)
        + 2.0 * reg_lambda;
    Ok(LogRegNc {
        shards,
        d,
        reg_lambda,
        batch,
        smoothness,
    })
}

fn logistic(z: f64) -> f64 {
    // numerically stable on both tails
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn log1p_exp(z: f64) -> f64 {
    // log(1 + exp(z)) without overflow
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LogRegNc {
    pub fn reg_lambda(&self) -> f64 {
        self.reg_lambda
    }

    pub fn shards(&self) -> &[Vec<SparseRow>] {
        &self.shards
    }

    fn reg_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        // d/dx x^2/(1+x^2) = 2x / (1+x^2)^2
        DVector::from_fn(self.d, |j, _| {
            let xj = x[j];
            let den = 1.0 + xj * xj;
            self.reg_lambda * 2.0 * xj / (den * den)
        })
    }

    fn reg_value(&self, x: &DVector<f64>) -> f64 {
        self.reg_lambda
            * x.iter()
                .map(|&xj| xj * xj / (1.0 + xj * xj))
                .sum::<f64>()
    }

    fn row_grad_into(&self, row: &SparseRow, x: &DVector<f64>, scale: f64, out: &mut DVector<f64>) {
        let b = row.label as f64;
        let margin = -b * row.dot(x);
        let coeff = -b * logistic(margin) * scale;
        for &(j, v) in &row.features {
            out[j] += coeff * v;
        }
    }

    fn data_grad(&self, client: usize, x: &DVector<f64>, rows: &[&SparseRow]) -> DVector<f64> {
        let _ = client;
        let mut g = DVector::zeros(self.d);
        let scale = 1.0 / rows.len() as f64;
        for row in rows {
            self.row_grad_into(row, x, scale, &mut g);
        }
        g
    }

    fn sample_rows<'a>(&'a self, client: usize, batch: usize, rng: &mut Stream) -> Vec<&'a SparseRow> {
        let shard = &self.shards[client];
        (0..batch)
            .map(|_| &shard[rng.random_range(0..shard.len())])
            .collect()
    }
}

impl Oracle for LogRegNc {
    fn clients(&self) -> usize {
        self.shards.len()
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn smoothness(&self) -> f64 {
        self.smoothness
    }

    fn exact_grad(&self, client: usize, x: &DVector<f64>) -> DVector<f64> {
        let rows: Vec<&SparseRow> = self.shards[client].iter().collect();
        self.data_grad(client, x, &rows) + self.reg_grad(x)
    }

    fn stoch_grad(
        &self,
        client: usize,
        x: &DVector<f64>,
        batch: usize,
        rng: &mut Stream,
    ) -> DVector<f64> {
        let batch = if batch == 0 { self.batch } else { batch };
        let rows = self.sample_rows(client, batch, rng);
        self.data_grad(client, x, &rows) + self.reg_grad(x)
    }

    fn stoch_grad_pair(
        &self,
        client: usize,
        x_new: &DVector<f64>,
        x_old: &DVector<f64>,
        batch: usize,
        rng: &mut Stream,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let batch = if batch == 0 { self.batch } else { batch };
        let rows = self.sample_rows(client, batch, rng);
        Ok((
            self.data_grad(client, x_new, &rows) + self.reg_grad(x_new),
            self.data_grad(client, x_old, &rows) + self.reg_grad(x_old),
        ))
    }

    fn loss(&self, x: &DVector<f64>) -> f64 {
        let n = self.shards.len();
        let data: f64 = self
            .shards
            .iter()
            .map(|rows| {
                rows.iter()
                    .map(|r| log1p_exp(-(r.label as f64) * r.dot(x)))
                    .sum::<f64>()
                    / rows.len() as f64
            })
            .sum::<f64>()
            / n as f64;
        data + self.reg_value(x)
    }
}

/// Classification accuracy of `x` on a held-out set: `a^T x >= 0` predicts
/// `+1`, otherwise `-1`.
pub fn test_accuracy(rows: &[SparseRow], x: &DVector<f64>) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let correct = rows
        .iter()
        .filter(|r| {
            let pred = if r.dot(x) >= 0.0 { 1 } else { -1 };
            pred == r.label
        })
        .count();
    correct as f64 / rows.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::parse_libsvm;
    use crate::rng::{standard_normal, stream, Purpose};
    use approx::assert_abs_diff_eq;

    fn toy() -> LogRegNc {
        let text = "\
+1 1:1.0 3:0.5
-1 2:-0.7 3:1.2
+1 1:0.2 2:0.4
0 1:-1.1 3:0.3
1 2:2.0
-1 1:0.5 2:-0.5 3:0.5
";
        let ds = parse_libsvm(text.as_bytes()).unwrap();
        let shards = crate::problems::shard(&ds, 2, false, 0).unwrap();
        logreg_oracles(shards, ds.d, 0.05, 1).unwrap()
    }

    #[test]
    fn loss_at_origin_is_log_two_plus_zero_regularizer() {
        let p = toy();
        let x = DVector::zeros(3);
        assert_abs_diff_eq!(p.loss(&x), (2.0f64).ln(), epsilon = 1e-15);
        assert_eq!(p.reg_value(&x), 0.0);
    }

    #[test]
    fn regularizer_gradient_at_one_is_half_lambda() {
        let p = toy();
        let mut x = DVector::zeros(3);
        x[1] = 1.0;
        let g = p.reg_grad(&x);
        assert_abs_diff_eq!(g[1], 0.05 / 2.0, epsilon = 1e-15);
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn exact_grad_matches_finite_differences() {
        let p = toy();
        let mut rng = stream(4, 0, 0, Purpose::Scratch);
        for client in 0..2 {
            let x = DVector::from_fn(3, |_, _| {
                standard_normal(&mut rng)
            });
            let g = p.exact_grad(client, &x);
            let local = |y: &DVector<f64>| {
                let rows = &p.shards()[client];
                rows.iter()
                    .map(|r| log1p_exp(-(r.label as f64) * r.dot(y)))
                    .sum::<f64>()
                    / rows.len() as f64
                    + p.reg_value(y)
            };
            let h = 1e-6;
            for j in 0..3 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd = (local(&xp) - local(&xm)) / (2.0 * h);
                assert!(
                    (g[j] - fd).abs() <= 1e-5 * (1.0 + fd.abs()),
                    "client {client} coord {j}: {} vs {fd}",
                    g[j]
                );
            }
        }
    }

    #[test]
    fn minibatch_gradient_is_unbiased() {
        let p = toy();
        let x = DVector::from_vec(vec![0.3, -0.2, 0.1]);
        let mut rng = stream(5, 0, 0, Purpose::Scratch);
        let draws = 10_000;
        let mut mean = DVector::zeros(3);
        for _ in 0..draws {
            mean += p.stoch_grad(0, &x, 1, &mut rng);
        }
        mean /= draws as f64;
        let exact = p.exact_grad(0, &x);
        for j in 0..3 {
            assert!(
                (mean[j] - exact[j]).abs() < 0.05,
                "coord {j}: {} vs {}",
                mean[j],
                exact[j]
            );
        }
    }

    #[test]
    fn paired_draws_use_one_sample_batch() {
        let p = toy();
        let x = DVector::from_vec(vec![0.5, 0.1, -0.4]);
        let y = DVector::zeros(3);
        let mut a = stream(6, 0, 0, Purpose::Scratch);
        let mut b = stream(6, 0, 0, Purpose::Scratch);
        let (gx, _) = p.stoch_grad_pair(1, &x, &y, 2, &mut a).unwrap();
        let gx_direct = p.stoch_grad(1, &x, 2, &mut b);
        assert_eq!(gx, gx_direct);
    }

    #[test]
    fn empty_shards_are_rejected() {
        assert!(logreg_oracles(vec![vec![], vec![]], 3, 0.05, 1).is_err());
    }

    #[test]
    fn accuracy_counts_sign_agreement() {
        let rows = vec![
            SparseRow { label: 1, features: vec![(0, 1.0)] },
            SparseRow { label: -1, features: vec![(0, -1.0)] },
            SparseRow { label: -1, features: vec![(0, 2.0)] },
        ];
        let x = DVector::from_vec(vec![1.0]);
        assert_abs_diff_eq!(test_accuracy(&rows, &x), 2.0 / 3.0, epsilon = 1e-15);
    }
}
