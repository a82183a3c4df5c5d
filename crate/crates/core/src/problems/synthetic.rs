//! Synthetic least squares with controlled heterogeneity and gradient noise.
//!
//! Client `i` (1-based) owns `f_i(x) = 0.5 ||A_i x - b_i||^2` with
//! `A_i = (i/sqrt(n)) I`, so `A_i^2 = (i^2/n) I` and the local smoothness
//! constants are `L_i = i^2/n <= n`. The offsets `b_i ~ N(0, (zeta^2/i^2) I)`
//! set the gradient dissimilarity; `zeta = 0` makes all clients share the
//! optimizer `x* = 0`.
//!
//! Stochastic gradients add Gaussian noise with total variance
//! `E||g - grad f_i||^2 = sigma^2 / batch`, i.e. per-coordinate variance
//! `sigma^2 / (d * batch)`: `sigma` is the noise-norm bound, not a
//! per-coordinate deviation.

use super::Oracle;
use crate::error::{Result, SimError};
use crate::rng::{stream, Purpose, Stream};
use nalgebra::DVector;
use crate::rng::standard_normal;

#[derive(Debug, Clone)]
pub struct SyntheticLs {
    n: usize,
    d: usize,
    zeta: f64,
    sigma: f64,
    b: Vec<DVector<f64>>,
    x_star: DVector<f64>,
    f_star: f64,
}

/// Build an instance. Deterministic in `(n, d, zeta, sigma, seed)`.
pub fn synth_new(n: usize, d: usize, zeta: f64, sigma: f64, seed: u64) -> Result<SyntheticLs> {
    if n == 0 || d == 0 {
        return Err(SimError::InvalidParam("need n >= 1 and d >= 1".into()));
    }
    if zeta < 0.0 || sigma < 0.0 {
        return Err(SimError::InvalidParam("zeta and sigma must be >= 0".into()));
    }
    let b: Vec<DVector<f64>> = (1..=n)
        .map(|i| {
            let mut rng = stream(seed, i as u64, 0, Purpose::Data);
            let scale = zeta / i as f64;
            DVector::from_fn(d, |_, _| scale * standard_normal(&mut rng))
        })
        .collect();
    // x* = (sum_i A_i^2)^{-1} sum_i A_i b_i, all A_i scalar multiples of I
    let denom: f64 = (1..=n).map(|i| (i * i) as f64 / n as f64).sum();
    let mut num = DVector::zeros(d);
    for (idx, bi) in b.iter().enumerate() {
        let i = (idx + 1) as f64;
        num += bi * (i / (n as f64).sqrt());
    }
    let x_star = num / denom;
    let mut inst = SyntheticLs {
        n,
        d,
        zeta,
        sigma,
        b,
        x_star: x_star.clone(),
        f_star: 0.0,
    };
    inst.f_star = inst.loss(&x_star);
    Ok(inst)
}

impl SyntheticLs {
    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn a_scale(&self, client: usize) -> f64 {
        (client + 1) as f64 / (self.n as f64).sqrt()
    }

    fn noise(&self, batch: usize, rng: &mut Stream) -> DVector<f64> {
        let std = self.sigma / ((self.d * batch) as f64).sqrt();
        DVector::from_fn(self.d, |_, _| std * standard_normal(rng))
    }
}

impl Oracle for SyntheticLs {
    fn clients(&self) -> usize {
        self.n
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn smoothness(&self) -> f64 {
        self.n as f64
    }

    fn exact_grad(&self, client: usize, x: &DVector<f64>) -> DVector<f64> {
        let a = self.a_scale(client);
        x * (a * a) - &self.b[client] * a
    }

    fn stoch_grad(
        &self,
        client: usize,
        x: &DVector<f64>,
        batch: usize,
        rng: &mut Stream,
    ) -> DVector<f64> {
        let mut g = self.exact_grad(client, x);
        if self.sigma > 0.0 {
            g += self.noise(batch, rng);
        }
        g
    }

    fn stoch_grad_pair(
        &self,
        client: usize,
        x_new: &DVector<f64>,
        x_old: &DVector<f64>,
        batch: usize,
        rng: &mut Stream,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let mut g_new = self.exact_grad(client, x_new);
        let mut g_old = self.exact_grad(client, x_old);
        if self.sigma > 0.0 {
            let noise = self.noise(batch, rng);
            g_new += &noise;
            g_old += &noise;
        }
        Ok((g_new, g_old))
    }

    fn loss(&self, x: &DVector<f64>) -> f64 {
        let mut total = 0.0;
        for client in 0..self.n {
            let r = x * self.a_scale(client) - &self.b[client];
            total += 0.5 * r.norm_squared();
        }
        total / self.n as f64
    }

    fn f_star(&self) -> Option<f64> {
        Some(self.f_star)
    }

    fn x_star(&self) -> Option<DVector<f64>> {
        Some(self.x_star.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use approx::assert_abs_diff_eq;

    fn scratch() -> Stream {
        stream(3, 0, 0, Purpose::Scratch)
    }

    #[test]
    fn zero_heterogeneity_collapses_to_origin() {
        let p = synth_new(5, 7, 0.0, 0.0, 11).unwrap();
        assert_eq!(p.x_star().unwrap(), DVector::zeros(7));
        assert_eq!(p.f_star(), Some(0.0));
        for i in 0..5 {
            assert_eq!(p.exact_grad(i, &DVector::zeros(7)), DVector::zeros(7));
        }
    }

    #[test]
    fn single_client_optimum_attains_zero() {
        // n=1: x* = b_1 and f* = 0
        let p = synth_new(1, 4, 3.0, 0.0, 5).unwrap();
        let xs = p.x_star().unwrap();
        assert_abs_diff_eq!(p.loss(&xs), 0.0, epsilon = 1e-24);
        assert!(p.global_grad(&xs).norm() < 1e-12);
    }

    #[test]
    fn optimum_is_stationary() {
        let p = synth_new(6, 10, 10.0, 0.0, 7).unwrap();
        let xs = p.x_star().unwrap();
        assert!(
            p.global_grad(&xs).norm() < 1e-10,
            "grad norm {}",
            p.global_grad(&xs).norm()
        );
        assert_eq!(p.f_star().unwrap(), p.loss(&xs));
    }

    #[test]
    fn exact_grad_matches_finite_differences() {
        let p = synth_new(4, 6, 5.0, 0.0, 13).unwrap();
        let mut rng = scratch();
        for client in 0..4 {
            let x = DVector::from_fn(6, |_, _| {
                standard_normal(&mut rng)
            });
            let g = p.exact_grad(client, &x);
            let h = 1e-6;
            for j in 0..6 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fi = |y: &DVector<f64>| {
                    let a = p.a_scale(client);
                    0.5 * (y * a - &p.b[client]).norm_squared()
                };
                let fd = (fi(&xp) - fi(&xm)) / (2.0 * h);
                assert!(
                    (g[j] - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "client {client} coord {j}: {} vs {}",
                    g[j],
                    fd
                );
            }
        }
    }

    #[test]
    fn noise_norm_matches_sigma_over_batch() {
        let p = synth_new(3, 20, 10.0, 10.0, 17).unwrap();
        let x = DVector::zeros(20);
        let mut rng = scratch();
        for batch in [1usize, 4] {
            let trials = 20_000;
            let mut total = 0.0;
            for _ in 0..trials {
                let noise = p.stoch_grad(1, &x, batch, &mut rng) - p.exact_grad(1, &x);
                total += noise.norm_squared();
            }
            let mean = total / trials as f64;
            let expect = p.sigma * p.sigma / batch as f64;
            // chi-square mean has std ~ expect * sqrt(2/(d*trials))
            let tol = 3.0 * expect * (2.0 / (20.0 * trials as f64)).sqrt();
            assert!(
                (mean - expect).abs() < tol,
                "batch {batch}: {mean} vs {expect}"
            );
        }
    }

    #[test]
    fn stochastic_gradient_is_unbiased() {
        let p = synth_new(3, 8, 4.0, 2.0, 19).unwrap();
        let x = DVector::from_element(8, 0.3);
        let mut rng = scratch();
        let draws = 10_000;
        let mut mean = DVector::zeros(8);
        for _ in 0..draws {
            mean += p.stoch_grad(2, &x, 1, &mut rng);
        }
        mean /= draws as f64;
        let exact = p.exact_grad(2, &x);
        // per-coordinate se = sigma / sqrt(d * draws)
        let se = 2.0 / (8.0f64 * draws as f64).sqrt();
        for j in 0..8 {
            assert!(
                (mean[j] - exact[j]).abs() < 4.0 * se,
                "coord {j}: {} vs {}",
                mean[j],
                exact[j]
            );
        }
    }

    #[test]
    fn heterogeneity_at_optimum_grows_with_zeta() {
        let mut last = -1.0;
        for zeta in [0.0, 10.0, 100.0] {
            let p = synth_new(4, 6, zeta, 0.0, 23).unwrap();
            let xs = p.x_star().unwrap();
            let spread: f64 = (0..4)
                .map(|i| p.exact_grad(i, &xs).norm_squared())
                .sum::<f64>()
                / 4.0;
            if zeta == 0.0 {
                assert_abs_diff_eq!(spread, 0.0, epsilon = 1e-20);
            }
            assert!(spread > last, "zeta={zeta}: {spread} <= {last}");
            last = spread;
        }
    }

    #[test]
    fn local_gradients_are_lipschitz_with_l_at_most_n() {
        let n = 5;
        let p = synth_new(n, 4, 2.0, 0.0, 29).unwrap();
        let mut rng = scratch();
        for _ in 0..50 {
            let x = DVector::from_fn(4, |_, _| standard_normal(&mut rng));
            let y = DVector::from_fn(4, |_, _| standard_normal(&mut rng));
            for client in 0..n {
                let li = ((client + 1) * (client + 1)) as f64 / n as f64;
                let lhs = (p.exact_grad(client, &x) - p.exact_grad(client, &y)).norm();
                let rhs = li * (&x - &y).norm();
                assert!(lhs <= rhs * (1.0 + 1e-12));
                assert!(rhs <= p.smoothness() * (&x - &y).norm() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn paired_samples_share_their_noise() {
        // the difference of a paired draw is noise-free
        let p = synth_new(2, 5, 1.0, 8.0, 31).unwrap();
        let x = DVector::from_element(5, 1.0);
        let y = DVector::from_element(5, -0.5);
        let (gx, gy) = p.stoch_grad_pair(0, &x, &y, 1, &mut scratch()).unwrap();
        let exact = p.exact_grad(0, &x) - p.exact_grad(0, &y);
        assert!((gx - gy - exact).norm() < 1e-14);
    }
}
