//! Objective families behind one gradient-oracle interface.

mod libsvm;
mod logreg;
mod synthetic;

pub use libsvm::{parse_libsvm, shard, LibSvmDataset, SparseRow};
pub use logreg::{logreg_oracles, test_accuracy, LogRegNc};
pub use synthetic::{synth_new, SyntheticLs};

use crate::error::{Result, SimError};
use crate::rng::Stream;
use nalgebra::DVector;

/// Gradient oracle over `n` local objectives `f_i`, with the global objective
/// `f = (1/n) sum_i f_i`. Implementations are immutable and shareable;
/// stochastic draws take an explicit stream so concurrent callers never
/// contend.
pub trait Oracle: Send + Sync {
    fn clients(&self) -> usize;

    fn dim(&self) -> usize;

    /// Upper bound on the local smoothness constants `L_i`.
    fn smoothness(&self) -> f64;

    /// Exact local gradient of `f_i` at `x` (0-based client index).
    fn exact_grad(&self, client: usize, x: &DVector<f64>) -> DVector<f64>;

    /// Unbiased stochastic gradient of `f_i` at `x`, averaged over `batch`
    /// independent draws from `rng`.
    fn stoch_grad(
        &self,
        client: usize,
        x: &DVector<f64>,
        batch: usize,
        rng: &mut Stream,
    ) -> DVector<f64>;

    /// Stochastic gradients at two points evaluated on the *same* sample
    /// batch, as required by variance-reduced momentum. Returns
    /// `(g(x_new), g(x_old))`.
    fn stoch_grad_pair(
        &self,
        _client: usize,
        _x_new: &DVector<f64>,
        _x_old: &DVector<f64>,
        _batch: usize,
        _rng: &mut Stream,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        Err(SimError::Capability(
            "paired-sample gradient evaluation".into(),
        ))
    }

    /// Global objective `f(x)`.
    fn loss(&self, x: &DVector<f64>) -> f64;

    /// Known optimal value, when available.
    fn f_star(&self) -> Option<f64> {
        None
    }

    /// Known optimizer, when available.
    fn x_star(&self) -> Option<DVector<f64>> {
        None
    }

    /// Exact gradient of the *global* objective at `x`.
    fn global_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.clients();
        let mut g = DVector::zeros(self.dim());
        for i in 0..n {
            g += self.exact_grad(i, x);
        }
        g / n as f64
    }
}
