//! Round-synchronous state machines: MoTEF, MoTEF-VR and the BEER,
//! Choco-SGD, DSGD and D2 baselines.
//!
//! State lives in five `d x n` matrices whose columns are per-client vectors.
//! All algorithms read the round-`t` snapshot and write the round-`t+1`
//! state; per-client randomness comes from streams keyed on
//! `(seed, client, round, purpose)`, so results are independent of the order
//! in which columns are processed.
//!
//! Matrix roles per algorithm:
//! * MoTEF / MoTEF-VR / BEER — `x` model, `h` compressed mirror of `x`,
//!   `v` gradient tracker, `g` compressed mirror of `v`, `m` momentum.
//! * Choco-SGD — `x` model, `h` the shared compressed mirror `x_hat`;
//!   `g`, `v`, `m` unused.
//! * DSGD — only `x` used.
//! * D2 — `x` model, `v` previous iterate, `m` previous stochastic gradients.

use crate::compressors::{compress, CompressorSpec};
use crate::error::{Result, SimError};
use crate::problems::Oracle;
use crate::rng::{stream, Purpose};
use crate::topology::Topology;
use nalgebra::{DMatrix, DVector};
use std::fmt;
use std::str::FromStr;

/// Which update rule drives the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Motef,
    MotefVr,
    Beer,
    Choco,
    Dsgd,
    D2,
}

impl FromStr for Algorithm {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "motef" => Ok(Algorithm::Motef),
            "motef_vr" => Ok(Algorithm::MotefVr),
            "beer" => Ok(Algorithm::Beer),
            "choco" => Ok(Algorithm::Choco),
            "dsgd" => Ok(Algorithm::Dsgd),
            "d2" => Ok(Algorithm::D2),
            other => Err(SimError::InvalidParam(format!(
                "unknown algorithm `{other}`"
            ))),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Algorithm::Motef => "motef",
            Algorithm::MotefVr => "motef_vr",
            Algorithm::Beer => "beer",
            Algorithm::Choco => "choco",
            Algorithm::Dsgd => "dsgd",
            Algorithm::D2 => "d2",
        };
        f.write_str(s)
    }
}

/// Stepsizes and schedule knobs shared by all algorithms.
#[derive(Debug, Clone, Copy)]
pub struct HyperParams {
    /// Gossip stepsize, in `(0, 1]`.
    pub gamma: f64,
    /// Model stepsize, `> 0`.
    pub eta: f64,
    /// Momentum parameter, in `(0, 1]`. `lambda = 1` recovers BEER.
    pub lambda: f64,
    /// Minibatch size per stochastic gradient.
    pub batch: usize,
    /// Batch size for the initial gradient estimate.
    pub init_batch: usize,
    /// Total rounds to run.
    pub iters: u64,
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(SimError::InvalidParam(format!(
                "gamma must lie in (0,1], got {}",
                self.gamma
            )));
        }
        if !(self.eta > 0.0) {
            return Err(SimError::InvalidParam(format!(
                "eta must be > 0, got {}",
                self.eta
            )));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(SimError::InvalidParam(format!(
                "lambda must lie in (0,1], got {}",
                self.lambda
            )));
        }
        if self.batch == 0 || self.init_batch == 0 {
            return Err(SimError::InvalidParam(
                "batch and init_batch must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Full simulator state: the five `d x n` matrices plus bookkeeping.
#[derive(Debug, Clone)]
pub struct AlgState {
    pub x: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub m: DMatrix<f64>,
    /// Round counter.
    pub t: u64,
    /// Cumulative bits transmitted by each node (all nodes send the same
    /// number of messages per round).
    pub bits_per_node: u64,
}

impl AlgState {
    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn clients(&self) -> usize {
        self.x.ncols()
    }

    /// Mean model across clients.
    pub fn x_bar(&self) -> DVector<f64> {
        column_mean(&self.x)
    }

    /// Mean tracker across clients.
    pub fn v_bar(&self) -> DVector<f64> {
        column_mean(&self.v)
    }

    /// Mean momentum across clients.
    pub fn m_bar(&self) -> DVector<f64> {
        column_mean(&self.m)
    }

    /// Consensus error `||X - xbar 1^T||_F^2`.
    pub fn omega3(&self) -> f64 {
        deviation_sq(&self.x)
    }
}

pub(crate) fn column_mean(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.ncols();
    let mut out = DVector::zeros(m.nrows());
    for j in 0..n {
        out += m.column(j);
    }
    out / n as f64
}

pub(crate) fn deviation_sq(m: &DMatrix<f64>) -> f64 {
    let mean = column_mean(m);
    let mut total = 0.0;
    for j in 0..m.ncols() {
        total += (m.column(j) - &mean).norm_squared();
    }
    total
}

/// Initialize from a common starting point: `X0 = H0 = x0 1^T` and
/// `M0 = V0 = G0` equal to per-client stochastic gradients at `x0` averaged
/// over `init_batch` draws.
pub fn init_state(
    oracle: &dyn Oracle,
    topo: &Topology,
    hp: &HyperParams,
    x0: &DVector<f64>,
    seed: u64,
) -> Result<AlgState> {
    hp.validate()?;
    let d = oracle.dim();
    let n = oracle.clients();
    if x0.len() != d {
        return Err(SimError::DimensionMismatch {
            expected: d,
            got: x0.len(),
            context: "initial point".into(),
        });
    }
    if topo.n() != n {
        return Err(SimError::DimensionMismatch {
            expected: n,
            got: topo.n(),
            context: "topology size vs oracle clients".into(),
        });
    }
    let mut x = DMatrix::zeros(d, n);
    for j in 0..n {
        x.set_column(j, x0);
    }
    let mut m = DMatrix::zeros(d, n);
    for client in 0..n {
        let mut rng = stream(seed, client as u64, 0, Purpose::Init);
        let mut acc = DVector::zeros(d);
        for _ in 0..hp.init_batch {
            acc += oracle.stoch_grad(client, x0, hp.batch, &mut rng);
        }
        m.set_column(client, &(acc / hp.init_batch as f64));
    }
    Ok(AlgState {
        h: x.clone(),
        x,
        g: m.clone(),
        v: m.clone(),
        m,
        t: 0,
        bits_per_node: 0,
    })
}

/// Compress each column of `delta` with the per-(node, round, channel)
/// stream. Returns the compressed matrix and the per-node bit cost.
fn compress_columns(
    comp: &CompressorSpec,
    delta: &DMatrix<f64>,
    seed: u64,
    round: u64,
    purpose: Purpose,
) -> Result<(DMatrix<f64>, u64)> {
    let (d, n) = delta.shape();
    let mut out = DMatrix::zeros(d, n);
    let mut bits = 0u64;
    for client in 0..n {
        let mut rng = stream(seed, client as u64, round, purpose);
        let msg = compress(comp, &delta.column(client).into_owned(), &mut rng)?;
        bits = msg.bits;
        out.set_column(client, &msg.payload);
    }
    Ok((out, bits))
}

fn stoch_grads_at(
    oracle: &dyn Oracle,
    x: &DMatrix<f64>,
    batch: usize,
    seed: u64,
    round: u64,
) -> DMatrix<f64> {
    let (d, n) = x.shape();
    let mut g = DMatrix::zeros(d, n);
    for client in 0..n {
        let mut rng = stream(seed, client as u64, round, Purpose::Gradient);
        g.set_column(
            client,
            &oracle.stoch_grad(client, &x.column(client).into_owned(), batch, &mut rng),
        );
    }
    g
}

/// One MoTEF round, following the update order
/// `X+ = X + gamma H (W - I) - eta V`,
/// `H+ = H + C(X+ - H)`,
/// `M+ = (1 - lambda) M + lambda g~(X+)`,
/// `V+ = V + gamma G (W - I) + M+ - M`,
/// `G+ = G + C(V+ - G)`.
/// Each node transmits two compressed messages per round.
pub fn motef_step(
    state: &mut AlgState,
    oracle: &dyn Oracle,
    topo: &Topology,
    comp: &CompressorSpec,
    hp: &HyperParams,
    seed: u64,
) -> Result<()> {
    let wmi = topo.w_minus_i();
    let round = state.t;

    let x_next = &state.x + (&state.h * wmi) * hp.gamma - &state.v * hp.eta;
    let (qh, bits_h) = compress_columns(comp, &(&x_next - &state.h), seed, round, Purpose::CompressH)?;
    let h_next = &state.h + qh;

    let grads = stoch_grads_at(oracle, &x_next, hp.batch, seed, round + 1);
    let m_next = &state.m * (1.0 - hp.lambda) + grads * hp.lambda;

    let v_next = &state.v + (&state.g * wmi) * hp.gamma + &m_next - &state.m;
    let (qg, bits_g) = compress_columns(comp, &(&v_next - &state.g), seed, round, Purpose::CompressG)?;
    let g_next = &state.g + qg;

    state.x = x_next;
    state.h = h_next;
    state.m = m_next;
    state.v = v_next;
    state.g = g_next;
    state.t += 1;
    state.bits_per_node += bits_h + bits_g;
    Ok(())
}

/// One MoTEF-VR round: identical to [`motef_step`] except the momentum update
/// uses a variance-reduced correction with the same sample batch at both
/// points: `M+ = g~(X+, Xi) + (1 - lambda)(M - g~(X, Xi))`.
pub fn motef_vr_step(
    state: &mut AlgState,
    oracle: &dyn Oracle,
    topo: &Topology,
    comp: &CompressorSpec,
    hp: &HyperParams,
    seed: u64,
) -> Result<()> {
    let wmi = topo.w_minus_i();
    let round = state.t;

    let x_next = &state.x + (&state.h * wmi) * hp.gamma - &state.v * hp.eta;
    let (qh, bits_h) = compress_columns(comp, &(&x_next - &state.h), seed, round, Purpose::CompressH)?;
    let h_next = &state.h + qh;

    let (d, n) = state.x.shape();
    let mut m_next = DMatrix::zeros(d, n);
    for client in 0..n {
        let mut rng = stream(seed, client as u64, round + 1, Purpose::Gradient);
        let (g_new, g_old) = oracle.stoch_grad_pair(
            client,
            &x_next.column(client).into_owned(),
            &state.x.column(client).into_owned(),
            hp.batch,
            &mut rng,
        )?;
        let col = g_new + (state.m.column(client) - g_old) * (1.0 - hp.lambda);
        m_next.set_column(client, &col);
    }

    let v_next = &state.v + (&state.g * wmi) * hp.gamma + &m_next - &state.m;
    let (qg, bits_g) = compress_columns(comp, &(&v_next - &state.g), seed, round, Purpose::CompressG)?;
    let g_next = &state.g + qg;

    state.x = x_next;
    state.h = h_next;
    state.m = m_next;
    state.v = v_next;
    state.g = g_next;
    state.t += 1;
    state.bits_per_node += bits_h + bits_g;
    Ok(())
}

/// One BEER round: MoTEF with `lambda = 1` (the momentum matrix degenerates to
/// the fresh stochastic gradients).
pub fn beer_step(
    state: &mut AlgState,
    oracle: &dyn Oracle,
    topo: &Topology,
    comp: &CompressorSpec,
    hp: &HyperParams,
    seed: u64,
) -> Result<()> {
    let hp_beer = HyperParams { lambda: 1.0, ..*hp };
    motef_step(state, oracle, topo, comp, &hp_beer, seed)
}

/// One Choco-SGD round. `state.h` holds the shared compressed mirror `x_hat`:
/// `X half = X - eta g~(X)`,
/// `x_hat+ = x_hat + C(X half - x_hat)`,
/// `X+ = X half + gamma x_hat+ (W - I)`.
/// One compressed message per node per round.
pub fn choco_step(
    state: &mut AlgState,
    oracle: &dyn Oracle,
    topo: &Topology,
    comp: &CompressorSpec,
    hp: &HyperParams,
    seed: u64,
) -> Result<()> {
    let round = state.t;
    let grads = stoch_grads_at(oracle, &state.x, hp.batch, seed, round + 1);
    let x_half = &state.x - grads * hp.eta;
    let (q, bits) = compress_columns(comp, &(&x_half - &state.h), seed, round, Purpose::CompressH)?;
    let h_next = &state.h + q;
    state.x = &x_half + (&h_next * topo.w_minus_i()) * hp.gamma;
    state.h = h_next;
    state.t += 1;
    state.bits_per_node += bits;
    Ok(())
}

/// One DSGD round: uncompressed gossip then a local gradient step,
/// `X+ = X W - eta g~(X)`. Charged as one full-precision message per node.
pub fn dsgd_step(
    state: &mut AlgState,
    oracle: &dyn Oracle,
    topo: &Topology,
    hp: &HyperParams,
    seed: u64,
) -> Result<()> {
    let round = state.t;
    let grads = stoch_grads_at(oracle, &state.x, hp.batch, seed, round + 1);
    state.x = &state.x * topo.w() - grads * hp.eta;
    state.t += 1;
    state.bits_per_node += 32 * state.x.nrows() as u64;
    Ok(())
}

/// One D2 round. `state.v` holds the previous iterate and `state.m` the
/// previous gradients:
/// `X+ = (2X - X prev - eta (g~ - g~ prev)) W`, with documented first step
/// `X1 = (X0 - eta g~0) W`. Charged as one full-precision message per node.
pub fn d2_step(
    state: &mut AlgState,
    oracle: &dyn Oracle,
    topo: &Topology,
    hp: &HyperParams,
    seed: u64,
) -> Result<()> {
    let round = state.t;
    let grads = stoch_grads_at(oracle, &state.x, hp.batch, seed, round + 1);
    let x_next = if round == 0 {
        (&state.x - &grads * hp.eta) * topo.w()
    } else {
        (&state.x * 2.0 - &state.v - (&grads - &state.m) * hp.eta) * topo.w()
    };
    state.v = std::mem::replace(&mut state.x, x_next);
    state.m = grads;
    state.t += 1;
    state.bits_per_node += 32 * state.x.nrows() as u64;
    Ok(())
}

/// Advance `state` by one round of `alg`.
pub fn step(
    alg: Algorithm,
    state: &mut AlgState,
    oracle: &dyn Oracle,
    topo: &Topology,
    comp: &CompressorSpec,
    hp: &HyperParams,
    seed: u64,
) -> Result<()> {
    match alg {
        Algorithm::Motef => motef_step(state, oracle, topo, comp, hp, seed),
        Algorithm::MotefVr => motef_vr_step(state, oracle, topo, comp, hp, seed),
        Algorithm::Beer => beer_step(state, oracle, topo, comp, hp, seed),
        Algorithm::Choco => choco_step(state, oracle, topo, comp, hp, seed),
        Algorithm::Dsgd => dsgd_step(state, oracle, topo, hp, seed),
        Algorithm::D2 => d2_step(state, oracle, topo, hp, seed),
    }
}

/// One metrics row, evaluated at the mean iterate with exact gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub t: u64,
    pub bits_cum: u64,
    /// `||grad f(xbar)||^2`.
    pub grad_norm_sq: f64,
    /// Consensus error per node, `Omega_3 / n`.
    pub consensus: f64,
    /// `f(xbar)`.
    pub loss: f64,
    /// `f(xbar) - f*` when the optimum is known.
    pub subopt: Option<f64>,
    /// Held-out accuracy when a test set is configured.
    pub test_acc: Option<f64>,
}

pub(crate) fn evaluate(
    state: &AlgState,
    oracle: &dyn Oracle,
    test: Option<&dyn Fn(&DVector<f64>) -> f64>,
) -> MetricsRecord {
    let xbar = state.x_bar();
    let grad = oracle.global_grad(&xbar);
    let loss = oracle.loss(&xbar);
    MetricsRecord {
        t: state.t,
        bits_cum: state.bits_per_node,
        grad_norm_sq: grad.norm_squared(),
        consensus: state.omega3() / state.clients() as f64,
        loss,
        subopt: oracle.f_star().map(|fs| loss - fs),
        test_acc: test.map(|f| f(&xbar)),
    }
}

/// Run `hp.iters` rounds from the standard zero initialization, recording
/// metrics at `t = 0`, every `eval_every` rounds, and at the final round.
/// Deterministic in all arguments.
pub fn run(
    alg: Algorithm,
    oracle: &dyn Oracle,
    topo: &Topology,
    comp: &CompressorSpec,
    hp: &HyperParams,
    eval_every: u64,
    seed: u64,
) -> Result<Vec<MetricsRecord>> {
    run_with_test(alg, oracle, topo, comp, hp, eval_every, seed, None)
}

#[allow(clippy::too_many_arguments)]
pub fn run_with_test(
    alg: Algorithm,
    oracle: &dyn Oracle,
    topo: &Topology,
    comp: &CompressorSpec,
    hp: &HyperParams,
    eval_every: u64,
    seed: u64,
    test: Option<&dyn Fn(&DVector<f64>) -> f64>,
) -> Result<Vec<MetricsRecord>> {
    if eval_every == 0 {
        return Err(SimError::InvalidParam("eval_every must be >= 1".into()));
    }
    let x0 = DVector::zeros(oracle.dim());
    let mut state = init_state(oracle, topo, hp, &x0, seed)?;
    let mut records = vec![evaluate(&state, oracle, test)];
    for t in 1..=hp.iters {
        step(alg, &mut state, oracle, topo, comp, hp, seed)?;
        if t % eval_every == 0 || t == hp.iters {
            records.push(evaluate(&state, oracle, test));
        }
    }
    Ok(records)
}
