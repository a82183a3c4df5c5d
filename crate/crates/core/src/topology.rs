//! Communication graphs, mixing matrices and spectral gaps.
//!
//! A [`Topology`] couples an undirected connected graph with a symmetric
//! doubly stochastic mixing matrix `W` and its spectral gap
//! `rho = 1 - |lambda_2(W)|`. The default weighting is Metropolis-Hastings,
//! which is symmetric and doubly stochastic for any graph; a `lazy` variant
//! `W <- (W + I)/2` forces positive semidefiniteness.

use crate::error::{Result, SimError};
use crate::rng::{stream, Purpose, Stream};
use nalgebra::DMatrix;
use rand::Rng;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

/// Graph families supported by [`build_topology`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphKind {
    Complete,
    Ring,
    Star,
    Grid,
    ErdosRenyi,
    RandomRegular,
}

impl FromStr for GraphKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "complete" => Ok(GraphKind::Complete),
            "ring" => Ok(GraphKind::Ring),
            "star" => Ok(GraphKind::Star),
            "grid" => Ok(GraphKind::Grid),
            "erdos_renyi" | "er" => Ok(GraphKind::ErdosRenyi),
            "random_regular" => Ok(GraphKind::RandomRegular),
            other => Err(SimError::InvalidParam(format!(
                "unknown topology kind `{other}`"
            ))),
        }
    }
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GraphKind::Complete => "complete",
            GraphKind::Ring => "ring",
            GraphKind::Star => "star",
            GraphKind::Grid => "grid",
            GraphKind::ErdosRenyi => "erdos_renyi",
            GraphKind::RandomRegular => "random_regular",
        };
        f.write_str(s)
    }
}

/// Family-specific parameters. Unused fields are ignored by other families.
#[derive(Debug, Clone, Copy, Default)]
pub struct GraphParams {
    /// Edge probability for `erdos_renyi`; must lie in `(0, 1]`.
    pub p: Option<f64>,
    /// Degree for `random_regular`; `degree * n` must be even and `degree < n`.
    pub degree: Option<usize>,
    /// Grid rows; required together with `cols` when `n` is not a perfect square.
    pub rows: Option<usize>,
    /// Grid columns.
    pub cols: Option<usize>,
}

/// Rule used to turn the adjacency structure into mixing weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightScheme {
    /// `w_ij = 1 / (1 + max(deg_i, deg_j))`, `w_ii = 1 - sum_j w_ij`.
    #[default]
    Metropolis,
    /// Metropolis followed by `W <- (W + I) / 2`; keeps `W` positive semidefinite.
    Lazy,
}

impl FromStr for WeightScheme {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "metropolis" => Ok(WeightScheme::Metropolis),
            "lazy" => Ok(WeightScheme::Lazy),
            other => Err(SimError::InvalidParam(format!(
                "unknown weight scheme `{other}`"
            ))),
        }
    }
}

/// A communication graph with its mixing matrix.
///
/// Values are immutable after construction and safe to share across
/// concurrently running experiments.
#[derive(Debug, Clone)]
pub struct Topology {
    n: usize,
    kind: GraphKind,
    neighbors: Vec<Vec<usize>>,
    w: DMatrix<f64>,
    w_minus_i: DMatrix<f64>,
    rho: f64,
    scheme: WeightScheme,
}

impl Topology {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn scheme(&self) -> WeightScheme {
        self.scheme
    }

    /// The mixing matrix `W`.
    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// Cached `W - I`, the matrix applied in gossip increments.
    pub fn w_minus_i(&self) -> &DMatrix<f64> {
        &self.w_minus_i
    }

    /// Spectral gap `rho = 1 - |lambda_2(W)|`.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Neighbor lists of the underlying graph (no self loops).
    pub fn neighbors(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    pub fn is_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].contains(&j)
    }

    /// Write `W` as CSV, row-major, with 17 significant decimal digits so the
    /// matrix round-trips through text exactly.
    pub fn write_w_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n)
                .map(|j| format!("{:.16e}", self.w[(i, j)]))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

const CONNECT_RETRIES: usize = 100;

/// Build a topology. Random families (`erdos_renyi`, `random_regular`) are
/// resampled with a derived seed until connected, up to 100 attempts.
/// Deterministic in `(kind, n, params, seed)`.
pub fn build_topology(
    kind: GraphKind,
    n: usize,
    params: GraphParams,
    seed: u64,
) -> Result<Topology> {
    build_topology_weighted(kind, n, params, seed, WeightScheme::Metropolis)
}

pub fn build_topology_weighted(
    kind: GraphKind,
    n: usize,
    params: GraphParams,
    seed: u64,
    scheme: WeightScheme,
) -> Result<Topology> {
    if n == 0 {
        return Err(SimError::InvalidParam("client count must be >= 1".into()));
    }
    let neighbors = match kind {
        GraphKind::Complete => complete(n),
        GraphKind::Ring => ring(n),
        GraphKind::Star => star(n),
        GraphKind::Grid => grid(n, params)?,
        GraphKind::ErdosRenyi => {
            let p = params
                .p
                .ok_or_else(|| SimError::InvalidParam("erdos_renyi requires p".into()))?;
            if !(p > 0.0 && p <= 1.0) {
                return Err(SimError::InvalidParam(format!(
                    "erdos_renyi p must lie in (0, 1], got {p}"
                )));
            }
            sample_connected(n, seed, CONNECT_RETRIES, "erdos_renyi", |rng| {
                Ok(erdos_renyi(n, p, rng))
            })?
        }
        GraphKind::RandomRegular => {
            let r = params
                .degree
                .ok_or_else(|| SimError::InvalidParam("random_regular requires degree".into()))?;
            if r == 0 || r >= n || (r * n) % 2 != 0 {
                return Err(SimError::InvalidParam(format!(
                    "random_regular needs 0 < degree < n with degree*n even, got degree={r}, n={n}"
                )));
            }
            sample_connected(n, seed, CONNECT_RETRIES, "random_regular", |rng| {
                random_regular(n, r, rng)
            })?
        }
    };

    if !is_connected(&neighbors) {
        return Err(SimError::Disconnected {
            retries: 1,
            context: format!("{kind} with n={n} is not connected"),
        });
    }

    let mut w = metropolis(&neighbors);
    if scheme == WeightScheme::Lazy {
        for i in 0..n {
            for j in 0..n {
                w[(i, j)] *= 0.5;
            }
            w[(i, i)] += 0.5;
        }
    }
    let rho = spectral_gap(&w)?;
    let w_minus_i = &w - DMatrix::<f64>::identity(n, n);
    Ok(Topology {
        n,
        kind,
        neighbors,
        w,
        w_minus_i,
        rho,
        scheme,
    })
}

fn complete(n: usize) -> Vec<Vec<usize>> {
    (0..n)
        .map(|i| (0..n).filter(|&j| j != i).collect())
        .collect()
}

fn ring(n: usize) -> Vec<Vec<usize>> {
    match n {
        1 => vec![vec![]],
        2 => vec![vec![1], vec![0]],
        _ => (0..n).map(|i| vec![(i + n - 1) % n, (i + 1) % n]).collect(),
    }
}

fn star(n: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![]];
    }
    let mut nb = vec![Vec::new(); n];
    for i in 1..n {
        nb[0].push(i);
        nb[i].push(0);
    }
    nb
}

fn grid(n: usize, params: GraphParams) -> Result<Vec<Vec<usize>>> {
    let (rows, cols) = match (params.rows, params.cols) {
        (Some(r), Some(c)) => {
            if r * c != n {
                return Err(SimError::InvalidParam(format!(
                    "grid rows*cols = {} does not match n = {n}",
                    r * c
                )));
            }
            (r, c)
        }
        (None, None) => {
            let s = (n as f64).sqrt().round() as usize;
            if s * s != n {
                return Err(SimError::InvalidParam(format!(
                    "grid with n={n} needs explicit rows and cols (n is not a perfect square)"
                )));
            }
            (s, s)
        }
        _ => {
            return Err(SimError::InvalidParam(
                "grid needs both rows and cols (or neither)".into(),
            ))
        }
    };
    // 4-neighbor lattice without wraparound
    let mut nb = vec![Vec::new(); n];
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if c + 1 < cols {
                nb[i].push(i + 1);
                nb[i + 1].push(i);
            }
            if r + 1 < rows {
                nb[i].push(i + cols);
                nb[i + cols].push(i);
            }
        }
    }
    Ok(nb)
}

fn erdos_renyi(n: usize, p: f64, rng: &mut Stream) -> Vec<Vec<usize>> {
    let mut nb = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                nb[i].push(j);
                nb[j].push(i);
            }
        }
    }
    nb
}

/// Pairing-model sample of an r-regular simple graph. Returns an error when a
/// pairing attempt produces self loops or parallel edges; the caller retries
/// with a fresh stream.
fn random_regular(n: usize, r: usize, rng: &mut Stream) -> Result<Vec<Vec<usize>>> {
    let mut stubs: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat(i).take(r)).collect();
    // Fisher-Yates
    for i in (1..stubs.len()).rev() {
        let j = rng.random_range(0..=i);
        stubs.swap(i, j);
    }
    let mut nb = vec![Vec::new(); n];
    for pair in stubs.chunks(2) {
        let (a, b) = (pair[0], pair[1]);
        if a == b || nb[a].contains(&b) {
            return Err(SimError::InvalidParam("non-simple pairing".into()));
        }
        nb[a].push(b);
        nb[b].push(a);
    }
    Ok(nb)
}

fn sample_connected<F>(
    n: usize,
    seed: u64,
    retries: usize,
    context: &str,
    mut sample: F,
) -> Result<Vec<Vec<usize>>>
where
    F: FnMut(&mut Stream) -> Result<Vec<Vec<usize>>>,
{
    for attempt in 0..retries {
        let mut rng = stream(seed, 0, attempt as u64, Purpose::Data);
        if let Ok(nb) = sample(&mut rng) {
            if is_connected(&nb) {
                return Ok(nb);
            }
        }
    }
    Err(SimError::Disconnected {
        retries,
        context: format!("{context} with n={n}"),
    })
}

fn is_connected(neighbors: &[Vec<usize>]) -> bool {
    let n = neighbors.len();
    if n == 0 {
        return false;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in &neighbors[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == n
}

fn metropolis(neighbors: &[Vec<usize>]) -> DMatrix<f64> {
    let n = neighbors.len();
    let deg: Vec<usize> = neighbors.iter().map(Vec::len).collect();
    let mut w = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let mut off_diag = 0.0;
        for &j in &neighbors[i] {
            let wij = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
            w[(i, j)] = wij;
            off_diag += wij;
        }
        w[(i, i)] = 1.0 - off_diag;
    }
    w
}

const SYMMETRY_TOL: f64 = 1e-10;
/// Above this size the dense eigensolve gives way to deflated power iteration.
const EIGEN_DENSE_LIMIT: usize = 2048;

/// Spectral gap `rho = 1 - |lambda_2(W)|` of a symmetric doubly stochastic
/// matrix. Uses a full symmetric eigensolve for `n <= 2048` and power
/// iteration on the deflated matrix `W - (1/n) 1 1^T` above, to relative
/// tolerance `1e-10`. Returns `0` when `|lambda_2| = 1`.
pub fn spectral_gap(w: &DMatrix<f64>) -> Result<f64> {
    let n = check_square(w)?;
    let defect = symmetry_defect(w);
    if defect > SYMMETRY_TOL {
        return Err(SimError::InvalidParam(format!(
            "matrix is not symmetric (defect {defect:e})"
        )));
    }
    if n == 1 {
        return Ok(1.0);
    }
    let lambda2 = if n <= EIGEN_DENSE_LIMIT {
        second_eigenvalue_dense(w)
    } else {
        second_eigenvalue_power(w)
    };
    Ok((1.0 - lambda2.abs()).clamp(0.0, 1.0))
}

fn check_square(w: &DMatrix<f64>) -> Result<usize> {
    if w.nrows() != w.ncols() {
        return Err(SimError::DimensionMismatch {
            expected: w.nrows(),
            got: w.ncols(),
            context: "mixing matrix must be square".into(),
        });
    }
    Ok(w.nrows())
}

fn symmetry_defect(w: &DMatrix<f64>) -> f64 {
    let n = w.nrows().min(w.ncols());
    let mut defect: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            defect = defect.max((w[(i, j)] - w[(j, i)]).abs());
        }
    }
    defect
}

fn second_eigenvalue_dense(w: &DMatrix<f64>) -> f64 {
    let mut eigs: Vec<f64> = w
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eigs.sort_by(|a, b| b.abs().partial_cmp(&a.abs()).unwrap());
    eigs[1]
}

fn second_eigenvalue_power(w: &DMatrix<f64>) -> f64 {
    let n = w.nrows();
    let mut rng = stream(0x5eed, 0, 0, Purpose::Scratch);
    let mut v = nalgebra::DVector::<f64>::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
    deflate(&mut v);
    v /= v.norm();
    let mut estimate = 0.0f64;
    for _ in 0..100_000 {
        let mut u = w * &v;
        deflate(&mut u);
        let norm = u.norm();
        if norm == 0.0 {
            return 0.0;
        }
        u /= norm;
        let next = (w * &u).dot(&u);
        let done = (next - estimate).abs() <= 1e-13 * next.abs().max(1.0);
        estimate = next;
        v = u;
        if done {
            break;
        }
    }
    estimate
}

fn deflate(v: &mut nalgebra::DVector<f64>) {
    let mean = v.mean();
    v.add_scalar_mut(-mean);
}

/// Validation report for a candidate mixing matrix. Report-only: building it
/// never fails.
#[derive(Debug, Clone)]
pub struct MixingReport {
    pub symmetry_defect: f64,
    pub max_row_sum_dev: f64,
    pub max_col_sum_dev: f64,
    /// `None` when the matrix is too asymmetric for the eigensolve to be
    /// meaningful.
    pub rho: Option<f64>,
    pub smax_sq_w_minus_i: Option<f64>,
    pub pass: bool,
}

impl fmt::Display for MixingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "symmetry_defect={:e} row_sum_dev={:e} col_sum_dev={:e} rho={} smax2(W-I)={} pass={}",
            self.symmetry_defect,
            self.max_row_sum_dev,
            self.max_col_sum_dev,
            self.rho.map_or("n/a".into(), |r| format!("{r}")),
            self.smax_sq_w_minus_i.map_or("n/a".into(), |s| format!("{s}")),
            self.pass
        )
    }
}

const VALIDATE_TOL: f64 = 1e-10;

/// Check symmetry, double stochasticity and a positive spectral gap.
/// Passes iff all defects are below `1e-10` and `rho > 0`.
pub fn validate_mixing(w: &DMatrix<f64>) -> MixingReport {
    let n = w.nrows().min(w.ncols());
    let square = w.nrows() == w.ncols();
    let symmetry = symmetry_defect(w);
    let mut row_dev: f64 = 0.0;
    let mut col_dev: f64 = 0.0;
    for i in 0..w.nrows() {
        row_dev = row_dev.max((w.row(i).sum() - 1.0).abs());
    }
    for j in 0..w.ncols() {
        col_dev = col_dev.max((w.column(j).sum() - 1.0).abs());
    }
    let spectral = if square && symmetry <= SYMMETRY_TOL {
        let rho = spectral_gap(w).ok();
        let eigs = w.clone().symmetric_eigen().eigenvalues;
        let smax = eigs.iter().map(|l| (l - 1.0).abs()).fold(0.0f64, f64::max);
        rho.map(|r| (r, smax * smax))
    } else {
        None
    };
    let (rho, smax_sq) = match spectral {
        Some((r, s)) => (Some(r), Some(s)),
        None => (None, None),
    };
    let pass = square
        && symmetry < VALIDATE_TOL
        && row_dev < VALIDATE_TOL
        && col_dev < VALIDATE_TOL
        && rho.is_some_and(|r| r > 0.0);
    let _ = n;
    MixingReport {
        symmetry_defect: symmetry,
        max_row_sum_dev: row_dev,
        max_col_sum_dev: col_dev,
        rho,
        smax_sq_w_minus_i: smax_sq,
        pass,
    }
}
