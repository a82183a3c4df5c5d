//! Experiment runner: flat `key = value` configs, deterministic seeding,
//! metric CSVs and one-axis parameter sweeps.

use crate::algorithms::{run_with_test, Algorithm, HyperParams, MetricsRecord};
use crate::compressors::CompressorKind;
use crate::error::{Result, SimError};
use crate::problems::{
    logreg_oracles, parse_libsvm, shard, synth_new, test_accuracy, LibSvmDataset, Oracle,
};
use crate::topology::{build_topology_weighted, GraphKind, GraphParams, WeightScheme};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Environment variable that overrides the directory part of every output
/// path.
pub const OUTPUT_DIR_ENV: &str = "MOTEF_OUTPUT_DIR";

/// Which objective an experiment optimizes.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Synthetic { d: usize, zeta: f64, sigma: f64 },
    LogReg { path: PathBuf, reg_lambda: f64, test_path: Option<PathBuf> },
}

/// Fully parsed experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub problem: ProblemSpec,
    pub topology: GraphKind,
    pub n: usize,
    pub graph_params: GraphParams,
    pub weight_scheme: WeightScheme,
    pub compressor: CompressorKind,
    pub gamma: f64,
    pub eta: f64,
    pub lambda_momentum: f64,
    pub batch: usize,
    pub init_batch: usize,
    pub iters: u64,
    pub eval_every: u64,
    pub seed: u64,
    pub output: PathBuf,
}

/// Parse a config file: one `key = value` pair per line, `#` starts a
/// comment, unknown keys are errors. See the README for the key table.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut b = ConfigBuilder::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| SimError::Config {
            line: line_no,
            msg: format!("expected `key = value`, got `{line}`"),
        })?;
        b.set(key.trim(), value.trim(), line_no)?;
    }
    b.build()
}

#[derive(Default)]
struct ConfigBuilder {
    algorithm: Option<String>,
    problem: Option<String>,
    d: Option<usize>,
    zeta: Option<f64>,
    sigma: Option<f64>,
    data_path: Option<PathBuf>,
    test_path: Option<PathBuf>,
    reg_lambda: Option<f64>,
    topology: Option<String>,
    n: Option<usize>,
    er_p: Option<f64>,
    degree: Option<usize>,
    rows: Option<usize>,
    cols: Option<usize>,
    weight_scheme: Option<String>,
    compressor: Option<String>,
    gamma: Option<f64>,
    eta: Option<f64>,
    lambda_momentum: Option<f64>,
    batch: Option<usize>,
    init_batch: Option<usize>,
    iters: Option<u64>,
    eval_every: Option<u64>,
    seed: Option<u64>,
    output: Option<PathBuf>,
}

fn parse_num<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| SimError::Config {
        line,
        msg: format!("cannot parse `{value}` as a value for `{key}`"),
    })
}

impl ConfigBuilder {
    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        match key {
            "algorithm" => self.algorithm = Some(value.to_string()),
            "problem" => self.problem = Some(value.to_string()),
            "d" => self.d = Some(parse_num(key, value, line)?),
            "zeta" => self.zeta = Some(parse_num(key, value, line)?),
            "sigma" => self.sigma = Some(parse_num(key, value, line)?),
            "data_path" => self.data_path = Some(PathBuf::from(value)),
            "test_path" => self.test_path = Some(PathBuf::from(value)),
            "reg_lambda" => self.reg_lambda = Some(parse_num(key, value, line)?),
            "topology" => self.topology = Some(value.to_string()),
            "n" => self.n = Some(parse_num(key, value, line)?),
            "er_p" => self.er_p = Some(parse_num(key, value, line)?),
            "degree" => self.degree = Some(parse_num(key, value, line)?),
            "rows" => self.rows = Some(parse_num(key, value, line)?),
            "cols" => self.cols = Some(parse_num(key, value, line)?),
            "weight_scheme" => self.weight_scheme = Some(value.to_string()),
            "compressor" => self.compressor = Some(value.to_string()),
            "gamma" => self.gamma = Some(parse_num(key, value, line)?),
            "eta" => self.eta = Some(parse_num(key, value, line)?),
            "lambda_momentum" => self.lambda_momentum = Some(parse_num(key, value, line)?),
            "batch" => self.batch = Some(parse_num(key, value, line)?),
            "init_batch" => self.init_batch = Some(parse_num(key, value, line)?),
            "iters" => self.iters = Some(parse_num(key, value, line)?),
            "eval_every" => self.eval_every = Some(parse_num(key, value, line)?),
            "seed" => self.seed = Some(parse_num(key, value, line)?),
            "output" => self.output = Some(PathBuf::from(value)),
            other => {
                return Err(SimError::Config {
                    line,
                    msg: format!("unknown key `{other}`"),
                })
            }
        }
        Ok(())
    }

    fn build(self) -> Result<ExperimentConfig> {
        let algorithm: Algorithm = self
            .algorithm
            .ok_or_else(|| SimError::MissingKey("algorithm".into()))?
            .parse()?;
        let problem = match self
            .problem
            .ok_or_else(|| SimError::MissingKey("problem".into()))?
            .as_str()
        {
            "synthetic" => ProblemSpec::Synthetic {
                d: self.d.ok_or_else(|| SimError::MissingKey("d".into()))?,
                zeta: self.zeta.ok_or_else(|| SimError::MissingKey("zeta".into()))?,
                sigma: self
                    .sigma
                    .ok_or_else(|| SimError::MissingKey("sigma".into()))?,
            },
            "logreg" => ProblemSpec::LogReg {
                path: self
                    .data_path
                    .ok_or_else(|| SimError::MissingKey("data_path".into()))?,
                reg_lambda: self.reg_lambda.unwrap_or(0.05),
                test_path: self.test_path,
            },
            other => {
                return Err(SimError::InvalidParam(format!(
                    "unknown problem kind `{other}`"
                )))
            }
        };
        let topology: GraphKind = self
            .topology
            .ok_or_else(|| SimError::MissingKey("topology".into()))?
            .parse()?;
        let weight_scheme: WeightScheme = match self.weight_scheme {
            Some(s) => s.parse()?,
            None => WeightScheme::Metropolis,
        };
        let compressor: CompressorKind = self
            .compressor
            .ok_or_else(|| SimError::MissingKey("compressor".into()))?
            .parse()?;
        let gamma = self.gamma.ok_or_else(|| SimError::MissingKey("gamma".into()))?;
        let eta = self.eta.ok_or_else(|| SimError::MissingKey("eta".into()))?;
        let needs_momentum = matches!(algorithm, Algorithm::Motef | Algorithm::MotefVr);
        let lambda_momentum = match self.lambda_momentum {
            Some(l) => l,
            None if needs_momentum => {
                return Err(SimError::MissingKey("lambda_momentum".into()))
            }
            None => 1.0,
        };
        let config = ExperimentConfig {
            algorithm,
            problem,
            topology,
            n: self.n.ok_or_else(|| SimError::MissingKey("n".into()))?,
            graph_params: GraphParams {
                p: self.er_p,
                degree: self.degree,
                rows: self.rows,
                cols: self.cols,
            },
            weight_scheme,
            compressor,
            gamma,
            eta,
            lambda_momentum,
            batch: self.batch.unwrap_or(1),
            init_batch: self.init_batch.unwrap_or(1),
            iters: self.iters.ok_or_else(|| SimError::MissingKey("iters".into()))?,
            eval_every: self.eval_every.unwrap_or(1),
            seed: self.seed.ok_or_else(|| SimError::MissingKey("seed".into()))?,
            output: self
                .output
                .ok_or_else(|| SimError::MissingKey("output".into()))?,
        };
        config.validate()?;
        Ok(config)
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyper_params().validate()?;
        if self.n == 0 {
            return Err(SimError::InvalidParam("n must be >= 1".into()));
        }
        if self.eval_every == 0 {
            return Err(SimError::InvalidParam("eval_every must be >= 1".into()));
        }
        if let ProblemSpec::Synthetic { d, zeta, sigma } = &self.problem {
            if *d == 0 {
                return Err(SimError::InvalidParam("d must be >= 1".into()));
            }
            if *zeta < 0.0 || *sigma < 0.0 {
                return Err(SimError::InvalidParam(
                    "zeta and sigma must be >= 0".into(),
                ));
            }
        }
        if let ProblemSpec::LogReg { path, reg_lambda, test_path } = &self.problem {
            if !path.exists() {
                return Err(SimError::InvalidParam(format!(
                    "data_path `{}` does not exist",
                    path.display()
                )));
            }
            if let Some(tp) = test_path {
                if !tp.exists() {
                    return Err(SimError::InvalidParam(format!(
                        "test_path `{}` does not exist",
                        tp.display()
                    )));
                }
            }
            if *reg_lambda < 0.0 {
                return Err(SimError::InvalidParam("reg_lambda must be >= 0".into()));
            }
        }
        Ok(())
    }

    pub fn hyper_params(&self) -> HyperParams {
        HyperParams {
            gamma: self.gamma,
            eta: self.eta,
            lambda: self.lambda_momentum,
            batch: self.batch,
            init_batch: self.init_batch,
            iters: self.iters,
        }
    }

    /// Output path with the directory override from `MOTEF_OUTPUT_DIR`
    /// applied.
    pub fn resolved_output(&self) -> PathBuf {
        self.resolved_output_with(std::env::var_os(OUTPUT_DIR_ENV))
    }

    fn resolved_output_with(&self, dir_override: Option<std::ffi::OsString>) -> PathBuf {
        match dir_override {
            Some(dir) if !dir.is_empty() => {
                let mut p = PathBuf::from(dir);
                p.push(self.output.file_name().unwrap_or(self.output.as_os_str()));
                p
            }
            _ => self.output.clone(),
        }
    }
}

fn load_dataset(path: &Path) -> Result<LibSvmDataset> {
    let file = fs::File::open(path)?;
    parse_libsvm(BufReader::new(file))
}

fn build_oracle(config: &ExperimentConfig) -> Result<(Box<dyn Oracle>, Option<Vec<crate::problems::SparseRow>>)> {
    match &config.problem {
        ProblemSpec::Synthetic { d, zeta, sigma } => Ok((
            Box::new(synth_new(config.n, *d, *zeta, *sigma, config.seed)?),
            None,
        )),
        ProblemSpec::LogReg { path, reg_lambda, test_path } => {
            let train = load_dataset(path)?;
            let mut dim = train.d;
            let test_rows = match test_path {
                Some(tp) => {
                    let ds = load_dataset(tp)?;
                    dim = dim.max(ds.d);
                    Some(ds.rows)
                }
                None => None,
            };
            let shards = shard(&train, config.n, false, config.seed)?;
            Ok((
                Box::new(logreg_oracles(shards, dim, *reg_lambda, config.batch)?),
                test_rows,
            ))
        }
    }
}

/// Format a float with the shortest decimal that round-trips.
fn fmt_float(x: f64) -> String {
    let mut s = String::new();
    write!(s, "{x}").unwrap();
    s
}

pub const CSV_HEADER: &str = "t,bits_cum,grad_norm_sq,consensus,loss,subopt,test_acc";

/// Render metric records as CSV with empty cells for unavailable columns.
pub fn records_to_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 64 + CSV_HEADER.len() + 1);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            r.t,
            r.bits_cum,
            fmt_float(r.grad_norm_sq),
            fmt_float(r.consensus),
            fmt_float(r.loss)
        );
        out.push(',');
        if let Some(s) = r.subopt {
            out.push_str(&fmt_float(s));
        }
        out.push(',');
        if let Some(a) = r.test_acc {
            out.push_str(&fmt_float(a));
        }
        out.push('\n');
    }
    out
}

/// Result of a single experiment run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub records: Vec<MetricsRecord>,
    pub output: PathBuf,
    /// Mean `grad_norm_sq` over the final 10% of records.
    pub steady_state_error: f64,
}

/// Mean of `grad_norm_sq` over the final 10% (at least one) of records.
pub fn steady_state_error(records: &[MetricsRecord]) -> f64 {
    let k = (records.len() as f64 * 0.1).ceil().max(1.0) as usize;
    let tail = &records[records.len() - k.min(records.len())..];
    tail.iter().map(|r| r.grad_norm_sq).sum::<f64>() / tail.len() as f64
}

/// Execute the configured experiment and write its CSV. Byte-deterministic in
/// `(config, seed)`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    let records = run_records(config)?;
    let csv = records_to_csv(&records);
    let output = config.resolved_output();
    if let Some(parent) = output.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(&output, csv)?;
    Ok(RunSummary {
        steady_state_error: steady_state_error(&records),
        records,
        output,
    })
}

/// Run without touching the filesystem output (still reads datasets).
pub fn run_records(config: &ExperimentConfig) -> Result<Vec<MetricsRecord>> {
    config.validate()?;
    let (oracle, test_rows) = build_oracle(config)?;
    let topo = build_topology_weighted(
        config.topology,
        config.n,
        config.graph_params,
        config.seed,
        config.weight_scheme,
    )?;
    let comp = config.compressor.with_dim(oracle.dim())?;
    let hp = config.hyper_params();
    let test_fn = test_rows.map(|rows| {
        move |x: &nalgebra::DVector<f64>| test_accuracy(&rows, x)
    });
    match &test_fn {
        Some(f) => run_with_test(
            config.algorithm,
            oracle.as_ref(),
            &topo,
            &comp,
            &hp,
            config.eval_every,
            config.seed,
            Some(f),
        ),
        None => run_with_test(
            config.algorithm,
            oracle.as_ref(),
            &topo,
            &comp,
            &hp,
            config.eval_every,
            config.seed,
            None,
        ),
    }
}

/// Keys accepted by [`sweep`].
pub const SWEEP_AXES: [&str; 5] = ["n", "lambda_momentum", "zeta", "topology", "compressor"];

/// One row of a sweep summary.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: String,
    pub output: Option<PathBuf>,
    pub steady_state_error: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub axis: String,
    pub rows: Vec<SweepRow>,
    pub summary_path: PathBuf,
}

fn apply_axis(config: &ExperimentConfig, axis: &str, value: &str) -> Result<ExperimentConfig> {
    let mut c = config.clone();
    match axis {
        "n" => c.n = parse_num(axis, value, 0)?,
        "lambda_momentum" => c.lambda_momentum = parse_num(axis, value, 0)?,
        "zeta" => match &mut c.problem {
            ProblemSpec::Synthetic { zeta, .. } => *zeta = parse_num(axis, value, 0)?,
            _ => {
                return Err(SimError::InvalidParam(
                    "zeta sweeps need a synthetic problem".into(),
                ))
            }
        },
        "topology" => c.topology = value.parse()?,
        "compressor" => c.compressor = value.parse()?,
        other => {
            return Err(SimError::InvalidParam(format!(
                "`{other}` is not a sweepable key (use one of {SWEEP_AXES:?})"
            )))
        }
    }
    Ok(c)
}

fn sweep_output(base: &Path, axis: &str, value: &str) -> PathBuf {
    let stem = base
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    let ext = base
        .extension()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    base.with_file_name(format!("{stem}.{axis}={value}.{ext}"))
}

/// Run one experiment per value of `axis`, with per-run derived seeds
/// `seed ^ index`. Failures are recorded in the summary and do not abort the
/// remaining runs. The summary CSV is written next to the base output.
pub fn sweep(
    config: &ExperimentConfig,
    axis: &str,
    values: &[String],
    parallel: bool,
) -> Result<SweepSummary> {
    if values.is_empty() {
        return Err(SimError::InvalidParam("sweep over an empty list".into()));
    }
    if !SWEEP_AXES.contains(&axis) {
        return Err(SimError::InvalidParam(format!(
            "`{axis}` is not a sweepable key (use one of {SWEEP_AXES:?})"
        )));
    }
    let jobs: Vec<(usize, String)> = values
        .iter()
        .enumerate()
        .map(|(i, v)| (i, v.clone()))
        .collect();
    let run_one = |(index, value): &(usize, String)| -> SweepRow {
        let prepared = apply_axis(config, axis, value).map(|mut c| {
            c.seed ^= *index as u64;
            c.output = sweep_output(&config.output, axis, value);
            c
        });
        match prepared.and_then(|c| run_experiment(&c)) {
            Ok(summary) => SweepRow {
                value: value.clone(),
                output: Some(summary.output),
                steady_state_error: Some(summary.steady_state_error),
                error: None,
            },
            Err(e) => SweepRow {
                value: value.clone(),
                output: None,
                steady_state_error: None,
                error: Some(e.to_string()),
            },
        }
    };
    let rows: Vec<SweepRow> = if parallel {
        jobs.par_iter().map(run_one).collect()
    } else {
        jobs.iter().map(run_one).collect()
    };

    let mut csv = String::from("axis,value,steady_state_error,status\n");
    for row in &rows {
        let _ = writeln!(
            csv,
            "{axis},{},{},{}",
            row.value,
            row.steady_state_error.map(fmt_float).unwrap_or_default(),
            row.error.as_deref().unwrap_or("ok")
        );
    }
    let summary_path = sweep_output(&config.resolved_output(), axis, "summary");
    if let Some(parent) = summary_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(&summary_path, csv)?;
    Ok(SweepSummary {
        axis: axis.to_string(),
        rows,
        summary_path,
    })
}
