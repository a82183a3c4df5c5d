use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use motef_core::diagnostics::{
    verify_descent_constants, verify_perturbed_constants, Family, VerifyGrid,
};
use motef_core::harness::{load_config, run_experiment, sweep};
use motef_core::topology::{
    build_topology_weighted, validate_mixing, GraphKind, GraphParams, WeightScheme,
};
use std::fmt::Write as _;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "motef",
    about = "Deterministic simulator for decentralized optimization with compressed communication",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a config file and write its metrics CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run one experiment per value of a sweepable key.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// One of: n, lambda_momentum, zeta, topology, compressor.
        #[arg(long)]
        axis: String,
        /// Comma-separated values, e.g. `4,16,64`.
        #[arg(long)]
        values: String,
        /// Run sweep members concurrently.
        #[arg(long)]
        parallel: bool,
    },
    /// Check a descent-constant inequality system over a parameter grid.
    VerifyConstants {
        /// One of: nonconvex, pl, vr.
        #[arg(long)]
        family: String,
        /// Log-spaced points per axis.
        #[arg(long, default_value_t = 5)]
        points: usize,
        /// Also run the eta-inflated perturbation that must fail.
        #[arg(long)]
        with_perturbation: bool,
        /// Write all grid margins to this CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Build a topology and print its mixing-matrix report.
    TopologyReport {
        /// One of: complete, ring, star, grid, erdos_renyi, random_regular.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Edge probability for erdos_renyi.
        #[arg(long)]
        p: Option<f64>,
        /// Degree for random_regular.
        #[arg(long)]
        degree: Option<usize>,
        /// Grid rows (with --cols) when n is not a perfect square.
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long)]
        cols: Option<usize>,
        /// Weighting rule: metropolis (default) or lazy.
        #[arg(long, default_value = "metropolis")]
        scheme: String,
        /// Export W as CSV (row-major, 17 significant digits).
        #[arg(long)]
        export_w: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config } => {
            let cfg = load_config(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let summary = run_experiment(&cfg)?;
            println!(
                "wrote {} ({} records, steady-state error {:e})",
                summary.output.display(),
                summary.records.len(),
                summary.steady_state_error
            );
        }
        Command::Sweep {
            config,
            axis,
            values,
            parallel,
        } => {
            let cfg = load_config(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let values: Vec<String> = values
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            let summary = sweep(&cfg, &axis, &values, parallel)?;
            for row in &summary.rows {
                match (&row.steady_state_error, &row.error) {
                    (Some(e), _) => println!("{axis}={}\tsteady_state_error={e:e}", row.value),
                    (None, Some(msg)) => println!("{axis}={}\tFAILED: {msg}", row.value),
                    _ => unreachable!(),
                }
            }
            println!("summary written to {}", summary.summary_path.display());
        }
        Command::VerifyConstants {
            family,
            points,
            with_perturbation,
            csv,
        } => {
            let family: Family = family.parse()?;
            let grid = VerifyGrid::default_for(family, points);
            let report = verify_descent_constants(family, &grid)?;
            println!("{report}");
            if let Some(path) = csv {
                let mut out = String::from("alpha,rho,n,tau,mu_over_l,min_slack\n");
                for (pt, margin) in &report.margins {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{}",
                        pt.alpha,
                        pt.rho,
                        pt.n,
                        pt.tau,
                        pt.mu_over_l.map(|m| m.to_string()).unwrap_or_default(),
                        margin
                    );
                }
                std::fs::write(&path, out)?;
                println!("margins written to {}", path.display());
            }
            if with_perturbation {
                let perturbed = verify_perturbed_constants(family, &grid)?;
                println!("perturbation (c_eta x 1e5): {perturbed}");
                if perturbed.pass {
                    bail!("perturbed system unexpectedly feasible");
                }
            }
            if !report.pass {
                bail!("constant system infeasible");
            }
        }
        Command::TopologyReport {
            kind,
            n,
            seed,
            p,
            degree,
            rows,
            cols,
            scheme,
            export_w,
        } => {
            let kind: GraphKind = kind.parse()?;
            let scheme: WeightScheme = scheme.parse()?;
            let params = GraphParams {
                p,
                degree,
                rows,
                cols,
            };
            let topo = build_topology_weighted(kind, n, params, seed, scheme)?;
            let report = validate_mixing(topo.w());
            println!("kind={kind} n={n} rho={:e}", topo.rho());
            println!("{report}");
            if let Some(path) = export_w {
                let mut file = std::fs::File::create(&path)?;
                topo.write_w_csv(&mut file)?;
                println!("W written to {}", path.display());
            }
        }
    }
    Ok(())
}
