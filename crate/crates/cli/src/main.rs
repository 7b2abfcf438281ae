//! `flowdrop` — flow-level simulation and stability analysis of networks
//! without congestion control.
//!
//! Data goes to files or standard output, diagnostics to the error stream.
//! Exit codes: 0 on success, 1 on a domain error (the error name is printed
//! to stderr), 2 on a usage error.

mod recipes;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use flowdrop_core::ctmc::{simulate, SimParams};
use flowdrop_core::fluid::{
    integrate_bound, integrate_general, integrate_lln, integrate_quasi_stationary,
    BoundDirection, FluidPath,
};
use flowdrop_core::quasistat::{
    envelope, phibar_exact_l2, phibar_limit, tabulate_mc_on, EnvelopeMode, EstimatorOptions,
    PhiBarTable,
};
use flowdrop_core::stability::{classify_linear, tree_asymptotic_report};
use flowdrop_core::sweep::{emit_csv, run_sweep, SweepGrid};
use flowdrop_core::topology::{analyze_tree, LinearNetwork, Topology, TopologySpec};
use flowdrop_core::Error;

#[derive(Parser)]
#[command(name = "flowdrop", version, about = "Flow-level network simulator and analyzer")]
struct Cli {
    /// Worker threads for parallel grids and sweeps (default: available
    /// parallelism). Results do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PhiBarMethodArg {
    Mc,
    Exact,
    Limit,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FluidMode {
    General,
    Qs,
    #[value(name = "boundF")]
    BoundF,
    #[value(name = "boundG")]
    BoundG,
    Lln,
}

#[derive(Subcommand)]
enum Command {
    /// Print the tail-drop allocation table for one input-rate vector.
    Alloc {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated input rates, one per class.
        #[arg(long)]
        rates: String,
    },
    /// Simulate the flow-count Markov process and write the sampled path.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated initial counts, one per class.
        #[arg(long)]
        n0: String,
        #[arg(long, default_value_t = 1e4)]
        horizon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        stride: u64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate the quasi-stationary class-0 throughput over an alpha grid.
    Phibar {
        #[arg(long)]
        config: PathBuf,
        /// Grid as start:stop:step, e.g. 0:1:0.02.
        #[arg(long, default_value = "0:1:0.02")]
        alpha_grid: String,
        #[arg(long, value_enum, default_value_t = PhiBarMethodArg::Mc)]
        method: PhiBarMethodArg,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 1e4)]
        horizon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Truncation depth for the exact solver.
        #[arg(long, default_value_t = 10_000)]
        n_max: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Integrate a fluid system and write the discretized path.
    Fluid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: FluidMode,
        /// Comma-separated initial fluid state.
        #[arg(long)]
        z0: String,
        #[arg(long = "T", default_value_t = 100.0)]
        t_end: f64,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        /// phibar CSV (required for qs and bound modes).
        #[arg(long)]
        phibar: Option<PathBuf>,
        /// Fixed-point tolerance for the lln mode report.
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stability verdict for a linear network from a phibar table.
    Classify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        phibar: PathBuf,
    },
    /// Asymptotic-stability analysis of an upstream tree.
    Tree {
        #[arg(long)]
        config: PathBuf,
    },
    /// Replicated stability-region sweep driven by a grid config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Regenerate a bundled experiment with pinned seeds.
    Reproduce {
        /// One of: fig4, fig5, beta-convergence, tree-demo.
        recipe: String,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
        {
            eprintln!("usage error: cannot configure {workers} workers: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(RunError::Domain(e)) => {
            eprintln!("error: {}: {e}", e.name());
            ExitCode::from(1)
        }
        Err(RunError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
    }
}

enum RunError {
    Domain(Error),
    Usage(String),
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Domain(e)
    }
}

fn load_topology(path: &PathBuf) -> Result<Topology, RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::Domain(e.into()))?;
    let spec = TopologySpec::from_json(&text)?;
    Ok(Topology::validate(&spec)?)
}

fn parse_f64_list(s: &str, what: &str) -> Result<Vec<f64>, RunError> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| RunError::Usage(format!("bad {what} entry: {tok}")))
        })
        .collect()
}

fn parse_u64_list(s: &str, what: &str) -> Result<Vec<u64>, RunError> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<u64>()
                .map_err(|_| RunError::Usage(format!("bad {what} entry: {tok}")))
        })
        .collect()
}

fn parse_grid(s: &str) -> Result<Vec<f64>, RunError> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(RunError::Usage(format!(
            "grid must be start:stop:step, got {s}"
        )));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| RunError::Usage(format!("bad grid number {p}")))
        })
        .collect::<Result<_, _>>()?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if step <= 0.0 || step.is_nan() || stop < start {
        return Err(RunError::Usage(format!("degenerate grid {s}")));
    }
    let mut grid = Vec::new();
    let mut i = 0usize;
    loop {
        let v = start + step * i as f64;
        if v > stop + step * 1e-9 {
            break;
        }
        grid.push(v.min(stop));
        i += 1;
    }
    Ok(grid)
}

fn write_fluid_csv(path: &PathBuf, fluid: &FluidPath) -> Result<(), RunError> {
    let dim = fluid.states.first().map(Vec::len).unwrap_or(0);
    let mut out = String::from("t");
    for k in 0..dim {
        out.push_str(&format!(",z_{k}"));
    }
    out.push_str(",alpha\n");
    for ((t, z), a) in fluid.times.iter().zip(&fluid.states).zip(&fluid.alphas) {
        out.push_str(&t.to_string());
        for v in z {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push_str(&format!(",{a}\n"));
    }
    std::fs::write(path, out).map_err(|e| RunError::Domain(e.into()))
}

fn run(command: Command) -> Result<(), RunError> {
    match command {
        Command::Alloc { config, rates } => {
            let top = load_topology(&config)?;
            let x = parse_f64_list(&rates, "rate")?;
            let table = flowdrop_core::allocation::allocate(&top, &x)?;
            let mut out = String::from("class,hop,theta\n");
            for (k, class) in top.classes().iter().enumerate() {
                for (i, theta) in table.theta[k].iter().enumerate() {
                    out.push_str(&format!("{},{},{}\n", class.id, i, theta));
                }
            }
            let psi: Vec<String> = table.psi.iter().map(f64::to_string).collect();
            out.push_str(&format!("psi,{}\n", psi.join(",")));
            print!("{out}");
            Ok(())
        }
        Command::Simulate {
            config,
            n0,
            horizon,
            seed,
            stride,
            beta,
            out,
        } => {
            let top = load_topology(&config)?;
            let n0 = parse_u64_list(&n0, "count")?;
            let params = SimParams {
                horizon,
                seed,
                stride,
                beta,
            };
            let traj = simulate(&top, &n0, &params)?;
            let mut text = String::from("t");
            for k in 0..top.n_classes() {
                text.push_str(&format!(",n_{k}"));
            }
            text.push('\n');
            for (t, state) in traj.times.iter().zip(&traj.states) {
                text.push_str(&t.to_string());
                for v in state {
                    text.push(',');
                    text.push_str(&v.to_string());
                }
                text.push('\n');
            }
            std::fs::write(&out, text).map_err(|e| RunError::Domain(e.into()))?;
            Ok(())
        }
        Command::Phibar {
            config,
            alpha_grid,
            method,
            beta,
            horizon,
            seed,
            n_max,
            out,
        } => {
            let top = load_topology(&config)?;
            let linear = LinearNetwork::from_topology(top)?;
            let alphas = parse_grid(&alpha_grid)?;
            let table = match method {
                PhiBarMethodArg::Limit => {
                    let rho = linear.local_rho();
                    let mut values = Vec::with_capacity(alphas.len());
                    for &a in &alphas {
                        values.push(phibar_limit(a, &rho)?);
                    }
                    PhiBarTable {
                        errors: vec![0.0; alphas.len()],
                        alphas,
                        values,
                        method: "limit".into(),
                        beta: f64::INFINITY,
                    }
                }
                PhiBarMethodArg::Exact => {
                    if linear.n_links() != 2 {
                        return Err(RunError::Domain(Error::NotLinear(
                            "exact method needs a 2-link linear network".into(),
                        )));
                    }
                    let rho2 = linear.class(2).rho();
                    let a2 = linear.class(2).access_rate;
                    let mut values = Vec::with_capacity(alphas.len());
                    let mut errors = Vec::with_capacity(alphas.len());
                    for &a in &alphas {
                        let est = phibar_exact_l2(rho2, a2, a, n_max, 1e-10)?;
                        values.push(est.value);
                        errors.push(est.truncation_mass.unwrap_or(0.0));
                    }
                    PhiBarTable {
                        alphas,
                        values,
                        errors,
                        method: "exact".into(),
                        beta: 1.0,
                    }
                }
                PhiBarMethodArg::Mc => {
                    let params = SimParams {
                        horizon,
                        seed,
                        stride: 1,
                        beta: 1.0,
                    };
                    tabulate_mc_on(&linear, beta, &alphas, &params, &EstimatorOptions::default())?
                }
            };
            std::fs::write(&out, table.to_csv()).map_err(|e| RunError::Domain(e.into()))?;
            Ok(())
        }
        Command::Fluid {
            config,
            mode,
            z0,
            t_end,
            step,
            phibar,
            tolerance,
            out,
        } => {
            let top = load_topology(&config)?;
            let z0 = parse_f64_list(&z0, "fluid state")?;
            let load_table = |path: &Option<PathBuf>| -> Result<PhiBarTable, RunError> {
                let path = path.as_ref().ok_or_else(|| {
                    RunError::Usage("this fluid mode needs --phibar".into())
                })?;
                let text =
                    std::fs::read_to_string(path).map_err(|e| RunError::Domain(e.into()))?;
                Ok(PhiBarTable::from_csv(&text)?)
            };
            match mode {
                FluidMode::General => {
                    let linear = LinearNetwork::from_topology(top)?;
                    let path = integrate_general(&linear, &z0, t_end, step)?;
                    write_fluid_csv(&out, &path)?;
                }
                FluidMode::Qs => {
                    let linear = LinearNetwork::from_topology(top)?;
                    let table = load_table(&phibar)?;
                    let path =
                        integrate_quasi_stationary(&linear, &z0, |a| table.eval(a), t_end, step)?;
                    write_fluid_csv(&out, &path)?;
                }
                FluidMode::BoundF | FluidMode::BoundG => {
                    let linear = LinearNetwork::from_topology(top)?;
                    let table = load_table(&phibar)?;
                    let (env_mode, dir) = if mode == FluidMode::BoundF {
                        (EnvelopeMode::InfUpper, BoundDirection::Upper)
                    } else {
                        (EnvelopeMode::SupLower, BoundDirection::Lower)
                    };
                    let env = envelope(&table.alphas, &table.values, env_mode)?;
                    let result = integrate_bound(&linear, &z0, &env, dir, t_end, step)?;
                    write_fluid_csv(&out, &result.path)?;
                    let report = serde_json::json!({
                        "alpha0": result.report.alpha0,
                        "eta": result.report.eta,
                        "band": result.report.band,
                        "entry_time": result.report.entry_time,
                        "stayed_in_band": result.report.stayed_in_band,
                        "time_both_zero": result.path.time_both_zero(),
                    });
                    println!("{report:#}");
                }
                FluidMode::Lln => {
                    let result = integrate_lln(&top, &z0, t_end, step, tolerance)?;
                    write_fluid_csv(&out, &result.path)?;
                    let report = serde_json::json!({
                        "terminal": result.path.final_state(),
                        "residual": result.residual,
                        "at_fixed_point": result.at_fixed_point,
                    });
                    println!("{report:#}");
                }
            }
            Ok(())
        }
        Command::Classify { config, phibar } => {
            let top = load_topology(&config)?;
            let linear = LinearNetwork::from_topology(top)?;
            let text =
                std::fs::read_to_string(&phibar).map_err(|e| RunError::Domain(e.into()))?;
            let table = PhiBarTable::from_csv(&text)?;
            let report = classify_linear(&linear, &table)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
            Ok(())
        }
        Command::Tree { config } => {
            let top = load_topology(&config)?;
            let tree = analyze_tree(&top)?;
            let analysis = tree_asymptotic_report(&top, &tree)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&analysis).expect("analysis serializes")
            );
            Ok(())
        }
        Command::Sweep { config, out } => {
            let text =
                std::fs::read_to_string(&config).map_err(|e| RunError::Domain(e.into()))?;
            let grid = SweepGrid::from_json(&text)?;
            let result = run_sweep(&grid)?;
            emit_csv(&result, &out)?;
            Ok(())
        }
        Command::Reproduce { recipe, out_dir } => match recipe.as_str() {
            "fig4" => recipes::fig4(&out_dir).map_err(RunError::Domain),
            "fig5" => recipes::fig5(&out_dir).map_err(RunError::Domain),
            "beta-convergence" => recipes::beta_convergence(&out_dir).map_err(RunError::Domain),
            "tree-demo" => recipes::tree_demo(&out_dir).map_err(RunError::Domain),
            other => Err(RunError::Usage(format!(
                "unknown recipe {other}; expected fig4, fig5, beta-convergence or tree-demo"
            ))),
        },
    }
}
