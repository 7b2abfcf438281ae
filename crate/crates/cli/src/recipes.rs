//! Bundled experiments with pinned seeds and a parameter manifest.

use std::path::Path;

use flowdrop_core::ctmc::{simulate_saturated, SimParams};
use flowdrop_core::quasistat::{
    alpha_grid, tabulate_exact_l2, tabulate_limit, tabulate_mc, EstimatorOptions,
};
use flowdrop_core::stability::tree_asymptotic_report;
use flowdrop_core::sweep::{emit_csv, run_sweep, RangeSpec, SweepGrid};
use flowdrop_core::topology::{analyze_tree, FlowClass, LinearNetwork, Link, Topology, TopologySpec};
use flowdrop_core::{allocation::SaturationSet, Error};

const MASTER_SEED: u64 = 42;

fn write(path: &Path, contents: &str) -> Result<(), Error> {
    std::fs::write(path, contents)?;
    Ok(())
}

fn region_grid(rho_rest: Vec<f64>) -> SweepGrid {
    SweepGrid {
        rho0: RangeSpec {
            start: 0.05,
            stop: 0.95,
            step: 0.05,
        },
        rho1: RangeSpec {
            start: 0.05,
            stop: 0.95,
            step: 0.05,
        },
        rho_rest,
        access_multipliers: vec![1.0, 0.5, 0.25, 0.125],
        base_access: 1.0,
        replicas: 20,
        horizon: 1e4,
        seed: MASTER_SEED,
    }
}

fn region_recipe(name: &str, rho_rest: Vec<f64>, out_dir: &Path) -> Result<(), Error> {
    let grid = region_grid(rho_rest);
    let result = run_sweep(&grid)?;
    let csv_path = out_dir.join(format!("region_{name}.csv"));
    emit_csv(&result, &csv_path)?;
    let manifest = serde_json::json!({
        "recipe": name,
        "grid": grid,
        "outputs": [csv_path.display().to_string()],
    });
    write(
        &out_dir.join(format!("{name}_manifest.json")),
        &format!("{manifest:#}\n"),
    )
}

/// Stability region of a 2-link linear network with rho2 = 0.5.
pub fn fig4(out_dir: &Path) -> Result<(), Error> {
    region_recipe("fig4", vec![0.5], out_dir)
}

/// Stability region of a 4-link linear network with rho2..4 = 0.5.
pub fn fig5(out_dir: &Path) -> Result<(), Error> {
    region_recipe("fig5", vec![0.5, 0.5, 0.5], out_dir)
}

/// phibar under increasing access-rate scaling against the exact solve and
/// the closed-form limit (L = 2, rho2 = 0.5, a2 = 1).
pub fn beta_convergence(out_dir: &Path) -> Result<(), Error> {
    let linear = LinearNetwork::build(
        2,
        &[1.0, 1.0],
        &[(1.0, 0.2, 1.0), (1.0, 0.3, 1.0), (1.0, 0.5, 1.0)],
    )?;
    let step = 0.05;
    let mut outputs = Vec::new();
    for beta in [1.0, 4.0, 16.0, 64.0] {
        let params = SimParams {
            horizon: 4000.0,
            seed: MASTER_SEED,
            stride: 1,
            beta: 1.0,
        };
        let table = tabulate_mc(&linear, beta, step, &params, &EstimatorOptions::default())?;
        let path = out_dir.join(format!("phibar_beta{beta}.csv"));
        write(&path, &table.to_csv())?;
        outputs.push(path.display().to_string());
    }
    let exact = tabulate_exact_l2(0.5, 1.0, step, 10_000)?;
    let exact_path = out_dir.join("phibar_exact.csv");
    write(&exact_path, &exact.to_csv())?;
    outputs.push(exact_path.display().to_string());
    let limit = tabulate_limit(&[0.5], step)?;
    let limit_path = out_dir.join("phibar_limit.csv");
    write(&limit_path, &limit.to_csv())?;
    outputs.push(limit_path.display().to_string());

    let manifest = serde_json::json!({
        "recipe": "beta-convergence",
        "seed": MASTER_SEED,
        "network": {"links": 2, "rho": [0.2, 0.3, 0.5], "access": [1.0, 1.0, 1.0]},
        "betas": [1.0, 4.0, 16.0, 64.0],
        "alpha_grid": alpha_grid(step),
        "horizon": 4000.0,
        "outputs": outputs,
    });
    write(
        &out_dir.join("beta-convergence_manifest.json"),
        &format!("{manifest:#}\n"),
    )
}

fn two_leaf_tree() -> Result<Topology, Error> {
    Topology::validate(&TopologySpec {
        links: vec![
            Link { id: 2, capacity: 1.0 },
            Link { id: 3, capacity: 1.0 },
            Link { id: 1, capacity: 1.0 },
        ],
        classes: vec![
            FlowClass {
                id: 0,
                route: vec![2, 1],
                access_rate: 1.0,
                lambda: 0.2,
                mu: 1.0,
            },
            FlowClass {
                id: 1,
                route: vec![3, 1],
                access_rate: 1.0,
                lambda: 0.4,
                mu: 1.0,
            },
        ],
    })
}

/// Upstream-tree walkthrough: the full asymptotic analysis plus a scaled
/// saturated simulation of the selected class.
pub fn tree_demo(out_dir: &Path) -> Result<(), Error> {
    let top = two_leaf_tree()?;
    let tree = analyze_tree(&top)?;
    let analysis = tree_asymptotic_report(&top, &tree)?;
    let analysis_path = out_dir.join("tree_analysis.json");
    write(
        &analysis_path,
        &format!(
            "{}\n",
            serde_json::to_string_pretty(&analysis).expect("analysis serializes")
        ),
    )?;

    let sat = SaturationSet::new(vec![analysis.k0.class])?;
    let params = SimParams {
        horizon: 2000.0,
        seed: MASTER_SEED,
        stride: 8,
        beta: 64.0,
    };
    let traj = simulate_saturated(&top, &tree, &sat, &[0], &params)?;
    let mut csv = String::from("t,n\n");
    for (t, s) in traj.times.iter().zip(&traj.states) {
        csv.push_str(&format!("{t},{}\n", s[0]));
    }
    let traj_path = out_dir.join("tree_saturated_traj.csv");
    write(&traj_path, &csv)?;

    let manifest = serde_json::json!({
        "recipe": "tree-demo",
        "seed": MASTER_SEED,
        "tree": {"root": 1, "children": [2, 3], "rho": [0.2, 0.4]},
        "saturated_simulation": {"beta": 64.0, "horizon": 2000.0, "class": analysis.k0.class_id},
        "outputs": [
            analysis_path.display().to_string(),
            traj_path.display().to_string(),
        ],
    });
    write(
        &out_dir.join("tree-demo_manifest.json"),
        &format!("{manifest:#}\n"),
    )
}
