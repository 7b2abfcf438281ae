//! Replicated stability-region sweeps over (rho0, rho1) grids.
//!
//! Each cell runs the flow-count simulation on a unit-capacity linear
//! network for every access-rate multiplier and classifies the replicas by
//! empirical drift. Analytic overlays (necessary per-link conditions and the
//! small-access-rate sufficient boundary) ride along so the CSV is plottable
//! on its own. Cells are independent tasks over a worker pool; every replica
//! owns an RNG stream derived from the master seed, so results do not depend
//! on scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ctmc::{drift_classify, simulate, DriftConfig, SimParams, Verdict};
use crate::error::{Error, Result};
use crate::topology::Topology;

/// Inclusive numeric range with a step.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl RangeSpec {
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        if self.step <= 0.0 {
            return out;
        }
        let mut i = 0usize;
        loop {
            let v = self.start + self.step * i as f64;
            if v > self.stop + self.step * 1e-9 {
                break;
            }
            out.push(v);
            i += 1;
        }
        out
    }
}

fn default_base_access() -> f64 {
    1.0
}

/// Sweep description; field names match the JSON config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub rho0: RangeSpec,
    pub rho1: RangeSpec,
    /// Fixed traffic intensities of classes 2..=L; the number of links is
    /// `1 + rho_rest.len()`.
    pub rho_rest: Vec<f64>,
    /// Access-rate multipliers applied to every class.
    pub access_multipliers: Vec<f64>,
    #[serde(default = "default_base_access")]
    pub base_access: f64,
    pub replicas: u32,
    pub horizon: f64,
    pub seed: u64,
}

impl SweepGrid {
    pub fn from_json(s: &str) -> Result<Self> {
        let grid: SweepGrid =
            serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("rho0", &self.rho0), ("rho1", &self.rho1)] {
            if r.step <= 0.0 || r.step.is_nan() {
                return Err(Error::Config(format!("{name}.step must be positive")));
            }
            if r.start <= 0.0 || r.stop >= 1.0 {
                return Err(Error::Config(format!("{name} range must stay within (0, 1)")));
            }
        }
        if self.rho_rest.iter().any(|&r| r <= 0.0) {
            return Err(Error::Config("rho_rest entries must be positive".into()));
        }
        if self.access_multipliers.is_empty()
            || self.access_multipliers.iter().any(|&m| m <= 0.0)
        {
            return Err(Error::Config(
                "access_multipliers must be non-empty and positive".into(),
            ));
        }
        if self.replicas == 0 {
            return Err(Error::Config("replicas must be at least 1".into()));
        }
        if self.horizon <= 0.0 || !self.horizon.is_finite() || self.base_access <= 0.0 || !self.base_access.is_finite() {
            return Err(Error::Config("horizon and base_access must be positive".into()));
        }
        Ok(())
    }
}

/// Verdict counts and analytic overlays for one (rho0, rho1, multiplier)
/// cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub rho0: f64,
    pub rho1: f64,
    pub access_mult: f64,
    pub n_stable: u32,
    pub n_unstable: u32,
    pub n_inconclusive: u32,
    /// Small-access-rate sufficient stability condition.
    pub thm1_stable: bool,
    /// Sufficient transience condition under the same limit boundary.
    pub thm2_unstable: bool,
    /// Necessary per-link load conditions.
    pub optimal_ok: bool,
}

/// All cells of a sweep, sorted by (rho0, rho1, multiplier).
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub replicas: u32,
    pub cells: Vec<CellResult>,
}

impl SweepResult {
    pub fn majority_stable(&self, cell: &CellResult) -> bool {
        cell.n_stable * 2 > self.replicas
    }
}

fn linear_topology(rho0: f64, rho1: f64, rest: &[f64], access: f64) -> Result<Topology> {
    let n_links = 1 + rest.len();
    let capacities = vec![1.0; n_links];
    let mut params = Vec::with_capacity(n_links + 1);
    params.push((access, rho0, 1.0));
    params.push((access, rho1, 1.0));
    for &r in rest {
        params.push((access, r, 1.0));
    }
    Topology::build_linear(n_links, &capacities, &params)
}

/// Run the replicated sweep. Deterministic for a fixed grid and seed.
pub fn run_sweep(grid: &SweepGrid) -> Result<SweepResult> {
    grid.validate()?;
    let rho0s = grid.rho0.values();
    let rho1s = grid.rho1.values();
    let mut tasks = Vec::new();
    for &rho0 in &rho0s {
        for &rho1 in &rho1s {
            for &mult in &grid.access_multipliers {
                tasks.push((rho0, rho1, mult));
            }
        }
    }

    // The sufficient small-access-rate boundary for both overlay curves.
    let limit_threshold = |rho1: f64| -> f64 {
        let local_min = grid
            .rho_rest
            .iter()
            .map(|r| 1.0 - r)
            .fold(f64::INFINITY, f64::min);
        (1.0 - rho1).min(local_min)
    };

    let cells: Result<Vec<CellResult>> = tasks
        .par_iter()
        .enumerate()
        .map(|(cell_idx, &(rho0, rho1, mult))| {
            let top = linear_topology(rho0, rho1, &grid.rho_rest, grid.base_access * mult)?;
            let n0 = vec![0u64; top.n_classes()];
            let mut n_stable = 0;
            let mut n_unstable = 0;
            let mut n_inconclusive = 0;
            for rep in 0..grid.replicas {
                let params = SimParams {
                    horizon: grid.horizon,
                    seed: grid.seed,
                    stride: 1,
                    beta: 1.0,
                };
                // One stream per (cell, replica).
                let stream = cell_idx as u64 * grid.replicas as u64 + rep as u64;
                let traj = simulate_with_stream(&top, &n0, &params, stream)?;
                match drift_classify(&traj, &DriftConfig::default())? {
                    Verdict::Stable => n_stable += 1,
                    Verdict::Unstable => n_unstable += 1,
                    Verdict::Inconclusive => n_inconclusive += 1,
                }
            }
            let mut rho = vec![rho0, rho1];
            rho.extend_from_slice(&grid.rho_rest);
            let all_below_one = rho.iter().all(|&r| r < 1.0);
            let threshold = limit_threshold(rho1);
            let optimal_ok = rho0 + rho1 < 1.0
                && grid.rho_rest.iter().all(|&r| rho0 + r < 1.0);
            Ok(CellResult {
                rho0,
                rho1,
                access_mult: mult,
                n_stable,
                n_unstable,
                n_inconclusive,
                thm1_stable: all_below_one && rho0 < threshold,
                thm2_unstable: !all_below_one || rho0 > threshold,
                optimal_ok,
            })
        })
        .collect();
    let mut cells = cells?;
    cells.sort_by(|a, b| {
        (a.rho0, a.rho1, a.access_mult)
            .partial_cmp(&(b.rho0, b.rho1, b.access_mult))
            .expect("finite keys")
    });
    Ok(SweepResult {
        replicas: grid.replicas,
        cells,
    })
}

/// `simulate` with the replica stream spliced into the RNG, so replicas
/// share the master seed without sharing randomness.
fn simulate_with_stream(
    top: &Topology,
    n0: &[u64],
    params: &SimParams,
    stream: u64,
) -> Result<crate::ctmc::Trajectory> {
    // Fold the stream index into the seed deterministically. SplitMix-style
    // mixing keeps distinct streams uncorrelated while staying reproducible.
    let mut z = params
        .seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    let derived = SimParams {
        seed: z,
        ..params.clone()
    };
    simulate(top, n0, &derived)
}

pub const SWEEP_CSV_HEADER: &str =
    "rho0,rho1,access_mult,n_stable,n_unstable,n_inconclusive,thm1_stable,thm2_unstable,optimal_ok";

/// Render the sweep result as CSV text.
pub fn to_csv(result: &SweepResult) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for c in &result.cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            c.rho0,
            c.rho1,
            c.access_mult,
            c.n_stable,
            c.n_unstable,
            c.n_inconclusive,
            c.thm1_stable as u8,
            c.thm2_unstable as u8,
            c.optimal_ok as u8,
        ));
    }
    out
}

/// Write the CSV to disk.
pub fn emit_csv(result: &SweepResult, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, to_csv(result))?;
    Ok(())
}

/// Parse a sweep CSV back; the replica count is reconstructed from the first
/// row's verdict counts.
pub fn parse_csv(text: &str) -> Result<SweepResult> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::EmptyGrid)?;
    if header.trim() != SWEEP_CSV_HEADER {
        return Err(Error::Config(format!("unexpected sweep CSV header: {header}")));
    }
    let mut cells = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(Error::Config(format!("bad sweep CSV row: {line}")));
        }
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad number {s} in sweep CSV")))
        };
        let int = |s: &str| -> Result<u32> {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad count {s} in sweep CSV")))
        };
        cells.push(CellResult {
            rho0: num(f[0])?,
            rho1: num(f[1])?,
            access_mult: num(f[2])?,
            n_stable: int(f[3])?,
            n_unstable: int(f[4])?,
            n_inconclusive: int(f[5])?,
            thm1_stable: f[6].trim() == "1",
            thm2_unstable: f[7].trim() == "1",
            optimal_ok: f[8].trim() == "1",
        });
    }
    let replicas = cells
        .first()
        .map(|c| c.n_stable + c.n_unstable + c.n_inconclusive)
        .unwrap_or(0);
    Ok(SweepResult { replicas, cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_cell_grid(rho0: f64, rho1: f64, mult: f64) -> SweepGrid {
        SweepGrid {
            rho0: RangeSpec {
                start: rho0,
                stop: rho0,
                step: 0.05,
            },
            rho1: RangeSpec {
                start: rho1,
                stop: rho1,
                step: 0.05,
            },
            rho_rest: vec![0.3],
            access_multipliers: vec![mult],
            base_access: 1.0,
            replicas: 4,
            horizon: 8000.0,
            seed: 42,
        }
    }

    #[test]
    fn stable_cell_has_stable_majority() {
        let grid = one_cell_grid(0.15, 0.3, 0.125);
        let result = run_sweep(&grid).unwrap();
        assert_eq!(result.cells.len(), 1);
        let cell = &result.cells[0];
        assert_eq!(
            cell.n_stable + cell.n_unstable + cell.n_inconclusive,
            grid.replicas
        );
        assert!(result.majority_stable(cell), "{cell:?}");
        assert!(cell.thm1_stable);
        assert!(cell.optimal_ok);
    }

    #[test]
    fn overloaded_cell_is_unstable_majority() {
        // rho0 + rho2 = 0.95 + 0.3 > 1 violates the necessary condition.
        let grid = one_cell_grid(0.95, 0.3, 1.0);
        let result = run_sweep(&grid).unwrap();
        let cell = &result.cells[0];
        assert!(!cell.optimal_ok);
        assert!(cell.n_unstable * 2 > grid.replicas, "{cell:?}");
        assert!(cell.thm2_unstable);
    }

    #[test]
    fn zero_area_grid_is_empty() {
        let mut grid = one_cell_grid(0.2, 0.2, 1.0);
        grid.rho0.stop = 0.1; // start > stop
        let result = run_sweep(&grid).unwrap();
        assert!(result.cells.is_empty());
    }

    #[test]
    fn csv_round_trip_and_header() {
        let grid = one_cell_grid(0.2, 0.5, 1.0);
        let result = run_sweep(&grid).unwrap();
        let csv = to_csv(&result);
        assert!(csv.starts_with(SWEEP_CSV_HEADER));
        let back = parse_csv(&csv).unwrap();
        assert_eq!(back.cells, result.cells);
        assert_eq!(back.replicas, grid.replicas);
    }

    #[test]
    fn identical_seeds_give_identical_csv() {
        let grid = one_cell_grid(0.3, 0.3, 0.5);
        let a = to_csv(&run_sweep(&grid).unwrap());
        let b = to_csv(&run_sweep(&grid).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn grid_json_rejects_unknown_fields() {
        let good = r#"{"rho0":{"start":0.1,"stop":0.2,"step":0.05},
            "rho1":{"start":0.1,"stop":0.2,"step":0.05},
            "rho_rest":[0.5],"access_multipliers":[1.0,0.125],
            "replicas":2,"horizon":100.0,"seed":1}"#;
        assert!(SweepGrid::from_json(good).is_ok());
        let bad = good.replace("\"seed\":1", "\"seed\":1,\"extra\":true");
        assert!(SweepGrid::from_json(&bad).is_err());
    }
}
