//! Stability verdicts.
//!
//! The per-link load conditions are necessary for ergodicity; on a linear
//! network the phibar envelopes give sufficient conditions on each side,
//! with an explicit indeterminate band between them (the true boundary for
//! three or more links is open). On upstream trees the class-selection walk
//! and the saturated fixed points certify asymptotic stability as access
//! rates shrink.

use serde::Serialize;

use crate::allocation::{self, SaturationSet};
use crate::error::{Error, Result};
use crate::quasistat::{envelope, EnvelopeMode, PhiBarTable};
use crate::topology::{LinearNetwork, Topology, TreeMeta};

/// Offered load against capacity for one link.
#[derive(Debug, Clone, Serialize)]
pub struct LinkLoad {
    pub link: u32,
    pub load: f64,
    pub capacity: f64,
}

/// Per-link load report for the necessary stability conditions.
#[derive(Debug, Clone, Serialize)]
pub struct OptimalReport {
    pub per_link: Vec<LinkLoad>,
    /// Every load strictly below capacity.
    pub all_strict: bool,
    /// Some load strictly above capacity.
    pub any_exceeded: bool,
    /// Some load exactly at capacity.
    pub any_boundary: bool,
}

/// Compare the offered load of every link against its capacity; stability
/// requires strict inequality everywhere. Vacuously true without classes.
pub fn check_optimal(topology: &Topology) -> OptimalReport {
    let per_link: Vec<LinkLoad> = topology
        .links()
        .iter()
        .map(|l| LinkLoad {
            link: l.id,
            load: topology.link_load(l.id),
            capacity: l.capacity,
        })
        .collect();
    OptimalReport {
        all_strict: per_link.iter().all(|l| l.load < l.capacity),
        any_exceeded: per_link.iter().any(|l| l.load > l.capacity),
        any_boundary: per_link.iter().any(|l| l.load == l.capacity),
        per_link,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StabilityVerdict {
    ProvablyStable,
    ProvablyUnstable,
    Indeterminate,
}

/// Verdict for a linear network with the thresholds that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub verdict: StabilityVerdict,
    pub per_link: Vec<LinkLoad>,
    pub rho0: f64,
    /// Envelope infimum of phibar over [1 - rho1, 1].
    pub inf_threshold: f64,
    /// Envelope supremum of phibar over [0, 1 - rho1].
    pub sup_threshold: f64,
    /// Interpolation slack (half the grid step, phibar is 1-Lipschitz);
    /// widens only the indeterminate band.
    pub margin: f64,
    pub phibar_method: String,
    pub phibar_beta: f64,
    pub phibar_grid_step: f64,
}

/// Classify a linear network from a sampled phibar table.
///
/// A rho above 1 anywhere is provably unstable; otherwise the verdict
/// compares rho0 against the envelope thresholds at `1 - rho1`, conservative
/// by the interpolation margin. Exact boundary cases stay indeterminate:
/// every sufficient condition here is strict.
pub fn classify_linear(linear: &LinearNetwork, table: &PhiBarTable) -> Result<StabilityReport> {
    if table.alphas.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if table.alphas[0] > 0.0 || *table.alphas.last().expect("non-empty") < 1.0 {
        return Err(Error::InvalidParams(
            "phibar grid must cover [0, 1]".into(),
        ));
    }
    let report = check_optimal(linear.topology());
    let rho: Vec<f64> = linear.topology().rho();
    let rho0 = rho[0];
    let rho1 = rho[1];

    let f = envelope(&table.alphas, &table.values, EnvelopeMode::InfUpper)?;
    let g = envelope(&table.alphas, &table.values, EnvelopeMode::SupLower)?;
    let inf_threshold = f.eval((1.0 - rho1).clamp(0.0, 1.0));
    let sup_threshold = g.eval((1.0 - rho1).clamp(0.0, 1.0));
    let margin = table.max_step() / 2.0;

    let verdict = if rho.iter().any(|&r| r > 1.0) {
        StabilityVerdict::ProvablyUnstable
    } else if rho.contains(&1.0) {
        StabilityVerdict::Indeterminate
    } else if rho0 < inf_threshold - margin {
        StabilityVerdict::ProvablyStable
    } else if rho0 > sup_threshold + margin {
        StabilityVerdict::ProvablyUnstable
    } else {
        StabilityVerdict::Indeterminate
    };
    Ok(StabilityReport {
        verdict,
        per_link: report.per_link,
        rho0,
        inf_threshold,
        sup_threshold,
        margin,
        phibar_method: table.method.clone(),
        phibar_beta: table.beta,
        phibar_grid_step: table.max_step(),
    })
}

/// Existence of the drift-balance fixed point of the scaled dynamics.
#[derive(Debug, Clone, Serialize)]
pub enum FixedPointOutcome {
    /// The traffic intensities themselves, with the allocation residual.
    Unique { x: Vec<f64>, residual: f64 },
    /// Some link load strictly exceeds its capacity.
    None,
    /// A load sits exactly at capacity; existence is a strict-inequality
    /// statement.
    Boundary,
}

/// Fixed point of the scaled dynamics: exists (and equals rho) exactly when
/// the strict per-link load conditions hold.
pub fn lln_fixed_point(topology: &Topology) -> Result<FixedPointOutcome> {
    let report = check_optimal(topology);
    if report.any_exceeded {
        return Ok(FixedPointOutcome::None);
    }
    if report.any_boundary {
        return Ok(FixedPointOutcome::Boundary);
    }
    let rho = topology.rho();
    let psi = allocation::allocate(topology, &rho)?.psi;
    let residual = rho
        .iter()
        .zip(&psi)
        .map(|(r, p)| (r - p).abs())
        .fold(0.0, f64::max);
    Ok(FixedPointOutcome::Unique { x: rho, residual })
}

/// The class a tree walk selects as stable under total saturation, with its
/// certificate.
#[derive(Debug, Clone, Serialize)]
pub struct SelectedClass {
    /// Position in `topology.classes()`.
    pub class: usize,
    pub class_id: u32,
    /// The class route, entry link first.
    pub path: Vec<u32>,
    /// Strict `(load through link, effective capacity)` pairs for every
    /// non-root link on the path.
    pub inequalities: Vec<(f64, f64)>,
    /// Bandwidth the class uses at each link of its route in the saturated
    /// worst case as access rates shrink; the last entry equals rho.
    pub sigma: Vec<f64>,
}

/// Walk from the root towards an entry link, descending only into children
/// whose subtree load fits within the effective capacity share.
pub fn tree_select_k0(topology: &Topology, tree: &TreeMeta) -> Result<SelectedClass> {
    let mut link = tree.root;
    let class = loop {
        if let Some(&k) = tree.entry_class.get(&link) {
            break k;
        }
        let next = tree.children_of(link).iter().copied().find(|&child| {
            topology.link_load(child) < tree.effective_capacity[&child]
        });
        match next {
            Some(child) => link = child,
            None => return Err(Error::NoEligibleChild { link }),
        }
    };

    let chosen = &topology.classes()[class];
    let rho = chosen.rho();
    let mut inequalities = Vec::new();
    for (i, &l) in chosen.route.iter().enumerate() {
        if i + 1 < chosen.route.len() {
            inequalities.push((topology.link_load(l), tree.effective_capacity[&l]));
        }
    }
    // Certificate check: the walk's invariant restated per path link.
    for &(load, eff) in &inequalities {
        if load.is_nan() || load >= eff {
            return Err(Error::NoEligibleChild { link: chosen.route[0] });
        }
    }
    let sigma: Vec<f64> = chosen
        .route
        .iter()
        .map(|&l| {
            let factor = tree.effective_capacity[&l] / topology.capacity(l);
            rho / factor
        })
        .collect();
    Ok(SelectedClass {
        class,
        class_id: chosen.id,
        path: chosen.route.clone(),
        inequalities,
        sigma,
    })
}

/// One step of the saturated fixed-point recursion.
#[derive(Debug, Clone, Serialize)]
pub struct TreeStep {
    /// Classes kept finite, in selection order (positions and ids).
    pub classes: Vec<usize>,
    pub class_ids: Vec<u32>,
    /// Fixed-point rates aligned with `classes`.
    pub fixed_point: Vec<f64>,
    /// `rho_k - psi_k` at the fixed point, aligned with `classes`.
    pub residuals: Vec<f64>,
}

const FP_TOL: f64 = 1e-10;

/// Saturated throughput of `target` at rate `x`, the other finite classes
/// pinned at `rates`.
fn sat_share(
    topology: &Topology,
    tree: &TreeMeta,
    classes: &[usize],
    rates: &[f64],
    target: usize,
    x: f64,
) -> Result<f64> {
    let sat = SaturationSet::new(classes.to_vec())?;
    let mut xs = rates.to_vec();
    xs[target] = x;
    let psi = allocation::saturated_allocate(topology, tree, &sat, &xs)?;
    Ok(psi[target])
}

/// Solve `psi(x) = rho` in one coordinate by bisection; the share is
/// non-decreasing in the class's own rate.
fn solve_coordinate(
    topology: &Topology,
    tree: &TreeMeta,
    classes: &[usize],
    rates: &[f64],
    target: usize,
) -> Result<f64> {
    let class = &topology.classes()[classes[target]];
    let rho = class.rho();
    if rho == 0.0 {
        return Ok(0.0);
    }
    let entry = class.route[0];
    // Bracket top: entry capacity over the downstream share product, plus
    // the competing child capacities at the entry link; expanded if the
    // share has not yet overtaken rho there.
    let factor = tree.effective_capacity[&entry] / topology.capacity(entry);
    let mut hi = topology.capacity(entry) / factor + tree.child_capacity_sum(topology, entry);
    let mut expand = 0;
    while sat_share(topology, tree, classes, rates, target, hi)? <= rho {
        hi *= 2.0;
        expand += 1;
        if expand > 60 {
            return Err(Error::NoRoot { class: class.id });
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = sat_share(topology, tree, classes, rates, target, mid)?;
        if (v - rho).abs() <= FP_TOL * 0.01 {
            return Ok(mid);
        }
        if v < rho {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Extend the recursion by one class: solve the joint saturated system for
/// `selected + [next]` by coordinatewise bisection iterated to convergence.
/// `prev_point` seeds the already-selected coordinates.
pub fn tree_fixed_points(
    topology: &Topology,
    tree: &TreeMeta,
    selected: &[usize],
    prev_point: &[f64],
    next: usize,
) -> Result<TreeStep> {
    if prev_point.len() != selected.len() {
        return Err(Error::DimensionMismatch {
            expected: selected.len(),
            got: prev_point.len(),
        });
    }
    let mut classes = selected.to_vec();
    classes.push(next);
    let mut rates = prev_point.to_vec();
    rates.push(topology.classes()[next].rho());

    let max_rounds = 10_000;
    let mut converged = false;
    for _ in 0..max_rounds {
        let mut delta = 0.0f64;
        for i in 0..classes.len() {
            let new = solve_coordinate(topology, tree, &classes, &rates, i)?;
            delta = delta.max((new - rates[i]).abs());
            rates[i] = new;
        }
        if delta < FP_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence(max_rounds));
    }

    let sat = SaturationSet::new(classes.clone())?;
    let psi = allocation::saturated_allocate(topology, tree, &sat, &rates)?;
    let residuals: Vec<f64> = classes
        .iter()
        .zip(&psi)
        .map(|(&k, &p)| topology.classes()[k].rho() - p)
        .collect();
    Ok(TreeStep {
        class_ids: classes.iter().map(|&k| topology.classes()[k].id).collect(),
        classes,
        fixed_point: rates,
        residuals,
    })
}

/// Full asymptotic-stability certificate for an upstream tree.
#[derive(Debug, Clone, Serialize)]
pub struct TreeAnalysis {
    pub verdict: String,
    pub optimal: OptimalReport,
    pub k0: SelectedClass,
    /// Classes in the order the recursion stabilizes them.
    pub order: Vec<usize>,
    pub order_ids: Vec<u32>,
    pub steps: Vec<TreeStep>,
}

/// Run the whole recursion: select the first class by the capacity-share
/// walk, then repeatedly admit the first remaining class whose saturated
/// worst-case share (others at the current fixed point) stays above its rho,
/// re-solving the joint fixed point each time.
pub fn tree_asymptotic_report(topology: &Topology, tree: &TreeMeta) -> Result<TreeAnalysis> {
    let optimal = check_optimal(topology);
    if !optimal.all_strict {
        let worst = optimal
            .per_link
            .iter()
            .max_by(|a, b| (a.load / a.capacity).total_cmp(&(b.load / b.capacity)))
            .expect("non-empty");
        return Err(Error::Config(format!(
            "optimal stability conditions violated: link {} carries load {} against capacity {}",
            worst.link, worst.load, worst.capacity
        )));
    }

    let k0 = tree_select_k0(topology, tree)?;
    let mut order = vec![k0.class];
    let mut steps = Vec::new();
    let first = tree_fixed_points(topology, tree, &[], &[], k0.class)?;
    let mut point = first.fixed_point.clone();
    steps.push(first);

    let n = topology.n_classes();
    let mut remaining: Vec<usize> = (0..n).filter(|k| *k != k0.class).collect();
    while !remaining.is_empty() {
        // Saturated worst-case limit of each candidate, the already-selected
        // classes pinned at the current fixed point. The share is monotone
        // in the candidate's own rate, so a huge finite rate tests the limit
        // from below.
        let mut chosen = None;
        for (pos, &cand) in remaining.iter().enumerate() {
            let mut classes = order.clone();
            classes.push(cand);
            let rho = topology.classes()[cand].rho();
            let limit = sat_share(
                topology,
                tree,
                &classes,
                &{
                    let mut v = point.clone();
                    v.push(0.0);
                    v
                },
                classes.len() - 1,
                1e12,
            )?;
            if limit > rho {
                chosen = Some((pos, cand));
                break;
            }
        }
        let (pos, next) = chosen.ok_or(Error::NoStableClass)?;
        let step = tree_fixed_points(topology, tree, &order, &point, next)?;
        point = step.fixed_point.clone();
        order.push(next);
        remaining.remove(pos);
        steps.push(step);
    }

    Ok(TreeAnalysis {
        verdict: "AsymptoticallyStable".into(),
        optimal,
        order_ids: order.iter().map(|&k| topology.classes()[k].id).collect(),
        k0,
        order,
        steps,
    })
}
