//! Event-driven simulation of the flow-count Markov process.
//!
//! In state `n`, class-`k` flows arrive at rate `lambda_k` and depart at rate
//! `mu_k * phi_k(n)` where `phi` is the tail-drop allocation at the current
//! counts. The simulator samples exact jump times from the exponential race;
//! no uniformization, so time averages carry no discretization bias.
//! Allocation results are memoized per state: states recur heavily near the
//! stationary mode.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::allocation::{self, SaturationSet};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::topology::{LinearNetwork, Topology, TreeMeta};

/// Simulation horizon, seeding and scaling parameters.
///
/// Under the scaling `beta`, arrival rates become `beta * lambda`, service
/// rates `beta * mu` and access rates `a / beta`.
#[derive(Debug, Clone)]
pub struct SimParams {
    /// Simulated time horizon.
    pub horizon: f64,
    /// Master seed for this run.
    pub seed: u64,
    /// Record every `stride`-th event (the initial and final states are
    /// always recorded).
    pub stride: u64,
    /// Access-rate scaling factor.
    pub beta: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            horizon: 1e4,
            seed: 0,
            stride: 1,
            beta: 1.0,
        }
    }
}

impl SimParams {
    fn validate(&self) -> Result<()> {
        if self.horizon <= 0.0 || !self.horizon.is_finite() {
            return Err(Error::InvalidParams(format!(
                "horizon must be positive and finite, got {}",
                self.horizon
            )));
        }
        if self.stride == 0 {
            return Err(Error::InvalidParams("stride must be at least 1".into()));
        }
        if self.beta < 1.0 || !self.beta.is_finite() {
            return Err(Error::InvalidParams(format!(
                "beta must be >= 1, got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// Sampled path of a simulation run. The path is piecewise constant and
/// right-continuous; each recorded state is the state just after the jump at
/// the recorded time. The final sample repeats the state at the horizon.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<u64>>,
    pub event_count: u64,
    pub seed: u64,
}

impl Trajectory {
    pub fn final_state(&self) -> &[u64] {
        self.states.last().expect("trajectory has at least one sample")
    }

    /// `l1` norms of the sampled states.
    pub fn l1_norms(&self) -> Vec<f64> {
        self.states
            .iter()
            .map(|s| s.iter().map(|&v| v as f64).sum())
            .collect()
    }
}

/// A scaled run: the raw counts plus the rescaled path `a .* n / beta`.
#[derive(Debug, Clone)]
pub struct ScaledTrajectory {
    pub raw: Trajectory,
    pub scaled: Vec<Vec<f64>>,
}

const ALLOC_CACHE_CAP: usize = 1 << 20;

/// Exact-jump simulation loop. `death_rates` fills the per-class departure
/// rates for the current state; `on_sojourn` sees every (state, holding time)
/// pair including the final partial one, so observers integrate exactly.
pub(crate) fn run_jump_process(
    n0: &[u64],
    arrivals: &[f64],
    mut death_rates: impl FnMut(&[u64], &mut Vec<f64>),
    horizon: f64,
    stride: u64,
    rng: &mut ChaCha8Rng,
    mut on_sojourn: impl FnMut(&[u64], f64),
) -> (Vec<f64>, Vec<Vec<u64>>, u64) {
    let k = n0.len();
    let mut state = n0.to_vec();
    let mut times = vec![0.0];
    let mut states = vec![state.clone()];
    let mut deaths = vec![0.0; k];
    let mut events: u64 = 0;
    let mut t = 0.0;

    loop {
        death_rates(&state, &mut deaths);
        let total: f64 = arrivals.iter().sum::<f64>() + deaths.iter().sum::<f64>();
        if total <= 0.0 {
            // Absorbing state: nothing happens until the horizon.
            on_sojourn(&state, horizon - t);
            break;
        }
        let u: f64 = rng.random();
        let dt = -(-u).ln_1p() / total;
        if t + dt >= horizon {
            on_sojourn(&state, horizon - t);
            break;
        }
        on_sojourn(&state, dt);
        t += dt;

        let target = rng.random::<f64>() * total;
        let mut cum = 0.0;
        let mut chosen: Option<(usize, bool)> = None; // (class, is_arrival)
        for (i, &r) in arrivals.iter().enumerate() {
            cum += r;
            if target < cum {
                chosen = Some((i, true));
                break;
            }
        }
        if chosen.is_none() {
            for (i, &r) in deaths.iter().enumerate() {
                cum += r;
                if target < cum {
                    chosen = Some((i, false));
                    break;
                }
            }
        }
        // Rounding fallback: the last event with positive rate.
        let (class, is_arrival) = chosen.unwrap_or_else(|| {
            deaths
                .iter()
                .rposition(|&r| r > 0.0)
                .map(|i| (i, false))
                .or_else(|| arrivals.iter().rposition(|&r| r > 0.0).map(|i| (i, true)))
                .expect("total rate positive")
        });
        if is_arrival {
            state[class] += 1;
        } else {
            debug_assert!(state[class] > 0, "departure from an empty class");
            state[class] -= 1;
        }
        events += 1;
        if events.is_multiple_of(stride) {
            times.push(t);
            states.push(state.clone());
        }
    }

    if *times.last().expect("non-empty") < horizon {
        times.push(horizon);
        states.push(state);
    }
    (times, states, events)
}

/// Departure-rate function backed by the tail-drop allocation, memoized per
/// count vector with a bounded cache.
struct AllocRates<'a> {
    topology: &'a Topology,
    mu_scaled: Vec<f64>,
    access_scaled: Vec<f64>,
    cache: HashMap<Vec<u64>, Vec<f64>>,
}

impl<'a> AllocRates<'a> {
    fn new(topology: &'a Topology, beta: f64) -> Self {
        let mu_scaled = topology.classes().iter().map(|c| c.mu * beta).collect();
        let access_scaled = topology
            .classes()
            .iter()
            .map(|c| c.access_rate / beta)
            .collect();
        AllocRates {
            topology,
            mu_scaled,
            access_scaled,
            cache: HashMap::new(),
        }
    }

    fn fill(&mut self, state: &[u64], out: &mut Vec<f64>) {
        if let Some(rates) = self.cache.get(state) {
            out.clone_from(rates);
            return;
        }
        let x: Vec<f64> = state
            .iter()
            .zip(&self.access_scaled)
            .map(|(&n, a)| n as f64 * a)
            .collect();
        let psi = allocation::allocate(self.topology, &x)
            .expect("validated dimensions")
            .psi;
        out.clear();
        out.extend(psi.iter().zip(&self.mu_scaled).map(|(p, m)| p * m));
        if self.cache.len() >= ALLOC_CACHE_CAP {
            self.cache.clear();
        }
        self.cache.insert(state.to_vec(), out.clone());
    }
}

/// Simulate the flow-count process from `n0` over `params.horizon`.
///
/// `params.beta` scales the dynamics: arrivals `beta * lambda`, departures
/// `beta * mu * psi(a .* n / beta)`. With `beta = 1` this is the plain
/// process.
pub fn simulate(topology: &Topology, n0: &[u64], params: &SimParams) -> Result<Trajectory> {
    params.validate()?;
    if n0.len() != topology.n_classes() {
        return Err(Error::DimensionMismatch {
            expected: topology.n_classes(),
            got: n0.len(),
        });
    }
    let arrivals: Vec<f64> = topology
        .classes()
        .iter()
        .map(|c| c.lambda * params.beta)
        .collect();
    let mut rates = AllocRates::new(topology, params.beta);
    let mut rng = stream_rng(params.seed, 0);
    let (times, states, event_count) = run_jump_process(
        n0,
        &arrivals,
        |s, out| rates.fill(s, out),
        params.horizon,
        params.stride,
        &mut rng,
        |_, _| {},
    );
    Ok(Trajectory {
        times,
        states,
        event_count,
        seed: params.seed,
    })
}

/// Simulate under the access-rate scaling and also report the scaled path
/// `a .* n / beta`.
pub fn simulate_scaled(topology: &Topology, n0: &[u64], params: &SimParams) -> Result<ScaledTrajectory> {
    let raw = simulate(topology, n0, params)?;
    let access = topology.access_rates();
    let scaled = raw
        .states
        .iter()
        .map(|s| {
            s.iter()
                .zip(&access)
                .map(|(&n, a)| n as f64 * a / params.beta)
                .collect()
        })
        .collect();
    Ok(ScaledTrajectory { raw, scaled })
}

/// Quasi-stationary chain of the local classes `2..=L` on a unit-capacity
/// linear network, with the class-0 rate after link 1 frozen at `alpha`.
/// `n0_local[j]` is the initial count of class `j + 2`. Honors `params.beta`.
pub fn simulate_quasi_stationary(
    linear: &LinearNetwork,
    alpha: f64,
    n0_local: &[u64],
    params: &SimParams,
) -> Result<Trajectory> {
    params.validate()?;
    linear.has_unit_capacities()?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    let expected = linear.n_links().saturating_sub(1);
    if n0_local.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: n0_local.len(),
        });
    }
    let beta = params.beta;
    let arrivals: Vec<f64> = (2..=linear.n_links())
        .map(|k| linear.class(k).lambda * beta)
        .collect();
    let mu: Vec<f64> = (2..=linear.n_links())
        .map(|k| linear.class(k).mu * beta)
        .collect();
    let access: Vec<f64> = (2..=linear.n_links())
        .map(|k| linear.class(k).access_rate / beta)
        .collect();
    let mut cache: HashMap<Vec<u64>, Vec<f64>> = HashMap::new();
    let mut x = vec![0.0; expected];
    let mut rng = stream_rng(params.seed, 0);
    let (times, states, event_count) = run_jump_process(
        n0_local,
        &arrivals,
        |s, out| {
            if let Some(rates) = cache.get(s) {
                out.clone_from(rates);
                return;
            }
            for (j, (&n, a)) in s.iter().zip(&access).enumerate() {
                x[j] = n as f64 * a;
            }
            let qs = allocation::qs_shares_unchecked(alpha, &x);
            out.clear();
            out.extend(qs.psi_local.iter().zip(&mu).map(|(p, m)| p * m));
            if cache.len() >= ALLOC_CACHE_CAP {
                cache.clear();
            }
            cache.insert(s.to_vec(), out.clone());
        },
        params.horizon,
        params.stride,
        &mut rng,
        |_, _| {},
    );
    Ok(Trajectory {
        times,
        states,
        event_count,
        seed: params.seed,
    })
}

/// Chain of the finite classes of `sat` on an upstream tree, all other
/// classes saturated. `n0_u` aligns with `sat.finite_classes()`. Honors
/// `params.beta`.
pub fn simulate_saturated(
    topology: &Topology,
    tree: &TreeMeta,
    sat: &SaturationSet,
    n0_u: &[u64],
    params: &SimParams,
) -> Result<Trajectory> {
    params.validate()?;
    let finite = sat.finite_classes();
    if n0_u.len() != finite.len() {
        return Err(Error::DimensionMismatch {
            expected: finite.len(),
            got: n0_u.len(),
        });
    }
    let beta = params.beta;
    let arrivals: Vec<f64> = finite
        .iter()
        .map(|&k| topology.classes()[k].lambda * beta)
        .collect();
    let mu: Vec<f64> = finite
        .iter()
        .map(|&k| topology.classes()[k].mu * beta)
        .collect();
    let access: Vec<f64> = finite
        .iter()
        .map(|&k| topology.classes()[k].access_rate / beta)
        .collect();
    let mut cache: HashMap<Vec<u64>, Vec<f64>> = HashMap::new();
    let mut x = vec![0.0; finite.len()];
    let mut rng = stream_rng(params.seed, 0);
    let (times, states, event_count) = run_jump_process(
        n0_u,
        &arrivals,
        |s, out| {
            if let Some(rates) = cache.get(s) {
                out.clone_from(rates);
                return;
            }
            for (j, (&n, a)) in s.iter().zip(&access).enumerate() {
                x[j] = n as f64 * a;
            }
            let psi = allocation::saturated_allocate(topology, tree, sat, &x)
                .expect("validated saturation set");
            out.clear();
            out.extend(psi.iter().zip(&mu).map(|(p, m)| p * m));
            if cache.len() >= ALLOC_CACHE_CAP {
                cache.clear();
            }
            cache.insert(s.to_vec(), out.clone());
        },
        params.horizon,
        params.stride,
        &mut rng,
        |_, _| {},
    );
    Ok(Trajectory {
        times,
        states,
        event_count,
        seed: params.seed,
    })
}

/// Empirical stability verdict for one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Stable,
    Unstable,
    Inconclusive,
}

/// Thresholds for [`drift_classify`]. The defaults match the sweep settings;
/// everything is exposed because no classifier is canonical here.
#[derive(Debug, Clone)]
pub struct DriftConfig {
    /// Fraction of the horizon discarded before the slope fit.
    pub burn_in_frac: f64,
    /// Re-entries into `{n : |n|_1 <= |n0|_1}` required to call the path
    /// stable; positive recurrence manifests as regeneration.
    pub min_returns: u32,
    /// Slope significance threshold in standard errors.
    pub slope_sigmas: f64,
    /// Time bins the post-burn-in window is averaged over before the fit.
    /// Raw event samples are strongly autocorrelated and would make the
    /// slope error dishonestly small.
    pub slope_bins: usize,
    /// Quantile of the burn-in norms that sets the recurrence level. The
    /// level is floored by `|n0|_1`; a fixed level (the initial state alone)
    /// stops registering regeneration at small access rates, where the
    /// stationary flow counts scale like rho over the access rate.
    pub return_quantile: f64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        DriftConfig {
            burn_in_frac: 0.2,
            min_returns: 10,
            slope_sigmas: 3.0,
            slope_bins: 50,
            return_quantile: 0.5,
        }
    }
}

/// Classify a trajectory as stable / unstable / inconclusive.
///
/// The slope of `|n(t)|_1` over the post-burn-in window is fit by least
/// squares on time-binned means: a significantly positive slope means
/// unstable. Otherwise the path is stable when it keeps regenerating
/// (returns to the l1 ball of the initial state at least `min_returns`
/// times, or never leaves it at all).
pub fn drift_classify(traj: &Trajectory, cfg: &DriftConfig) -> Result<Verdict> {
    let t_end = *traj.times.last().expect("non-empty trajectory");
    let cutoff = t_end * cfg.burn_in_frac;
    let norms = traj.l1_norms();

    let post_samples = traj.times.iter().filter(|&&t| t >= cutoff).count();
    if post_samples < 3 || cfg.slope_bins < 3 || t_end <= cutoff {
        return Err(Error::TooShort {
            samples: post_samples,
        });
    }

    // Time-weighted mean of the piecewise-constant norm per bin.
    let bins = cfg.slope_bins;
    let width = (t_end - cutoff) / bins as f64;
    let mut sums = vec![0.0f64; bins];
    for (j, window) in traj.times.windows(2).enumerate() {
        let (seg_lo, seg_hi) = (window[0], window[1]);
        let value = norms[j];
        let mut a = seg_lo.max(cutoff);
        while a < seg_hi {
            let idx = (((a - cutoff) / width) as usize).min(bins - 1);
            let edge = cutoff + (idx + 1) as f64 * width;
            let mut end = edge.min(seg_hi);
            // Guard against a rounded-down final edge stalling the cursor.
            if end <= a {
                end = seg_hi;
            }
            sums[idx] += value * (end - a);
            a = end;
        }
    }
    let post: Vec<(f64, f64)> = sums
        .iter()
        .enumerate()
        .map(|(i, s)| (cutoff + (i as f64 + 0.5) * width, s / width))
        .collect();

    let m = post.len() as f64;
    let t_mean = post.iter().map(|p| p.0).sum::<f64>() / m;
    let y_mean = post.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = post.iter().map(|p| (p.0 - t_mean).powi(2)).sum();
    let sxy: f64 = post
        .iter()
        .map(|p| (p.0 - t_mean) * (p.1 - y_mean))
        .sum();
    let slope = sxy / sxx;
    let rss: f64 = post
        .iter()
        .map(|p| {
            let fit = y_mean + slope * (p.0 - t_mean);
            (p.1 - fit).powi(2)
        })
        .sum();
    let se = (rss / (m - 2.0) / sxx).sqrt();

    // Recurrence level: the burn-in median of the norm, floored by |n0|.
    let mut burn_norms: Vec<f64> = traj
        .times
        .iter()
        .zip(&norms)
        .filter(|(&t, _)| t < cutoff)
        .map(|(_, &y)| y)
        .collect();
    let bound = if burn_norms.is_empty() {
        norms[0]
    } else {
        burn_norms.sort_by(f64::total_cmp);
        let q = cfg.return_quantile.clamp(0.0, 1.0);
        let idx = ((burn_norms.len() - 1) as f64 * q).round() as usize;
        burn_norms[idx].max(norms[0])
    };
    let mut returns = 0u32;
    let mut outside = false;
    let mut never_left = true;
    for &y in &norms {
        if y > bound {
            outside = true;
            never_left = false;
        } else if outside {
            outside = false;
            returns += 1;
        }
    }

    if slope > 0.0 && slope > cfg.slope_sigmas * se {
        Ok(Verdict::Unstable)
    } else if never_left || returns >= cfg.min_returns {
        Ok(Verdict::Stable)
    } else {
        Ok(Verdict::Inconclusive)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_link_unit_linear(rho: [f64; 3]) -> Topology {
        Topology::build_linear(
            2,
            &[1.0, 1.0],
            &[
                (1.0, rho[0], 1.0),
                (1.0, rho[1], 1.0),
                (1.0, rho[2], 1.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn no_arrivals_from_empty_state_stays_zero() {
        let mut top = two_link_unit_linear([0.2, 0.3, 0.3]).to_spec();
        for c in &mut top.classes {
            c.lambda = 0.0;
        }
        let top = Topology::validate(&top).unwrap();
        let params = SimParams {
            horizon: 10.0,
            ..Default::default()
        };
        let traj = simulate(&top, &[0, 0, 0], &params).unwrap();
        assert!(traj.states.iter().all(|s| s.iter().all(|&n| n == 0)));
    }

    #[test]
    fn reproducible_for_equal_seeds() {
        let top = two_link_unit_linear([0.4, 0.5, 0.5]);
        let params = SimParams {
            horizon: 50.0,
            seed: 11,
            ..Default::default()
        };
        let a = simulate(&top, &[0, 0, 0], &params).unwrap();
        let b = simulate(&top, &[0, 0, 0], &params).unwrap();
        assert_eq!(a.times, b.times);
        assert_eq!(a.states, b.states);
        let c = simulate(
            &top,
            &[0, 0, 0],
            &SimParams {
                seed: 12,
                ..params
            },
        )
        .unwrap();
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn jumps_are_unit_steps_with_increasing_times() {
        let top = two_link_unit_linear([0.4, 0.5, 0.5]);
        let params = SimParams {
            horizon: 100.0,
            seed: 3,
            ..Default::default()
        };
        let traj = simulate(&top, &[1, 2, 3], &params).unwrap();
        for w in traj.times.windows(2) {
            assert!(w[1] > w[0]);
        }
        // All pairs except the repeated terminal sample differ by one unit in
        // exactly one coordinate.
        for pair in traj.states.windows(2).take(traj.states.len() - 2) {
            let diff: i64 = pair[0]
                .iter()
                .zip(&pair[1])
                .map(|(&a, &b)| (a as i64 - b as i64).abs())
                .sum();
            assert_eq!(diff, 1);
        }
    }

    #[test]
    fn departure_rates_match_allocation_example() {
        let top = two_link_unit_linear([0.2, 0.3, 0.3]);
        let mut rates = AllocRates::new(&top, 1.0);
        let mut out = Vec::new();
        rates.fill(&[1, 1, 1], &mut out);
        assert!((out[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((out[1] - 0.5).abs() < 1e-12);
        assert!((out[2] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn beta_one_scaling_is_identity() {
        let top = two_link_unit_linear([0.3, 0.4, 0.4]);
        let params = SimParams {
            horizon: 30.0,
            seed: 5,
            ..Default::default()
        };
        let plain = simulate(&top, &[0, 0, 0], &params).unwrap();
        let scaled = simulate_scaled(&top, &[0, 0, 0], &params).unwrap();
        assert_eq!(plain.times, scaled.raw.times);
        assert_eq!(plain.states, scaled.raw.states);
        for (s, raw) in scaled.scaled.iter().zip(&scaled.raw.states) {
            for (v, &n) in s.iter().zip(raw) {
                assert_eq!(*v, n as f64);
            }
        }
    }

    #[test]
    fn event_count_matches_rate_bookkeeping() {
        // Single link, single class, huge access rate: while busy the chain
        // is M/M/1 with arrival lambda and service mu * C, so the expected
        // event count over [0, T] is close to (lambda + mu * C) * T when the
        // queue never empties.
        let top = Topology::build_linear(1, &[1.0], &[(1e9, 2.0, 1.0), (1e9, 0.0, 1.0)]).unwrap();
        let t_end = 100.0;
        let mut counts = Vec::new();
        for seed in 0..100 {
            let params = SimParams {
                horizon: t_end,
                seed,
                stride: u64::MAX,
                beta: 1.0,
            };
            let traj = simulate(&top, &[5, 0], &params).unwrap();
            counts.push(traj.event_count as f64);
        }
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (counts.len() - 1) as f64;
        let se = (var / counts.len() as f64).sqrt();
        let expected = (2.0 + 1.0) * t_end;
        assert!(
            (mean - expected).abs() <= 3.0 * se + 1.0,
            "mean {mean} vs expected {expected} (se {se})"
        );
    }

    #[test]
    fn quasi_stationary_alpha_zero_is_loss_free_single_links() {
        let linear = LinearNetwork::build(
            3,
            &[1.0; 3],
            &[(1.0, 0.2, 1.0), (1.0, 0.2, 1.0), (1.0, 0.5, 1.0), (1.0, 0.5, 1.0)],
        )
        .unwrap();
        let params = SimParams {
            horizon: 200.0,
            seed: 9,
            ..Default::default()
        };
        let traj = simulate_quasi_stationary(&linear, 0.0, &[0, 0], &params).unwrap();
        assert!(traj.event_count > 0);
        // Death rate at alpha = 0 is mu_k * min(n_k a_k, 1); indirectly
        // validated through the allocation tests; here just shape checks.
        assert_eq!(traj.states[0].len(), 2);
    }

    #[test]
    fn quasi_stationary_supercritical_class_grows() {
        let linear = LinearNetwork::build(
            2,
            &[1.0, 1.0],
            &[(1.0, 0.2, 1.0), (1.0, 0.3, 1.0), (1.0, 1.4, 1.0)],
        )
        .unwrap();
        let params = SimParams {
            horizon: 2000.0,
            seed: 17,
            stride: 16,
            beta: 1.0,
        };
        let traj = simulate_quasi_stationary(&linear, 0.5, &[0], &params).unwrap();
        let verdict = drift_classify(&traj, &DriftConfig::default()).unwrap();
        assert_eq!(verdict, Verdict::Unstable);
        let last = traj.final_state()[0] as f64;
        assert!(last > 0.2 * 2000.0, "grows roughly linearly, got {last}");
    }

    #[test]
    fn classifier_trivial_cases() {
        let constant = Trajectory {
            times: (0..50).map(|i| i as f64).collect(),
            states: vec![vec![0, 0]; 50],
            event_count: 0,
            seed: 0,
        };
        assert_eq!(
            drift_classify(&constant, &DriftConfig::default()).unwrap(),
            Verdict::Stable
        );

        let pure_birth = Trajectory {
            times: (0..200).map(|i| i as f64 * 0.5).collect(),
            states: (0..200u64).map(|i| vec![i]).collect(),
            event_count: 199,
            seed: 0,
        };
        assert_eq!(
            drift_classify(&pure_birth, &DriftConfig::default()).unwrap(),
            Verdict::Unstable
        );

        let tiny = Trajectory {
            times: vec![0.0, 1.0],
            states: vec![vec![0], vec![1]],
            event_count: 1,
            seed: 0,
        };
        assert!(matches!(
            drift_classify(&tiny, &DriftConfig::default()),
            Err(Error::TooShort { .. })
        ));
    }
}
