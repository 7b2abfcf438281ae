//! Fluid-limit ODE systems.
//!
//! Four regimes share one fixed-step fourth-order integrator with projection
//! onto the non-negative orthant: the general phase of a linear network
//! (some local class still positive), the quasi-stationary averaged phase
//! (local classes empty, class-0 drift through a phibar evaluator), the
//! bounding processes driven by the monotone envelopes of phibar, and the
//! scaled law-of-large-numbers dynamics on an arbitrary acyclic topology.
//!
//! A component that reaches 0 with negative drift is held there by the
//! projection; the class-0/1 ratio at the origin is carried over from the
//! last state where it was defined.

use crate::allocation;
use crate::error::{Error, Result};
use crate::quasistat::EnvelopeTable;
use crate::topology::{LinearNetwork, Topology};

/// Discretized solution of a fluid system.
#[derive(Debug, Clone)]
pub struct FluidPath {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Ratio `z0 / (z0 + z1)` per sample; where undefined, the last valid
    /// value is carried (see module docs).
    pub alphas: Vec<f64>,
    /// First sample time at which each component is zero, if ever.
    pub hit_zero: Vec<Option<f64>>,
}

impl FluidPath {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("non-empty path")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("non-empty path")
    }

    /// First time both components 0 and 1 are zero.
    pub fn time_both_zero(&self) -> Option<f64> {
        self.times
            .iter()
            .zip(&self.states)
            .find(|(_, s)| s[0] <= 0.0 && s[1] <= 0.0)
            .map(|(&t, _)| t)
    }
}

fn validate_step(t_end: f64, step: f64) -> Result<()> {
    if t_end <= 0.0 || !t_end.is_finite() || step <= 0.0 || step.is_nan() || step >= t_end {
        return Err(Error::InvalidParams(format!(
            "need 0 < step < T, got step {step}, T {t_end}"
        )));
    }
    Ok(())
}

/// RK4 with post-stage and post-step projection at zero. `rhs(state, alpha)`
/// sees the carried ratio; the callback records each accepted sample.
fn run_projected_rk4(
    z0: &[f64],
    t_end: f64,
    step: f64,
    mut rhs: impl FnMut(&[f64], f64) -> Vec<f64>,
    mut alpha0: f64,
    mut on_sample: impl FnMut(f64, &[f64], f64) -> bool,
) {
    let dim = z0.len();
    let mut z = z0.to_vec();
    let ratio = |s: &[f64], last: f64| -> f64 {
        let tot = s[0] + s[1];
        if tot > 0.0 {
            s[0] / tot
        } else {
            last
        }
    };
    if dim >= 2 {
        alpha0 = ratio(&z, alpha0);
    }
    let mut alpha = alpha0;
    if !on_sample(0.0, &z, alpha) {
        return;
    }
    let n_steps = (t_end / step).ceil() as usize;
    let clamp = |mut s: Vec<f64>| {
        for v in &mut s {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        s
    };
    for i in 1..=n_steps {
        let dt = step.min(t_end - (i - 1) as f64 * step);
        let k1 = rhs(&z, alpha);
        let s2 = clamp(z.iter().zip(&k1).map(|(v, k)| v + 0.5 * dt * k).collect());
        let a2 = if dim >= 2 { ratio(&s2, alpha) } else { alpha };
        let k2 = rhs(&s2, a2);
        let s3 = clamp(z.iter().zip(&k2).map(|(v, k)| v + 0.5 * dt * k).collect());
        let a3 = if dim >= 2 { ratio(&s3, alpha) } else { alpha };
        let k3 = rhs(&s3, a3);
        let s4 = clamp(z.iter().zip(&k3).map(|(v, k)| v + dt * k).collect());
        let a4 = if dim >= 2 { ratio(&s4, alpha) } else { alpha };
        let k4 = rhs(&s4, a4);
        for j in 0..dim {
            z[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            if z[j] < 0.0 {
                z[j] = 0.0;
            }
        }
        if dim >= 2 {
            alpha = ratio(&z, alpha);
        }
        let t = (i as f64 * step).min(t_end);
        if !on_sample(t, &z, alpha) {
            return;
        }
    }
}

struct PathRecorder {
    path: FluidPath,
}

impl PathRecorder {
    fn new(dim: usize) -> Self {
        PathRecorder {
            path: FluidPath {
                times: Vec::new(),
                states: Vec::new(),
                alphas: Vec::new(),
                hit_zero: vec![None; dim],
            },
        }
    }

    fn push(&mut self, t: f64, z: &[f64], alpha: f64) {
        self.path.times.push(t);
        self.path.states.push(z.to_vec());
        self.path.alphas.push(alpha);
        for (j, &v) in z.iter().enumerate() {
            if v <= 0.0 && self.path.hit_zero[j].is_none() {
                self.path.hit_zero[j] = Some(t);
            }
        }
    }
}

/// General-phase dynamics of a linear network while some local class is
/// positive: class 0 gets zero throughput and grows at `lambda0`, class 1
/// keeps its share of link 1, the local classes drain (or grow) at constant
/// rate with projection at zero. The path is truncated at the first time all
/// local components vanish.
pub fn integrate_general(
    linear: &LinearNetwork,
    z0: &[f64],
    t_end: f64,
    step: f64,
) -> Result<FluidPath> {
    validate_step(t_end, step)?;
    let dim = linear.n_links() + 1;
    if z0.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: z0.len(),
        });
    }
    if z0.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidParams("fluid states are non-negative".into()));
    }
    let lambda0 = linear.class(0).lambda;
    let lambda1 = linear.class(1).lambda;
    if z0[0] + z0[1] == 0.0 && lambda0 + lambda1 == 0.0 {
        return Err(Error::DegenerateStart);
    }
    let mu1 = linear.class(1).mu;
    let drift_local: Vec<f64> = (2..dim).map(|k| {
        let c = linear.class(k);
        c.lambda - c.mu
    })
    .collect();

    let mut rec = PathRecorder::new(dim);
    run_projected_rk4(
        z0,
        t_end,
        step,
        |_z, alpha| {
            let mut d = Vec::with_capacity(dim);
            d.push(lambda0);
            d.push(lambda1 - mu1 * (1.0 - alpha));
            // Projection handles the indicator: a drained class with
            // negative drift stays at zero.
            d.extend_from_slice(&drift_local);
            d
        },
        0.5,
        |t, z, alpha| {
            rec.push(t, z, alpha);
            // Truncate once every local class is empty.
            !(z[2..].iter().all(|&v| v <= 0.0))
        },
    );
    Ok(rec.path)
}

/// Averaged dynamics once the local classes are empty: the class-0 drift
/// goes through the injected phibar evaluator, the local components stay
/// pinned at zero.
pub fn integrate_quasi_stationary(
    linear: &LinearNetwork,
    z0: &[f64],
    phibar: impl Fn(f64) -> f64,
    t_end: f64,
    step: f64,
) -> Result<FluidPath> {
    validate_step(t_end, step)?;
    let dim = linear.n_links() + 1;
    if z0.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: z0.len(),
        });
    }
    if z0[2..].iter().any(|&v| v != 0.0) {
        return Err(Error::NonzeroLocalClasses);
    }
    if z0[0] + z0[1] <= 0.0 {
        return Err(Error::DegenerateStart);
    }
    let (l0, m0) = (linear.class(0).lambda, linear.class(0).mu);
    let (l1, m1) = (linear.class(1).lambda, linear.class(1).mu);

    let mut rec = PathRecorder::new(dim);
    run_projected_rk4(
        &z0[..2],
        t_end,
        step,
        |z, alpha| {
            let pinned = z[0] <= 0.0 && z[1] <= 0.0;
            let d0 = l0 - m0 * phibar(alpha);
            let d1 = l1 - m1 * (1.0 - alpha);
            // Once empty with sub-critical drifts the fluid stays at zero.
            if pinned && d0 <= 0.0 && d1 <= 0.0 {
                vec![0.0, 0.0]
            } else {
                vec![d0, d1]
            }
        },
        0.5,
        |t, z, alpha| {
            let mut full = vec![0.0; dim];
            full[0] = z[0];
            full[1] = z[1];
            rec.push(t, &full, alpha);
            true
        },
    );
    Ok(rec.path)
}

/// Which bounding process to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundDirection {
    /// Upper bound: class-0 drift through the inf-envelope `f <= phibar`.
    Upper,
    /// Lower bound: class-0 drift through the sup-envelope `g >= phibar`.
    Lower,
}

/// Where the ratio dynamics trap the bounding process.
#[derive(Debug, Clone)]
pub struct BandReport {
    /// Critical ratio where the envelope crosses rho0.
    pub alpha0: f64,
    /// Margin for which the trapping inequalities verify numerically.
    pub eta: Option<f64>,
    /// The trapping band, when a valid margin exists.
    pub band: Option<(f64, f64)>,
    /// First sample time with the ratio inside the band.
    pub entry_time: Option<f64>,
    /// Whether the ratio stayed in the band after entering (up to one
    /// integration step's worth of drift).
    pub stayed_in_band: Option<bool>,
}

/// Result of integrating a bounding process.
#[derive(Debug, Clone)]
pub struct BoundResult {
    pub path: FluidPath,
    pub report: BandReport,
}

fn band_for(
    direction: BoundDirection,
    env: &EnvelopeTable,
    rho0: f64,
    rho1: f64,
    lambda: (f64, f64),
    mu: (f64, f64),
) -> BandReport {
    let beta_at = |alpha: f64| -> f64 {
        (lambda.0 - mu.0 * env.eval(alpha)) * (1.0 - alpha)
            - (lambda.1 - mu.1 * (1.0 - alpha)) * alpha
    };
    // Crossings of the monotone envelope with rho0, by bisection on the grid.
    let lo_cross = |target: f64| -> f64 {
        // Largest alpha with env(alpha) <= target (0 if env always above).
        let mut lo = 0.0;
        let mut hi = 1.0;
        if env.eval(0.0) > target {
            return 0.0;
        }
        if env.eval(1.0) <= target {
            return 1.0;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if env.eval(mid) <= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let (alpha0, raw) = match direction {
        BoundDirection::Upper => {
            let a0 = lo_cross(rho0);
            (a0, (a0, 1.0 - rho1))
        }
        BoundDirection::Lower => {
            // Smallest alpha with env(alpha) >= rho0, or 1 if never reached.
            let a0 = if env.eval(1.0) < rho0 {
                1.0
            } else {
                let mut lo = 0.0;
                let mut hi = 1.0;
                if env.eval(0.0) >= rho0 {
                    hi = 0.0;
                }
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if env.eval(mid) >= rho0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi
            };
            (a0, (1.0 - rho1, a0))
        }
    };
    let width = raw.1 - raw.0;
    let mut chosen = None;
    if width > 0.0 {
        let mut eta = width / 4.0;
        for _ in 0..14 {
            let (lo, hi) = (raw.0 + eta, raw.1 - eta);
            let ok = match direction {
                BoundDirection::Upper => beta_at(lo) > 0.0 && beta_at(hi) < 0.0,
                BoundDirection::Lower => beta_at(lo) > 0.0 && beta_at(hi) < 0.0,
            };
            if ok && lo < hi {
                chosen = Some((eta, (lo, hi)));
                break;
            }
            eta *= 0.5;
        }
    }
    BandReport {
        alpha0,
        eta: chosen.map(|c| c.0),
        band: chosen.map(|c| c.1),
        entry_time: None,
        stayed_in_band: None,
    }
}

/// Integrate the bounding dynamics of classes 0 and 1 with the class-0 term
/// replaced by a monotone envelope, and report the ratio band behavior.
pub fn integrate_bound(
    linear: &LinearNetwork,
    z0: &[f64],
    env: &EnvelopeTable,
    direction: BoundDirection,
    t_end: f64,
    step: f64,
) -> Result<BoundResult> {
    validate_step(t_end, step)?;
    if env.alphas.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if z0.len() < 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: z0.len(),
        });
    }
    if z0[0] + z0[1] <= 0.0 {
        return Err(Error::DegenerateStart);
    }
    let (l0, m0) = (linear.class(0).lambda, linear.class(0).mu);
    let (l1, m1) = (linear.class(1).lambda, linear.class(1).mu);
    let rho0 = linear.class(0).rho();
    let rho1 = linear.class(1).rho();

    let mut rec = PathRecorder::new(2);
    run_projected_rk4(
        &z0[..2],
        t_end,
        step,
        |z, alpha| {
            let pinned = z[0] <= 0.0 && z[1] <= 0.0;
            let d0 = l0 - m0 * env.eval(alpha);
            let d1 = l1 - m1 * (1.0 - alpha);
            if pinned && d0 <= 0.0 && d1 <= 0.0 {
                vec![0.0, 0.0]
            } else {
                vec![d0, d1]
            }
        },
        0.5,
        |t, z, alpha| {
            rec.push(t, z, alpha);
            true
        },
    );
    let path = rec.path;

    let mut report = band_for(direction, env, rho0, rho1, (l0, l1), (m0, m1));
    if let Some((lo, hi)) = report.band {
        // Band membership only makes sense while fluid remains; once both
        // components are pinned at zero the ratio is a stale carry-over.
        let max_jump = path
            .alphas
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0, f64::max);
        let tol = max_jump + 1e-12;
        let alive = |idx: usize| path.states[idx][0] + path.states[idx][1] > 0.0;
        let entry = path
            .alphas
            .iter()
            .enumerate()
            .find(|(i, &a)| alive(*i) && a >= lo && a <= hi)
            .map(|(i, _)| i);
        if let Some(start) = entry {
            report.entry_time = Some(path.times[start]);
            report.stayed_in_band = Some(
                path.alphas[start..]
                    .iter()
                    .enumerate()
                    .all(|(off, &a)| !alive(start + off) || (a >= lo - tol && a <= hi + tol)),
            );
        }
    }
    Ok(BoundResult { path, report })
}

/// Result of integrating the scaled law-of-large-numbers dynamics.
#[derive(Debug, Clone)]
pub struct LlnResult {
    pub path: FluidPath,
    /// Sup-norm of `psi(x_T) - rho` over classes.
    pub residual: f64,
    /// Whether the terminal state nulls every drift within `tolerance`.
    pub at_fixed_point: bool,
}

/// Integrate `dx_k = a_k (lambda_k - mu_k psi_k(x))` with projection at zero
/// and check the terminal state against the drift-balance fixed point.
pub fn integrate_lln(
    topology: &Topology,
    x0: &[f64],
    t_end: f64,
    step: f64,
    tolerance: f64,
) -> Result<LlnResult> {
    validate_step(t_end, step)?;
    if x0.len() != topology.n_classes() {
        return Err(Error::DimensionMismatch {
            expected: topology.n_classes(),
            got: x0.len(),
        });
    }
    let params: Vec<(f64, f64, f64)> = topology
        .classes()
        .iter()
        .map(|c| (c.access_rate, c.lambda, c.mu))
        .collect();
    let mut rec = PathRecorder::new(x0.len());
    run_projected_rk4(
        x0,
        t_end,
        step,
        |x, _| {
            let psi = allocation::allocate(topology, x)
                .expect("dimensions validated")
                .psi;
            params
                .iter()
                .zip(&psi)
                .map(|(&(a, l, m), &p)| a * (l - m * p))
                .collect()
        },
        0.5,
        |t, z, alpha| {
            rec.push(t, z, alpha);
            true
        },
    );
    let path = rec.path;
    let terminal = path.final_state().to_vec();
    let psi = allocation::allocate(topology, &terminal)?.psi;
    let residual = topology
        .classes()
        .iter()
        .zip(&psi)
        .map(|(c, &p)| (p - c.rho()).abs())
        .fold(0.0, f64::max);
    Ok(LlnResult {
        at_fixed_point: residual <= tolerance,
        path,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quasistat::{envelope, tabulate_limit, EnvelopeMode};

    fn linear(rho: [f64; 3]) -> LinearNetwork {
        LinearNetwork::build(
            2,
            &[1.0, 1.0],
            &[(1.0, rho[0], 1.0), (1.0, rho[1], 1.0), (1.0, rho[2], 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn zero_drift_local_class_stays_constant() {
        let lin = linear([0.2, 0.3, 1.0]); // rho2 = 1: zero drift
        let path = integrate_general(&lin, &[0.5, 0.5, 0.7], 5.0, 1e-3).unwrap();
        for s in &path.states {
            assert!((s[2] - 0.7).abs() < 1e-9);
        }
        assert_eq!(path.final_time(), 5.0);
    }

    #[test]
    fn subcritical_local_class_drains_at_known_time() {
        let lin = linear([0.2, 0.3, 0.3]);
        let step = 1e-3;
        let path = integrate_general(&lin, &[0.0, 0.0, 1.0], 10.0, step).unwrap();
        // Drain time z / (mu - lambda) = 1 / 0.7; the path truncates there.
        let expect = 1.0 / 0.7;
        let hit = path.hit_zero[2].expect("local class drains");
        assert!((hit - expect).abs() <= 2.0 * step, "hit {hit} vs {expect}");
        assert!((path.final_time() - expect).abs() <= 2.0 * step);
        // Class 0 grows as lambda0 * t while the general phase lasts.
        let z0_end = path.final_state()[0];
        assert!((z0_end - 0.2 * path.final_time()).abs() < 1e-6);
    }

    #[test]
    fn supercritical_local_class_grows_forever() {
        let lin = linear([0.2, 0.3, 1.4]);
        let path = integrate_general(&lin, &[0.1, 0.1, 0.5], 20.0, 1e-3).unwrap();
        assert_eq!(path.final_time(), 20.0);
        let z2 = path.final_state()[2];
        assert!((z2 - (0.5 + 0.4 * 20.0)).abs() < 1e-6);
    }

    #[test]
    fn quasi_stationary_constant_phibar_drains_both() {
        let lin = linear([0.2, 0.3, 0.3]);
        let path =
            integrate_quasi_stationary(&lin, &[0.5, 0.5, 0.0], |_| 0.6, 30.0, 1e-3).unwrap();
        assert!(path.time_both_zero().is_some());
        let end = path.final_state();
        assert_eq!(end[0], 0.0);
        assert_eq!(end[1], 0.0);
    }

    #[test]
    fn quasi_stationary_rejects_bad_starts() {
        let lin = linear([0.2, 0.3, 0.3]);
        assert!(matches!(
            integrate_quasi_stationary(&lin, &[0.0, 0.0, 0.0], |_| 0.5, 1.0, 1e-3),
            Err(Error::DegenerateStart)
        ));
        assert!(matches!(
            integrate_quasi_stationary(&lin, &[0.5, 0.5, 0.1], |_| 0.5, 1.0, 1e-3),
            Err(Error::NonzeroLocalClasses)
        ));
    }

    #[test]
    fn stationary_ratio_on_the_balanced_ray() {
        // phibar = limit formula with rho = (0.5, 0.3, 0.5): both drifts
        // vanish at alpha = 0.7, so the ratio must not move.
        let lin = linear([0.5, 0.3, 0.5]);
        let table = tabulate_limit(&[0.5], 0.02).unwrap();
        let path = integrate_quasi_stationary(
            &lin,
            &[0.7, 0.3, 0.0],
            |a| table.eval(a),
            10.0,
            1e-3,
        )
        .unwrap();
        for &a in &path.alphas {
            assert!((a - 0.7).abs() < 1e-6, "ratio drifted to {a}");
        }
    }

    #[test]
    fn upper_bound_reaches_zero_under_stability_hypotheses() {
        let lin = linear([0.15, 0.3, 0.3]);
        let table = tabulate_limit(&[0.3], 0.02).unwrap();
        let f = envelope(&table.alphas, &table.values, EnvelopeMode::InfUpper).unwrap();
        let out = integrate_bound(&lin, &[0.5, 0.5], &f, BoundDirection::Upper, 60.0, 1e-3).unwrap();
        let zero_at = out.path.time_both_zero().expect("upper bound drains");
        assert!(zero_at < 60.0);
        assert!(out.report.band.is_some());
        assert_eq!(out.report.stayed_in_band, Some(true));
    }

    #[test]
    fn lower_bound_grows_when_rho0_exceeds_sup() {
        let lin = linear([0.75, 0.3, 0.3]);
        let table = tabulate_limit(&[0.3], 0.02).unwrap();
        let g = envelope(&table.alphas, &table.values, EnvelopeMode::SupLower).unwrap();
        let out = integrate_bound(&lin, &[0.3, 0.7], &g, BoundDirection::Lower, 80.0, 1e-3).unwrap();
        let n = out.path.states.len();
        let half = n / 2;
        // Positive slope of both components over the final half.
        let d0 = out.path.states[n - 1][0] - out.path.states[half][0];
        let d1 = out.path.states[n - 1][1] - out.path.states[half][1];
        let dt = out.path.times[n - 1] - out.path.times[half];
        assert!(d0 / dt > 0.0, "class 0 must grow, slope {}", d0 / dt);
        assert!(d1 / dt > 0.0, "class 1 must grow, slope {}", d1 / dt);
    }

    #[test]
    fn bounds_dominate_the_averaged_path() {
        // From the same start and phibar table, the upper process stays
        // above the averaged dynamics and the lower process below.
        let lin = linear([0.3, 0.4, 0.4]);
        let table = tabulate_limit(&[0.4], 0.02).unwrap();
        let z0 = [0.6, 0.4, 0.0];
        let mid =
            integrate_quasi_stationary(&lin, &z0, |a| table.eval(a), 25.0, 1e-3).unwrap();
        let f = envelope(&table.alphas, &table.values, EnvelopeMode::InfUpper).unwrap();
        let g = envelope(&table.alphas, &table.values, EnvelopeMode::SupLower).unwrap();
        let upper =
            integrate_bound(&lin, &z0[..2], &f, BoundDirection::Upper, 25.0, 1e-3).unwrap();
        let lower =
            integrate_bound(&lin, &z0[..2], &g, BoundDirection::Lower, 25.0, 1e-3).unwrap();
        for i in 0..mid.states.len() {
            for k in 0..2 {
                assert!(
                    upper.path.states[i][k] >= mid.states[i][k] - 1e-9,
                    "upper bound broken at sample {i} component {k}"
                );
                assert!(
                    lower.path.states[i][k] <= mid.states[i][k] + 1e-9,
                    "lower bound broken at sample {i} component {k}"
                );
            }
        }
    }

    #[test]
    fn degenerate_envelopes_reduce_to_quasi_stationary() {
        let lin = linear([0.2, 0.3, 0.3]);
        let c = 0.45;
        let grid = [0.0, 0.5, 1.0];
        let flat = envelope(&grid, &[c, c, c], EnvelopeMode::InfUpper).unwrap();
        let qs = integrate_quasi_stationary(&lin, &[0.4, 0.6, 0.0], |_| c, 20.0, 1e-3).unwrap();
        let bound =
            integrate_bound(&lin, &[0.4, 0.6], &flat, BoundDirection::Upper, 20.0, 1e-3).unwrap();
        for (a, b) in qs.states.iter().zip(&bound.path.states) {
            assert!((a[0] - b[0]).abs() < 1e-9);
            assert!((a[1] - b[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn lln_fixed_point_is_stationary() {
        let lin = linear([0.2, 0.3, 0.3]);
        let top = lin.topology();
        let out = integrate_lln(top, &[0.2, 0.3, 0.3], 10.0, 1e-3, 1e-9).unwrap();
        assert!(out.at_fixed_point);
        for s in &out.path.states {
            assert!((s[0] - 0.2).abs() < 1e-9);
            assert!((s[1] - 0.3).abs() < 1e-9);
            assert!((s[2] - 0.3).abs() < 1e-9);
        }
    }

    #[test]
    fn lln_converges_from_origin() {
        let lin = linear([0.2, 0.3, 0.3]);
        let out = integrate_lln(lin.topology(), &[0.0, 0.0, 0.0], 200.0, 1e-2, 1e-3).unwrap();
        assert!(out.at_fixed_point, "residual {}", out.residual);
        let end = out.path.final_state();
        assert!((end[0] - 0.2).abs() < 1e-3);
        assert!((end[1] - 0.3).abs() < 1e-3);
        assert!((end[2] - 0.3).abs() < 1e-3);
    }

    #[test]
    fn lln_without_fixed_point_keeps_growing() {
        // rho0 + rho2 > 1: no drift balance exists.
        let lin = linear([0.6, 0.2, 0.6]);
        let out = integrate_lln(lin.topology(), &[0.0, 0.0, 0.0], 100.0, 1e-2, 1e-6).unwrap();
        assert!(!out.at_fixed_point);
        let norm: f64 = out.path.final_state().iter().sum();
        assert!(norm > 1.0, "state should grow, |x| = {norm}");
    }

    #[test]
    fn step_halving_richardson() {
        let lin = linear([0.2, 0.3, 0.3]);
        let coarse =
            integrate_quasi_stationary(&lin, &[0.8, 0.2, 0.0], |a| a.min(0.7), 5.0, 2e-3).unwrap();
        let fine =
            integrate_quasi_stationary(&lin, &[0.8, 0.2, 0.0], |a| a.min(0.7), 5.0, 1e-3).unwrap();
        let zc = coarse.final_state();
        let zf = fine.final_state();
        assert!((zc[0] - zf[0]).abs() < 2e-3);
        assert!((zc[1] - zf[1]).abs() < 2e-3);
    }
}
