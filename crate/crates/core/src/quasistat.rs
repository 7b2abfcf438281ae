//! Average class-0 throughput in the quasi-stationary regime.
//!
//! With the class-0 rate after link 1 frozen at `alpha`, the local classes
//! `2..=L` form an ergodic Markov chain whenever every local rho is below 1;
//! `phibar(alpha)` is the stationary mean of the class-0 share. Three routes
//! compute it: Monte Carlo time averages (any L), an exact truncated
//! detailed-balance solve (L = 2, the chain is birth-death), and the closed
//! form of the small-access-rate limit. The envelopes of a sampled phibar
//! feed the bounding fluid processes and the stability verdicts.

use std::cell::RefCell;
use std::collections::HashMap;

use rayon::prelude::*;

use crate::allocation::qs_shares_unchecked;
use crate::ctmc::{run_jump_process, SimParams};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::topology::LinearNetwork;

/// How a [`PhiBarEstimate`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiBarMethod {
    MonteCarlo,
    ExactTruncated,
    LimitFormula,
}

impl PhiBarMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            PhiBarMethod::MonteCarlo => "mc",
            PhiBarMethod::ExactTruncated => "exact",
            PhiBarMethod::LimitFormula => "limit",
        }
    }
}

/// One phibar value with its uncertainty.
#[derive(Debug, Clone)]
pub struct PhiBarEstimate {
    pub alpha: f64,
    pub value: f64,
    pub method: PhiBarMethod,
    /// Batch-means standard error (Monte Carlo only).
    pub std_error: Option<f64>,
    /// Relative stationary mass beyond the truncation (exact solve only).
    pub truncation_mass: Option<f64>,
    /// Access-rate scaling the estimate was computed under.
    pub beta: f64,
}

/// Burn-in and batching for the Monte Carlo estimators.
#[derive(Debug, Clone)]
pub struct EstimatorOptions {
    pub burn_in_frac: f64,
    pub batches: usize,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            burn_in_frac: 0.2,
            batches: 20,
        }
    }
}

fn check_local_ergodic(rho_local: &[f64]) -> Result<()> {
    for (j, &rho) in rho_local.iter().enumerate() {
        if rho >= 1.0 {
            return Err(Error::NotErgodic {
                class: j as u32 + 2,
                rho,
            });
        }
    }
    Ok(())
}

/// Splits time-weighted samples into equal batches over the post-burn-in
/// window; a sojourn crossing batch edges is divided exactly.
struct BatchAccumulator {
    burn: f64,
    width: f64,
    sums: Vec<f64>,
    t: f64,
}

impl BatchAccumulator {
    fn new(horizon: f64, burn_in_frac: f64, batches: usize) -> Self {
        let burn = horizon * burn_in_frac;
        BatchAccumulator {
            burn,
            width: (horizon - burn) / batches as f64,
            sums: vec![0.0; batches],
            t: 0.0,
        }
    }

    fn add(&mut self, value: f64, dt: f64) {
        let lo = self.t;
        self.t += dt;
        let hi = self.t;
        let mut a = lo.max(self.burn);
        while a < hi {
            let idx = (((a - self.burn) / self.width) as usize).min(self.sums.len() - 1);
            let edge = self.burn + (idx + 1) as f64 * self.width;
            let mut end = edge.min(hi);
            // Guard against a rounded-down final edge stalling the cursor.
            if end <= a {
                end = hi;
            }
            self.sums[idx] += value * (end - a);
            a = end;
        }
    }

    /// Mean of batch means and its standard error.
    fn finish(&self) -> (f64, f64) {
        let means: Vec<f64> = self.sums.iter().map(|s| s / self.width).collect();
        let b = means.len() as f64;
        let mean = means.iter().sum::<f64>() / b;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (b - 1.0);
        (mean, (var / b).sqrt())
    }
}

/// Monte Carlo estimate of phibar(alpha) under the scaling `beta`.
///
/// Runs the beta-scaled quasi-stationary chain from the empty state and
/// time-averages the class-0 share after burn-in, with batch-means errors.
pub fn phibar_scaled_mc(
    linear: &LinearNetwork,
    alpha: f64,
    beta: f64,
    params: &SimParams,
    opts: &EstimatorOptions,
) -> Result<PhiBarEstimate> {
    linear.has_unit_capacities()?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    check_local_ergodic(&linear.local_rho())?;
    if beta < 1.0 || !beta.is_finite() {
        return Err(Error::InvalidParams(format!("beta must be >= 1, got {beta}")));
    }
    if opts.batches < 2 {
        return Err(Error::InvalidParams("need at least 2 batches".into()));
    }
    if !(0.0..1.0).contains(&opts.burn_in_frac) {
        return Err(Error::InvalidParams(format!(
            "burn-in fraction must lie in [0, 1), got {}",
            opts.burn_in_frac
        )));
    }

    let local = linear.n_links() - 1;
    let lambda: Vec<f64> = (2..=linear.n_links())
        .map(|k| linear.class(k).lambda * beta)
        .collect();
    let mu: Vec<f64> = (2..=linear.n_links())
        .map(|k| linear.class(k).mu * beta)
        .collect();
    let access: Vec<f64> = (2..=linear.n_links())
        .map(|k| linear.class(k).access_rate / beta)
        .collect();

    // The death-rate closure and the observer share one memo of
    // (class-0 share, death rates) per state.
    type ShareMemo = HashMap<Vec<u64>, (f64, Vec<f64>)>;
    let cache: RefCell<ShareMemo> = RefCell::new(HashMap::new());
    let eval = |s: &[u64]| -> (f64, Vec<f64>) {
        if let Some(hit) = cache.borrow().get(s) {
            return hit.clone();
        }
        let x: Vec<f64> = s.iter().zip(&access).map(|(&n, a)| n as f64 * a).collect();
        let qs = qs_shares_unchecked(alpha, &x);
        let deaths: Vec<f64> = qs.psi_local.iter().zip(&mu).map(|(p, m)| p * m).collect();
        let mut cache = cache.borrow_mut();
        if cache.len() >= 1 << 20 {
            cache.clear();
        }
        cache.insert(s.to_vec(), (qs.psi0, deaths.clone()));
        (qs.psi0, deaths)
    };

    let mut acc = BatchAccumulator::new(params.horizon, opts.burn_in_frac, opts.batches);
    let mut rng = stream_rng(params.seed, 0);
    let n0 = vec![0u64; local];
    run_jump_process(
        &n0,
        &lambda,
        |s, out| {
            let (_, d) = eval(s);
            out.clone_from(&d);
        },
        params.horizon,
        u64::MAX,
        &mut rng,
        |s, dt| {
            let (share, _) = eval(s);
            acc.add(share, dt);
        },
    );
    let (value, se) = acc.finish();
    Ok(PhiBarEstimate {
        alpha,
        value,
        method: PhiBarMethod::MonteCarlo,
        std_error: Some(se),
        truncation_mass: None,
        beta,
    })
}

/// Monte Carlo estimate of phibar(alpha) for the unscaled chain.
pub fn phibar_mc(
    linear: &LinearNetwork,
    alpha: f64,
    params: &SimParams,
    opts: &EstimatorOptions,
) -> Result<PhiBarEstimate> {
    phibar_scaled_mc(linear, alpha, 1.0, params, opts)
}

/// Exact phibar for L = 2 by detailed balance of the one-dimensional
/// birth-death chain, truncated at `n_max`.
///
/// Only the ratio `rho2 = lambda2 / mu2` enters the stationary law. Errors
/// with `TruncationTooSmall` when the estimated relative tail mass beyond
/// `n_max` is not below `mass_threshold`.
pub fn phibar_exact_l2(
    rho2: f64,
    a2: f64,
    alpha: f64,
    n_max: usize,
    mass_threshold: f64,
) -> Result<PhiBarEstimate> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    if rho2 >= 1.0 {
        return Err(Error::NotErgodic { class: 2, rho: rho2 });
    }
    if rho2 <= 0.0 || a2 <= 0.0 || !rho2.is_finite() || !a2.is_finite() || n_max == 0 {
        return Err(Error::InvalidParams(
            "phibar_exact_l2 needs rho2 > 0, a2 > 0 and n_max >= 1".into(),
        ));
    }

    let share2 = |n: usize| -> f64 {
        let x = n as f64 * a2;
        let total = alpha + x;
        if total > 1.0 {
            x / total
        } else {
            x
        }
    };
    let share0 = |n: usize| -> f64 {
        let x = n as f64 * a2;
        let total = alpha + x;
        if total > 1.0 {
            alpha / total
        } else {
            alpha
        }
    };

    // Detailed balance in the log domain: pi(n+1) / pi(n) = rho2 / share2(n+1).
    let mut logw = Vec::with_capacity(n_max + 1);
    logw.push(0.0f64);
    for n in 1..=n_max {
        let prev = *logw.last().expect("non-empty");
        logw.push(prev + rho2.ln() - share2(n).ln());
    }
    let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    let mut value = 0.0;
    for (n, lw) in logw.iter().enumerate() {
        let w = (lw - top).exp();
        z += w;
        value += w * share0(n);
    }
    // Beyond n_max the balance ratio tends to rho2; bound the tail by the
    // geometric series.
    let tail = (logw[n_max] - top).exp() * rho2 / (1.0 - rho2);
    let truncation_mass = tail / z;
    if truncation_mass.is_nan() || truncation_mass >= mass_threshold {
        return Err(Error::TruncationTooSmall {
            n_max,
            mass: truncation_mass,
        });
    }
    Ok(PhiBarEstimate {
        alpha,
        value: value / z,
        method: PhiBarMethod::ExactTruncated,
        std_error: None,
        truncation_mass: Some(truncation_mass),
        beta: 1.0,
    })
}

/// Brute-force stationary solve of the truncated L = 3 quasi-stationary
/// chain by power iteration on the uniformized kernel. Cross-check tool
/// only: the state space is (n_max + 1)^2, keep `n_max` small.
pub fn phibar_exact_l3(linear: &LinearNetwork, alpha: f64, n_max: usize) -> Result<PhiBarEstimate> {
    linear.has_unit_capacities()?;
    if linear.n_links() != 3 {
        return Err(Error::NotLinear("exact L = 3 solver needs 3 links".into()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    check_local_ergodic(&linear.local_rho())?;
    if n_max == 0 || n_max > 60 {
        return Err(Error::InvalidParams(
            "n_max must be between 1 and 60 per dimension".into(),
        ));
    }

    let lambda = [linear.class(2).lambda, linear.class(3).lambda];
    let mu = [linear.class(2).mu, linear.class(3).mu];
    let a = [linear.class(2).access_rate, linear.class(3).access_rate];
    let side = n_max + 1;
    let states = side * side;
    let idx = |n2: usize, n3: usize| n2 * side + n3;

    let mut deaths = vec![[0.0f64; 2]; states];
    let mut share0 = vec![0.0f64; states];
    for n2 in 0..side {
        for n3 in 0..side {
            let qs = qs_shares_unchecked(alpha, &[n2 as f64 * a[0], n3 as f64 * a[1]]);
            deaths[idx(n2, n3)] = [qs.psi_local[0] * mu[0], qs.psi_local[1] * mu[1]];
            share0[idx(n2, n3)] = qs.psi0;
        }
    }

    let uniform = lambda[0] + lambda[1] + mu[0] + mu[1];
    let mut pi = vec![1.0 / states as f64; states];
    let mut next = vec![0.0f64; states];
    let max_iter = 200_000;
    let mut converged = false;
    for _ in 0..max_iter {
        next.iter_mut().for_each(|v| *v = 0.0);
        for n2 in 0..side {
            for n3 in 0..side {
                let i = idx(n2, n3);
                let p = pi[i];
                if p == 0.0 {
                    continue;
                }
                let mut stay = uniform;
                let d = deaths[i];
                if n2 + 1 < side {
                    next[idx(n2 + 1, n3)] += p * lambda[0] / uniform;
                    stay -= lambda[0];
                }
                if n3 + 1 < side {
                    next[idx(n2, n3 + 1)] += p * lambda[1] / uniform;
                    stay -= lambda[1];
                }
                if n2 > 0 {
                    next[idx(n2 - 1, n3)] += p * d[0] / uniform;
                    stay -= d[0];
                }
                if n3 > 0 {
                    next[idx(n2, n3 - 1)] += p * d[1] / uniform;
                    stay -= d[1];
                }
                next[i] += p * stay / uniform;
            }
        }
        let delta: f64 = pi.iter().zip(&next).map(|(x, y)| (x - y).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if delta < 1e-13 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence(max_iter));
    }
    let boundary: f64 = (0..side).map(|n| pi[idx(n_max, n)] + pi[idx(n, n_max)]).sum();
    let value = pi.iter().zip(&share0).map(|(p, s)| p * s).sum();
    Ok(PhiBarEstimate {
        alpha,
        value,
        method: PhiBarMethod::ExactTruncated,
        std_error: None,
        truncation_mass: Some(boundary),
        beta: 1.0,
    })
}

/// Closed-form limit of phibar as the access rates shrink to zero:
/// `min(alpha, min over local classes of (1 - rho_k))`.
pub fn phibar_limit(alpha: f64, rho_local: &[f64]) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    check_local_ergodic(rho_local)?;
    let cap = rho_local
        .iter()
        .map(|r| 1.0 - r)
        .fold(f64::INFINITY, f64::min);
    Ok(alpha.min(cap))
}

/// Fixed point of the beta-scaled local dynamics at frozen `alpha`.
#[derive(Debug, Clone)]
pub struct GammaPoint {
    pub alpha: f64,
    /// `gamma[j]` is the fixed-point rate of class `j + 2`.
    pub gamma: Vec<f64>,
    /// Drift residuals `rho_k - psi_k(alpha, gamma)` per local class.
    pub residuals: Vec<f64>,
}

/// Evaluate the recursive fixed point and verify it nulls the local drifts.
pub fn gamma_fixed_point(alpha: f64, rho_local: &[f64]) -> Result<GammaPoint> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    check_local_ergodic(rho_local)?;
    let mut gamma = Vec::with_capacity(rho_local.len());
    let mut upstream_min = f64::INFINITY;
    for &rho in rho_local {
        let m = alpha.min(upstream_min);
        gamma.push((rho / (1.0 - rho) * m).max(rho));
        upstream_min = upstream_min.min(1.0 - rho);
    }
    let qs = qs_shares_unchecked(alpha, &gamma);
    let residuals: Vec<f64> = rho_local
        .iter()
        .zip(&qs.psi_local)
        .map(|(rho, psi)| rho - psi)
        .collect();
    Ok(GammaPoint {
        alpha,
        gamma,
        residuals,
    })
}

/// Which envelope of a sampled function to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeMode {
    /// Running infimum from the right: `f(a) = inf over x in [a, 1]`.
    /// Pointwise below the samples; drives the upper-bounding dynamics.
    InfUpper,
    /// Running supremum from the left: `g(a) = sup over x in [0, a]`.
    /// Pointwise above the samples; drives the lower-bounding dynamics.
    SupLower,
}

/// A piecewise-linear function on a grid.
#[derive(Debug, Clone)]
pub struct EnvelopeTable {
    pub alphas: Vec<f64>,
    pub values: Vec<f64>,
}

impl EnvelopeTable {
    /// Linear interpolation, clamped to the grid ends.
    pub fn eval(&self, alpha: f64) -> f64 {
        let n = self.alphas.len();
        if alpha <= self.alphas[0] {
            return self.values[0];
        }
        if alpha >= self.alphas[n - 1] {
            return self.values[n - 1];
        }
        let hi = self.alphas.partition_point(|&a| a < alpha).min(n - 1);
        let lo = hi - 1;
        let w = (alpha - self.alphas[lo]) / (self.alphas[hi] - self.alphas[lo]);
        self.values[lo] * (1.0 - w) + self.values[hi] * w
    }

    pub fn max_step(&self) -> f64 {
        self.alphas
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

/// Monotone envelope of samples on a grid.
pub fn envelope(alphas: &[f64], samples: &[f64], mode: EnvelopeMode) -> Result<EnvelopeTable> {
    if alphas.is_empty() || samples.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if alphas.len() != samples.len() {
        return Err(Error::DimensionMismatch {
            expected: alphas.len(),
            got: samples.len(),
        });
    }
    if alphas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams(
            "envelope grid must be strictly increasing".into(),
        ));
    }
    let mut values = samples.to_vec();
    match mode {
        EnvelopeMode::InfUpper => {
            for i in (0..values.len() - 1).rev() {
                values[i] = values[i].min(values[i + 1]);
            }
        }
        EnvelopeMode::SupLower => {
            for i in 1..values.len() {
                values[i] = values[i].max(values[i - 1]);
            }
        }
    }
    Ok(EnvelopeTable {
        alphas: alphas.to_vec(),
        values,
    })
}

/// A sampled phibar function with provenance, the CSV-facing artifact.
#[derive(Debug, Clone)]
pub struct PhiBarTable {
    pub alphas: Vec<f64>,
    pub values: Vec<f64>,
    /// Standard error or truncation mass per point, zero for closed forms.
    pub errors: Vec<f64>,
    pub method: String,
    pub beta: f64,
}

impl PhiBarTable {
    /// Linear interpolation, clamped to the grid ends.
    pub fn eval(&self, alpha: f64) -> f64 {
        let view = EnvelopeTable {
            alphas: self.alphas.clone(),
            values: self.values.clone(),
        };
        view.eval(alpha)
    }

    pub fn max_step(&self) -> f64 {
        self.alphas
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,value,se_or_trunc,method,beta\n");
        for ((a, v), e) in self.alphas.iter().zip(&self.values).zip(&self.errors) {
            out.push_str(&format!("{a},{v},{e},{},{}\n", self.method, self.beta));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::EmptyGrid)?;
        if header.trim() != "alpha,value,se_or_trunc,method,beta" {
            return Err(Error::Config(format!(
                "unexpected phibar CSV header: {header}"
            )));
        }
        let mut table = PhiBarTable {
            alphas: Vec::new(),
            values: Vec::new(),
            errors: Vec::new(),
            method: String::new(),
            beta: 1.0,
        };
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(Error::Config(format!("bad phibar CSV row: {line}")));
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad number {s} in phibar CSV")))
            };
            table.alphas.push(parse(fields[0])?);
            table.values.push(parse(fields[1])?);
            table.errors.push(parse(fields[2])?);
            table.method = fields[3].trim().to_string();
            table.beta = parse(fields[4])?;
        }
        if table.alphas.is_empty() {
            return Err(Error::EmptyGrid);
        }
        Ok(table)
    }
}

/// Regular grid over [0, 1] with the given step, endpoints included.
pub fn alpha_grid(step: f64) -> Vec<f64> {
    let n = (1.0 / step).round() as usize;
    (0..=n).map(|i| (i as f64 * step).min(1.0)).collect()
}

/// Tabulate the small-access-rate limit formula on a grid.
pub fn tabulate_limit(rho_local: &[f64], step: f64) -> Result<PhiBarTable> {
    let alphas = alpha_grid(step);
    let mut values = Vec::with_capacity(alphas.len());
    for &a in &alphas {
        values.push(phibar_limit(a, rho_local)?);
    }
    Ok(PhiBarTable {
        errors: vec![0.0; alphas.len()],
        alphas,
        values,
        method: "limit".into(),
        beta: f64::INFINITY,
    })
}

/// Tabulate the exact L = 2 solve on a grid.
pub fn tabulate_exact_l2(rho2: f64, a2: f64, step: f64, n_max: usize) -> Result<PhiBarTable> {
    let alphas = alpha_grid(step);
    let mut values = Vec::with_capacity(alphas.len());
    let mut errors = Vec::with_capacity(alphas.len());
    for &a in &alphas {
        let est = phibar_exact_l2(rho2, a2, a, n_max, 1e-10)?;
        values.push(est.value);
        errors.push(est.truncation_mass.unwrap_or(0.0));
    }
    Ok(PhiBarTable {
        alphas,
        values,
        errors,
        method: "exact".into(),
        beta: 1.0,
    })
}

/// Tabulate a Monte Carlo phibar on the standard grid over [0, 1].
pub fn tabulate_mc(
    linear: &LinearNetwork,
    beta: f64,
    step: f64,
    params: &SimParams,
    opts: &EstimatorOptions,
) -> Result<PhiBarTable> {
    tabulate_mc_on(linear, beta, &alpha_grid(step), params, opts)
}

/// Tabulate a Monte Carlo phibar on an arbitrary grid, one RNG stream per
/// point, points evaluated in parallel.
pub fn tabulate_mc_on(
    linear: &LinearNetwork,
    beta: f64,
    alphas: &[f64],
    params: &SimParams,
    opts: &EstimatorOptions,
) -> Result<PhiBarTable> {
    let results: Result<Vec<PhiBarEstimate>> = alphas
        .par_iter()
        .enumerate()
        .map(|(i, &alpha)| {
            let point_params = SimParams {
                seed: params.seed.wrapping_add(i as u64),
                ..params.clone()
            };
            phibar_scaled_mc(linear, alpha, beta, &point_params, opts)
        })
        .collect();
    let results = results?;
    Ok(PhiBarTable {
        alphas: alphas.to_vec(),
        values: results.iter().map(|r| r.value).collect(),
        errors: results.iter().map(|r| r.std_error.unwrap_or(0.0)).collect(),
        method: "mc".into(),
        beta,
    })
}
