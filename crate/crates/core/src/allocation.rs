//! Tail-drop bandwidth allocation on acyclic networks.
//!
//! Flows transmit at their full input rate; at a link whose total input rate
//! exceeds the capacity, every flow is scaled by the same factor so that the
//! total output equals the capacity. Processing links in the validated order
//! resolves the allocation in one pass. Two variants feed the analysis: the
//! quasi-stationary shares on a linear network (class-0 rate after link 1
//! held at a constant `alpha`) and the saturated allocation on an upstream
//! tree (classes outside a finite set pushed to infinitely many flows).

use num_rational::BigRational;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::topology::{LinearNetwork, Topology, TreeMeta};

/// Scalar the allocation recursion is computed over. `f64` is the production
/// path; exact rationals back the golden tests.
pub trait AllocScalar: Clone + PartialOrd {
    fn zero() -> Self;
    fn add(&self, rhs: &Self) -> Self;
    fn mul(&self, rhs: &Self) -> Self;
    fn div(&self, rhs: &Self) -> Self;
}

impl AllocScalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn div(&self, rhs: &Self) -> Self {
        self / rhs
    }
}

impl AllocScalar for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn div(&self, rhs: &Self) -> Self {
        self / rhs
    }
}

/// Per-class hop rates and throughputs for one input-rate vector.
#[derive(Debug, Clone)]
pub struct AllocationTable<T = f64> {
    /// `theta[k][i]` is the class-`k` rate after the `i`-th link of its
    /// route; `theta[k][0]` is the input rate.
    pub theta: Vec<Vec<T>>,
    /// Throughput of each class: the rate after its last hop.
    pub psi: Vec<T>,
    /// Total input rate per link, aligned with `topology.links()`.
    pub link_input: Vec<T>,
}

fn allocate_generic<T: AllocScalar>(top: &Topology, caps: &[T], x: &[T]) -> AllocationTable<T> {
    let classes = top.classes();
    let mut theta: Vec<Vec<T>> = classes
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let mut row = Vec::with_capacity(c.route.len() + 1);
            row.push(x[k].clone());
            row
        })
        .collect();
    let link_pos: std::collections::HashMap<u32, usize> = top
        .links()
        .iter()
        .enumerate()
        .map(|(i, l)| (l.id, i))
        .collect();
    let mut link_input = vec![T::zero(); top.links().len()];

    for &link in top.link_order() {
        let pos = link_pos[&link];
        let cap = &caps[pos];
        // Classes whose next unprocessed hop is this link; by the ordering
        // invariant these are exactly the classes routed through it whose
        // earlier hops are already resolved.
        let mut entering: Vec<usize> = Vec::new();
        let mut input = T::zero();
        for (k, class) in classes.iter().enumerate() {
            let hop = theta[k].len() - 1;
            if class.route.get(hop) == Some(&link) {
                input = input.add(theta[k].last().expect("non-empty"));
                entering.push(k);
            }
        }
        link_input[pos] = input.clone();
        let saturated = input > *cap;
        for k in entering {
            let prev = theta[k].last().expect("non-empty").clone();
            let next = if saturated {
                prev.mul(cap).div(&input)
            } else {
                prev
            };
            theta[k].push(next);
        }
    }

    let psi = theta
        .iter()
        .map(|row| row.last().expect("non-empty").clone())
        .collect();
    AllocationTable {
        theta,
        psi,
        link_input,
    }
}

/// Tail-drop allocation for the input-rate vector `x` (class order).
pub fn allocate(top: &Topology, x: &[f64]) -> Result<AllocationTable> {
    if x.len() != top.n_classes() {
        return Err(Error::DimensionMismatch {
            expected: top.n_classes(),
            got: x.len(),
        });
    }
    for &v in x {
        if v < 0.0 || !v.is_finite() {
            return Err(Error::InvalidParams(format!(
                "input rates must be finite and non-negative, got {v}"
            )));
        }
    }
    let caps: Vec<f64> = top.links().iter().map(|l| l.capacity).collect();
    Ok(allocate_generic(top, &caps, x))
}

/// Allocation over exact rationals, for golden values free of rounding.
pub fn allocate_exact(top: &Topology, x: &[BigRational]) -> Result<AllocationTable<BigRational>> {
    if x.len() != top.n_classes() {
        return Err(Error::DimensionMismatch {
            expected: top.n_classes(),
            got: x.len(),
        });
    }
    let caps: Vec<BigRational> = top
        .links()
        .iter()
        .map(|l| BigRational::from_float(l.capacity).expect("finite capacity"))
        .collect();
    Ok(allocate_generic(top, &caps, x))
}

/// Throughputs for the count vector `n`: `phi_k(n) = psi_k(a .* n)`.
pub fn throughputs_for_counts(top: &Topology, n: &[u64]) -> Result<Vec<f64>> {
    let x: Vec<f64> = top
        .classes()
        .iter()
        .zip(n)
        .map(|(c, &nk)| c.access_rate * nk as f64)
        .collect();
    Ok(allocate(top, &x)?.psi)
}

impl AllocationTable<f64> {
    /// Largest violation of the feasibility constraints: per-link output sums
    /// above capacity and increases along a hop chain. Zero for a correct
    /// table up to rounding.
    pub fn max_violation(&self, top: &Topology) -> f64 {
        let mut worst = 0.0f64;
        let link_pos: std::collections::HashMap<u32, usize> = top
            .links()
            .iter()
            .enumerate()
            .map(|(i, l)| (l.id, i))
            .collect();
        let mut out_sum = vec![0.0; top.links().len()];
        for (k, class) in top.classes().iter().enumerate() {
            for (i, &link) in class.route.iter().enumerate() {
                out_sum[link_pos[&link]] += self.theta[k][i + 1];
                worst = worst.max(self.theta[k][i + 1] - self.theta[k][i]);
            }
        }
        for (pos, link) in top.links().iter().enumerate() {
            worst = worst.max(out_sum[pos] - link.capacity);
        }
        worst
    }
}

/// Quasi-stationary shares on a unit-capacity linear network with the
/// class-0 rate after link 1 frozen at `alpha`.
#[derive(Debug, Clone)]
pub struct QsAllocation {
    /// Class-0 rate after links `1..=L`; the first entry is `alpha` itself.
    pub theta0: Vec<f64>,
    /// Class-0 throughput (the last entry of `theta0`).
    pub psi0: f64,
    /// Throughputs of the local classes `2..=L`, in that order.
    pub psi_local: Vec<f64>,
}

/// Core of the quasi-stationary recursion; `x_local[j]` is the input rate of
/// class `j + 2`. No validation.
pub(crate) fn qs_shares_unchecked(alpha: f64, x_local: &[f64]) -> QsAllocation {
    let mut theta0 = Vec::with_capacity(x_local.len() + 1);
    let mut psi_local = Vec::with_capacity(x_local.len());
    let mut t = alpha;
    theta0.push(t);
    for &x in x_local {
        let total = t + x;
        if total > 1.0 {
            t /= total;
            psi_local.push(x / total);
        } else {
            psi_local.push(x);
        }
        theta0.push(t);
    }
    QsAllocation {
        psi0: t,
        theta0,
        psi_local,
    }
}

/// Quasi-stationary allocation on `linear` for a frozen class-0 rate `alpha`
/// and local input rates `x_local` for classes `2..=L`.
pub fn quasi_stationary_allocate(
    linear: &LinearNetwork,
    alpha: f64,
    x_local: &[f64],
) -> Result<QsAllocation> {
    linear.has_unit_capacities()?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    let expected = linear.n_links().saturating_sub(1);
    if x_local.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: x_local.len(),
        });
    }
    Ok(qs_shares_unchecked(alpha, x_local))
}

/// Classes kept at finite rates while all others are saturated (their flow
/// counts pushed to infinity).
#[derive(Debug, Clone)]
pub struct SaturationSet {
    finite: Vec<usize>,
}

impl SaturationSet {
    /// `finite` holds class positions (indexes into `topology.classes()`).
    pub fn new(finite: Vec<usize>) -> Result<Self> {
        if finite.is_empty() {
            return Err(Error::InvalidParams(
                "saturation set must keep at least one class finite".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for &k in &finite {
            if !seen.insert(k) {
                return Err(Error::InvalidParams(format!(
                    "class position {k} listed twice in saturation set"
                )));
            }
        }
        Ok(SaturationSet { finite })
    }

    pub fn finite_classes(&self) -> &[usize] {
        &self.finite
    }
}

/// Limiting throughputs of the finite classes on an upstream tree when every
/// other class is saturated.
///
/// A saturated class floods its entry link: finite flows and upstream
/// saturated aggregates crossing that link get share zero, and the link
/// contributes exactly its capacity downstream. Elsewhere the usual
/// proportional sharing applies with those aggregates as plain inputs.
/// `x_u[j]` is the input rate of `sat.finite_classes()[j]`; returns the
/// throughputs in the same order.
pub fn saturated_allocate(
    top: &Topology,
    tree: &TreeMeta,
    sat: &SaturationSet,
    x_u: &[f64],
) -> Result<Vec<f64>> {
    let finite = sat.finite_classes();
    if x_u.len() != finite.len() {
        return Err(Error::DimensionMismatch {
            expected: finite.len(),
            got: x_u.len(),
        });
    }
    for (&k, &x) in finite.iter().zip(x_u) {
        if k >= top.n_classes() {
            return Err(Error::InvalidParams(format!(
                "class position {k} out of range"
            )));
        }
        if x < 0.0 || !x.is_finite() {
            return Err(Error::InvalidParams(format!(
                "saturated-allocation rates must be finite and non-negative, got {x}"
            )));
        }
    }

    let classes = top.classes();
    let mut is_finite = vec![false; classes.len()];
    let mut theta = vec![0.0f64; classes.len()];
    let mut hops = vec![0usize; classes.len()];
    for (&k, &x) in finite.iter().zip(x_u) {
        is_finite[k] = true;
        theta[k] = x;
    }

    // Saturated aggregate mass leaving each link, keyed by link id.
    let mut sat_out: std::collections::HashMap<u32, f64> = std::collections::HashMap::new();

    for &link in top.link_order() {
        let cap = top.capacity(link);
        let mut finite_in = 0.0;
        let mut entering: Vec<usize> = Vec::new();
        for (k, class) in classes.iter().enumerate() {
            if is_finite[k] && class.route.get(hops[k]) == Some(&link) {
                finite_in += theta[k];
                entering.push(k);
            }
        }
        let sat_in: f64 = tree
            .children_of(link)
            .iter()
            .map(|j| sat_out.get(j).copied().unwrap_or(0.0))
            .sum();

        // Does a saturated class enter the network at this link?
        let infinite_entry = tree
            .entry_class
            .get(&link)
            .is_some_and(|&k| !is_finite[k]);

        if infinite_entry {
            for k in entering {
                theta[k] = 0.0;
                hops[k] += 1;
            }
            sat_out.insert(link, cap);
        } else {
            let input = finite_in + sat_in;
            let factor = if input > cap { cap / input } else { 1.0 };
            for k in entering {
                theta[k] *= factor;
                hops[k] += 1;
            }
            sat_out.insert(link, sat_in * factor);
        }
    }

    Ok(finite.iter().map(|&k| theta[k]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{analyze_tree, FlowClass, Link, TopologySpec};
    use num_bigint::BigInt;

    fn ratio(num: i64, den: i64) -> BigRational {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn two_link_unit_linear() -> Topology {
        Topology::build_linear(2, &[1.0, 1.0], &[(1.0, 0.2, 1.0); 3]).unwrap()
    }

    fn two_leaf_tree() -> (Topology, TreeMeta) {
        let spec = TopologySpec {
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
        };
        let top = Topology::validate(&spec).unwrap();
        let tree = analyze_tree(&top).unwrap();
        (top, tree)
    }

    #[test]
    fn golden_allocation_is_exact_in_rational_mode() {
        let top = two_link_unit_linear();
        let x = vec![ratio(1, 1), ratio(1, 1), ratio(1, 1)];
        let table = allocate_exact(&top, &x).unwrap();
        assert_eq!(table.psi[0], ratio(1, 3));
        assert_eq!(table.psi[1], ratio(1, 2));
        assert_eq!(table.psi[2], ratio(2, 3));
    }

    #[test]
    fn golden_allocation_float_mode() {
        let top = two_link_unit_linear();
        let table = allocate(&top, &[1.0, 1.0, 1.0]).unwrap();
        assert!((table.psi[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((table.psi[1] - 0.5).abs() < 1e-12);
        assert!((table.psi[2] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_input_rates_give_zero_throughput() {
        let top = two_link_unit_linear();
        let table = allocate(&top, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(table.psi, vec![0.0, 0.0, 0.0]);
        assert_eq!(table.link_input, vec![0.0, 0.0]);
    }

    #[test]
    fn hop_by_hop_recursion_matches_hand_values() {
        // Link 1: R = 2 saturates, so theta0 = 0.75 and psi1 = 0.25; link 2:
        // R = 1.75, factor 4/7.
        let top = two_link_unit_linear();
        let table = allocate(&top, &[1.5, 0.5, 1.0]).unwrap();
        assert!((table.theta[0][1] - 0.75).abs() < 1e-12);
        assert!((table.psi[1] - 0.25).abs() < 1e-12);
        assert!((table.psi[0] - 3.0 / 7.0).abs() < 1e-12);
        assert!((table.psi[2] - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let top = two_link_unit_linear();
        assert!(matches!(
            allocate(&top, &[1.0, 1.0]),
            Err(Error::DimensionMismatch {
                expected: 3,
                got: 2
            })
        ));
    }

    #[test]
    fn saturated_link_outputs_sum_to_capacity() {
        let top = two_link_unit_linear();
        let table = allocate(&top, &[2.0, 3.0, 0.4]).unwrap();
        // Link 1 saturated: outputs after it must sum to exactly C_1.
        let sum = table.theta[0][1] + table.theta[1][1];
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(table.max_violation(&top) <= 1e-12);
    }

    #[test]
    fn qs_shares_match_direct_evaluation() {
        let linear =
            LinearNetwork::build(2, &[1.0, 1.0], &[(1.0, 0.2, 1.0), (1.0, 0.3, 1.0), (1.0, 0.5, 1.0)])
                .unwrap();
        // Total 1.0 at link 2: no saturation.
        let qs = quasi_stationary_allocate(&linear, 0.5, &[0.5]).unwrap();
        assert!((qs.psi0 - 0.5).abs() < 1e-12);
        assert!((qs.psi_local[0] - 0.5).abs() < 1e-12);

        // alpha = 0 passes zero everywhere.
        let qs = quasi_stationary_allocate(&linear, 0.0, &[0.7]).unwrap();
        assert_eq!(qs.psi0, 0.0);

        // Saturated link: both classes get half.
        let qs = quasi_stationary_allocate(&linear, 1.0, &[1.0]).unwrap();
        assert!((qs.psi0 - 0.5).abs() < 1e-12);
        assert!((qs.psi_local[0] - 0.5).abs() < 1e-12);

        assert!(matches!(
            quasi_stationary_allocate(&linear, 1.5, &[0.5]),
            Err(Error::AlphaOutOfRange(_))
        ));
    }

    #[test]
    fn qs_shares_agree_with_full_allocation_on_saturated_first_link() {
        // Choose counts for classes 0 and 1 so the class-0 share of link 1 is
        // alpha; the downstream shares must match the general recursion.
        let top = Topology::build_linear(
            3,
            &[1.0; 3],
            &[(1.0, 0.2, 1.0); 4],
        )
        .unwrap();
        let alpha: f64 = 0.3;
        let m = 50.0;
        let x = vec![alpha * m, (1.0 - alpha) * m, 0.4, 1.3];
        let table = allocate(&top, &x).unwrap();
        let qs = qs_shares_unchecked(alpha, &[0.4, 1.3]);
        assert!((table.psi[0] - qs.psi0).abs() < 1e-12);
        assert!((table.psi[2] - qs.psi_local[0]).abs() < 1e-12);
        assert!((table.psi[3] - qs.psi_local[1]).abs() < 1e-12);
    }

    #[test]
    fn saturated_allocation_on_two_leaf_tree() {
        let (top, tree) = two_leaf_tree();
        let sat = SaturationSet::new(vec![0]).unwrap();
        // Class B floods link 3, contributing C_3 = 1 at the root.
        let psi = saturated_allocate(&top, &tree, &sat, &[0.4]).unwrap();
        assert!((psi[0] - 0.4 / 1.4).abs() < 1e-12);

        let psi = saturated_allocate(&top, &tree, &sat, &[0.0]).unwrap();
        assert_eq!(psi[0], 0.0);

        // Both classes finite: plain allocation, no losses at total 0.6.
        let sat = SaturationSet::new(vec![0, 1]).unwrap();
        let psi = saturated_allocate(&top, &tree, &sat, &[0.2, 0.4]).unwrap();
        assert!((psi[0] - 0.2).abs() < 1e-12);
        assert!((psi[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn saturated_allocation_matches_large_finite_counts() {
        let (top, tree) = two_leaf_tree();
        let sat = SaturationSet::new(vec![0]).unwrap();
        let exact = saturated_allocate(&top, &tree, &sat, &[0.4]).unwrap()[0];
        let mut last = f64::INFINITY;
        for j in [1, 3, 5, 7] {
            let y = 10f64.powi(j);
            let psi = allocate(&top, &[0.4, y]).unwrap().psi[0];
            assert!(psi <= last + 1e-12, "finite approximation must decrease");
            last = psi;
        }
        assert!((last - exact).abs() < 1e-6);
    }

    #[test]
    fn saturated_entry_starves_colocated_finite_flows() {
        // Class A enters at the root where class B is saturated: A gets 0.
        let spec = TopologySpec {
            links: vec![
                Link { id: 2, capacity: 1.0 },
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
                    route: vec![1],
                    access_rate: 1.0,
                    lambda: 0.2,
                    mu: 1.0,
                },
            ],
        };
        let top = Topology::validate(&spec).unwrap();
        let tree = analyze_tree(&top).unwrap();
        let sat = SaturationSet::new(vec![0]).unwrap();
        let psi = saturated_allocate(&top, &tree, &sat, &[0.7]).unwrap();
        assert_eq!(psi[0], 0.0);
    }
}
