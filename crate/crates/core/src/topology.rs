//! Network topologies: links, flow classes and their routes.
//!
//! A topology is accepted only if it is acyclic, i.e. the links can be
//! ordered so that every route is a strictly increasing sequence. The
//! witnessing order is kept on the topology and drives the one-pass
//! allocation. Upstream trees get an extra analysis pass ([`analyze_tree`])
//! that checks the suffix-sharing conditions and precomputes the per-link
//! child sets and effective capacities used by the stability recursion.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One directed link with a transmission capacity.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    pub id: u32,
    pub capacity: f64,
}

/// A class of flows sharing a route and traffic parameters.
///
/// Flows of the class arrive at rate `lambda`, have mean size `1/mu` and each
/// transmits at the access rate, so `n` active flows inject `n * access_rate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowClass {
    pub id: u32,
    /// Ordered link ids from entry to exit.
    pub route: Vec<u32>,
    pub access_rate: f64,
    pub lambda: f64,
    pub mu: f64,
}

impl FlowClass {
    /// Traffic intensity `lambda / mu`.
    pub fn rho(&self) -> f64 {
        self.lambda / self.mu
    }
}

/// Raw topology description as parsed from a JSON config. Unknown fields are
/// rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub links: Vec<Link>,
    pub classes: Vec<FlowClass>,
}

impl TopologySpec {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }
}

/// A validated acyclic topology.
///
/// Immutable after construction; safe to share across worker threads.
#[derive(Debug, Clone)]
pub struct Topology {
    links: Vec<Link>,
    classes: Vec<FlowClass>,
    /// Link ids in an order under which every route is strictly increasing.
    link_order: Vec<u32>,
    index_of_link: HashMap<u32, usize>,
}

impl Topology {
    /// Validate a raw description: positive parameters, well-formed routes
    /// and acyclicity. Returns the topology with a witnessing link order.
    pub fn validate(spec: &TopologySpec) -> Result<Self> {
        let mut index_of_link = HashMap::new();
        for (i, link) in spec.links.iter().enumerate() {
            if index_of_link.insert(link.id, i).is_some() {
                return Err(Error::DuplicateLinkId(link.id));
            }
            if link.capacity <= 0.0 || !link.capacity.is_finite() {
                return Err(Error::NonPositiveParameter {
                    entity: format!("link {}", link.id),
                    name: "capacity",
                    value: link.capacity,
                });
            }
        }
        let mut class_ids = HashSet::new();
        for class in &spec.classes {
            if !class_ids.insert(class.id) {
                return Err(Error::DuplicateClassId(class.id));
            }
            if class.route.is_empty() {
                return Err(Error::EmptyRoute { class: class.id });
            }
            let mut seen = HashSet::new();
            for &l in &class.route {
                if !index_of_link.contains_key(&l) {
                    return Err(Error::UnknownLink {
                        class: class.id,
                        link: l,
                    });
                }
                if !seen.insert(l) {
                    return Err(Error::DuplicateLinkInRoute {
                        class: class.id,
                        link: l,
                    });
                }
            }
            for (name, value) in [("access_rate", class.access_rate), ("mu", class.mu)] {
                if value <= 0.0 || !value.is_finite() {
                    return Err(Error::NonPositiveParameter {
                        entity: format!("class {}", class.id),
                        name,
                        value,
                    });
                }
            }
            // lambda = 0 is allowed: an arrival-free class models absorbing
            // regimes directly.
            if class.lambda < 0.0 || !class.lambda.is_finite() {
                return Err(Error::NonPositiveParameter {
                    entity: format!("class {}", class.id),
                    name: "lambda",
                    value: class.lambda,
                });
            }
        }

        let link_order = topological_order(&spec.links, &spec.classes)?;
        let index_of_link = spec
            .links
            .iter()
            .enumerate()
            .map(|(i, l)| (l.id, i))
            .collect();
        Ok(Topology {
            links: spec.links.clone(),
            classes: spec.classes.clone(),
            link_order,
            index_of_link,
        })
    }

    /// Linear network: class 0 crosses links `1..=n_links`, class `l` crosses
    /// link `l` only. `params[k] = (access_rate, lambda, mu)` for class `k`.
    pub fn build_linear(
        n_links: usize,
        capacities: &[f64],
        params: &[(f64, f64, f64)],
    ) -> Result<Self> {
        if n_links == 0 {
            return Err(Error::Config("linear network needs at least one link".into()));
        }
        if capacities.len() != n_links || params.len() != n_links + 1 {
            return Err(Error::Config(format!(
                "linear network with {} links needs {} capacities and {} class parameter sets",
                n_links,
                n_links,
                n_links + 1
            )));
        }
        let links = (1..=n_links as u32)
            .map(|id| Link {
                id,
                capacity: capacities[(id - 1) as usize],
            })
            .collect();
        let classes = (0..=n_links as u32)
            .map(|id| {
                let (access_rate, lambda, mu) = params[id as usize];
                let route = if id == 0 {
                    (1..=n_links as u32).collect()
                } else {
                    vec![id]
                };
                FlowClass {
                    id,
                    route,
                    access_rate,
                    lambda,
                    mu,
                }
            })
            .collect();
        Topology::validate(&TopologySpec { links, classes })
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn classes(&self) -> &[FlowClass] {
        &self.classes
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Link ids in the validated processing order.
    pub fn link_order(&self) -> &[u32] {
        &self.link_order
    }

    pub fn link(&self, id: u32) -> &Link {
        &self.links[self.index_of_link[&id]]
    }

    pub fn capacity(&self, id: u32) -> f64 {
        self.link(id).capacity
    }

    /// Traffic intensities in class order.
    pub fn rho(&self) -> Vec<f64> {
        self.classes.iter().map(FlowClass::rho).collect()
    }

    /// Access rates in class order.
    pub fn access_rates(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.access_rate).collect()
    }

    /// Total offered load on `link`: sum of rho over classes routed through it.
    pub fn link_load(&self, link: u32) -> f64 {
        self.classes
            .iter()
            .filter(|c| c.route.contains(&link))
            .map(FlowClass::rho)
            .sum()
    }

    /// Round-trip into a raw spec (used to re-validate and by the CLI).
    pub fn to_spec(&self) -> TopologySpec {
        TopologySpec {
            links: self.links.clone(),
            classes: self.classes.clone(),
        }
    }
}

/// Stable topological sort of links under "appears before on some route".
/// Ties are broken by input order, so re-validation reproduces the order.
fn topological_order(links: &[Link], classes: &[FlowClass]) -> Result<Vec<u32>> {
    let index: HashMap<u32, usize> = links.iter().enumerate().map(|(i, l)| (l.id, i)).collect();
    let n = links.len();
    let mut succ: Vec<HashSet<usize>> = vec![HashSet::new(); n];
    let mut in_deg = vec![0usize; n];
    for class in classes {
        for pair in class.route.windows(2) {
            let (a, b) = (index[&pair[0]], index[&pair[1]]);
            if succ[a].insert(b) {
                in_deg[b] += 1;
            }
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut ready: Vec<usize> = (0..n).filter(|&i| in_deg[i] == 0).collect();
    // Kahn's algorithm; `ready` kept sorted by input position for stability.
    while let Some(&i) = ready.first() {
        ready.remove(0);
        order.push(links[i].id);
        for &j in &succ[i].iter().copied().collect::<Vec<_>>() {
            in_deg[j] -= 1;
            if in_deg[j] == 0 {
                let pos = ready.partition_point(|&k| k < j);
                ready.insert(pos, j);
            }
        }
    }
    if order.len() != n {
        return Err(Error::CyclicNetwork);
    }
    Ok(order)
}

/// A linear network wrapper: class 0 crosses every link, class `l` crosses
/// link `l` only. Grants positional access to the per-class parameters used
/// by the quasi-stationary machinery.
#[derive(Debug, Clone)]
pub struct LinearNetwork {
    topology: Topology,
    n_links: usize,
}

impl LinearNetwork {
    /// Check that `topology` has the linear shape and wrap it.
    pub fn from_topology(topology: Topology) -> Result<Self> {
        let n_links = topology.links.len();
        if topology.classes.len() != n_links + 1 {
            return Err(Error::NotLinear(format!(
                "{} links need {} classes, found {}",
                n_links,
                n_links + 1,
                topology.classes.len()
            )));
        }
        let mut ids: Vec<u32> = topology.links.iter().map(|l| l.id).collect();
        ids.sort_unstable();
        let expected: Vec<u32> = (1..=n_links as u32).collect();
        if ids != expected {
            return Err(Error::NotLinear("links must be numbered 1..=L".into()));
        }
        for (k, class) in topology.classes.iter().enumerate() {
            if class.id != k as u32 {
                return Err(Error::NotLinear("classes must be numbered 0..=L".into()));
            }
            let want: Vec<u32> = if k == 0 {
                (1..=n_links as u32).collect()
            } else {
                vec![k as u32]
            };
            if class.route != want {
                return Err(Error::NotLinear(format!(
                    "class {} must have route {:?}",
                    k, want
                )));
            }
        }
        Ok(LinearNetwork { topology, n_links })
    }

    pub fn build(n_links: usize, capacities: &[f64], params: &[(f64, f64, f64)]) -> Result<Self> {
        Self::from_topology(Topology::build_linear(n_links, capacities, params)?)
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn n_links(&self) -> usize {
        self.n_links
    }

    pub fn class(&self, k: usize) -> &FlowClass {
        &self.topology.classes[k]
    }

    pub fn has_unit_capacities(&self) -> Result<()> {
        for link in self.topology.links() {
            if link.capacity != 1.0 {
                return Err(Error::NonUnitCapacity {
                    link: link.id,
                    capacity: link.capacity,
                });
            }
        }
        Ok(())
    }

    /// Traffic intensities of the local classes `2..=L`.
    pub fn local_rho(&self) -> Vec<f64> {
        (2..=self.n_links).map(|k| self.class(k).rho()).collect()
    }
}

/// Structure of an upstream tree: routes merge and share their whole suffix
/// down to a common root link.
#[derive(Debug, Clone)]
pub struct TreeMeta {
    pub root: u32,
    /// Children of each link (links immediately upstream of it), sorted by id.
    pub children: BTreeMap<u32, Vec<u32>>,
    /// The unique class entering the network at a link, as a class position.
    pub entry_class: BTreeMap<u32, usize>,
    /// `C_l` times the product of `C_j / sum(C over children of j)` over the
    /// strict ancestors `j` of `l`.
    pub effective_capacity: BTreeMap<u32, f64>,
    /// Parent link, absent for the root.
    pub parent: BTreeMap<u32, u32>,
}

impl TreeMeta {
    pub fn children_of(&self, link: u32) -> &[u32] {
        self.children.get(&link).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Sum of child capacities of `link` in `topology`.
    pub fn child_capacity_sum(&self, topology: &Topology, link: u32) -> f64 {
        self.children_of(link)
            .iter()
            .map(|&j| topology.capacity(j))
            .sum()
    }
}

/// Check the upstream-tree conditions and build the tree metadata.
///
/// Rejects topologies where routes do not all end at a common root, where two
/// routes share a link without sharing the entire suffix, where two classes
/// have the same path, or where some link can never be saturated. The
/// unsaturable case is reported rather than pruned: removing a link silently
/// would change the model under the user's feet.
pub fn analyze_tree(topology: &Topology) -> Result<TreeMeta> {
    let classes = topology.classes();
    if classes.is_empty() {
        return Err(Error::NotUpstreamTree("no classes".into()));
    }
    for i in 0..classes.len() {
        for j in (i + 1)..classes.len() {
            if classes[i].route == classes[j].route {
                return Err(Error::DuplicatePath(classes[i].id, classes[j].id));
            }
        }
    }

    let root = *classes[0].route.last().expect("validated route is non-empty");
    let mut parent: BTreeMap<u32, u32> = BTreeMap::new();
    for class in classes {
        if *class.route.last().unwrap() != root {
            return Err(Error::NotUpstreamTree(format!(
                "class {} exits at link {}, class {} exits at link {}",
                classes[0].id,
                root,
                class.id,
                class.route.last().unwrap()
            )));
        }
        for pair in class.route.windows(2) {
            let (child, next) = (pair[0], pair[1]);
            match parent.get(&child) {
                None => {
                    parent.insert(child, next);
                }
                Some(&p) if p == next => {}
                Some(&p) => {
                    return Err(Error::NotUpstreamTree(format!(
                        "link {} feeds both link {} and link {}",
                        child, p, next
                    )));
                }
            }
        }
    }
    // Suffix sharing: once a route touches a link, the remainder must follow
    // the parent chain, which the unique-parent map above guarantees. It
    // remains to check that shared links only appear in shared suffixes,
    // i.e. no route re-enters the tree below a link it already crossed; with
    // distinct links per route and a unique parent map this is automatic.

    let mut entry_class: BTreeMap<u32, usize> = BTreeMap::new();
    for (pos, class) in classes.iter().enumerate() {
        let entry = class.route[0];
        if let Some(&other) = entry_class.get(&entry) {
            return Err(Error::NotUpstreamTree(format!(
                "classes {} and {} both enter at link {}",
                classes[other].id, class.id, entry
            )));
        }
        entry_class.insert(entry, pos);
    }

    let mut children: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for (&child, &par) in &parent {
        children.entry(par).or_default().push(child);
    }
    for kids in children.values_mut() {
        kids.sort_unstable();
    }

    for link in topology.links() {
        let has_entry = entry_class.contains_key(&link.id);
        let child_sum: f64 = children
            .get(&link.id)
            .map(|kids| kids.iter().map(|&j| topology.capacity(j)).sum())
            .unwrap_or(0.0);
        if !has_entry && child_sum <= link.capacity {
            return Err(Error::UnsaturableLink(link.id));
        }
    }

    // Effective capacities top-down: factor(root) = 1, factor(child of m) =
    // factor(m) * C_m / sum(C over children of m).
    let mut effective_capacity = BTreeMap::new();
    let mut stack = vec![(root, 1.0f64)];
    while let Some((link, factor)) = stack.pop() {
        effective_capacity.insert(link, topology.capacity(link) * factor);
        if let Some(kids) = children.get(&link) {
            let sum: f64 = kids.iter().map(|&j| topology.capacity(j)).sum();
            for &j in kids {
                stack.push((j, factor * topology.capacity(link) / sum));
            }
        }
    }
    if effective_capacity.len() != topology.links().len() {
        let orphan = topology
            .links()
            .iter()
            .find(|l| !effective_capacity.contains_key(&l.id))
            .map(|l| l.id)
            .unwrap_or(root);
        return Err(Error::NotUpstreamTree(format!(
            "link {} is not connected to the root",
            orphan
        )));
    }

    Ok(TreeMeta {
        root,
        children,
        entry_class,
        effective_capacity,
        parent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_link_linear_spec() -> TopologySpec {
        TopologySpec {
            links: vec![
                Link { id: 1, capacity: 1.0 },
                Link { id: 2, capacity: 1.0 },
            ],
            classes: vec![
                FlowClass {
                    id: 0,
                    route: vec![1, 2],
                    access_rate: 1.0,
                    lambda: 0.2,
                    mu: 1.0,
                },
                FlowClass {
                    id: 1,
                    route: vec![1],
                    access_rate: 1.0,
                    lambda: 0.3,
                    mu: 1.0,
                },
                FlowClass {
                    id: 2,
                    route: vec![2],
                    access_rate: 1.0,
                    lambda: 0.3,
                    mu: 1.0,
                },
            ],
        }
    }

    pub(crate) fn two_leaf_tree(rho_a: f64, rho_b: f64) -> Topology {
        // Root link 1 with children 2 and 3; class A = [2,1], class B = [3,1].
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
                    lambda: rho_a,
                    mu: 1.0,
                },
                FlowClass {
                    id: 1,
                    route: vec![3, 1],
                    access_rate: 1.0,
                    lambda: rho_b,
                    mu: 1.0,
                },
            ],
        };
        Topology::validate(&spec).unwrap()
    }

    #[test]
    fn accepts_linear_spec_in_given_order() {
        let top = Topology::validate(&two_link_linear_spec()).unwrap();
        assert_eq!(top.link_order(), &[1, 2]);
    }

    #[test]
    fn rejects_cycle() {
        // Two classes using the same two links in opposite orders.
        let spec = TopologySpec {
            links: vec![
                Link { id: 1, capacity: 1.0 },
                Link { id: 2, capacity: 1.0 },
            ],
            classes: vec![
                FlowClass {
                    id: 0,
                    route: vec![1, 2],
                    access_rate: 1.0,
                    lambda: 0.1,
                    mu: 1.0,
                },
                FlowClass {
                    id: 1,
                    route: vec![2, 1],
                    access_rate: 1.0,
                    lambda: 0.1,
                    mu: 1.0,
                },
            ],
        };
        assert!(matches!(
            Topology::validate(&spec),
            Err(Error::CyclicNetwork)
        ));
    }

    #[test]
    fn rejects_duplicate_link_in_route() {
        let mut spec = two_link_linear_spec();
        spec.classes[0].route = vec![1, 1];
        assert!(matches!(
            Topology::validate(&spec),
            Err(Error::DuplicateLinkInRoute { class: 0, link: 1 })
        ));
    }

    #[test]
    fn rejects_nonpositive_parameters() {
        let mut spec = two_link_linear_spec();
        spec.classes[1].lambda = -0.1;
        assert!(matches!(
            Topology::validate(&spec),
            Err(Error::NonPositiveParameter { .. })
        ));
        let mut spec = two_link_linear_spec();
        spec.links[0].capacity = -1.0;
        assert!(matches!(
            Topology::validate(&spec),
            Err(Error::NonPositiveParameter { .. })
        ));
        let mut spec = two_link_linear_spec();
        spec.classes[0].mu = 0.0;
        assert!(matches!(
            Topology::validate(&spec),
            Err(Error::NonPositiveParameter { .. })
        ));
        // Arrival-free classes are fine.
        let mut spec = two_link_linear_spec();
        spec.classes[2].lambda = 0.0;
        assert!(Topology::validate(&spec).is_ok());
    }

    #[test]
    fn rejects_empty_route() {
        let mut spec = two_link_linear_spec();
        spec.classes[2].route.clear();
        assert!(matches!(
            Topology::validate(&spec),
            Err(Error::EmptyRoute { class: 2 })
        ));
    }

    #[test]
    fn revalidation_is_idempotent() {
        let top = Topology::validate(&two_link_linear_spec()).unwrap();
        let again = Topology::validate(&top.to_spec()).unwrap();
        assert_eq!(top.link_order(), again.link_order());
    }

    #[test]
    fn routes_increase_under_link_order() {
        let top = Topology::build_linear(
            4,
            &[1.0; 4],
            &[(1.0, 0.1, 1.0); 5],
        )
        .unwrap();
        let pos: HashMap<u32, usize> = top
            .link_order()
            .iter()
            .enumerate()
            .map(|(i, &l)| (l, i))
            .collect();
        for class in top.classes() {
            for pair in class.route.windows(2) {
                assert!(pos[&pair[0]] < pos[&pair[1]]);
            }
        }
    }

    #[test]
    fn build_linear_shapes() {
        let top = Topology::build_linear(2, &[1.0, 1.0], &[(1.0, 0.2, 1.0); 3]).unwrap();
        assert_eq!(top.classes()[0].route, vec![1, 2]);
        assert_eq!(top.classes()[1].route, vec![1]);
        assert_eq!(top.classes()[2].route, vec![2]);

        let degenerate = Topology::build_linear(1, &[1.0], &[(1.0, 0.2, 1.0); 2]).unwrap();
        assert_eq!(degenerate.n_classes(), 2);

        let wide = Topology::build_linear(4, &[1.0; 4], &[(1.0, 0.2, 1.0); 5]).unwrap();
        assert_eq!(wide.n_classes(), 5);
    }

    #[test]
    fn tree_analysis_accepts_two_leaf_tree() {
        let top = two_leaf_tree(0.2, 0.4);
        let meta = analyze_tree(&top).unwrap();
        assert_eq!(meta.root, 1);
        assert_eq!(meta.children_of(1), &[2, 3]);
        assert_eq!(meta.entry_class[&2], 0);
        assert_eq!(meta.entry_class[&3], 1);
        assert!((meta.effective_capacity[&1] - 1.0).abs() < 1e-15);
        assert!((meta.effective_capacity[&2] - 0.5).abs() < 1e-15);
        assert!((meta.effective_capacity[&3] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tree_analysis_rejects_linear_network() {
        let top = Topology::build_linear(2, &[1.0, 1.0], &[(1.0, 0.2, 1.0); 3]).unwrap();
        assert!(matches!(
            analyze_tree(&top),
            Err(Error::NotUpstreamTree(_))
        ));
    }

    #[test]
    fn tree_analysis_rejects_duplicate_path() {
        let spec = TopologySpec {
            links: vec![Link { id: 1, capacity: 1.0 }],
            classes: vec![
                FlowClass {
                    id: 0,
                    route: vec![1],
                    access_rate: 1.0,
                    lambda: 0.1,
                    mu: 1.0,
                },
                FlowClass {
                    id: 1,
                    route: vec![1],
                    access_rate: 1.0,
                    lambda: 0.1,
                    mu: 1.0,
                },
            ],
        };
        let top = Topology::validate(&spec).unwrap();
        assert!(matches!(analyze_tree(&top), Err(Error::DuplicatePath(0, 1))));
    }

    #[test]
    fn tree_analysis_reports_unsaturable_link() {
        // Interior link 1 has one child of capacity 0.5 < 1 and no entry class.
        let spec = TopologySpec {
            links: vec![
                Link { id: 2, capacity: 0.5 },
                Link { id: 1, capacity: 1.0 },
            ],
            classes: vec![FlowClass {
                id: 0,
                route: vec![2, 1],
                access_rate: 1.0,
                lambda: 0.1,
                mu: 1.0,
            }],
        };
        let top = Topology::validate(&spec).unwrap();
        assert!(matches!(analyze_tree(&top), Err(Error::UnsaturableLink(1))));
    }

    #[test]
    fn config_round_trip_rejects_unknown_fields() {
        let good = r#"{"links":[{"id":1,"capacity":1.0}],
            "classes":[{"id":0,"route":[1],"access_rate":1.0,"lambda":0.2,"mu":1.0}]}"#;
        assert!(TopologySpec::from_json(good).is_ok());
        let bad = r#"{"links":[{"id":1,"capacity":1.0,"color":"red"}],"classes":[]}"#;
        assert!(TopologySpec::from_json(bad).is_err());
    }
}
