//! Bipartite instances, fractional solutions and kernel structure.
//!
//! [`Instance`] is the raw document form (string ids, as read from disk).
//! [`Graph`] is its validated, index-based form. A [`KernelInstance`] pairs a
//! graph with a fractional solution whose structure matches the kernel shape:
//! every online type has one neighbour with `x_ij = λ_i` or two neighbours
//! with `x_ij = λ_i / 2`, and every offline vertex carries `x_j = 1`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{y_star, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnlineSpec {
    pub id: String,
    pub rate: f64,
    pub neighbors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub i: String,
    pub j: String,
    pub w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XSpec {
    pub i: String,
    pub j: String,
    pub x: f64,
}

/// An instance as written in an instance file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub online: Vec<OnlineSpec>,
    pub offline: Vec<String>,
    pub weights: Vec<WeightSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<XSpec>>,
}

impl Instance {
    /// Total arrival rate `Λ`.
    pub fn total_rate(&self) -> f64 {
        self.online.iter().map(|o| o.rate).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    DuplicateOnlineId,
    DuplicateOfflineId,
    NonpositiveRate,
    NegativeWeight,
    NonfiniteValue,
    DanglingEdge,
    DuplicateEdge,
    MissingWeight,
    UnknownWeightEdge,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::DuplicateOnlineId => "duplicate online id",
            ViolationKind::DuplicateOfflineId => "duplicate offline id",
            ViolationKind::NonpositiveRate => "nonpositive rate",
            ViolationKind::NegativeWeight => "negative weight",
            ViolationKind::NonfiniteValue => "non-finite value",
            ViolationKind::DanglingEdge => "dangling edge",
            ViolationKind::DuplicateEdge => "duplicate edge",
            ViolationKind::MissingWeight => "missing weight",
            ViolationKind::UnknownWeightEdge => "weight on a non-edge",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    fn push(&mut self, kind: ViolationKind, detail: impl Into<String>) {
        self.violations.push(Violation { kind, detail: detail.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("ok");
        }
        for (n, v) in self.violations.iter().enumerate() {
            if n > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{}: {}", v.kind, v.detail)?;
        }
        Ok(())
    }
}

/// Checks every structural invariant of a raw instance.
pub fn validate_instance(inst: &Instance) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut offline = HashSet::new();
    for j in &inst.offline {
        if !offline.insert(j.as_str()) {
            report.push(ViolationKind::DuplicateOfflineId, format!("offline `{j}`"));
        }
    }

    let mut online = HashSet::new();
    let mut edges = HashSet::new();
    for o in &inst.online {
        if !online.insert(o.id.as_str()) {
            report.push(ViolationKind::DuplicateOnlineId, format!("online `{}`", o.id));
        }
        if !o.rate.is_finite() {
            report.push(ViolationKind::NonfiniteValue, format!("rate of `{}`", o.id));
        } else if o.rate <= 0.0 {
            report.push(
                ViolationKind::NonpositiveRate,
                format!("`{}` has rate {}", o.id, o.rate),
            );
        }
        for j in &o.neighbors {
            if !offline.contains(j.as_str()) {
                report.push(
                    ViolationKind::DanglingEdge,
                    format!("({}, {}) names an unknown offline vertex", o.id, j),
                );
            }
            if !edges.insert((o.id.as_str(), j.as_str())) {
                report.push(ViolationKind::DuplicateEdge, format!("({}, {})", o.id, j));
            }
        }
    }

    let mut weighted = HashSet::new();
    for w in &inst.weights {
        if !w.w.is_finite() {
            report.push(ViolationKind::NonfiniteValue, format!("weight of ({}, {})", w.i, w.j));
        } else if w.w < 0.0 {
            report.push(
                ViolationKind::NegativeWeight,
                format!("({}, {}) has weight {}", w.i, w.j, w.w),
            );
        }
        let key = (w.i.as_str(), w.j.as_str());
        if !online.contains(w.i.as_str()) || !offline.contains(w.j.as_str()) {
            report.push(
                ViolationKind::DanglingEdge,
                format!("weight ({}, {}) names an unknown vertex", w.i, w.j),
            );
        } else if !edges.contains(&key) {
            report.push(ViolationKind::UnknownWeightEdge, format!("({}, {})", w.i, w.j));
        }
        if !weighted.insert(key) {
            report.push(ViolationKind::DuplicateEdge, format!("weight ({}, {})", w.i, w.j));
        }
    }
    for o in &inst.online {
        for j in &o.neighbors {
            if offline.contains(j.as_str()) && !weighted.contains(&(o.id.as_str(), j.as_str())) {
                report.push(ViolationKind::MissingWeight, format!("({}, {})", o.id, j));
            }
        }
    }
    report
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub online: usize,
    pub offline: usize,
    pub weight: f64,
}

/// Validated index form of an [`Instance`].
///
/// Indices follow input order: online types in the order of `online`,
/// offline vertices in the order of `offline`, edges by online type and then
/// by neighbour order.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    online_ids: Vec<String>,
    offline_ids: Vec<String>,
    rates: Vec<f64>,
    edges: Vec<Edge>,
    /// Per online type: `(offline, edge)` pairs in neighbour order.
    adjacency: Vec<Vec<(usize, usize)>>,
    offline_index: HashMap<String, usize>,
    online_index: HashMap<String, usize>,
}

impl Graph {
    pub fn build(inst: &Instance) -> Result<Self> {
        let report = validate_instance(inst);
        if !report.is_ok() {
            return Err(Error::InvalidInstance(report));
        }
        let offline_index: HashMap<_, _> = inst
            .offline
            .iter()
            .enumerate()
            .map(|(n, j)| (j.clone(), n))
            .collect();
        let online_index: HashMap<_, _> = inst
            .online
            .iter()
            .enumerate()
            .map(|(n, o)| (o.id.clone(), n))
            .collect();
        let weights: HashMap<(&str, &str), f64> = inst
            .weights
            .iter()
            .map(|w| ((w.i.as_str(), w.j.as_str()), w.w))
            .collect();

        let mut edges = Vec::new();
        let mut adjacency = Vec::with_capacity(inst.online.len());
        for (i, o) in inst.online.iter().enumerate() {
            let mut adj = Vec::with_capacity(o.neighbors.len());
            for j in &o.neighbors {
                let jx = offline_index[j];
                adj.push((jx, edges.len()));
                edges.push(Edge {
                    online: i,
                    offline: jx,
                    weight: weights[&(o.id.as_str(), j.as_str())],
                });
            }
            adjacency.push(adj);
        }
        Ok(Graph {
            online_ids: inst.online.iter().map(|o| o.id.clone()).collect(),
            offline_ids: inst.offline.clone(),
            rates: inst.online.iter().map(|o| o.rate).collect(),
            edges,
            adjacency,
            offline_index,
            online_index,
        })
    }

    pub fn num_online(&self) -> usize {
        self.rates.len()
    }

    pub fn num_offline(&self) -> usize {
        self.offline_ids.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn rate(&self, i: usize) -> f64 {
        self.rates[i]
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn total_rate(&self) -> f64 {
        self.rates.iter().sum()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    /// `(offline, edge)` pairs of online type `i`, in neighbour order.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        self.adjacency
            .get(i)?
            .iter()
            .find(|&&(jj, _)| jj == j)
            .map(|&(_, e)| e)
    }

    pub fn online_id(&self, i: usize) -> &str {
        &self.online_ids[i]
    }

    pub fn offline_id(&self, j: usize) -> &str {
        &self.offline_ids[j]
    }

    pub fn online_by_id(&self, id: &str) -> Option<usize> {
        self.online_index.get(id).copied()
    }

    pub fn offline_by_id(&self, id: &str) -> Option<usize> {
        self.offline_index.get(id).copied()
    }

    /// Edges incident to offline vertex `j`.
    pub fn incident(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.offline == j)
            .map(|(n, _)| n)
    }
}

/// LP variable vector `x`, one entry per edge of a [`Graph`].
#[derive(Clone, Debug, PartialEq)]
pub struct FractionalSolution {
    x: Vec<f64>,
}

impl FractionalSolution {
    pub fn zeros(graph: &Graph) -> Self {
        FractionalSolution { x: vec![0.0; graph.num_edges()] }
    }

    pub fn from_edge_values(graph: &Graph, x: Vec<f64>) -> Result<Self> {
        if x.len() != graph.num_edges() {
            return Err(Error::InvalidSolution(format!(
                "{} values for {} edges",
                x.len(),
                graph.num_edges()
            )));
        }
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidSolution(format!("non-finite value {v}")));
        }
        Ok(FractionalSolution { x })
    }

    /// Builds `x` from `(i, j, x)` entries. Every edge needs exactly one entry.
    pub fn from_specs(graph: &Graph, specs: &[XSpec]) -> Result<Self> {
        let mut x = vec![None; graph.num_edges()];
        for s in specs {
            let e = graph
                .online_by_id(&s.i)
                .zip(graph.offline_by_id(&s.j))
                .and_then(|(i, j)| graph.edge_index(i, j))
                .ok_or_else(|| Error::UnknownEdge(s.i.clone(), s.j.clone()))?;
            if x[e].replace(s.x).is_some() {
                return Err(Error::InvalidSolution(format!(
                    "duplicate value for ({}, {})",
                    s.i, s.j
                )));
            }
        }
        let x = x
            .into_iter()
            .enumerate()
            .map(|(e, v)| {
                v.ok_or_else(|| {
                    let edge = graph.edge(e);
                    Error::MissingVariable(
                        graph.online_id(edge.online).to_owned(),
                        graph.offline_id(edge.offline).to_owned(),
                    )
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_edge_values(graph, x)
    }

    pub fn to_specs(&self, graph: &Graph) -> Vec<XSpec> {
        graph
            .edges()
            .iter()
            .zip(&self.x)
            .map(|(e, &x)| XSpec {
                i: graph.online_id(e.online).to_owned(),
                j: graph.offline_id(e.offline).to_owned(),
                x,
            })
            .collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.x
    }

    pub fn get(&self, e: usize) -> f64 {
        self.x[e]
    }

    /// `x_i = Σ_j x_ij`.
    pub fn online_load(&self, graph: &Graph, i: usize) -> f64 {
        graph.neighbors(i).iter().map(|&(_, e)| self.x[e]).sum()
    }

    /// `x_j = Σ_i x_ij`.
    pub fn offline_load(&self, graph: &Graph, j: usize) -> f64 {
        graph.incident(j).map(|e| self.x[e]).sum()
    }

    pub fn objective(&self, graph: &Graph) -> f64 {
        graph.edges().iter().zip(&self.x).map(|(e, x)| e.weight * x).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeClass {
    First,
    Second,
}

/// Class of an online type together with its edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OnlineClass {
    First { offline: usize, edge: usize },
    /// Neighbours in neighbour-list order, as `(offline, edge)`.
    Second { neighbors: [(usize, usize); 2] },
}

impl OnlineClass {
    pub fn edge_class(&self) -> EdgeClass {
        match self {
            OnlineClass::First { .. } => EdgeClass::First,
            OnlineClass::Second { .. } => EdgeClass::Second,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "condition", rename_all = "snake_case")]
pub enum KernelViolation {
    Degree { online: String, degree: usize },
    XLambdaRelation { online: String, offline: String, x: f64, expected: f64 },
    OfflineLoad { offline: String, load: f64 },
    FirstClassLoad { offline: String, y: f64, limit: f64 },
}

impl fmt::Display for KernelViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelViolation::Degree { online, degree } => {
                write!(f, "degree: `{online}` has {degree} neighbours (need 1 or 2)")
            }
            KernelViolation::XLambdaRelation { online, offline, x, expected } => write!(
                f,
                "x/λ relation: x({online}, {offline}) = {x}, expected {expected}"
            ),
            KernelViolation::OfflineLoad { offline, load } => {
                write!(f, "x_j ≠ 1: `{offline}` has x_j = {load}")
            }
            KernelViolation::FirstClassLoad { offline, y, limit } => {
                write!(f, "y_j > 1 - ln 2: `{offline}` has y_j = {y} > {limit}")
            }
        }
    }
}

/// A validated kernel instance.
#[derive(Clone, Debug)]
pub struct KernelInstance {
    graph: Graph,
    x: FractionalSolution,
    classes: Vec<OnlineClass>,
    y: Vec<f64>,
    first_class: Vec<Vec<usize>>,
    second_class: Vec<Vec<usize>>,
    competitors: Vec<Vec<(usize, f64)>>,
}

/// Checks the kernel conditions and derives the per-vertex structure.
///
/// Conditions are checked in order (degree, x/λ relation, `x_j = 1`,
/// `y_j ≤ 1 - ln 2`) and the first violation is returned.
pub fn classify_kernel(graph: &Graph, x: &FractionalSolution, tol: f64) -> Result<KernelInstance> {
    let mut classes = Vec::with_capacity(graph.num_online());
    for i in 0..graph.num_online() {
        let nbrs = graph.neighbors(i);
        let class = match *nbrs {
            [(offline, edge)] => OnlineClass::First { offline, edge },
            [a, b] => OnlineClass::Second { neighbors: [a, b] },
            _ => {
                return Err(Error::NotKernel(KernelViolation::Degree {
                    online: graph.online_id(i).to_owned(),
                    degree: nbrs.len(),
                }))
            }
        };
        classes.push(class);
    }

    for (i, class) in classes.iter().enumerate() {
        let rate = graph.rate(i);
        let (expected, edges): (f64, Vec<(usize, usize)>) = match *class {
            OnlineClass::First { offline, edge } => (rate, vec![(offline, edge)]),
            OnlineClass::Second { neighbors } => (rate / 2.0, neighbors.to_vec()),
        };
        for (j, e) in edges {
            if (x.get(e) - expected).abs() > tol {
                return Err(Error::NotKernel(KernelViolation::XLambdaRelation {
                    online: graph.online_id(i).to_owned(),
                    offline: graph.offline_id(j).to_owned(),
                    x: x.get(e),
                    expected,
                }));
            }
        }
    }

    let n = graph.num_offline();
    let mut first_class = vec![Vec::new(); n];
    let mut second_class = vec![Vec::new(); n];
    let mut y = vec![0.0; n];
    let mut load = vec![0.0; n];
    for (i, class) in classes.iter().enumerate() {
        match *class {
            OnlineClass::First { offline, edge } => {
                first_class[offline].push(i);
                y[offline] += x.get(edge);
                load[offline] += x.get(edge);
            }
            OnlineClass::Second { neighbors } => {
                for (j, e) in neighbors {
                    second_class[j].push(i);
                    load[j] += x.get(e);
                }
            }
        }
    }
    for (j, &load) in load.iter().enumerate() {
        if (load - 1.0).abs() > tol {
            return Err(Error::NotKernel(KernelViolation::OfflineLoad {
                offline: graph.offline_id(j).to_owned(),
                load,
            }));
        }
    }
    let limit = y_star();
    for (j, &yj) in y.iter().enumerate() {
        if yj > limit + tol {
            return Err(Error::NotKernel(KernelViolation::FirstClassLoad {
                offline: graph.offline_id(j).to_owned(),
                y: yj,
                limit,
            }));
        }
    }

    let mut competitors = Vec::with_capacity(n);
    for (j, types) in second_class.iter().enumerate() {
        let mut rates: BTreeMap<usize, f64> = BTreeMap::new();
        for &i in types {
            if let OnlineClass::Second { neighbors } = classes[i] {
                let other = if neighbors[0].0 == j { neighbors[1].0 } else { neighbors[0].0 };
                *rates.entry(other).or_default() += graph.rate(i) / 2.0;
            }
        }
        competitors.push(rates.into_iter().collect());
    }

    Ok(KernelInstance {
        graph: graph.clone(),
        x: x.clone(),
        classes,
        y,
        first_class,
        second_class,
        competitors,
    })
}

impl KernelInstance {
    /// Validates a raw instance carrying an `x` section and classifies it.
    pub fn from_instance(inst: &Instance, tol: f64) -> Result<Self> {
        let graph = Graph::build(inst)?;
        let specs = inst
            .x
            .as_deref()
            .ok_or_else(|| Error::InvalidSolution("instance has no `x` section".into()))?;
        let x = FractionalSolution::from_specs(&graph, specs)?;
        classify_kernel(&graph, &x, tol)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn solution(&self) -> &FractionalSolution {
        &self.x
    }

    pub fn class(&self, i: usize) -> &OnlineClass {
        &self.classes[i]
    }

    pub fn classes(&self) -> &[OnlineClass] {
        &self.classes
    }

    pub fn edge_class(&self, e: usize) -> EdgeClass {
        self.classes[self.graph.edge(e).online].edge_class()
    }

    /// Total first-class rate at `j`.
    pub fn y(&self, j: usize) -> f64 {
        self.y[j]
    }

    pub fn ys(&self) -> &[f64] {
        &self.y
    }

    /// `N1(j)`: first-class online types adjacent to `j`.
    pub fn first_class_neighbors(&self, j: usize) -> &[usize] {
        &self.first_class[j]
    }

    /// `N2(j)`: second-class online types adjacent to `j`.
    pub fn second_class_neighbors(&self, j: usize) -> &[usize] {
        &self.second_class[j]
    }

    /// Competitor vertices of `j` (by index) with their rates `c_k`.
    pub fn competitors_of(&self, j: usize) -> &[(usize, f64)] {
        &self.competitors[j]
    }
}

/// Competitors of the offline vertex named `j`, with rates.
pub fn competitors(kernel: &KernelInstance, j: &str) -> Result<Vec<(String, f64)>> {
    let jx = kernel
        .graph
        .offline_by_id(j)
        .ok_or_else(|| Error::UnknownVertex(j.to_owned()))?;
    Ok(kernel.competitors[jx]
        .iter()
        .map(|&(k, c)| (kernel.graph.offline_id(k).to_owned(), c))
        .collect())
}
