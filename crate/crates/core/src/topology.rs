//! District heating network graph.
//!
//! Edges are oriented along the supply-side water flow. Supply and return
//! share the same topology; return-side inlets follow the counter-flow
//! convention unless an edge overrides it.
//!
//! Significant nodes are the station (id 0) and the loads. The reduced graph
//! connects two significant nodes whenever the full graph has a directed path
//! between them whose interior nodes are all junctions.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl NodeId {
    pub const STATION: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Station,
    Load,
    Junction,
}

impl NodeKind {
    fn as_str(self) -> &'static str {
        match self {
            NodeKind::Station => "station",
            NodeKind::Load => "load",
            NodeKind::Junction => "junction",
        }
    }
}

/// Local controller parameters of a thermal load.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadParams {
    /// Output temperature reference, °C.
    pub t_ref: f64,
    /// Flow floor, kg/s.
    pub q_min: f64,
    /// Flow ceiling, kg/s.
    pub q_max: f64,
}

impl Default for LoadParams {
    fn default() -> Self {
        LoadParams {
            t_ref: 45.0,
            q_min: 0.2,
            q_max: 15.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub load: Option<LoadParams>,
}

impl Node {
    pub fn station() -> Self {
        Node {
            id: NodeId::STATION,
            kind: NodeKind::Station,
            load: None,
        }
    }

    pub fn load(id: usize, params: LoadParams) -> Self {
        Node {
            id: NodeId(id),
            kind: NodeKind::Load,
            load: Some(params),
        }
    }

    pub fn junction(id: usize) -> Self {
        Node {
            id: NodeId(id),
            kind: NodeKind::Junction,
            load: None,
        }
    }
}

/// Return-side flow direction of an edge relative to its supply orientation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReturnFlow {
    #[default]
    Counter,
    Same,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipeEdge {
    pub from: NodeId,
    pub to: NodeId,
    /// m
    pub length: f64,
    /// m
    pub diameter: f64,
    /// W/(m·K)
    pub heat_loss_coeff: f64,
    /// Marks one half of a doubled edge pair with undetermined flow direction.
    pub reversible: bool,
    pub return_flow: ReturnFlow,
}

impl PipeEdge {
    pub fn new(from: usize, to: usize, length: f64, diameter: f64, heat_loss_coeff: f64) -> Self {
        PipeEdge {
            from: NodeId(from),
            to: NodeId(to),
            length,
            diameter,
            heat_loss_coeff,
            reversible: false,
            return_flow: ReturnFlow::Counter,
        }
    }

    pub fn reversible(mut self) -> Self {
        self.reversible = true;
        self
    }

    /// Cross-section area, m².
    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.diameter * self.diameter / 4.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Supply,
    Return,
}

/// A physical pipe. A reversible edge pair maps onto a single pipe.
#[derive(Clone, Debug, PartialEq)]
pub struct Pipe {
    /// Endpoint with the smaller id for reversible pipes, `from` otherwise.
    pub a: NodeId,
    pub b: NodeId,
    pub length: f64,
    pub diameter: f64,
    pub heat_loss_coeff: f64,
    pub reversible: bool,
    pub return_flow: ReturnFlow,
}

impl Pipe {
    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.diameter * self.diameter / 4.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkGraph {
    pub name: String,
    /// Set when the edge layout is a reconstruction rather than surveyed data.
    pub reconstructed: bool,
    nodes: Vec<Node>,
    edges: Vec<PipeEdge>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NoStation,
    MultipleStations(Vec<NodeId>),
    StationNotZero(NodeId),
    DuplicateNode(NodeId),
    UnknownEndpoint { from: NodeId, to: NodeId },
    SelfLoop(NodeId),
    DuplicateEdge { from: NodeId, to: NodeId },
    BadGeometry { from: NodeId, to: NodeId, what: &'static str },
    UnpairedReversible { from: NodeId, to: NodeId },
    PairMismatch { from: NodeId, to: NodeId },
    MissingLoadParams(NodeId),
    BadLoadParams(NodeId),
    Disconnected(NodeId),
    UnreachableLoad(NodeId),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoStation => write!(f, "no station"),
            Violation::MultipleStations(ids) => {
                let ids: Vec<String> = ids.iter().map(|i| i.to_string()).collect();
                write!(f, "multiple stations ({})", ids.join(", "))
            }
            Violation::StationNotZero(id) => write!(f, "station must have id 0, found {id}"),
            Violation::DuplicateNode(id) => write!(f, "duplicate node {id}"),
            Violation::UnknownEndpoint { from, to } => {
                write!(f, "edge {from}->{to} references an unknown node")
            }
            Violation::SelfLoop(id) => write!(f, "self-loop at node {id}"),
            Violation::DuplicateEdge { from, to } => write!(f, "duplicate edge {from}->{to}"),
            Violation::BadGeometry { from, to, what } => {
                write!(f, "edge {from}->{to}: {what}")
            }
            Violation::UnpairedReversible { from, to } => {
                write!(f, "reversible edge {from}->{to} has no reversible opposite")
            }
            Violation::PairMismatch { from, to } => {
                write!(f, "reversible pair {from}<->{to} has mismatched geometry")
            }
            Violation::MissingLoadParams(id) => write!(f, "load {id} has no parameters"),
            Violation::BadLoadParams(id) => write!(f, "load {id} has invalid flow limits"),
            Violation::Disconnected(id) => write!(f, "node {id} is disconnected"),
            Violation::UnreachableLoad(id) => {
                write!(f, "load {id} unreachable from the station along supply edges")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Convention deviations (node numbering); never block construction.
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl NetworkGraph {
    /// Builds a graph without validating it. Nodes are sorted by id and edges
    /// lexicographically by `(from, to)`.
    pub fn new(name: impl Into<String>, mut nodes: Vec<Node>, mut edges: Vec<PipeEdge>) -> Self {
        nodes.sort_by_key(|n| n.id);
        edges.sort_by_key(|e| (e.from, e.to));
        NetworkGraph {
            name: name.into(),
            reconstructed: false,
            nodes,
            edges,
        }
    }

    /// Builds and validates.
    pub fn try_new(name: impl Into<String>, nodes: Vec<Node>, edges: Vec<PipeEdge>) -> Result<Self> {
        let g = Self::new(name, nodes, edges);
        let report = validate_graph(&g);
        if report.is_valid() {
            Ok(g)
        } else {
            Err(Error::InvalidGraph(report.violations))
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[PipeEdge] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes
            .binary_search_by_key(&id, |n| n.id)
            .ok()
            .map(|i| &self.nodes[i])
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.node(id).is_some()
    }

    /// Load node ids in increasing order.
    pub fn loads(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Load)
            .map(|n| n.id)
            .collect()
    }

    pub fn n_loads(&self) -> usize {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Load).count()
    }

    pub fn load_params(&self, id: NodeId) -> Option<LoadParams> {
        self.node(id).and_then(|n| n.load)
    }

    pub fn is_significant(&self, id: NodeId) -> bool {
        matches!(
            self.node(id).map(|n| n.kind),
            Some(NodeKind::Station) | Some(NodeKind::Load)
        )
    }

    /// Supply-side successors, sorted.
    pub fn successors(&self, id: NodeId) -> Vec<NodeId> {
        self.edges.iter().filter(|e| e.from == id).map(|e| e.to).collect()
    }

    /// Supply-side predecessors, sorted.
    pub fn predecessors(&self, id: NodeId) -> Vec<NodeId> {
        let mut v: Vec<NodeId> = self.edges.iter().filter(|e| e.to == id).map(|e| e.from).collect();
        v.sort();
        v
    }

    pub fn edge(&self, from: NodeId, to: NodeId) -> Option<&PipeEdge> {
        self.edges
            .binary_search_by_key(&(from, to), |e| (e.from, e.to))
            .ok()
            .map(|i| &self.edges[i])
    }

    /// Physical pipes: every non-reversible edge, plus one pipe per reversible pair.
    pub fn pipes(&self) -> Vec<Pipe> {
        self.edges
            .iter()
            .filter(|e| !e.reversible || e.from < e.to)
            .map(|e| Pipe {
                a: e.from,
                b: e.to,
                length: e.length,
                diameter: e.diameter,
                heat_loss_coeff: e.heat_loss_coeff,
                reversible: e.reversible,
                return_flow: e.return_flow,
            })
            .collect()
    }

    /// Total pipe length of one side (supply or return), m.
    pub fn total_pipe_length(&self) -> f64 {
        self.pipes().iter().map(|p| p.length).sum()
    }

    /// Shortest supply-path length from the station to every reachable node, m.
    pub fn distances_from_station(&self) -> BTreeMap<NodeId, f64> {
        let mut dist: BTreeMap<NodeId, f64> = BTreeMap::new();
        dist.insert(NodeId::STATION, 0.0);
        let mut done: BTreeSet<NodeId> = BTreeSet::new();
        loop {
            let next = dist
                .iter()
                .filter(|(id, _)| !done.contains(*id))
                .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(b.0)))
                .map(|(id, d)| (*id, *d));
            let Some((u, du)) = next else { break };
            done.insert(u);
            for e in self.edges.iter().filter(|e| e.from == u) {
                let cand = du + e.length;
                let entry = dist.entry(e.to).or_insert(f64::INFINITY);
                if cand < *entry {
                    *entry = cand;
                }
            }
        }
        dist
    }
}

/// Checks every structural invariant of a district heating graph.
pub fn validate_graph(g: &NetworkGraph) -> ValidationReport {
    let mut report = ValidationReport::default();
    let v = &mut report.violations;

    let stations: Vec<NodeId> = g
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Station)
        .map(|n| n.id)
        .collect();
    match stations.len() {
        0 => v.push(Violation::NoStation),
        1 if stations[0] != NodeId::STATION => v.push(Violation::StationNotZero(stations[0])),
        1 => {}
        _ => v.push(Violation::MultipleStations(stations.clone())),
    }

    for w in g.nodes.windows(2) {
        if w[0].id == w[1].id {
            v.push(Violation::DuplicateNode(w[0].id));
        }
    }

    for n in g.nodes.iter().filter(|n| n.kind == NodeKind::Load) {
        match n.load {
            None => v.push(Violation::MissingLoadParams(n.id)),
            Some(p) => {
                let ok = p.t_ref.is_finite()
                    && p.q_min.is_finite()
                    && p.q_max.is_finite()
                    && p.q_min >= 0.0
                    && p.q_max > p.q_min;
                if !ok {
                    v.push(Violation::BadLoadParams(n.id));
                }
            }
        }
    }

    for (k, e) in g.edges.iter().enumerate() {
        if e.from == e.to {
            v.push(Violation::SelfLoop(e.from));
        }
        if !g.contains(e.from) || !g.contains(e.to) {
            v.push(Violation::UnknownEndpoint { from: e.from, to: e.to });
        }
        if k > 0 && g.edges[k - 1].from == e.from && g.edges[k - 1].to == e.to {
            v.push(Violation::DuplicateEdge { from: e.from, to: e.to });
        }
        let geom = [
            (e.length.is_finite() && e.length > 0.0, "length must be positive"),
            (e.diameter.is_finite() && e.diameter > 0.0, "diameter must be positive"),
            (
                e.heat_loss_coeff.is_finite() && e.heat_loss_coeff >= 0.0,
                "heat loss coefficient must be non-negative",
            ),
        ];
        for (ok, what) in geom {
            if !ok {
                v.push(Violation::BadGeometry { from: e.from, to: e.to, what });
            }
        }
        if e.reversible {
            match g.edge(e.to, e.from) {
                Some(r) if r.reversible => {
                    if e.from < e.to
                        && (r.length != e.length
                            || r.diameter != e.diameter
                            || r.heat_loss_coeff != e.heat_loss_coeff)
                    {
                        v.push(Violation::PairMismatch { from: e.from, to: e.to });
                    }
                }
                _ => v.push(Violation::UnpairedReversible { from: e.from, to: e.to }),
            }
        }
    }

    // Weak connectivity from the station.
    if g.contains(NodeId::STATION) {
        let mut seen: BTreeSet<NodeId> = BTreeSet::new();
        let mut queue = VecDeque::from([NodeId::STATION]);
        seen.insert(NodeId::STATION);
        while let Some(u) = queue.pop_front() {
            for e in &g.edges {
                let nb = if e.from == u {
                    e.to
                } else if e.to == u {
                    e.from
                } else {
                    continue;
                };
                if g.contains(nb) && seen.insert(nb) {
                    queue.push_back(nb);
                }
            }
        }
        for n in &g.nodes {
            if !seen.contains(&n.id) {
                v.push(Violation::Disconnected(n.id));
            }
        }

        let reach = reachable_from(g, NodeId::STATION, |_| true);
        for id in g.loads() {
            if seen.contains(&id) && !reach.contains(&id) {
                v.push(Violation::UnreachableLoad(id));
            }
        }
    }

    // Numbering convention: loads 1..n_c by distance, junctions after loads.
    let loads = g.loads();
    let expected: Vec<NodeId> = (1..=loads.len()).map(NodeId).collect();
    if loads != expected {
        report
            .warnings
            .push("loads are not numbered 1..n_c".to_string());
    }
    let max_load = loads.iter().max().copied().unwrap_or(NodeId(0));
    if g
        .nodes
        .iter()
        .any(|n| n.kind == NodeKind::Junction && n.id < max_load)
    {
        report
            .warnings
            .push("junction ids should exceed all load ids".to_string());
    }
    let dist = g.distances_from_station();
    let ordered = loads.windows(2).all(|w| {
        let a = dist.get(&w[0]).copied().unwrap_or(f64::INFINITY);
        let b = dist.get(&w[1]).copied().unwrap_or(f64::INFINITY);
        a <= b
    });
    if !ordered {
        report
            .warnings
            .push("loads are not numbered by increasing distance from the station".to_string());
    }

    report
}

fn reachable_from(g: &NetworkGraph, start: NodeId, pass: impl Fn(NodeId) -> bool) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for e in g.edges.iter().filter(|e| e.from == u) {
            if seen.insert(e.to) && pass(e.to) {
                queue.push_back(e.to);
            }
        }
    }
    seen
}

/// Inlet nodes of `id` on the given side.
///
/// Supply: `{j | (j, i) ∈ E}`. Return: `{j | (i, j) ∈ E}` under counter-flow,
/// with per-edge `ReturnFlow::Same` overrides flipping the relation.
pub fn inlet_set(g: &NetworkGraph, id: NodeId, side: Side) -> Result<BTreeSet<NodeId>> {
    if !g.contains(id) {
        return Err(Error::UnknownNode(id.0));
    }
    let mut out = BTreeSet::new();
    for e in &g.edges {
        match side {
            Side::Supply => {
                if e.to == id {
                    out.insert(e.from);
                }
            }
            Side::Return => match e.return_flow {
                ReturnFlow::Counter if e.from == id => {
                    out.insert(e.to);
                }
                ReturnFlow::Same if e.to == id => {
                    out.insert(e.from);
                }
                _ => {}
            },
        }
    }
    Ok(out)
}

/// Graph over the station and the loads.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReducedGraph {
    /// Significant nodes, sorted; the station first.
    pub nodes: Vec<NodeId>,
    /// Sorted by `(from, to)`, no duplicates.
    pub edges: Vec<(NodeId, NodeId)>,
}

impl ReducedGraph {
    pub fn predecessors(&self, id: NodeId) -> Vec<NodeId> {
        self.edges.iter().filter(|(_, j)| *j == id).map(|(i, _)| *i).collect()
    }

    pub fn successors(&self, id: NodeId) -> Vec<NodeId> {
        self.edges.iter().filter(|(i, _)| *i == id).map(|(_, j)| *j).collect()
    }

    /// Kahn's algorithm with smallest-id tie breaking; `None` if cyclic.
    pub fn topological_order(&self) -> Option<Vec<NodeId>> {
        let mut indeg: BTreeMap<NodeId, usize> = self.nodes.iter().map(|n| (*n, 0)).collect();
        for (_, j) in &self.edges {
            *indeg.get_mut(j)? += 1;
        }
        let mut ready: BTreeSet<NodeId> =
            indeg.iter().filter(|(_, d)| **d == 0).map(|(n, _)| *n).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(n) = ready.pop_first() {
            order.push(n);
            for s in self.successors(n) {
                let d = indeg.get_mut(&s)?;
                *d -= 1;
                if *d == 0 {
                    ready.insert(s);
                }
            }
        }
        (order.len() == self.nodes.len()).then_some(order)
    }

    /// Stable hex digest of the node and edge sets.
    pub fn fingerprint(&self) -> String {
        let mut text = String::new();
        for n in &self.nodes {
            let _ = write!(text, "n{};", n.0);
        }
        for (i, j) in &self.edges {
            let _ = write!(text, "e{},{};", i.0, j.0);
        }
        hex(&Sha256::digest(text.as_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Reduces `g` onto its significant nodes.
pub fn reduce_graph(g: &NetworkGraph) -> Result<ReducedGraph> {
    let report = validate_graph(g);
    if !report.is_valid() {
        return Err(Error::InvalidGraph(report.violations));
    }
    Ok(reduce_unchecked(g))
}

/// Reduction without validation; used by property tests on arbitrary graphs.
pub fn reduce_unchecked(g: &NetworkGraph) -> ReducedGraph {
    let nodes: Vec<NodeId> = g
        .nodes
        .iter()
        .filter(|n| g.is_significant(n.id))
        .map(|n| n.id)
        .collect();
    let mut edges = BTreeSet::new();
    for &s in &nodes {
        // Walks through junctions only; any walk contains a simple path with
        // a subset of its interior nodes, so reachability is equivalent.
        for t in reachable_from(g, s, |n| !g.is_significant(n)) {
            if t != s && g.is_significant(t) {
                edges.insert((s, t));
            }
        }
    }
    ReducedGraph {
        nodes,
        edges: edges.into_iter().collect(),
    }
}

// ---------------------------------------------------------------------------
// Text format
// ---------------------------------------------------------------------------

/// Parses the line-oriented topology format. See `docs/topology-format.md`.
pub fn parse_topology(text: &str, origin: &str) -> Result<NetworkGraph> {
    #[derive(PartialEq)]
    enum Section {
        None,
        Meta,
        Nodes,
        Edges,
    }
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    let mut section = Section::None;
    let mut name = String::from("network");
    let mut reconstructed = false;
    let mut nodes = Vec::new();
    let mut edges = Vec::new();

    for (k, raw) in text.lines().enumerate() {
        let lineno = k + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            section = match line {
                "[meta]" => Section::Meta,
                "[nodes]" => Section::Nodes,
                "[edges]" => Section::Edges,
                other => return Err(err(lineno, format!("unknown section {other}"))),
            };
            continue;
        }
        match section {
            Section::None => return Err(err(lineno, "content before any section".into())),
            Section::Meta => {
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| err(lineno, "expected key = value".into()))?;
                match key.trim() {
                    "name" => name = value.trim().to_string(),
                    "reconstructed" => {
                        reconstructed = parse_bool(value.trim())
                            .ok_or_else(|| err(lineno, format!("bad boolean {}", value.trim())))?
                    }
                    other => return Err(err(lineno, format!("unknown meta key {other}"))),
                }
            }
            Section::Nodes => {
                let tok = tokens(line);
                if tok.len() < 2 {
                    return Err(err(lineno, "expected: id kind [t_ref q_min q_max]".into()));
                }
                let id: usize = tok[0]
                    .parse()
                    .map_err(|_| err(lineno, format!("bad node id {}", tok[0])))?;
                let node = match tok[1] {
                    "station" | "junction" if tok.len() != 2 => {
                        return Err(err(lineno, format!("{} takes no parameters", tok[1])))
                    }
                    "station" => Node {
                        id: NodeId(id),
                        kind: NodeKind::Station,
                        load: None,
                    },
                    "junction" => Node::junction(id),
                    "load" => {
                        let params = match tok.len() {
                            2 => LoadParams::default(),
                            5 => {
                                let f = |s: &str| {
                                    s.parse::<f64>()
                                        .map_err(|_| err(lineno, format!("bad number {s}")))
                                };
                                LoadParams {
                                    t_ref: f(tok[2])?,
                                    q_min: f(tok[3])?,
                                    q_max: f(tok[4])?,
                                }
                            }
                            _ => {
                                return Err(err(
                                    lineno,
                                    "load expects 0 or 3 parameters: t_ref q_min q_max".into(),
                                ))
                            }
                        };
                        Node::load(id, params)
                    }
                    other => return Err(err(lineno, format!("unknown node kind {other}"))),
                };
                nodes.push(node);
            }
            Section::Edges => {
                let tok = tokens(line);
                if tok.len() != 6 && tok.len() != 7 {
                    return Err(err(
                        lineno,
                        "expected: from to length_m diameter_m loss_W_per_mK reversible [return]"
                            .into(),
                    ));
                }
                let u = |s: &str| {
                    s.parse::<usize>()
                        .map_err(|_| err(lineno, format!("bad node id {s}")))
                };
                let f = |s: &str| {
                    s.parse::<f64>()
                        .map_err(|_| err(lineno, format!("bad number {s}")))
                };
                let reversible = parse_bool(tok[5])
                    .ok_or_else(|| err(lineno, format!("bad boolean {}", tok[5])))?;
                let return_flow = match tok.get(6).copied() {
                    None | Some("counter") => ReturnFlow::Counter,
                    Some("same") => ReturnFlow::Same,
                    Some(other) => return Err(err(lineno, format!("bad return flow {other}"))),
                };
                edges.push(PipeEdge {
                    from: NodeId(u(tok[0])?),
                    to: NodeId(u(tok[1])?),
                    length: f(tok[2])?,
                    diameter: f(tok[3])?,
                    heat_loss_coeff: f(tok[4])?,
                    reversible,
                    return_flow,
                });
            }
        }
    }
    let mut g = NetworkGraph::new(name, nodes, edges);
    g.reconstructed = reconstructed;
    Ok(g)
}

fn tokens(line: &str) -> Vec<&str> {
    line.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .collect()
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

/// Serializes into the canonical topology text. `parse_topology` inverts it exactly.
pub fn format_topology(g: &NetworkGraph) -> String {
    let mut s = String::new();
    s.push_str("[meta]\n");
    let _ = writeln!(s, "name = {}", g.name);
    let _ = writeln!(s, "reconstructed = {}", g.reconstructed);
    s.push_str("\n[nodes]\n# id kind t_ref_C q_min_kg_s q_max_kg_s\n");
    for n in &g.nodes {
        match (n.kind, n.load) {
            (NodeKind::Load, Some(p)) => {
                let _ = writeln!(s, "{} load {} {} {}", n.id, p.t_ref, p.q_min, p.q_max);
            }
            (kind, _) => {
                let _ = writeln!(s, "{} {}", n.id, kind.as_str());
            }
        }
    }
    s.push_str("\n[edges]\n# from to length_m diameter_m loss_W_per_mK reversible [return]\n");
    for e in &g.edges {
        let _ = write!(
            s,
            "{} {} {} {} {} {}",
            e.from, e.to, e.length, e.diameter, e.heat_loss_coeff, e.reversible
        );
        if e.return_flow == ReturnFlow::Same {
            s.push_str(" same");
        }
        s.push('\n');
    }
    s
}

pub fn load_topology(path: impl AsRef<Path>) -> Result<NetworkGraph> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let g = parse_topology(&text, &path.display().to_string())?;
    let report = validate_graph(&g);
    if !report.is_valid() {
        return Err(Error::InvalidGraph(report.violations));
    }
    Ok(g)
}

pub fn save_topology(g: &NetworkGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_topology(g)).map_err(|e| Error::io(path, e))
}

pub const AROMA_TOPOLOGY: &str = include_str!("../data/aroma.topo");

/// The bundled AROMA benchmark network.
pub fn aroma() -> NetworkGraph {
    parse_topology(AROMA_TOPOLOGY, "aroma.topo").expect("bundled topology parses")
}
