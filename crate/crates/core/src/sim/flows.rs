//! Mass-flow distribution over the network.
//!
//! The supply orientation of every fixed edge is known. Each reversible pair
//! is oriented by the sign of `s·(D_a + D_b) − D_a`, where `D_a`, `D_b` are
//! the load flows reachable from either end without crossing the pair and
//! `s` is the split fraction. Flows are then accumulated from the loads
//! towards the station; a node fed by two pipes draws the fraction `s` from
//! the inlet with the smaller id and `1 − s` from the other, more inlets
//! share equally.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::topology::{NetworkGraph, NodeId, NodeKind, Pipe};

/// Precomputed incidence structure of a network.
#[derive(Clone, Debug)]
pub struct Hydraulics {
    pub nodes: Vec<NodeId>,
    pub pipes: Vec<Pipe>,
    pub loads: Vec<NodeId>,
    index: BTreeMap<NodeId, usize>,
    /// Node index → load index.
    load_of: Vec<Option<usize>>,
    /// Pipe index (reversible only) → load indices reachable from `a` and from `b`.
    pair_reach: BTreeMap<usize, (Vec<usize>, Vec<usize>)>,
}

/// Resolved flows for one set of load flows.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    /// Magnitude per pipe, kg/s.
    pub pipe_flow: Vec<f64>,
    /// Supply flow runs `b → a` on this pipe.
    pub pipe_reversed: Vec<bool>,
    /// Total flow through each node: inflow on supply, outflow on return, kg/s.
    pub node_through: Vec<f64>,
    /// Load flows in load order, kg/s.
    pub load_flow: Vec<f64>,
    /// Station flow, `Σ q_c`.
    pub q0: f64,
    /// Node indices in supply flow order.
    pub order: Vec<usize>,
}

impl FlowField {
    /// Oriented supply endpoints `(from, to)` of pipe `p` as node ids.
    pub fn supply_ends(&self, pipes: &[Pipe], p: usize) -> (NodeId, NodeId) {
        if self.pipe_reversed[p] {
            (pipes[p].b, pipes[p].a)
        } else {
            (pipes[p].a, pipes[p].b)
        }
    }
}

impl Hydraulics {
    pub fn new(g: &NetworkGraph) -> Self {
        let nodes: Vec<NodeId> = g.nodes().iter().map(|n| n.id).collect();
        let index: BTreeMap<NodeId, usize> = nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        let loads = g.loads();
        let mut load_of = vec![None; nodes.len()];
        for (k, l) in loads.iter().enumerate() {
            load_of[index[l]] = Some(k);
        }
        let pipes = g.pipes();
        let mut pair_reach = BTreeMap::new();
        for (p, pipe) in pipes.iter().enumerate().filter(|(_, p)| p.reversible) {
            let reach = |start: NodeId| -> Vec<usize> {
                let mut seen = BTreeSet::from([start]);
                let mut queue = VecDeque::from([start]);
                while let Some(u) = queue.pop_front() {
                    for e in g.edges().iter().filter(|e| e.from == u && !e.reversible) {
                        if seen.insert(e.to) {
                            queue.push_back(e.to);
                        }
                    }
                }
                seen.iter()
                    .filter(|n| g.node(**n).map(|x| x.kind) == Some(NodeKind::Load))
                    .filter_map(|n| loads.iter().position(|l| l == n))
                    .collect()
            };
            pair_reach.insert(p, (reach(pipe.a), reach(pipe.b)));
        }
        Hydraulics {
            nodes,
            pipes,
            loads,
            index,
            load_of,
            pair_reach,
        }
    }

    pub fn node_index(&self, id: NodeId) -> usize {
        self.index[&id]
    }

    pub fn load_index(&self, node_idx: usize) -> Option<usize> {
        self.load_of[node_idx]
    }

    /// Distributes the given load flows over the network.
    pub fn solve(&self, load_flow: &[f64], split: f64) -> Result<FlowField> {
        if load_flow.len() != self.loads.len() {
            return Err(Error::Dimension(format!(
                "{} load flows for {} loads",
                load_flow.len(),
                self.loads.len()
            )));
        }
        if let Some(q) = load_flow.iter().find(|q| !q.is_finite() || **q < 0.0) {
            return Err(Error::UnsolvableFlow(format!("negative or non-finite load flow {q}")));
        }
        let n = self.nodes.len();
        let np = self.pipes.len();

        let mut reversed = vec![false; np];
        for (p, (ra, rb)) in &self.pair_reach {
            let da: f64 = ra.iter().map(|&k| load_flow[k]).sum();
            let db: f64 = rb.iter().map(|&k| load_flow[k]).sum();
            reversed[*p] = split * (da + db) - da < 0.0;
        }

        let ends = |p: usize| -> (usize, usize) {
            let pipe = &self.pipes[p];
            let (a, b) = (self.index[&pipe.a], self.index[&pipe.b]);
            if reversed[p] {
                (b, a)
            } else {
                (a, b)
            }
        };

        let mut inlets: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut outlets: Vec<Vec<usize>> = vec![Vec::new(); n];
        for p in 0..np {
            let (f, t) = ends(p);
            inlets[t].push(p);
            outlets[f].push(p);
        }
        for v in inlets.iter_mut() {
            v.sort_by_key(|&p| self.nodes[ends(p).0]);
        }

        // Kahn order, smallest index first.
        let mut indeg: Vec<usize> = inlets.iter().map(|v| v.len()).collect();
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(u) = ready.pop_first() {
            order.push(u);
            for &p in &outlets[u] {
                let t = ends(p).1;
                indeg[t] -= 1;
                if indeg[t] == 0 {
                    ready.insert(t);
                }
            }
        }
        if order.len() != n {
            return Err(Error::UnsolvableFlow("oriented network contains a cycle".into()));
        }

        let weight = |t: usize, p: usize| -> f64 {
            let ins = &inlets[t];
            match ins.len() {
                1 => 1.0,
                2 if ins[0] == p => split,
                2 => 1.0 - split,
                k => 1.0 / k as f64,
            }
        };

        let mut through = vec![0.0; n];
        let mut pipe_flow = vec![0.0; np];
        for &i in order.iter().rev() {
            let mut total = self.load_of[i].map_or(0.0, |k| load_flow[k]);
            for &p in &outlets[i] {
                let t = ends(p).1;
                pipe_flow[p] = through[t] * weight(t, p);
                total += pipe_flow[p];
            }
            through[i] = total;
            let station = self.nodes[i] == NodeId::STATION;
            if !station && inlets[i].is_empty() && total > 0.0 {
                return Err(Error::UnsolvableFlow(format!(
                    "node {} needs {total} kg/s but has no supply inlet",
                    self.nodes[i]
                )));
            }
        }

        Ok(FlowField {
            pipe_flow,
            pipe_reversed: reversed,
            node_through: through,
            load_flow: load_flow.to_vec(),
            q0: load_flow.iter().sum(),
            order,
        })
    }

    /// Net supply flow leaving node `i` after its load draw (`q_i^s`).
    pub fn node_supply_flow(&self, f: &FlowField, i: usize) -> f64 {
        f.node_through[i] - self.load_of[i].map_or(0.0, |k| f.load_flow[k])
    }

    /// Net return flow leaving node `i` towards the station (`q_i^r`).
    pub fn node_return_flow(&self, f: &FlowField, i: usize) -> f64 {
        f.node_through[i]
    }

    /// Supply flow summed over the pipes leaving the station.
    pub fn station_outflow(&self, f: &FlowField) -> f64 {
        let s = self.index[&NodeId::STATION];
        (0..self.pipes.len())
            .filter(|&p| {
                let (from, _) = f.supply_ends(&self.pipes, p);
                self.index[&from] == s
            })
            .map(|p| f.pipe_flow[p])
            .sum()
    }

    /// Largest violation of the per-node balance `Σ in − q_c − Σ out = 0`, kg/s.
    pub fn balance_residual(&self, f: &FlowField) -> f64 {
        let mut inflow = vec![0.0; self.nodes.len()];
        let mut outflow = vec![0.0; self.nodes.len()];
        for p in 0..self.pipes.len() {
            let (a, b) = f.supply_ends(&self.pipes, p);
            outflow[self.index[&a]] += f.pipe_flow[p];
            inflow[self.index[&b]] += f.pipe_flow[p];
        }
        let s = self.index[&NodeId::STATION];
        inflow[s] += f.q0;
        (0..self.nodes.len())
            .map(|i| {
                let qc = self.load_of[i].map_or(0.0, |k| f.load_flow[k]);
                (inflow[i] - qc - outflow[i]).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Per-node and per-pipe flows for the given load flows (in load order).
pub fn network_flows(g: &NetworkGraph, load_flow: &[f64], split: f64) -> Result<FlowField> {
    Hydraulics::new(g).solve(load_flow, split)
}
