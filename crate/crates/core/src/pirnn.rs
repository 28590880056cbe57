//! Topology-wired GRU: one single-layer GRU per load plus one for the return
//! network, connected along the reduced graph and trained as one model.
//!
//! Channel layout follows the simulator: inputs `[T0s, P1c, …, Pnc]`,
//! outputs `[T0r, q0, T1s, T1c, q1c, …]`. Wiring happens in normalized
//! channel space; an upstream `Tjs` prediction enters a downstream subnet
//! with the same scaling as the measured channel.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::rnn::gru::GruNet;
use crate::rnn::{Normalizer, SequenceModel};
use crate::topology::{NodeId, ReducedGraph};

pub const PI_FORMAT: &str = "dhs-pi-gru";

type ChannelBuf = SmallVec<[f64; 32]>;
pub const FORMAT_VERSION: u32 = 1;

/// Where one subnet input comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    /// Model input channel.
    Input(usize),
    /// Composite output channel produced earlier in the same step.
    Output(usize),
    /// Sum of the demands of every load except the given load index.
    CumulativeDemand(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubnetRole {
    Load(NodeId),
    Return,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubnetSpec {
    pub role: SubnetRole,
    pub inputs: Vec<Source>,
    /// Composite output channels written by this subnet.
    pub outputs: Vec<usize>,
    pub size: usize,
}

pub fn t_supply_channel(load_index: usize) -> usize {
    2 + 3 * load_index
}

pub fn t_return_channel(load_index: usize) -> usize {
    3 + 3 * load_index
}

pub fn q_load_channel(load_index: usize) -> usize {
    4 + 3 * load_index
}

pub fn demand_input(load_index: usize) -> usize {
    1 + load_index
}

/// Allocations of the bundled AROMA network, listed loads 1–5 then return.
pub const AROMA_ALLOCATIONS: [(usize, [usize; 6]); 3] = [
    (30, [3, 3, 3, 4, 8, 9]),
    (54, [6, 6, 6, 8, 12, 16]),
    (90, [9, 9, 9, 16, 20, 27]),
];

fn is_aroma(rg: &ReducedGraph) -> bool {
    let e = |a: usize, b: usize| (NodeId(a), NodeId(b));
    rg.nodes == (0..=5).map(NodeId).collect::<Vec<_>>()
        && rg.edges == vec![e(0, 1), e(0, 2), e(1, 3), e(2, 4), e(2, 5), e(3, 4), e(3, 5)]
}

/// Neuron counts per subnet, loads in id order then the return subnet.
///
/// The return subnet gets `round(0.3·total)`; the rest is split over the
/// loads in proportion to their distance from the station (largest
/// remainder), so farther loads never get fewer neurons. The bundled AROMA
/// network uses fixed tables for 30, 54 and 90 states.
pub fn allocate_neurons(rg: &ReducedGraph, distances: &BTreeMap<NodeId, f64>, total: usize) -> Result<Vec<usize>> {
    let loads: Vec<NodeId> = rg.nodes.iter().copied().filter(|n| *n != NodeId::STATION).collect();
    let n_rnn = loads.len() + 1;
    if loads.is_empty() {
        return Err(Error::Allocation("network has no loads".into()));
    }
    if total < n_rnn {
        return Err(Error::Allocation(format!("{total} states for {n_rnn} subnets")));
    }
    if is_aroma(rg) {
        if let Some((_, a)) = AROMA_ALLOCATIONS.iter().find(|(t, _)| *t == total) {
            return Ok(a.to_vec());
        }
    }
    let dist: Vec<f64> = loads
        .iter()
        .map(|l| {
            distances
                .get(l)
                .copied()
                .filter(|d| d.is_finite() && *d >= 0.0)
                .ok_or_else(|| Error::Allocation(format!("no distance for load {l}")))
        })
        .collect::<Result<_>>()?;

    let mut ret = ((0.3 * total as f64).round() as usize).clamp(1, total - loads.len());
    let rest = total - ret;
    let dsum: f64 = dist.iter().sum();
    let raw: Vec<f64> = if dsum > 0.0 {
        dist.iter().map(|d| rest as f64 * d / dsum).collect()
    } else {
        vec![rest as f64 / loads.len() as f64; loads.len()]
    };
    let mut sizes: Vec<usize> = raw.iter().map(|r| (r.floor() as usize).max(1)).collect();
    // by distance, farthest first, then id
    let mut by_dist: Vec<usize> = (0..loads.len()).collect();
    by_dist.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
    let mut rank: Vec<usize> = (0..loads.len()).collect();
    rank.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(dist[b].total_cmp(&dist[a])).then(a.cmp(&b))
    });
    let mut assigned: usize = sizes.iter().sum();
    let mut k = 0;
    while assigned < rest {
        sizes[rank[k % rank.len()]] += 1;
        assigned += 1;
        k += 1;
    }
    while assigned > rest {
        let i = *by_dist
            .iter()
            .find(|&&i| sizes[i] > 1)
            .ok_or_else(|| Error::Allocation(format!("{total} states cannot cover {n_rnn} subnets")))?;
        sizes[i] -= 1;
        assigned -= 1;
    }
    // monotone in distance: hand the sorted sizes out in distance order
    let mut sorted = sizes.clone();
    sorted.sort_unstable();
    for (pos, &i) in by_dist.iter().rev().enumerate() {
        sizes[i] = sorted[pos];
    }
    // the return subnet keeps the largest share
    while ret < sizes[by_dist[0]] {
        sizes[by_dist[0]] -= 1;
        ret += 1;
        let mut sorted = sizes.clone();
        sorted.sort_unstable();
        for (pos, &j) in by_dist.iter().rev().enumerate() {
            sizes[j] = sorted[pos];
        }
    }
    sizes.push(ret);
    Ok(sizes)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PiRnnModel {
    specs: Vec<SubnetSpec>,
    nets: Vec<GruNet>,
    order: Vec<usize>,
    param_offsets: Vec<usize>,
    state_offsets: Vec<usize>,
    tape_offsets: Vec<usize>,
    tape_stride: usize,
    params: Vec<f64>,
    n_u: usize,
    n_y: usize,
    pub cumulative_demand: bool,
    pub input_norm: Normalizer,
    pub output_norm: Normalizer,
    /// Scaling of the cumulative-demand inputs, one entry per load.
    pub cumulative_norm: Normalizer,
    pub graph: ReducedGraph,
}

#[derive(Serialize, Deserialize)]
struct PiFile {
    format: String,
    version: u32,
    fingerprint: String,
    graph: ReducedGraph,
    cumulative_demand: bool,
    subnets: Vec<SubnetSpec>,
    order: Vec<usize>,
    input_norm: Normalizer,
    output_norm: Normalizer,
    cumulative_norm: Normalizer,
    params: Vec<f64>,
}

fn subnet_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64 + 1)
}

/// Wires one GRU subnet per load along `rg` plus the return subnet.
pub fn build_pi_rnn(rg: &ReducedGraph, allocation: &[usize], cumulative_demand: bool, seed: u64) -> Result<PiRnnModel> {
    let loads: Vec<NodeId> = rg.nodes.iter().copied().filter(|n| *n != NodeId::STATION).collect();
    if !rg.nodes.contains(&NodeId::STATION) {
        return Err(Error::Wiring("reduced graph has no station".into()));
    }
    if allocation.len() != loads.len() + 1 {
        return Err(Error::Wiring(format!(
            "allocation has {} entries for {} subnets",
            allocation.len(),
            loads.len() + 1
        )));
    }
    let topo = rg
        .topological_order()
        .ok_or_else(|| Error::Wiring("reduced graph has a cycle among significant nodes".into()))?;
    let index: BTreeMap<NodeId, usize> = loads.iter().enumerate().map(|(i, n)| (*n, i)).collect();

    let mut specs = Vec::with_capacity(loads.len() + 1);
    for (i, &l) in loads.iter().enumerate() {
        let mut inputs = Vec::new();
        for p in rg.predecessors(l) {
            if p == NodeId::STATION {
                inputs.push(Source::Input(0));
            } else {
                let j = *index.get(&p).ok_or_else(|| Error::Wiring(format!("unknown upstream node {p}")))?;
                inputs.push(Source::Output(t_supply_channel(j)));
            }
        }
        inputs.push(Source::Input(demand_input(i)));
        if cumulative_demand {
            inputs.push(Source::CumulativeDemand(i));
        }
        specs.push(SubnetSpec {
            role: SubnetRole::Load(l),
            inputs,
            outputs: vec![t_supply_channel(i), t_return_channel(i), q_load_channel(i)],
            size: allocation[i],
        });
    }
    specs.push(SubnetSpec {
        role: SubnetRole::Return,
        inputs: (0..loads.len())
            .flat_map(|i| [Source::Output(t_return_channel(i)), Source::Output(q_load_channel(i))])
            .collect(),
        outputs: vec![0, 1],
        size: allocation[loads.len()],
    });
    let mut order: Vec<usize> = topo.iter().filter_map(|n| index.get(n).copied()).collect();
    order.push(loads.len());

    let n_loads = loads.len();
    let mut m = PiRnnModel::assemble(
        specs,
        order,
        cumulative_demand,
        Normalizer::identity(1 + n_loads),
        Normalizer::identity(2 + 3 * n_loads),
        Normalizer::identity(n_loads),
        rg.clone(),
        None,
    )?;
    for s in 0..m.nets.len() {
        let p = m.nets[s].init_params(subnet_seed(seed, s));
        let o = m.param_offsets[s];
        m.params[o..o + p.len()].copy_from_slice(&p);
    }
    Ok(m)
}

impl PiRnnModel {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        specs: Vec<SubnetSpec>,
        order: Vec<usize>,
        cumulative_demand: bool,
        input_norm: Normalizer,
        output_norm: Normalizer,
        cumulative_norm: Normalizer,
        graph: ReducedGraph,
        params: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n_u = input_norm.len();
        let n_y = output_norm.len();
        let n_loads = cumulative_norm.len();
        if n_u != 1 + n_loads || n_y != 2 + 3 * n_loads || specs.len() != n_loads + 1 {
            return Err(Error::Wiring("channel counts do not match the load count".into()));
        }
        let mut sorted = order.clone();
        sorted.sort_unstable();
        if sorted != (0..specs.len()).collect::<Vec<_>>() {
            return Err(Error::Wiring("evaluation order is not a permutation of the subnets".into()));
        }
        // every consumed output must be produced earlier in the order
        let mut produced = vec![false; n_y];
        for &s in &order {
            let sp = &specs[s];
            for src in &sp.inputs {
                let ok = match *src {
                    Source::Input(c) => c < n_u,
                    Source::Output(c) => c < n_y && produced[c],
                    Source::CumulativeDemand(l) => l < n_loads,
                };
                if !ok {
                    return Err(Error::Wiring(format!("subnet {s} reads unavailable source {src:?}")));
                }
            }
            for &c in &sp.outputs {
                if c >= n_y || produced[c] {
                    return Err(Error::Wiring(format!("output channel {c} written twice or out of range")));
                }
                produced[c] = true;
            }
        }
        if produced.iter().any(|p| !p) {
            return Err(Error::Wiring("some output channels are never produced".into()));
        }
        let nets: Vec<GruNet> = specs
            .iter()
            .map(|s| GruNet::new(vec![s.size], s.inputs.len(), s.outputs.len()))
            .collect::<Result<_>>()?;
        let (mut po, mut so, mut to) = (Vec::new(), Vec::new(), Vec::new());
        let (mut p, mut x, mut t) = (0, 0, 0);
        for n in &nets {
            po.push(p);
            so.push(x);
            to.push(t);
            p += n.n_params();
            x += n.n_x();
            t += n.tape_stride();
        }
        let params = match params {
            Some(v) if v.len() == p => v,
            Some(v) => {
                return Err(Error::Dimension(format!("{} parameters for a model of {p}", v.len())));
            }
            None => vec![0.0; p],
        };
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameter".into()));
        }
        input_norm.check()?;
        output_norm.check()?;
        cumulative_norm.check()?;
        Ok(PiRnnModel {
            specs,
            nets,
            order,
            param_offsets: po,
            state_offsets: so,
            tape_offsets: to,
            tape_stride: t,
            params,
            n_u,
            n_y,
            cumulative_demand,
            input_norm,
            output_norm,
            cumulative_norm,
            graph,
        })
    }

    pub fn specs(&self) -> &[SubnetSpec] {
        &self.specs
    }

    pub fn n_rnn(&self) -> usize {
        self.specs.len()
    }

    pub fn allocation(&self) -> Vec<usize> {
        self.specs.iter().map(|s| s.size).collect()
    }

    /// Subnet indices in evaluation order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Parameter index range of subnet `s`.
    pub fn subnet_params(&self, s: usize) -> std::ops::Range<usize> {
        self.param_offsets[s]..self.param_offsets[s] + self.nets[s].n_params()
    }

    fn n_loads(&self) -> usize {
        self.cumulative_norm.len()
    }

    fn cumulative_value(&self, l: usize, u_n: &[f64]) -> f64 {
        let inorm = &self.input_norm;
        let mut s = 0.0;
        for k in 0..self.n_loads() {
            if k != l {
                let c = demand_input(k);
                s += inorm.mean[c] + inorm.std[c] * u_n[c];
            }
        }
        (s - self.cumulative_norm.mean[l]) / self.cumulative_norm.std[l]
    }

    pub fn to_json(&self) -> String {
        let f = PiFile {
            format: PI_FORMAT.into(),
            version: FORMAT_VERSION,
            fingerprint: self.graph.fingerprint(),
            graph: self.graph.clone(),
            cumulative_demand: self.cumulative_demand,
            subnets: self.specs.clone(),
            order: self.order.clone(),
            input_norm: self.input_norm.clone(),
            output_norm: self.output_norm.clone(),
            cumulative_norm: self.cumulative_norm.clone(),
            params: self.params.clone(),
        };
        serde_json::to_string(&f).expect("model serializes")
    }

    /// Parses a saved model. When `expected` is given, its fingerprint must
    /// match the one stored in the file.
    pub fn from_json(text: &str, expected: Option<&ReducedGraph>) -> Result<Self> {
        let f: PiFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if f.format != PI_FORMAT {
            return Err(Error::Format(format!("expected format {PI_FORMAT}, found {}", f.format)));
        }
        if f.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {}", f.version)));
        }
        if f.graph.fingerprint() != f.fingerprint {
            return Err(Error::Format("stored graph does not match its fingerprint".into()));
        }
        if let Some(rg) = expected {
            if rg.fingerprint() != f.fingerprint {
                return Err(Error::Format(format!(
                    "model was built for reduced graph {}, topology gives {}",
                    f.fingerprint,
                    rg.fingerprint()
                )));
            }
        }
        PiRnnModel::assemble(
            f.subnets,
            f.order,
            f.cumulative_demand,
            f.input_norm,
            f.output_norm,
            f.cumulative_norm,
            f.graph,
            Some(f.params),
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, expected: Option<&ReducedGraph>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, expected)
    }
}

impl SequenceModel for PiRnnModel {
    fn n_u(&self) -> usize {
        self.n_u
    }

    fn n_y(&self) -> usize {
        self.n_y
    }

    fn n_x(&self) -> usize {
        self.nets.iter().map(GruNet::n_x).sum()
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn input_norm(&self) -> &Normalizer {
        &self.input_norm
    }

    fn output_norm(&self) -> &Normalizer {
        &self.output_norm
    }

    fn fit_normalization(&mut self, inputs: &[Vec<f64>], outputs: &[Vec<f64>]) -> Result<()> {
        let i = Normalizer::fit(inputs)?;
        let o = Normalizer::fit(outputs)?;
        if i.len() != self.n_u || o.len() != self.n_y {
            return Err(Error::Dimension("data channels do not match the model".into()));
        }
        let nl = self.n_loads();
        let cum: Vec<Vec<f64>> = inputs
            .iter()
            .map(|u| {
                let total: f64 = (0..nl).map(|k| u[demand_input(k)]).sum();
                (0..nl).map(|l| total - u[demand_input(l)]).collect()
            })
            .collect();
        self.cumulative_norm = Normalizer::fit(&cum)?;
        self.input_norm = i;
        self.output_norm = o;
        Ok(())
    }

    fn tape_stride(&self) -> usize {
        self.tape_stride
    }

    fn step_n(&self, x: &mut [f64], u_n: &[f64], y_n: &mut [f64], mut tape: Option<&mut [f64]>) {
        let mut ybuf = [0.0; 3];
        let mut ubuf = ChannelBuf::new();
        for &s in &self.order {
            let sp = &self.specs[s];
            let net = &self.nets[s];
            ubuf.clear();
            for src in &sp.inputs {
                ubuf.push(match *src {
                    Source::Input(c) => u_n[c],
                    Source::Output(c) => y_n[c],
                    Source::CumulativeDemand(l) => self.cumulative_value(l, u_n),
                });
            }
            let p = &self.params[self.param_offsets[s]..self.param_offsets[s] + net.n_params()];
            let xs = &mut x[self.state_offsets[s]..self.state_offsets[s] + net.n_x()];
            let ys = &mut ybuf[..sp.outputs.len()];
            let ts = tape
                .as_deref_mut()
                .map(|t| &mut t[self.tape_offsets[s]..self.tape_offsets[s] + net.tape_stride()]);
            net.step(p, xs, &ubuf, ys, ts);
            for (k, &c) in sp.outputs.iter().enumerate() {
                y_n[c] = ys[k];
            }
        }
    }

    fn backward_step_n(
        &self,
        tape: &[f64],
        dy_n: &[f64],
        dx: &mut [f64],
        mut g: Option<&mut [f64]>,
        mut du_n: Option<&mut [f64]>,
    ) {
        let mut dyc = ChannelBuf::new();
        dyc.extend_from_slice(dy_n);
        let mut dys = [0.0; 3];
        let mut dus = ChannelBuf::new();
        for &s in self.order.iter().rev() {
            let sp = &self.specs[s];
            let net = &self.nets[s];
            for (k, &c) in sp.outputs.iter().enumerate() {
                dys[k] = dyc[c];
            }
            dus.clear();
            dus.resize(sp.inputs.len(), 0.0);
            let po = self.param_offsets[s];
            let p = &self.params[po..po + net.n_params()];
            let ts = &tape[self.tape_offsets[s]..self.tape_offsets[s] + net.tape_stride()];
            let xs = &mut dx[self.state_offsets[s]..self.state_offsets[s] + net.n_x()];
            let gs = g.as_deref_mut().map(|g| &mut g[po..po + net.n_params()]);
            net.backward_step(p, ts, &dys[..sp.outputs.len()], xs, gs, Some(&mut dus));
            for (src, d) in sp.inputs.iter().zip(&dus) {
                match *src {
                    Source::Output(c) => dyc[c] += d,
                    Source::Input(c) => {
                        if let Some(du) = du_n.as_deref_mut() {
                            du[c] += d;
                        }
                    }
                    Source::CumulativeDemand(l) => {
                        if let Some(du) = du_n.as_deref_mut() {
                            for k in 0..self.n_loads() {
                                if k != l {
                                    let c = demand_input(k);
                                    du[c] += d * self.input_norm.std[c] / self.cumulative_norm.std[l];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{aroma, reduce_graph};

    fn aroma_rg() -> ReducedGraph {
        reduce_graph(&aroma()).unwrap()
    }

    #[test]
    fn aroma_tables() {
        let g = aroma();
        let rg = aroma_rg();
        let d = g.distances_from_station();
        assert_eq!(allocate_neurons(&rg, &d, 54).unwrap(), vec![6, 6, 6, 8, 12, 16]);
        assert_eq!(allocate_neurons(&rg, &d, 30).unwrap(), vec![3, 3, 3, 4, 8, 9]);
        assert_eq!(allocate_neurons(&rg, &d, 90).unwrap(), vec![9, 9, 9, 16, 20, 27]);
        assert!(allocate_neurons(&rg, &d, 5).is_err());
    }

    #[test]
    fn heuristic_is_monotone_and_sums() {
        let g = aroma();
        let rg = aroma_rg();
        let d = g.distances_from_station();
        for total in [6, 7, 12, 20, 41, 54, 77, 200] {
            let mut rg2 = rg.clone();
            // break the table lookup
            rg2.edges.retain(|e| *e != (NodeId(3), NodeId(5)));
            let a = allocate_neurons(&rg2, &d, total).unwrap();
            assert_eq!(a.iter().sum::<usize>(), total, "{a:?}");
            let dl: Vec<f64> = (1..=5).map(|i| d[&NodeId(i)]).collect();
            for i in 0..5 {
                for j in 0..5 {
                    if dl[i] < dl[j] {
                        assert!(a[i] <= a[j], "{a:?}");
                    }
                }
            }
            assert!(a.iter().all(|s| *s >= 1));
            assert!(a[5] >= *a[..5].iter().max().unwrap(), "{total}: {a:?}");
        }
    }

    #[test]
    fn aroma_wiring() {
        let m = build_pi_rnn(&aroma_rg(), &[6, 6, 6, 8, 12, 16], false, 0).unwrap();
        assert_eq!(m.n_rnn(), 6);
        assert_eq!(m.n_x(), 54);
        let s = m.specs();
        assert_eq!(s[0].inputs, vec![Source::Input(0), Source::Input(1)]);
        assert_eq!(s[1].inputs, vec![Source::Input(0), Source::Input(2)]);
        assert_eq!(s[2].inputs, vec![Source::Output(2), Source::Input(3)]);
        let up = vec![Source::Output(t_supply_channel(1)), Source::Output(t_supply_channel(2))];
        assert_eq!(s[3].inputs[..2], up[..]);
        assert_eq!(s[4].inputs[..2], up[..]);
        assert_eq!(s[5].inputs.len(), 10);
        assert_eq!(*m.order().last().unwrap(), 5);
        let mc = build_pi_rnn(&aroma_rg(), &[6, 6, 6, 8, 12, 16], true, 0).unwrap();
        for sp in &mc.specs()[..5] {
            let nd = sp
                .inputs
                .iter()
                .filter(|s| matches!(s, Source::Input(c) if *c > 0) || matches!(s, Source::CumulativeDemand(_)))
                .count();
            assert_eq!(nd, 2);
        }
    }

    #[test]
    fn cyclic_graph_rejected() {
        let mut rg = aroma_rg();
        rg.edges.push((NodeId(4), NodeId(3)));
        rg.edges.sort();
        assert!(matches!(build_pi_rnn(&rg, &[1; 6], false, 0), Err(Error::Wiring(_))));
    }

    #[test]
    fn json_round_trip_checks_fingerprint() {
        let m = build_pi_rnn(&aroma_rg(), &[3, 3, 3, 4, 8, 9], true, 4).unwrap();
        let text = m.to_json();
        let back = PiRnnModel::from_json(&text, Some(&aroma_rg())).unwrap();
        assert_eq!(back, m);
        let mut other = aroma_rg();
        other.edges.pop();
        assert!(PiRnnModel::from_json(&text, Some(&other)).is_err());
    }
}
