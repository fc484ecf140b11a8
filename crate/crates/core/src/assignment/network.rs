//! Bounded flow networks for UAV-to-target assignment and their reduction
//! to a plain (lower-bound free) network between a super source and sink.

use serde::{Deserialize, Serialize};

use super::{AssignmentError, RewardMatrix};

/// Stand-in for an unbounded capacity.
pub const INF: i64 = i64::MAX / 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub lower: i64,
    pub upper: i64,
    pub cost: f64,
    /// Secondary cost used only to order otherwise equal solutions.
    pub tie: i64,
}

impl Arc {
    pub fn new(from: usize, to: usize, lower: i64, upper: i64, cost: f64) -> Self {
        Self { from, to, lower, upper, cost, tie: 0 }
    }
}

/// Which of the three bound patterns applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// Enough UAVs to give every target its full quota.
    Saturated,
    /// More UAVs than targets but not enough for every quota.
    Intermediate,
    /// At least as many targets as UAVs.
    Scarce,
}

impl Regime {
    pub fn classify(n_uav: usize, n_target: usize, caps: &[usize]) -> Self {
        let total: usize = caps.iter().sum();
        if n_uav >= total {
            Regime::Saturated
        } else if n_target >= n_uav {
            Regime::Scarce
        } else {
            Regime::Intermediate
        }
    }

    /// `(lower, upper)` on the source arc of every UAV.
    pub fn uav_bounds(self) -> (i64, i64) {
        match self {
            Regime::Saturated => (0, 1),
            Regime::Intermediate | Regime::Scarce => (1, 1),
        }
    }

    /// `(lower, upper)` on the sink arc of a target with quota `cap`.
    pub fn target_bounds(self, cap: usize) -> (i64, i64) {
        let cap = cap as i64;
        match self {
            Regime::Saturated => (cap, cap),
            Regime::Intermediate => (1, cap),
            Regime::Scarce => (0, 1),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::Saturated => "saturated",
            Regime::Intermediate => "intermediate",
            Regime::Scarce => "scarce",
        }
    }
}

/// Assignment network with source, sink, one vertex per UAV and one per
/// target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowNetwork {
    pub n_uav: usize,
    pub n_target: usize,
    pub regime: Regime,
    pub arcs: Vec<Arc>,
    /// Index of the first UAV-to-target arc; they are stored row-major.
    pub first_match_arc: usize,
}

impl FlowNetwork {
    pub const SOURCE: usize = 0;
    pub const SINK: usize = 1;

    pub fn uav(&self, i: usize) -> usize {
        2 + i
    }

    pub fn target(&self, j: usize) -> usize {
        2 + self.n_uav + j
    }

    /// Vertex count including the super source and sink.
    pub fn num_vertices(&self) -> usize {
        2 + self.n_uav + self.n_target + 2
    }

    pub fn super_source(&self) -> usize {
        2 + self.n_uav + self.n_target
    }

    pub fn super_sink(&self) -> usize {
        self.super_source() + 1
    }

    /// Arc index of UAV `i` to target `j`.
    pub fn match_arc(&self, i: usize, j: usize) -> usize {
        self.first_match_arc + i * self.n_target + j
    }
}

/// Builds the bounded network. UAV-to-target costs are shifted to
/// `R_max - R_ij` so that every cost is non-negative; the number of matched
/// pairs is fixed within a regime, so the shift does not move the optimum.
/// The secondary cost of a match arc is the target index, which prefers
/// lower target indices among equal-reward solutions.
pub fn build_network(r: &RewardMatrix, caps: &[usize]) -> FlowNetwork {
    let (nu, nt) = (r.n_uav(), r.n_target());
    assert_eq!(caps.len(), nt, "one cap per target");
    let regime = Regime::classify(nu, nt, caps);
    let r_max = r.max().unwrap_or(0.0);
    let mut net = FlowNetwork { n_uav: nu, n_target: nt, regime, arcs: Vec::new(), first_match_arc: 0 };
    let (ul, uu) = regime.uav_bounds();
    for i in 0..nu {
        net.arcs.push(Arc::new(FlowNetwork::SOURCE, net.uav(i), ul, uu, 0.0));
    }
    net.first_match_arc = net.arcs.len();
    for i in 0..nu {
        for j in 0..nt {
            let mut a = Arc::new(net.uav(i), net.target(j), 0, 1, r_max - r.get(i, j));
            a.tie = j as i64;
            net.arcs.push(a);
        }
    }
    for (j, &cap) in caps.iter().enumerate() {
        let (tl, tu) = regime.target_bounds(cap);
        net.arcs.push(Arc::new(net.target(j), FlowNetwork::SINK, tl, tu, 0.0));
    }
    net
}

/// Lower-bound free network between the super source and super sink.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedNetwork {
    pub num_vertices: usize,
    pub source: usize,
    pub sink: usize,
    pub arcs: Vec<Arc>,
    /// Original arcs each reduced arc stands for. The return arc from sink
    /// to source has index `original.arcs.len()`.
    pub origin: Vec<Vec<usize>>,
    /// Total capacity leaving the super source; a feasible original flow
    /// exists iff the maximum flow reaches it.
    pub demand: i64,
}

/// Removes every lower bound.
///
/// A return arc from sink to source turns the problem into a circulation.
/// Each vertex then receives the imbalance of the lower bounds around it as
/// an arc from the super source (net inflow) or to the super sink (net
/// outflow). Zero-capacity arcs are dropped, and vertices left with one
/// arc in and one arc out are contracted into a single arc that keeps the
/// smaller capacity and the summed cost.
pub fn eliminate_lower_bounds(net: &FlowNetwork) -> Result<ReducedNetwork, AssignmentError> {
    let n = net.num_vertices();
    let (ss, st) = (net.super_source(), net.super_sink());
    let mut arcs = net.arcs.clone();
    let mut origin: Vec<Vec<usize>> = (0..arcs.len()).map(|a| vec![a]).collect();
    arcs.push(Arc::new(FlowNetwork::SINK, FlowNetwork::SOURCE, 0, INF, 0.0));
    origin.push(vec![net.arcs.len()]);

    let mut f_in = vec![0i64; n];
    let mut f_out = vec![0i64; n];
    for a in &arcs {
        f_in[a.to] += a.lower;
        f_out[a.from] += a.lower;
    }
    for v in 0..ss {
        if f_in[v] >= f_out[v] {
            for a in arcs.iter_mut().filter(|a| a.to == v && a.lower > 0) {
                a.upper -= a.lower;
                a.lower = 0;
            }
            arcs.push(Arc::new(ss, v, 0, f_in[v] - f_out[v], 0.0));
        } else {
            for a in arcs.iter_mut().filter(|a| a.from == v && a.lower > 0) {
                a.upper -= a.lower;
                a.lower = 0;
            }
            arcs.push(Arc::new(v, st, 0, f_out[v] - f_in[v], 0.0));
        }
        origin.push(Vec::new());
    }
    if let Some(a) = arcs.iter().find(|a| a.lower > 0) {
        return Err(AssignmentError::Internal(format!("arc {}->{} kept lower bound {}", a.from, a.to, a.lower)));
    }

    let mut alive: Vec<bool> = arcs.iter().map(|a| a.upper > 0).collect();
    let mut indeg = vec![0usize; n];
    let mut outdeg = vec![0usize; n];
    for (a, _) in arcs.iter().zip(&alive).filter(|(_, &l)| l) {
        indeg[a.to] += 1;
        outdeg[a.from] += 1;
    }
    for v in 0..ss {
        if indeg[v] != 1 || outdeg[v] != 1 {
            continue;
        }
        let ai = (0..arcs.len()).find(|&k| alive[k] && arcs[k].to == v).expect("in-arc");
        let ao = (0..arcs.len()).find(|&k| alive[k] && arcs[k].from == v).expect("out-arc");
        let (j, k) = (arcs[ai].from, arcs[ao].to);
        if j == k {
            continue;
        }
        let merged = Arc {
            from: j,
            to: k,
            lower: 0,
            upper: arcs[ai].upper.min(arcs[ao].upper),
            cost: arcs[ai].cost + arcs[ao].cost,
            tie: arcs[ai].tie + arcs[ao].tie,
        };
        let mut prov = origin[ai].clone();
        prov.extend_from_slice(&origin[ao]);
        alive[ai] = false;
        alive[ao] = false;
        indeg[v] = 0;
        outdeg[v] = 0;
        arcs.push(merged);
        origin.push(prov);
        alive.push(true);
    }

    let mut out_arcs = Vec::new();
    let mut out_origin = Vec::new();
    for (k, a) in arcs.into_iter().enumerate() {
        if alive[k] {
            out_arcs.push(a);
            out_origin.push(std::mem::take(&mut origin[k]));
        }
    }
    let demand = out_arcs.iter().filter(|a| a.from == ss).map(|a| a.upper).sum();
    Ok(ReducedNetwork { num_vertices: n, source: ss, sink: st, arcs: out_arcs, origin: out_origin, demand })
}

/// Flow on every original arc (plus the return arc, last) recovered from a
/// flow on the reduced network by adding back the lower bounds.
pub fn map_back(net: &FlowNetwork, reduced: &ReducedNetwork, flow: &[i64]) -> Vec<i64> {
    let mut f: Vec<i64> = net.arcs.iter().map(|a| a.lower).collect();
    f.push(0);
    for (k, &x) in flow.iter().enumerate() {
        for &o in &reduced.origin[k] {
            f[o] += x;
        }
    }
    f
}

/// Checks that `flow` (original arcs plus the return arc) respects every
/// original bound and conserves flow at every vertex.
pub fn check_original_flow(net: &FlowNetwork, flow: &[i64]) -> Result<(), String> {
    if flow.len() != net.arcs.len() + 1 {
        return Err(format!("expected {} arc flows, got {}", net.arcs.len() + 1, flow.len()));
    }
    let mut balance = vec![0i64; net.num_vertices()];
    for (a, &x) in net.arcs.iter().zip(flow) {
        if x < a.lower || x > a.upper {
            return Err(format!("arc {}->{} carries {x} outside [{}, {}]", a.from, a.to, a.lower, a.upper));
        }
        balance[a.from] -= x;
        balance[a.to] += x;
    }
    let ret = flow[net.arcs.len()];
    balance[FlowNetwork::SINK] -= ret;
    balance[FlowNetwork::SOURCE] += ret;
    match balance.iter().position(|&b| b != 0) {
        Some(v) => Err(format!("vertex {v} unbalanced by {}", balance[v])),
        None => Ok(()),
    }
}
