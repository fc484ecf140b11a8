//! Minimum-cost maximum-flow by successive shortest augmenting paths.
//!
//! Shortest paths are found with a FIFO label-correcting search (SPFA) on
//! the residual network. Costs are compared lexicographically as
//! `(cost, tie)`; primary costs within a small tolerance count as equal.

use std::collections::VecDeque;

use super::network::Arc;

#[derive(Debug, Clone, PartialEq)]
pub struct McmfResult {
    /// Flow on each input arc.
    pub flow: Vec<i64>,
    pub value: i64,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    to: usize,
    cap: i64,
    cost: f64,
    tie: i64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dist {
    cost: f64,
    tie: i64,
}

impl Dist {
    fn less(self, other: Dist, eps: f64) -> bool {
        if self.cost < other.cost - eps {
            true
        } else if self.cost > other.cost + eps {
            false
        } else {
            self.tie < other.tie
        }
    }
}

/// Solves min-cost max-flow from `source` to `sink`. Arcs must have zero
/// lower bounds and the network must contain no negative-cost cycle.
pub fn min_cost_max_flow(num_vertices: usize, arcs: &[Arc], source: usize, sink: usize) -> McmfResult {
    let mut edges: Vec<Edge> = Vec::with_capacity(2 * arcs.len());
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); num_vertices];
    let mut scale = 0.0f64;
    for a in arcs {
        debug_assert_eq!(a.lower, 0, "lower bounds must be eliminated first");
        adj[a.from].push(edges.len());
        edges.push(Edge { to: a.to, cap: a.upper, cost: a.cost, tie: a.tie });
        adj[a.to].push(edges.len());
        edges.push(Edge { to: a.from, cap: 0, cost: -a.cost, tie: -a.tie });
        scale = scale.max(a.cost.abs());
    }
    let eps = 1e-12 * scale.max(f64::MIN_POSITIVE) * num_vertices.max(1) as f64;

    let mut value = 0i64;
    let mut cost = 0.0;
    let mut dist: Vec<Option<Dist>> = vec![None; num_vertices];
    let mut prev: Vec<usize> = vec![usize::MAX; num_vertices];
    let mut in_queue = vec![false; num_vertices];
    let mut pushes = vec![0usize; num_vertices];
    let mut queue = VecDeque::new();
    loop {
        dist.iter_mut().for_each(|d| *d = None);
        prev.iter_mut().for_each(|p| *p = usize::MAX);
        pushes.iter_mut().for_each(|p| *p = 0);
        dist[source] = Some(Dist { cost: 0.0, tie: 0 });
        queue.push_back(source);
        in_queue[source] = true;
        while let Some(u) = queue.pop_front() {
            in_queue[u] = false;
            let du = dist[u].expect("queued vertices are labelled");
            for &e in &adj[u] {
                let ed = edges[e];
                if ed.cap <= 0 {
                    continue;
                }
                let nd = Dist { cost: du.cost + ed.cost, tie: du.tie + ed.tie };
                if dist[ed.to].is_none_or(|d| nd.less(d, eps)) {
                    dist[ed.to] = Some(nd);
                    prev[ed.to] = e;
                    // a vertex relabelled this often means a rounding
                    // cycle; stop relaxing it
                    if !in_queue[ed.to] && pushes[ed.to] <= num_vertices {
                        pushes[ed.to] += 1;
                        in_queue[ed.to] = true;
                        queue.push_back(ed.to);
                    }
                }
            }
        }
        if dist[sink].is_none() {
            break;
        }
        let mut push = i64::MAX;
        let mut v = sink;
        while v != source {
            let e = prev[v];
            push = push.min(edges[e].cap);
            v = edges[e ^ 1].to;
        }
        let mut v = sink;
        while v != source {
            let e = prev[v];
            edges[e].cap -= push;
            edges[e ^ 1].cap += push;
            cost += push as f64 * edges[e].cost;
            v = edges[e ^ 1].to;
        }
        value += push;
    }
    let flow = (0..arcs.len()).map(|k| edges[2 * k + 1].cap).collect();
    McmfResult { flow, value, cost }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_arc() {
        let r = min_cost_max_flow(2, &[Arc::new(0, 1, 0, 1, 0.0)], 0, 1);
        assert_eq!((r.value, r.flow.clone()), (1, vec![1]));
    }

    #[test]
    fn empty_network() {
        let r = min_cost_max_flow(2, &[], 0, 1);
        assert_eq!((r.value, r.cost), (0, 0.0));
    }

    #[test]
    fn diamond_prefers_cheap_path() {
        let arcs = [
            Arc::new(0, 1, 0, 1, 1.0),
            Arc::new(1, 3, 0, 1, 1.0),
            Arc::new(0, 2, 0, 1, 2.0),
            Arc::new(2, 3, 0, 1, 3.0),
        ];
        let r = min_cost_max_flow(4, &arcs, 0, 3);
        assert_eq!(r.value, 2);
        assert_eq!(r.cost, 7.0);
        // one unit: the cheap path alone
        let arcs1 = [Arc::new(4, 0, 0, 1, 0.0)].into_iter().chain(arcs.iter().cloned()).collect::<Vec<_>>();
        let r = min_cost_max_flow(5, &arcs1, 4, 3);
        assert_eq!(r.flow, vec![1, 1, 1, 0, 0]);
    }

    #[test]
    fn cancels_flow_along_reverse_edges() {
        // greedy first path 0-1-2-3 must be partly undone to reach flow 2
        let arcs = [
            Arc::new(0, 1, 0, 1, 0.0),
            Arc::new(0, 2, 0, 1, 5.0),
            Arc::new(1, 2, 0, 1, 0.0),
            Arc::new(1, 3, 0, 1, 5.0),
            Arc::new(2, 3, 0, 1, 0.0),
        ];
        let r = min_cost_max_flow(4, &arcs, 0, 3);
        assert_eq!((r.value, r.cost), (2, 10.0));
    }

    /// All integral flows within capacity, keeping the max-value min-cost.
    fn brute_force(n: usize, arcs: &[Arc], s: usize, t: usize) -> (i64, f64) {
        let mut best = (0i64, 0.0f64);
        let mut x = vec![0i64; arcs.len()];
        loop {
            let mut bal = vec![0i64; n];
            for (a, &f) in arcs.iter().zip(&x) {
                bal[a.from] -= f;
                bal[a.to] += f;
            }
            let ok = (0..n).all(|v| v == s || v == t || bal[v] == 0);
            if ok {
                let value = bal[t];
                let cost: f64 = arcs.iter().zip(&x).map(|(a, &f)| a.cost * f as f64).sum();
                if value > best.0 || (value == best.0 && cost < best.1) {
                    best = (value, cost);
                }
            }
            let mut k = 0;
            loop {
                if k == arcs.len() {
                    return best;
                }
                if x[k] < arcs[k].upper {
                    x[k] += 1;
                    break;
                }
                x[k] = 0;
                k += 1;
            }
        }
    }

    fn random_network() -> impl Strategy<Value = (usize, Vec<Arc>)> {
        (3usize..=6).prop_flat_map(|n| {
            let arc = (0..n, 0..n, 1i64..=2, 0u8..10).prop_map(|(a, b, c, w)| Arc::new(a, b, 0, c, w as f64));
            (Just(n), proptest::collection::vec(arc, 1..=9))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn matches_exhaustive_oracle((n, arcs) in random_network()) {
            // drop self-loops and arcs into the source / out of the sink
            let arcs: Vec<Arc> = arcs.into_iter().filter(|a| a.from != a.to && a.to != 0 && a.from != n - 1).collect();
            let r = min_cost_max_flow(n, &arcs, 0, n - 1);
            let (value, cost) = brute_force(n, &arcs, 0, n - 1);
            prop_assert_eq!(r.value, value);
            prop_assert!((r.cost - cost).abs() < 1e-9, "cost {} oracle {}", r.cost, cost);
            let mut bal = vec![0i64; n];
            for (a, &f) in arcs.iter().zip(&r.flow) {
                prop_assert!(f >= 0 && f <= a.upper);
                bal[a.from] -= f;
                bal[a.to] += f;
            }
            for (v, b) in bal.iter().enumerate().take(n - 1).skip(1) {
                prop_assert_eq!(*b, 0, "vertex {}", v);
            }
        }
    }
}
