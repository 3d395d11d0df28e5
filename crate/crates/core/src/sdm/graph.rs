use std::collections::VecDeque;

use num_rational::BigRational;
use num_traits::Zero;
use serde::Serialize;

use super::rational::Price;

/// Bidder-to-item MBB edges; each bidder's list is sorted by item index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemandGraph {
    pub edges: Vec<Vec<usize>>,
    pub m: usize,
}

impl DemandGraph {
    pub fn n(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges[i].binary_search(&j).is_ok()
    }
}

/// Edge `(i, j)` iff `v_ij > 0` and `v_ij p_k >= v_ik p_j` for every item `k`.
pub fn demand_graph_exact(values: &[Vec<BigRational>], prices: &[Price]) -> DemandGraph {
    let m = prices.len();
    let edges = values
        .iter()
        .map(|v| {
            let mut best: Option<usize> = None;
            for j in (0..m).filter(|&j| !v[j].is_zero()) {
                match best {
                    Some(b) if &v[j] * &prices[b].0 <= &v[b] * &prices[j].0 => {}
                    _ => best = Some(j),
                }
            }
            match best {
                None => Vec::new(),
                Some(b) => (0..m)
                    .filter(|&j| !v[j].is_zero() && &v[j] * &prices[b].0 == &v[b] * &prices[j].0)
                    .collect(),
            }
        })
        .collect();
    DemandGraph { edges, m }
}

/// Partial map bidder -> item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct ValidAssignment {
    pub matched: Vec<Option<usize>>,
}

impl ValidAssignment {
    pub fn empty(n: usize) -> Self {
        ValidAssignment {
            matched: vec![None; n],
        }
    }

    pub fn matched_count(&self) -> usize {
        self.matched.iter().flatten().count()
    }

    pub fn unmatched(&self) -> Vec<usize> {
        (0..self.matched.len())
            .filter(|&i| self.matched[i].is_none())
            .collect()
    }

    pub fn is_total(&self) -> bool {
        self.matched.iter().all(Option::is_some)
    }

    pub fn loads(&self, m: usize) -> Vec<usize> {
        let mut load = vec![0; m];
        for j in self.matched.iter().flatten() {
            load[*j] += 1;
        }
        load
    }

    /// Every matched bidder sits on a demand edge and no item exceeds its
    /// capacity.
    pub fn is_valid(&self, graph: &DemandGraph, capacities: &[usize]) -> bool {
        let edges_ok = self
            .matched
            .iter()
            .enumerate()
            .all(|(i, j)| j.map_or(true, |j| graph.has_edge(i, j)));
        edges_ok
            && self
                .loads(graph.m)
                .iter()
                .zip(capacities)
                .all(|(l, c)| l <= c)
    }
}

/// Maximum-cardinality capacitated matching by augmenting paths. Bidders are
/// inserted in index order; each search first takes the lowest-index free MBB
/// item, then tries to move current holders, both in index order.
pub fn max_valid_assignment(graph: &DemandGraph, capacities: &[usize]) -> ValidAssignment {
    let n = graph.n();
    let mut holders: Vec<Vec<usize>> = vec![Vec::new(); graph.m];
    let mut assign = ValidAssignment::empty(n);
    for i in 0..n {
        let mut seen = vec![false; graph.m];
        augment(graph, capacities, i, &mut seen, &mut holders, &mut assign);
    }
    assign
}

fn augment(
    graph: &DemandGraph,
    caps: &[usize],
    i: usize,
    seen: &mut [bool],
    holders: &mut [Vec<usize>],
    assign: &mut ValidAssignment,
) -> bool {
    for &j in &graph.edges[i] {
        if !seen[j] && holders[j].len() < caps[j] {
            seen[j] = true;
            holders[j].push(i);
            assign.matched[i] = Some(j);
            return true;
        }
    }
    for &j in &graph.edges[i] {
        if seen[j] || caps[j] == 0 {
            continue;
        }
        seen[j] = true;
        for slot in 0..holders[j].len() {
            let other = holders[j][slot];
            if augment(graph, caps, other, seen, holders, assign) {
                holders[j][slot] = i;
                assign.matched[i] = Some(j);
                return true;
            }
        }
    }
    false
}

/// Items reachable from `unmatched` by alternating paths, and `d(R)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reach {
    pub items: Vec<bool>,
    /// Bidders with at least one MBB item, all of them inside `R`.
    pub bidders: Vec<usize>,
}

impl Reach {
    pub fn item_list(&self) -> Vec<usize> {
        (0..self.items.len()).filter(|&j| self.items[j]).collect()
    }

    pub fn is_empty(&self) -> bool {
        !self.items.iter().any(|&b| b)
    }
}

pub fn reachable_items(graph: &DemandGraph, assignment: &ValidAssignment, unmatched: &[usize]) -> Reach {
    let mut holders: Vec<Vec<usize>> = vec![Vec::new(); graph.m];
    for (i, j) in assignment.matched.iter().enumerate() {
        if let Some(j) = j {
            holders[*j].push(i);
        }
    }
    let mut items = vec![false; graph.m];
    let mut visited = vec![false; graph.n()];
    let mut queue: VecDeque<usize> = unmatched.iter().copied().collect();
    for &i in unmatched {
        visited[i] = true;
    }
    while let Some(i) = queue.pop_front() {
        for &j in &graph.edges[i] {
            if items[j] {
                continue;
            }
            items[j] = true;
            for &h in &holders[j] {
                if !visited[h] {
                    visited[h] = true;
                    queue.push_back(h);
                }
            }
        }
    }
    let bidders = (0..graph.n())
        .filter(|&i| !graph.edges[i].is_empty() && graph.edges[i].iter().all(|&j| items[j]))
        .collect();
    Reach { items, bidders }
}
