//! Linear Fisher markets: proportional-response dynamics plus an exact
//! equilibrium reconstruction once the spending support has settled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::flow::FlowNetwork;
use super::{base_objective, base_params, budgets, clip_columns, verify_pf_certificate, PfSolution};
use crate::error::{Error, Result};
use crate::model::{Allocation, Instance, SolverConfig};

const POLISH_EVERY: usize = 8;
const SUPPORT_THRESHOLDS: [f64; 3] = [1e-3, 1e-6, 1e-10];
/// Bang-per-buck slack for supports read off the current prices.
const TIGHT_SLACK: [f64; 3] = [1e-4, 1e-6, 1e-8];
/// Wider slack for edges that only join bid-support trees.
const CONNECTOR_SLACK: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-6];
/// Relative slack when deciding that two bang-per-buck ratios tie.
const TIE_TOL: f64 = 1e-12;

pub(super) fn solve(inst: &Instance, cfg: &SolverConfig) -> Result<PfSolution> {
    let n = inst.n();
    let m = inst.m();
    let v = base_params(inst);
    let budget = budgets(inst);

    let mut bids = vec![0.0; n * m];
    let mut rng = cfg.seed.map(ChaCha8Rng::seed_from_u64);
    for i in 0..n {
        let row = &mut bids[i * m..(i + 1) * m];
        for j in 0..m {
            if v[i][j] > 0.0 {
                row[j] = match rng.as_mut() {
                    Some(r) => r.gen_range(0.1..1.0),
                    None => 1.0,
                };
            }
        }
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|b| *b *= budget[i] / s);
    }

    let mut prices = vec![0.0; m];
    let mut alloc = Allocation::zeros(n, m);
    let mut base = vec![0.0; n];
    let mut last_obj = f64::NEG_INFINITY;
    let mut residual = f64::INFINITY;
    let mut next_polish = 0;
    for iter in 0..cfg.max_iterations {
        for j in 0..m {
            prices[j] = (0..n).map(|i| bids[i * m + j]).sum();
        }
        for i in 0..n {
            let mut u = 0.0;
            for j in 0..m {
                let x = if prices[j] > 0.0 { bids[i * m + j] / prices[j] } else { 0.0 };
                alloc.set(i, j, x);
                u += v[i][j] * x;
            }
            base[i] = u;
        }
        let obj = base_objective(&budget, &base);

        residual = certificate(inst, &alloc, &prices);
        let rel_change = ((obj - last_obj) / obj.abs().max(1.0)).abs();
        let converged = rel_change < cfg.tolerance / 10.0 && residual < cfg.tolerance;
        if converged || iter == next_polish {
            next_polish = iter + POLISH_EVERY.max(iter / 16);
            let candidates = SUPPORT_THRESHOLDS
                .iter()
                .map(|&tau| bid_support(&v, &bids, &budget, tau))
                .chain(TIGHT_SLACK.iter().map(|&d| price_support(&v, &prices, d)))
                .chain(CONNECTOR_SLACK.iter().map(|&d| {
                    let mut e = bid_support(&v, &bids, &budget, SUPPORT_THRESHOLDS[0]);
                    e.iter_mut().for_each(|x| x.2 += 1.0);
                    e.extend(price_support(&v, &prices, d));
                    e
                }));
            for support in candidates {
                if let Some(sol) = polish(inst, &support) {
                    let cert = verify_pf_certificate(inst, &sol, cfg.tolerance)?;
                    if cert.certified {
                        return Ok(PfSolution {
                            residual: cert.residual,
                            ..sol
                        });
                    }
                }
            }
        }
        if converged {
            return Ok(PfSolution::assemble(inst, alloc, Some(prices), residual));
        }
        last_obj = obj;

        for i in 0..n {
            for j in 0..m {
                bids[i * m + j] = budget[i] * v[i][j] * alloc.get(i, j) / base[i];
            }
        }
    }
    Err(Error::Convergence {
        iterations: cfg.max_iterations,
        residual,
        best: Box::new(PfSolution::assemble(inst, alloc, Some(prices), residual)),
    })
}

/// A guessed spending edge `(bidder, item, weight)`; heavier edges are
/// trusted first when the guess contains cycles.
type Edge = (usize, usize, f64);

/// Edges carrying at least `tau` of the bidder's budget, weighted by share.
fn bid_support(v: &[&[f64]], bids: &[f64], budget: &[f64], tau: f64) -> Vec<Edge> {
    let m = bids.len() / v.len().max(1);
    let mut out = Vec::new();
    for i in 0..v.len() {
        for j in 0..m {
            let share = bids[i * m + j] / budget[i];
            if v[i][j] > 0.0 && share >= tau {
                out.push((i, j, share));
            }
        }
    }
    out
}

/// Edges within relative `slack` of the bidder's best bang per buck,
/// weighted by closeness to it.
fn price_support(v: &[&[f64]], prices: &[f64], slack: f64) -> Vec<Edge> {
    let m = prices.len();
    let mut out = Vec::new();
    for (i, row) in v.iter().enumerate() {
        let best = (0..m)
            .filter(|&j| row[j] > 0.0 && prices[j] > 0.0)
            .map(|j| row[j] / prices[j])
            .fold(0.0, f64::max);
        for j in 0..m {
            if row[j] > 0.0 && prices[j] > 0.0 {
                let r = row[j] / prices[j] / best;
                if r >= 1.0 - slack {
                    out.push((i, j, r));
                }
            }
        }
    }
    out
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Rebuilds an exact equilibrium from a guessed spending support. Prices
/// follow from bang-per-buck equalities along a maximum-weight spanning
/// forest of the guess, scaled so each tree's budgets are spent; spending is
/// then routed by max-flow over all tight edges.
fn polish(inst: &Instance, support: &[Edge]) -> Option<PfSolution> {
    let n = inst.n();
    let m = inst.m();
    let v = base_params(inst);
    let budget = budgets(inst);

    // Nodes: bidders 0..n, items n..n+m.
    let mut order: Vec<&Edge> = support.iter().collect();
    order.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    let mut parent: Vec<usize> = (0..n + m).collect();
    let mut adj = vec![Vec::new(); n + m];
    for &&(i, j, _) in &order {
        let (a, b) = (find(&mut parent, i), find(&mut parent, n + j));
        if a != b {
            parent[a] = b;
            adj[i].push(n + j);
            adj[n + j].push(i);
        }
    }
    if (0..n).any(|i| adj[i].is_empty()) {
        return None;
    }

    // Relative prices: walking bidder i from item j to item k fixes
    // p_k / p_j = v_ik / v_ij.
    let mut rel = vec![f64::NAN; m];
    let mut prices = vec![0.0; m];
    for start in 0..m {
        if !rel[start].is_nan() || adj[n + start].is_empty() {
            continue;
        }
        rel[start] = 1.0;
        let mut comp_items = vec![start];
        let mut comp_budget = 0.0;
        let mut stack = vec![(n + start, usize::MAX)];
        while let Some((node, from)) = stack.pop() {
            for &next in &adj[node] {
                if next == from {
                    continue;
                }
                if node >= n {
                    comp_budget += budget[next];
                } else {
                    let (j, k) = (from - n, next - n);
                    rel[k] = rel[j] * v[node][k] / v[node][j];
                    comp_items.push(k);
                }
                stack.push((next, node));
            }
        }
        let total: f64 = comp_items.iter().map(|&j| rel[j]).sum();
        for &j in &comp_items {
            prices[j] = rel[j] * comp_budget / total;
        }
    }
    for j in 0..m {
        let wanted = (0..n).any(|i| v[i][j] > 0.0);
        if wanted && prices[j] <= 0.0 {
            return None;
        }
    }

    let mut tight: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let best = (0..m)
            .filter(|&j| v[i][j] > 0.0)
            .map(|j| v[i][j] / prices[j])
            .fold(0.0, f64::max);
        let row: Vec<usize> = (0..m)
            .filter(|&j| v[i][j] > 0.0 && v[i][j] / prices[j] >= best * (1.0 - TIE_TOL))
            .collect();
        tight.push(row);
    }

    let total_budget: f64 = budget.iter().sum();
    let (s, t) = (n + m, n + m + 1);
    let mut net = FlowNetwork::new(n + m + 2, 1e-15 * total_budget);
    for i in 0..n {
        net.add_edge(s, i, budget[i]);
    }
    let mut edges = Vec::new();
    for (i, row) in tight.iter().enumerate() {
        for &j in row {
            edges.push((i, j, net.add_edge(i, n + j, f64::INFINITY)));
        }
    }
    for j in 0..m {
        if prices[j] > 0.0 {
            net.add_edge(n + j, t, prices[j]);
        }
    }
    let flow = net.max_flow(s, t);
    if flow < total_budget * (1.0 - 1e-12) {
        return None;
    }
    let mut alloc = Allocation::zeros(n, m);
    for (i, j, e) in edges {
        alloc.set(i, j, net.flow(e) / prices[j]);
    }
    clip_columns(&mut alloc);
    Some(PfSolution::assemble(inst, alloc, Some(prices), 0.0))
}

pub(super) fn certificate(inst: &Instance, alloc: &Allocation, prices: &[f64]) -> f64 {
    let n = inst.n();
    let m = inst.m();
    let v = base_params(inst);
    let budget = budgets(inst);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let mut best: f64 = 0.0;
        for j in 0..m {
            if v[i][j] > 0.0 {
                if prices[j] <= 0.0 {
                    return f64::INFINITY;
                }
                best = best.max(v[i][j] / prices[j]);
            }
        }
        let mut spent = 0.0;
        for j in 0..m {
            let spend = alloc.get(i, j) * prices[j];
            spent += spend;
            let bang = if v[i][j] > 0.0 { v[i][j] / prices[j] } else { 0.0 };
            if best > 0.0 {
                worst = worst.max(spend * (1.0 - bang / best));
            }
        }
        worst = worst.max((spent - budget[i]).abs());
    }
    for j in 0..m {
        if prices[j] > 0.0 {
            worst = worst.max(prices[j] * (1.0 - alloc.column_sum(j)));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pf::solve;

    #[test]
    fn identical_bidders_degenerate_support() {
        let inst = Instance::linear(&[vec![1.0, 3.0], vec![1.0, 3.0]]).unwrap();
        let s = solve(&inst, &SolverConfig::default()).unwrap();
        assert!((s.utilities[0] - 2.0).abs() < 1e-12);
        assert!((s.utilities[1] - 2.0).abs() < 1e-12);
        let p = s.prices.unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn unvalued_item_priced_zero() {
        let inst = Instance::linear(&[vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let s = solve(&inst, &SolverConfig::default()).unwrap();
        let p = s.prices.unwrap();
        assert_eq!(p[1], 0.0);
        assert_eq!(s.allocation.column_sum(1), 0.0);
        assert!((p[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn loose_tolerance_converges() {
        let inst = Instance::linear(&[vec![0.5, 0.3, 0.2], vec![0.1, 0.6, 0.3]]).unwrap();
        let cfg = SolverConfig::with_tolerance(1e-3);
        let s = solve(&inst, &cfg).unwrap();
        assert!(s.residual < 1e-3);
    }
}
