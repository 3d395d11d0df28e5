//! Conditional-gradient ascent on `sum_i B_i ln v_i(x)` for differentiable
//! valuations (linear, Cobb-Douglas, CES, and mixtures).
//!
//! The feasible set is a product of per-item simplices, so the linear
//! subproblem hands each item to its highest-gradient agent. Each sweep takes
//! a pairwise step per item, moving mass from the lowest-gradient holder to
//! the highest-gradient agent with an exact line search. The duality gap of
//! the linear subproblem bounds the distance to the optimum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{base_objective, base_values, budgets, PfSolution};
use crate::error::{Error, Result};
use crate::model::{Allocation, Instance, SolverConfig};

const LINE_SEARCH_STEPS: usize = 64;

pub(super) fn solve(inst: &Instance, cfg: &SolverConfig) -> Result<PfSolution> {
    let (n, m) = (inst.n(), inst.m());
    let budget = budgets(inst);
    let interested: Vec<Vec<usize>> = (0..m)
        .map(|j| {
            (0..n)
                .filter(|&i| inst.agents[i].valuation.params()[j] > 0.0)
                .collect()
        })
        .collect();

    let mut rng = cfg.seed.map(ChaCha8Rng::seed_from_u64);
    let mut alloc = Allocation::zeros(n, m);
    for (j, who) in interested.iter().enumerate() {
        let w: Vec<f64> = who
            .iter()
            .map(|_| rng.as_mut().map_or(1.0, |r| r.gen_range(0.1..1.0)))
            .collect();
        let s: f64 = w.iter().sum();
        for (&i, wi) in who.iter().zip(&w) {
            alloc.set(i, j, wi / s);
        }
    }

    let mut last_obj = f64::NEG_INFINITY;
    let mut gap = f64::INFINITY;
    for _ in 0..cfg.max_iterations {
        for (j, who) in interested.iter().enumerate() {
            if who.len() >= 2 {
                pairwise_step(inst, &budget, &mut alloc, j, who);
            }
        }
        gap = duality_gap(inst, &alloc);
        let obj = base_objective(&budget, &base_values(inst, &alloc));
        let rel_change = ((obj - last_obj) / obj.abs().max(1.0)).abs();
        if gap < cfg.tolerance && rel_change < cfg.tolerance / 10.0 {
            return Ok(PfSolution::assemble(inst, alloc, None, gap));
        }
        last_obj = obj;
    }
    Err(Error::Convergence {
        iterations: cfg.max_iterations,
        residual: gap,
        best: Box::new(PfSolution::assemble(inst, alloc, None, gap)),
    })
}

fn gradient(inst: &Instance, budget: &[f64], alloc: &Allocation, i: usize, j: usize) -> f64 {
    budget[i] * inst.agents[i].valuation.log_partial(alloc.row(i), j)
}

fn pairwise_step(inst: &Instance, budget: &[f64], alloc: &mut Allocation, j: usize, who: &[usize]) {
    let mut best = who[0];
    let mut best_g = f64::NEG_INFINITY;
    let mut worst = usize::MAX;
    let mut worst_g = f64::INFINITY;
    for &i in who {
        let g = gradient(inst, budget, alloc, i, j);
        if g > best_g {
            best = i;
            best_g = g;
        }
        if alloc.get(i, j) > 0.0 && g < worst_g {
            worst = i;
            worst_g = g;
        }
    }
    if worst == usize::MAX || worst == best || !(best_g > worst_g) {
        return;
    }
    let mut x_best = alloc.row(best).to_vec();
    let mut x_worst = alloc.row(worst).to_vec();
    let (b0, w0) = (x_best[j], x_worst[j]);
    let spec_b = &inst.agents[best].valuation;
    let spec_w = &inst.agents[worst].valuation;
    // Directional derivative of the objective, decreasing in delta.
    let mut slope = |delta: f64| {
        x_best[j] = b0 + delta;
        x_worst[j] = w0 - delta;
        budget[best] * spec_b.log_partial(&x_best, j) - budget[worst] * spec_w.log_partial(&x_worst, j)
    };
    let delta = if slope(w0) >= 0.0 {
        w0
    } else {
        let (mut lo, mut hi) = (0.0, w0);
        for _ in 0..LINE_SEARCH_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if slope(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    alloc.set(best, j, b0 + delta);
    alloc.set(worst, j, w0 - delta);
}

/// `sum_j max(0, max_i g_ij) - sum_i g_ij x_ij` with `g` the objective's
/// gradient; an upper bound on the optimality gap of the log objective.
pub(super) fn duality_gap(inst: &Instance, alloc: &Allocation) -> f64 {
    let budget = budgets(inst);
    let mut gap = 0.0;
    for j in 0..inst.m() {
        let mut best: f64 = 0.0;
        let mut inner = 0.0;
        for i in 0..inst.n() {
            let g = gradient(inst, &budget, alloc, i, j);
            if !g.is_finite() {
                return f64::INFINITY;
            }
            best = best.max(g);
            inner += g * alloc.get(i, j);
        }
        gap += best - inner;
    }
    gap.max(0.0)
}
