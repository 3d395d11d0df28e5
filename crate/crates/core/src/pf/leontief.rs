//! Leontief markets. Demand at prices `p` is `u_i = B_i / (a_i . p)`; the
//! tatonnement scales each price by its demand `sum_i a_ij u_i` and an
//! active-set Newton solve on the convex price dual
//! `sum_j p_j - sum_i B_i ln(a_i . p)` finishes the job.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{base_objective, base_params, budgets, verify_pf_certificate, PfSolution};
use crate::error::{Error, Result};
use crate::model::{Allocation, Instance, SolverConfig};

const POLISH_EVERY: usize = 10;
const ACTIVE_DEMAND: f64 = 0.95;

pub(super) fn solve(inst: &Instance, cfg: &SolverConfig) -> Result<PfSolution> {
    let m = inst.m();
    let a = base_params(inst);
    let budget = budgets(inst);
    let relevant: Vec<bool> = (0..m).map(|j| a.iter().any(|row| row[j] > 0.0)).collect();
    let count = relevant.iter().filter(|&&r| r).count() as f64;
    let total: f64 = budget.iter().sum();

    let mut rng = cfg.seed.map(ChaCha8Rng::seed_from_u64);
    let mut prices: Vec<f64> = relevant
        .iter()
        .map(|&r| {
            if !r {
                0.0
            } else {
                let jitter = rng.as_mut().map_or(1.0, |g| g.gen_range(0.5..1.5));
                jitter * total / count
            }
        })
        .collect();

    let mut last_obj = f64::NEG_INFINITY;
    let mut residual = f64::INFINITY;
    let mut best = None;
    for iter in 0..cfg.max_iterations {
        let (util, demand) = demand_at(&a, &budget, &prices);

        if iter % POLISH_EVERY == 0 {
            if let Some(sol) = polish(inst, &prices, &demand) {
                let cert = verify_pf_certificate(inst, &sol, cfg.tolerance)?;
                if cert.certified {
                    return Ok(PfSolution {
                        residual: cert.residual,
                        ..sol
                    });
                }
            }
        }

        let sol = feasible_solution(inst, &util, &demand, prices.clone());
        residual = certificate(inst, &sol.allocation, &prices);
        let obj = base_objective(&budget, &util);
        let rel_change = ((obj - last_obj) / obj.abs().max(1.0)).abs();
        if rel_change < cfg.tolerance / 10.0 && residual < cfg.tolerance {
            return Ok(PfSolution { residual, ..sol });
        }
        last_obj = obj;
        best = Some(sol);

        for j in 0..m {
            if relevant[j] {
                prices[j] = (prices[j] * demand[j]).max(0.0);
            }
        }
    }
    let best = best.expect("at least one iteration ran");
    Err(Error::Convergence {
        iterations: cfg.max_iterations,
        residual,
        best: Box::new(PfSolution { residual, ..best }),
    })
}

fn demand_at(a: &[&[f64]], budget: &[f64], prices: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let m = prices.len();
    let util: Vec<f64> = a
        .iter()
        .zip(budget)
        .map(|(row, b)| {
            let cost: f64 = row.iter().zip(prices).map(|(a, p)| a * p).sum();
            b / cost
        })
        .collect();
    let demand = (0..m)
        .map(|j| a.iter().zip(&util).map(|(row, u)| row[j] * u).sum())
        .collect();
    (util, demand)
}

/// Wasteless bundles `x_ij = a_ij u_i`, uniformly shrunk if any item is
/// over-demanded.
fn feasible_solution(inst: &Instance, util: &[f64], demand: &[f64], prices: Vec<f64>) -> PfSolution {
    let a = base_params(inst);
    let over = demand.iter().cloned().fold(1.0, f64::max);
    let mut alloc = Allocation::zeros(inst.n(), inst.m());
    for (i, row) in a.iter().enumerate() {
        for (j, &aij) in row.iter().enumerate() {
            alloc.set(i, j, aij * util[i] / over);
        }
    }
    PfSolution::assemble(inst, alloc, Some(prices), f64::INFINITY)
}

fn polish(inst: &Instance, prices: &[f64], demand: &[f64]) -> Option<PfSolution> {
    let m = inst.m();
    let a = base_params(inst);
    let budget = budgets(inst);
    let mut active: Vec<usize> = (0..m).filter(|&j| demand[j] > ACTIVE_DEMAND).collect();

    for _ in 0..(2 * m + 2) {
        if a.iter().any(|row| active.iter().all(|&j| row[j] <= 0.0)) {
            return None;
        }
        let start: Vec<f64> = active.iter().map(|&j| prices[j].max(1e-12)).collect();
        let sub = newton(&a, &budget, &active, start)?;
        let mut full = vec![0.0; m];
        for (&j, &p) in active.iter().zip(&sub) {
            full[j] = p;
        }
        if let Some((k, _)) = active
            .iter()
            .enumerate()
            .filter(|(_, &j)| full[j] < 0.0)
            .min_by(|x, y| full[*x.1].total_cmp(&full[*y.1]))
        {
            active.remove(k);
            continue;
        }
        let (util, demand) = demand_at(&a, &budget, &full);
        if let Some(j) = (0..m)
            .filter(|j| !active.contains(j) && demand[*j] > 1.0 + 1e-12)
            .max_by(|x, y| demand[*x].total_cmp(&demand[*y]))
        {
            active.push(j);
            active.sort_unstable();
            continue;
        }
        return Some(feasible_solution(inst, &util, &demand, full));
    }
    None
}

/// Minimizes the price dual restricted to `active` items. Returns `None`
/// unless the gradient is driven to rounding level.
fn newton(a: &[&[f64]], budget: &[f64], active: &[usize], mut p: Vec<f64>) -> Option<Vec<f64>> {
    let k = active.len();
    let cost = |p: &[f64]| -> Vec<f64> {
        a.iter()
            .map(|row| active.iter().zip(p).map(|(&j, q)| row[j] * q).sum())
            .collect()
    };
    let dual = |p: &[f64], c: &[f64]| -> f64 {
        p.iter().sum::<f64>() - budget.iter().zip(c).map(|(b, c)| b * c.ln()).sum::<f64>()
    };
    for _ in 0..100 {
        let c = cost(&p);
        if c.iter().any(|&x| x <= 0.0) {
            return None;
        }
        let grad = DVector::from_iterator(
            k,
            active.iter().map(|&j| {
                1.0 - a
                    .iter()
                    .zip(budget)
                    .zip(&c)
                    .map(|((row, b), c)| row[j] * b / c)
                    .sum::<f64>()
            }),
        );
        if grad.amax() < 1e-14 {
            return Some(p);
        }
        let hess = DMatrix::from_fn(k, k, |r, s| {
            a.iter()
                .zip(budget)
                .zip(&c)
                .map(|((row, b), c)| b * row[active[r]] * row[active[s]] / (c * c))
                .sum::<f64>()
        });
        let scale = hess.amax().max(f64::MIN_POSITIVE);
        let step = hess.svd(true, true).solve(&(-&grad), 1e-13 * scale).ok()?;
        let slope = grad.dot(&step);
        if !(slope < 0.0) {
            return (grad.amax() < 1e-11).then_some(p);
        }
        let f0 = dual(&p, &c);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(x, d)| x + t * d).collect();
            let ct = cost(&trial);
            if ct.iter().all(|&x| x > 0.0) && dual(&trial, &ct) <= f0 + 1e-4 * t * slope {
                p = trial;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            return (grad.amax() < 1e-11).then_some(p);
        }
    }
    None
}

pub(super) fn certificate(inst: &Instance, alloc: &Allocation, prices: &[f64]) -> f64 {
    let m = inst.m();
    let a = base_params(inst);
    let budget = budgets(inst);
    if prices.iter().any(|&p| p < 0.0) {
        return f64::INFINITY;
    }
    let util: Vec<f64> = inst
        .agents
        .iter()
        .enumerate()
        .map(|(i, ag)| ag.valuation.base_value(alloc.row(i)))
        .collect();
    let mut worst: f64 = 0.0;
    for (i, row) in a.iter().enumerate() {
        let cost: f64 = row.iter().zip(prices).map(|(a, p)| a * p).sum();
        worst = worst.max((util[i] * cost - budget[i]).abs());
    }
    for j in 0..m {
        let used: f64 = a.iter().zip(&util).map(|(row, u)| row[j] * u).sum();
        worst = worst.max(used - 1.0);
        if prices[j] > 0.0 {
            worst = worst.max(prices[j] * (1.0 - used));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ValuationSpec;
    use crate::pf::solve;

    fn leontief(rows: &[Vec<f64>]) -> Instance {
        let w = vec![1.0; rows.len()];
        Instance::from_valuations(&w, rows.iter().cloned().map(ValuationSpec::Leontief).collect())
            .unwrap()
    }

    #[test]
    fn symmetric_single_resource() {
        let inst = leontief(&[vec![1.0], vec![1.0]]);
        let s = solve(&inst, &SolverConfig::default()).unwrap();
        assert!((s.utilities[0] - 0.5).abs() < 1e-12);
        assert!((s.prices.unwrap()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn two_resources_closed_form() {
        // A needs (1, 0), B needs (1, 1): item 1 is the only binding one,
        // so u_A = u_B = 1/2 and p = (2, 0).
        let inst = leontief(&[vec![1.0, 0.0], vec![1.0, 1.0]]);
        let s = solve(&inst, &SolverConfig::default()).unwrap();
        assert!((s.utilities[0] - 0.5).abs() < 1e-12, "{s:?}");
        assert!((s.utilities[1] - 0.5).abs() < 1e-12);
        let p = s.prices.unwrap();
        assert!((p[0] - 2.0).abs() < 1e-10 && p[1].abs() < 1e-10, "{p:?}");
    }

    #[test]
    fn dominant_resource_instance() {
        // A needs (1, 4), B needs (3, 1): both items bind.
        // u_A + 3 u_B = 1 and 4 u_A + u_B = 1 with log objective:
        // KKT gives p solving 1/(p1 + 4 p2) + 3/(3 p1 + p2) = 1 and
        // 4/(p1 + 4 p2) + 1/(3 p1 + p2) = 1.
        let inst = leontief(&[vec![1.0, 4.0], vec![3.0, 1.0]]);
        let s = solve(&inst, &SolverConfig::default()).unwrap();
        let (ua, ub) = (s.utilities[0], s.utilities[1]);
        assert!((ua + 3.0 * ub - 1.0).abs() < 1e-10);
        assert!((4.0 * ua + ub - 1.0).abs() < 1e-10);
        // both constraints tight: u_A = 2/11, u_B = 3/11
        assert!((ua - 2.0 / 11.0).abs() < 1e-10 && (ub - 3.0 / 11.0).abs() < 1e-10);
    }
}
