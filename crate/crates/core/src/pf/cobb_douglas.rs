use super::{base_params, budgets, PfSolution};
use crate::model::{Allocation, Instance};

/// Each agent spends `B_i alpha_ij` on item `j`; prices are total spending.
pub(super) fn solve(inst: &Instance) -> PfSolution {
    let (n, m) = (inst.n(), inst.m());
    let alpha = base_params(inst);
    let budget = budgets(inst);
    let prices: Vec<f64> = (0..m)
        .map(|j| (0..n).map(|i| budget[i] * alpha[i][j]).sum())
        .collect();
    let mut alloc = Allocation::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            if prices[j] > 0.0 {
                alloc.set(i, j, budget[i] * alpha[i][j] / prices[j]);
            }
        }
    }
    super::clip_columns(&mut alloc);
    let residual = certificate(inst, &alloc, &prices);
    PfSolution::assemble(inst, alloc, Some(prices), residual)
}

pub(super) fn certificate(inst: &Instance, alloc: &Allocation, prices: &[f64]) -> f64 {
    let alpha = base_params(inst);
    let budget = budgets(inst);
    let mut worst: f64 = 0.0;
    for i in 0..inst.n() {
        for j in 0..inst.m() {
            worst = worst.max((alloc.get(i, j) * prices[j] - budget[i] * alpha[i][j]).abs());
        }
    }
    for (j, &p) in prices.iter().enumerate() {
        if p > 0.0 {
            worst = worst.max(p * (1.0 - alloc.column_sum(j)));
        }
    }
    worst
}
