//! The Partial Allocation mechanism.
//!
//! Every agent receives a fraction `f_i` of its proportionally fair bundle,
//! where `f_i^{b_i}` is the ratio between what the other agents get in the
//! PF allocation and what they would get if agent `i` were absent. The
//! fraction is clamped at one so approximate solvers never over-allocate,
//! and agents of degree `d` receive `f_i^{1/d}` of their bundle so that
//! their value still shrinks by exactly `f_i`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Allocation, Instance, SolverConfig};
use crate::par;
use crate::pf::{self, PfSolution};

/// Raw fractions above `1 + CLAMP_SLACK` are reported as clamped.
pub const CLAMP_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PaOutcome {
    pub base: PfSolution,
    /// PF solutions without each agent; empty for a single agent.
    pub exclusions: Vec<PfSolution>,
    pub fractions: Vec<f64>,
    pub applied_fractions: Vec<f64>,
    #[serde(rename = "final")]
    pub allocation: Allocation,
    pub delivered: Vec<f64>,
    pub clamped: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fraction {
    pub value: f64,
    /// Natural log of the unclamped fraction.
    pub log_raw: f64,
    pub clamped: bool,
}

/// `f_i = min{1, (prod_{k != i} u_k(x*)^{b_k} / prod_{k != i} u_k(x*_{-i})^{b_k})^{1/b_i}}`,
/// evaluated in log space.
pub fn compute_fraction(
    base: &PfSolution,
    minus_i: &PfSolution,
    weights: &[f64],
    i: usize,
) -> Result<Fraction> {
    if weights.len() == 1 {
        return Ok(Fraction {
            value: 1.0,
            log_raw: 0.0,
            clamped: false,
        });
    }
    let mut log_ratio = 0.0;
    for (k, &b) in weights.iter().enumerate() {
        if k == i {
            continue;
        }
        let (with, without) = (base.utilities[k], minus_i.utilities[k]);
        if !(with > 0.0) || !(without > 0.0) {
            return Err(Error::Degenerate(format!(
                "agent {k} has zero utility when computing the fraction of agent {i}"
            )));
        }
        log_ratio += b * (with.ln() - without.ln());
    }
    let log_raw = log_ratio / weights[i];
    Ok(Fraction {
        value: log_raw.exp().min(1.0),
        log_raw,
        clamped: log_raw > CLAMP_SLACK.ln_1p(),
    })
}

/// Runs the mechanism: one PF solve with everyone and one per excluded agent.
pub fn run_pa(inst: &Instance, config: &SolverConfig) -> Result<PaOutcome> {
    inst.ensure_valid()?;
    let n = inst.n();
    let base = pf::solve(inst, config).map_err(|e| e.context("PF allocation with all agents"))?;
    if let Some(i) = base.utilities.iter().position(|&u| !(u > 0.0)) {
        return Err(Error::Degenerate(format!(
            "agent `{}` has zero PF utility",
            inst.agents[i].id
        )));
    }
    let exclusions: Vec<PfSolution> = if n == 1 {
        Vec::new()
    } else {
        par::map_range(n, |i| {
            pf::solve_excluding(inst, i, config).map_err(|e| {
                e.context(format!("PF allocation without agent `{}`", inst.agents[i].id))
            })
        })
        .into_iter()
        .collect::<Result<_>>()?
    };
    assemble(inst, base, exclusions)
}

/// Builds the outcome from precomputed PF solutions.
pub fn assemble(inst: &Instance, base: PfSolution, exclusions: Vec<PfSolution>) -> Result<PaOutcome> {
    let n = inst.n();
    let weights = inst.weights();
    let mut fractions = Vec::with_capacity(n);
    let mut clamped = Vec::with_capacity(n);
    for i in 0..n {
        let f = if n == 1 {
            compute_fraction(&base, &base, &weights, i)?
        } else {
            compute_fraction(&base, &exclusions[i], &weights, i)?
        };
        fractions.push(f.value);
        clamped.push(f.clamped);
    }
    let applied_fractions: Vec<f64> = fractions
        .iter()
        .zip(&inst.agents)
        .map(|(f, a)| if a.degree == 1.0 { *f } else { f.powf(1.0 / a.degree) })
        .collect();
    let mut allocation = base.allocation.clone();
    for (i, g) in applied_fractions.iter().enumerate() {
        allocation.row_mut(i).iter_mut().for_each(|x| *x *= g);
    }
    let delivered = allocation.values(inst)?;
    Ok(PaOutcome {
        base,
        exclusions,
        fractions,
        applied_fractions,
        allocation,
        delivered,
        clamped,
    })
}

/// Delivered value over PF value for agent `i`.
pub fn delivered_ratio(outcome: &PaOutcome, i: usize) -> f64 {
    outcome.delivered[i] / outcome.base.utilities[i]
}

/// `min_i delivered_ratio`.
pub fn min_ratio(outcome: &PaOutcome) -> f64 {
    (0..outcome.delivered.len())
        .map(|i| delivered_ratio(outcome, i))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ValuationSpec;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn disjoint_keeps_everything() {
        let inst = Instance::linear(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let out = run_pa(&inst, &cfg()).unwrap();
        assert_eq!(out.fractions, vec![1.0, 1.0]);
        assert_eq!(out.allocation, out.base.allocation);
        assert_eq!(out.delivered, out.base.utilities);
        assert_eq!(delivered_ratio(&out, 0), 1.0);
        assert_eq!(delivered_ratio(&out, 1), 1.0);
    }

    #[test]
    fn single_item_two_agents() {
        let inst = Instance::linear(&[vec![1.0], vec![1.0]]).unwrap();
        let out = run_pa(&inst, &cfg()).unwrap();
        for i in 0..2 {
            assert!((out.fractions[i] - 0.5).abs() < 1e-12);
            assert!((out.allocation.get(i, 0) - 0.25).abs() < 1e-12);
            assert!((delivered_ratio(&out, i) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn single_item_five_agents() {
        let inst = Instance::linear(&vec![vec![1.0]; 5]).unwrap();
        let out = run_pa(&inst, &cfg()).unwrap();
        for i in 0..5 {
            assert!((delivered_ratio(&out, i) - 0.4096).abs() < 1e-12);
        }
    }

    #[test]
    fn crossed_instance_fraction() {
        let inst = Instance::linear(&[vec![3.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let out = run_pa(&inst, &cfg()).unwrap();
        assert!((out.fractions[0] - 0.75).abs() < 1e-9);
        assert!((out.delivered[0] - 9.0 / 4.0).abs() < 1e-9);
    }

    #[test]
    fn single_agent_keeps_everything() {
        let inst = Instance::linear(&[vec![2.0, 1.0]]).unwrap();
        let out = run_pa(&inst, &cfg()).unwrap();
        assert_eq!(out.fractions, vec![1.0]);
        assert!(out.exclusions.is_empty());
        assert!((out.delivered[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn degree_two_applies_square_root() {
        // Agent 0 has degree 2 and weight 1; its fraction comes from the
        // other two agents' loss in a symmetric single-item market.
        let mut inst = Instance::linear(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        inst.agents[0] = inst.agents[0].clone().with_degree(2.0);
        let out = run_pa(&inst, &cfg()).unwrap();
        let f = out.fractions[0];
        assert!((out.applied_fractions[0] - f.sqrt()).abs() < 1e-12);
        assert!((out.delivered[0] - f * out.base.utilities[0]).abs() < 1e-12);
    }

    #[test]
    fn fraction_formula_quarter() {
        // With u_other(x*) = 1/2 and u_other(x*_{-i}) = 1, weight 2 on i:
        // f = (1/2)^{1/2}.
        let inst = Instance::from_valuations(
            &[2.0, 1.0],
            vec![ValuationSpec::Linear(vec![1.0]), ValuationSpec::Linear(vec![1.0])],
        )
        .unwrap();
        let mk = |u: Vec<f64>| PfSolution {
            allocation: Allocation::zeros(2, 1),
            utilities: u,
            prices: None,
            objective: 0.0,
            residual: 0.0,
        };
        let f = compute_fraction(&mk(vec![0.5, 0.5]), &mk(vec![0.0, 1.0]), &inst.weights(), 0).unwrap();
        assert!((f.value - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(!f.clamped);
        let g = compute_fraction(&mk(vec![0.5, 2.0]), &mk(vec![0.0, 1.0]), &inst.weights(), 0).unwrap();
        assert_eq!(g.value, 1.0);
        assert!(g.clamped);
        let err = compute_fraction(&mk(vec![0.5, 0.0]), &mk(vec![0.0, 1.0]), &inst.weights(), 0);
        assert!(matches!(err, Err(Error::Degenerate(_))));
    }
}
