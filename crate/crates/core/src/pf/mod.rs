//! Proportionally fair (Eisenberg-Gale) allocations.
//!
//! [`solve`] maximizes `sum_i b_i log v_i(x)` over feasible allocations and
//! dispatches on the valuation family:
//!
//! * all linear: proportional-response dynamics, finished by an exact
//!   equilibrium reconstruction on the identified spending forest;
//! * all Leontief: multiplicative price tatonnement, finished by an
//!   active-set Newton solve on the price dual;
//! * all Cobb-Douglas: closed form;
//! * anything else: conditional-gradient ascent with per-item pairwise steps.
//!
//! Agents of degree `d` are solved on their degree-one valuation with
//! effective weight `b * d`.

mod cobb_douglas;
mod flow;
mod generic;
mod leontief;
mod linear;
mod oracle;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Allocation, Family, Instance, SolverConfig};

pub use oracle::{brute_force_oracle, grid_round, grid_slack, ORACLE_MAX_LEAVES};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PfSolution {
    pub allocation: Allocation,
    /// `v_i(x*)` including each agent's degree.
    pub utilities: Vec<f64>,
    /// Equilibrium prices; budgets are the effective weights `b_i * d_i`.
    pub prices: Option<Vec<f64>>,
    /// `sum_i b_i log v_i(x*)`.
    pub objective: f64,
    /// Certificate slack reported by the method that produced the solution.
    pub residual: f64,
}

impl PfSolution {
    pub(crate) fn assemble(
        inst: &Instance,
        allocation: Allocation,
        prices: Option<Vec<f64>>,
        residual: f64,
    ) -> PfSolution {
        let utilities = allocation
            .values(inst)
            .expect("solver allocations match the instance shape");
        let objective = objective(inst, &utilities);
        PfSolution {
            allocation,
            utilities,
            prices,
            objective,
            residual,
        }
    }

    pub fn log_utility(&self, i: usize) -> f64 {
        self.utilities[i].ln()
    }
}

/// Solver method selected by [`solve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ProportionalResponse,
    Tatonnement,
    ClosedForm,
    ConditionalGradient,
}

/// Method [`solve`] would use for `inst`.
pub fn method_for(inst: &Instance) -> Result<Method> {
    match inst.common_family() {
        Some(Family::Linear) => Ok(Method::ProportionalResponse),
        Some(Family::Leontief) => Ok(Method::Tatonnement),
        Some(Family::CobbDouglas) => Ok(Method::ClosedForm),
        _ => {
            if inst
                .agents
                .iter()
                .any(|a| a.valuation.family() == Family::Leontief)
            {
                Err(Error::Unsupported(
                    "Leontief agents can only be mixed with other Leontief agents".into(),
                ))
            } else {
                Ok(Method::ConditionalGradient)
            }
        }
    }
}

/// `sum_i b_i log u_i`; `-inf` if some utility is zero.
pub fn objective(inst: &Instance, utilities: &[f64]) -> f64 {
    inst.agents
        .iter()
        .zip(utilities)
        .map(|(a, &u)| if u > 0.0 { a.weight * u.ln() } else { f64::NEG_INFINITY })
        .sum()
}

/// Computes a proportionally fair allocation of `inst`.
pub fn solve(inst: &Instance, config: &SolverConfig) -> Result<PfSolution> {
    inst.ensure_valid()?;
    config.validate()?;
    match method_for(inst)? {
        Method::ProportionalResponse => linear::solve(inst, config),
        Method::Tatonnement => leontief::solve(inst, config),
        Method::ClosedForm => Ok(cobb_douglas::solve(inst)),
        Method::ConditionalGradient => generic::solve(inst, config),
    }
}

/// Forces the conditional-gradient solver (any non-Leontief families).
pub fn solve_generic(inst: &Instance, config: &SolverConfig) -> Result<PfSolution> {
    inst.ensure_valid()?;
    config.validate()?;
    if inst
        .agents
        .iter()
        .any(|a| a.valuation.family() == Family::Leontief)
    {
        return Err(Error::Unsupported(
            "the conditional-gradient solver needs differentiable valuations".into(),
        ));
    }
    generic::solve(inst, config)
}

/// PF allocation of the instance without agent `excluded`, embedded back
/// into the full shape with an all-zero row for the excluded agent.
pub fn solve_excluding(
    inst: &Instance,
    excluded: usize,
    config: &SolverConfig,
) -> Result<PfSolution> {
    let n = inst.n();
    if n < 2 {
        return Err(Error::NotApplicable(
            "cannot exclude the only agent of an instance".into(),
        ));
    }
    if excluded >= n {
        return Err(Error::NotApplicable(format!(
            "agent index {excluded} out of range for {n} agents"
        )));
    }
    let sub = solve(&inst.without_agent(excluded), config)?;
    let mut allocation = Allocation::zeros(n, inst.m());
    let mut utilities = vec![0.0; n];
    for (k, i) in (0..n).filter(|&i| i != excluded).enumerate() {
        allocation.row_mut(i).copy_from_slice(sub.allocation.row(k));
        utilities[i] = sub.utilities[k];
    }
    Ok(PfSolution {
        allocation,
        utilities,
        prices: sub.prices,
        objective: sub.objective,
        residual: sub.residual,
    })
}

/// Result of [`verify_pf_certificate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certificate {
    pub residual: f64,
    pub certified: bool,
}

/// Checks the optimality conditions of `solution`.
///
/// Linear: per-edge spending on items below the bidder's best bang per buck
/// (weighted by the bang deficit), budget slack, and unsold priced mass.
/// Leontief and Cobb-Douglas: the analogous market-clearing conditions.
/// Other families: the conditional-gradient duality gap. Every variant also
/// includes the mismatch between reported and evaluated utilities.
pub fn verify_pf_certificate(
    inst: &Instance,
    solution: &PfSolution,
    tol: f64,
) -> Result<Certificate> {
    let alloc = &solution.allocation;
    if alloc.n() != inst.n() || alloc.m() != inst.m() {
        return Err(Error::invalid("solution.allocation", "shape does not match instance"));
    }
    alloc.check_feasible()?;
    let family = inst.common_family();
    let needs_prices = matches!(
        family,
        Some(Family::Linear) | Some(Family::Leontief) | Some(Family::CobbDouglas)
    );
    let mut residual = match (family, &solution.prices) {
        (Some(f), None) if needs_prices => {
            return Err(Error::CertificateUnavailable(format!(
                "{f} certificates need equilibrium prices"
            )))
        }
        (Some(Family::Linear), Some(p)) => linear::certificate(inst, alloc, p),
        (Some(Family::Leontief), Some(p)) => leontief::certificate(inst, alloc, p),
        (Some(Family::CobbDouglas), Some(p)) => cobb_douglas::certificate(inst, alloc, p),
        _ => {
            if inst
                .agents
                .iter()
                .any(|a| a.valuation.family() == Family::Leontief)
            {
                return Err(Error::CertificateUnavailable(
                    "no certificate for Leontief agents mixed with other families".into(),
                ));
            }
            generic::duality_gap(inst, alloc)
        }
    };
    for (i, &u) in solution.utilities.iter().enumerate() {
        let actual = inst.value_of(i, alloc.row(i))?;
        residual = residual.max((actual - u).abs() / u.abs().max(1.0));
    }
    if residual.is_nan() {
        residual = f64::INFINITY;
    }
    Ok(Certificate {
        residual,
        certified: residual <= tol,
    })
}

/// Effective budgets `b_i * d_i` of the degree-one market.
pub(crate) fn budgets(inst: &Instance) -> Vec<f64> {
    inst.agents.iter().map(|a| a.effective_weight()).collect()
}

pub(crate) fn base_params(inst: &Instance) -> Vec<&[f64]> {
    inst.agents.iter().map(|a| a.valuation.params()).collect()
}

pub(crate) fn base_values(inst: &Instance, alloc: &Allocation) -> Vec<f64> {
    inst.agents
        .iter()
        .enumerate()
        .map(|(i, a)| a.valuation.base_value(alloc.row(i)))
        .collect()
}

/// `sum_i B_i log base_i`, the objective tracked by the iterative solvers.
pub(crate) fn base_objective(budgets: &[f64], base: &[f64]) -> f64 {
    budgets
        .iter()
        .zip(base)
        .map(|(b, u)| if *u > 0.0 { b * u.ln() } else { f64::NEG_INFINITY })
        .sum()
}

/// Scales down any column whose mass exceeds one through rounding.
pub(crate) fn clip_columns(alloc: &mut Allocation) {
    for j in 0..alloc.m() {
        let s = alloc.column_sum(j);
        if s > 1.0 {
            for i in 0..alloc.n() {
                let x = alloc.get(i, j);
                alloc.set(i, j, x / s);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Agent, ValuationSpec};

    fn disjoint() -> Instance {
        Instance::linear(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()
    }

    fn crossed() -> Instance {
        Instance::linear(&[vec![3.0, 1.0], vec![1.0, 3.0]]).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn disjoint_interests() {
        let s = solve(&disjoint(), &SolverConfig::default()).unwrap();
        assert_eq!(s.allocation.to_rows(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(close(s.utilities[0], 1.0, 1e-12) && close(s.utilities[1], 1.0, 1e-12));
        let p = s.prices.unwrap();
        assert!(close(p[0], 1.0, 1e-12) && close(p[1], 1.0, 1e-12));
    }

    #[test]
    fn single_item_weighted_split() {
        let inst = Instance::from_valuations(
            &[1.0, 2.0],
            vec![ValuationSpec::Linear(vec![1.0]), ValuationSpec::Linear(vec![1.0])],
        )
        .unwrap();
        let s = solve(&inst, &SolverConfig::default()).unwrap();
        assert!(close(s.allocation.get(0, 0), 1.0 / 3.0, 1e-12));
        assert!(close(s.allocation.get(1, 0), 2.0 / 3.0, 1e-12));
        assert!(close(s.prices.unwrap()[0], 3.0, 1e-12));
    }

    #[test]
    fn crossed_linear() {
        let inst = crossed();
        let s = solve(&inst, &SolverConfig::default()).unwrap();
        assert!(close(s.allocation.get(0, 0), 1.0, 1e-9));
        assert!(close(s.allocation.get(1, 1), 1.0, 1e-9));
        assert!(close(s.utilities[0], 3.0, 1e-9) && close(s.utilities[1], 3.0, 1e-9));
        let p = s.prices.clone().unwrap();
        assert!(close(p[0], 1.0, 1e-9) && close(p[1], 1.0, 1e-9));
        assert!(close(s.objective, 2.0 * 3f64.ln(), 1e-9));
        assert!(verify_pf_certificate(&inst, &s, 1e-9).unwrap().certified);
    }

    #[test]
    fn excluding_agents() {
        let s = solve_excluding(&crossed(), 0, &SolverConfig::default()).unwrap();
        assert_eq!(s.allocation.row(0), &[0.0, 0.0]);
        assert!(close(s.utilities[1], 4.0, 1e-9));
        assert_eq!(s.utilities[0], 0.0);

        let s = solve_excluding(&disjoint(), 0, &SolverConfig::default()).unwrap();
        assert!(close(s.utilities[1], 1.0, 1e-12));

        let single = Instance::linear(&[vec![1.0], vec![1.0]]).unwrap();
        for i in 0..2 {
            let s = solve_excluding(&single, i, &SolverConfig::default()).unwrap();
            assert!(close(s.allocation.get(1 - i, 0), 1.0, 1e-12));
            assert!(close(s.utilities[1 - i], 1.0, 1e-12));
        }
    }

    #[test]
    fn excluding_needs_two_agents() {
        let inst = Instance::linear(&[vec![1.0]]).unwrap();
        assert!(matches!(
            solve_excluding(&inst, 0, &SolverConfig::default()),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn certificate_examples() {
        let sol = |inst: &Instance, rows: Vec<Vec<f64>>| {
            let alloc = Allocation::from_rows(rows);
            PfSolution::assemble(inst, alloc, Some(vec![1.0, 1.0]), 0.0)
        };
        let d = disjoint();
        let c = verify_pf_certificate(&d, &sol(&d, vec![vec![1.0, 0.0], vec![0.0, 1.0]]), 1e-12)
            .unwrap();
        assert_eq!(c.residual, 0.0);

        let x = crossed();
        let c = verify_pf_certificate(&x, &sol(&x, vec![vec![1.0, 0.0], vec![0.0, 1.0]]), 1e-9)
            .unwrap();
        assert!(c.residual <= 1e-9 && c.certified);

        let c = verify_pf_certificate(&x, &sol(&x, vec![vec![0.0, 1.0], vec![1.0, 0.0]]), 1e-9)
            .unwrap();
        assert!(c.residual >= 0.5 && !c.certified, "{c:?}");
    }

    #[test]
    fn certificate_requires_prices() {
        let d = disjoint();
        let s = PfSolution::assemble(
            &d,
            Allocation::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
            None,
            0.0,
        );
        assert!(matches!(
            verify_pf_certificate(&d, &s, 1e-9),
            Err(Error::CertificateUnavailable(_))
        ));
    }

    #[test]
    fn leontief_mixing_unsupported() {
        let inst = Instance::from_valuations(
            &[1.0, 1.0],
            vec![
                ValuationSpec::Leontief(vec![1.0, 1.0]),
                ValuationSpec::Linear(vec![1.0, 1.0]),
            ],
        )
        .unwrap();
        assert!(matches!(
            solve(&inst, &SolverConfig::default()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn degree_two_agent_matches_doubled_weight() {
        let vals = vec![vec![0.7, 0.2, 0.4], vec![0.1, 0.9, 0.5], vec![0.3, 0.3, 0.6]];
        let mut a = Instance::linear(&vals).unwrap();
        a.agents[1] = a.agents[1].clone().with_degree(2.0);
        let mut b = Instance::linear(&vals).unwrap();
        b.agents[1] = Agent {
            weight: 2.0,
            ..b.agents[1].clone()
        };
        let sa = solve(&a, &SolverConfig::default()).unwrap();
        let sb = solve(&b, &SolverConfig::default()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!(close(sa.allocation.get(i, j), sb.allocation.get(i, j), 1e-6));
            }
        }
        assert!(close(sa.utilities[1], sb.utilities[1].powi(2), 1e-9));
    }
}
