//! Instance model shared by every mechanism: items, weighted agents with
//! homogeneous valuations, fractional allocations, and solver settings.

mod json;
mod valuation;

use std::collections::HashSet;
use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

pub use json::{parse_instance, render_instance, InstanceDoc};
pub use valuation::{evaluate, Family, ValuationSpec, COBB_DOUGLAS_SUM_TOL};

/// Column-sum slack accepted by [`Allocation::check_feasible`].
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: String,
    /// Clout/budget `b_i >= 1`.
    pub weight: f64,
    pub valuation: ValuationSpec,
    /// Homogeneity degree `d_i > 0`.
    pub degree: f64,
}

impl Agent {
    pub fn new(id: impl Into<String>, weight: f64, valuation: ValuationSpec) -> Self {
        Agent {
            id: id.into(),
            weight,
            valuation,
            degree: 1.0,
        }
    }

    pub fn with_degree(mut self, degree: f64) -> Self {
        self.degree = degree;
        self
    }

    pub fn value(&self, bundle: &[f64]) -> Result<f64> {
        evaluate(&self.valuation, self.degree, bundle)
    }

    /// Weight the agent carries in the degree-one market: `b_i * d_i`.
    pub fn effective_weight(&self) -> f64 {
        self.weight * self.degree
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub items: Vec<String>,
    pub agents: Vec<Agent>,
}

impl Instance {
    /// Builds an instance and validates it.
    pub fn new(items: Vec<String>, agents: Vec<Agent>) -> Result<Self> {
        let inst = Instance { items, agents };
        let violations = validate_instance(&inst);
        if violations.is_empty() {
            Ok(inst)
        } else {
            Err(Error::InvalidInstance(violations))
        }
    }

    /// Instance with items named `item0..` and agents `agent0..`.
    pub fn from_valuations(weights: &[f64], valuations: Vec<ValuationSpec>) -> Result<Self> {
        let m = valuations.first().map_or(0, |v| v.len());
        let items = (0..m).map(|j| format!("item{j}")).collect();
        let agents = valuations
            .into_iter()
            .zip(weights)
            .enumerate()
            .map(|(i, (v, &w))| Agent::new(format!("agent{i}"), w, v))
            .collect();
        Instance::new(items, agents)
    }

    /// Unit-weight linear instance from a value matrix.
    pub fn linear(values: &[Vec<f64>]) -> Result<Self> {
        let weights = vec![1.0; values.len()];
        Instance::from_valuations(
            &weights,
            values.iter().cloned().map(ValuationSpec::Linear).collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn m(&self) -> usize {
        self.items.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.weight).collect()
    }

    /// The single family shared by all agents, if any.
    pub fn common_family(&self) -> Option<Family> {
        let first = self.agents.first()?.valuation.family();
        self.agents
            .iter()
            .all(|a| a.valuation.family() == first)
            .then_some(first)
    }

    /// Sub-instance with agent `excluded` removed.
    pub fn without_agent(&self, excluded: usize) -> Instance {
        let agents = self
            .agents
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != excluded)
            .map(|(_, a)| a.clone())
            .collect();
        Instance {
            items: self.items.clone(),
            agents,
        }
    }

    /// Copy with agent `i` reporting `valuation` instead.
    pub fn with_report(&self, i: usize, valuation: ValuationSpec) -> Instance {
        let mut out = self.clone();
        out.agents[i].valuation = valuation;
        out
    }

    pub fn value_of(&self, i: usize, bundle: &[f64]) -> Result<f64> {
        self.agents[i].value(bundle)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = validate_instance(self);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInstance(v))
        }
    }
}

/// One violated instance invariant, located by a JSON-style path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Lists every violated instance invariant. Empty means the instance is valid.
pub fn validate_instance(inst: &Instance) -> Vec<Violation> {
    let mut out = Vec::new();
    let m = inst.m();
    if m == 0 {
        out.push(Violation::new("items", "at least one item is required"));
    }
    if inst.agents.is_empty() {
        out.push(Violation::new("agents", "at least one agent is required"));
    }
    let mut seen = HashSet::new();
    for (j, id) in inst.items.iter().enumerate() {
        if !seen.insert(id.as_str()) {
            out.push(Violation::new(
                format!("items[{j}]"),
                format!("duplicate item id `{id}`"),
            ));
        }
    }
    let mut seen = HashSet::new();
    for (i, agent) in inst.agents.iter().enumerate() {
        let at = |field: &str| format!("agents[{i}].{field}");
        if !seen.insert(agent.id.as_str()) {
            out.push(Violation::new(
                at("id"),
                format!("duplicate agent id `{}`", agent.id),
            ));
        }
        if !(agent.weight >= 1.0) || !agent.weight.is_finite() {
            out.push(Violation::new(at("weight"), "weight must be >= 1"));
        }
        if !(agent.degree > 0.0) || !agent.degree.is_finite() {
            out.push(Violation::new(at("degree"), "degree must be > 0"));
        }
        let val = &agent.valuation;
        if val.len() != m {
            out.push(Violation::new(
                at("valuation.params"),
                format!("length {} does not match {} items", val.len(), m),
            ));
        }
        for (j, p) in val.params().iter().enumerate() {
            if !(*p >= 0.0) || !p.is_finite() {
                out.push(Violation::new(
                    format!("agents[{i}].valuation.params[{j}]"),
                    "parameters must be finite and nonnegative",
                ));
            }
        }
        if !val.values_something() {
            out.push(Violation::new(at("valuation"), "agent values nothing"));
        }
        match val {
            ValuationSpec::CobbDouglas(alpha) => {
                let s: f64 = alpha.iter().sum();
                if (s - 1.0).abs() > COBB_DOUGLAS_SUM_TOL {
                    out.push(Violation::new(
                        at("valuation.params"),
                        format!("exponents sum {s} != 1"),
                    ));
                }
            }
            ValuationSpec::Ces { rho, .. } => {
                if !(*rho > 0.0 && *rho < 1.0) {
                    out.push(Violation::new(
                        at("valuation.rho"),
                        "rho must lie strictly inside (0, 1)",
                    ));
                }
            }
            _ => {}
        }
    }
    out
}

/// Fractional allocation: `n` agent rows by `m` item columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    n: usize,
    m: usize,
    data: Vec<f64>,
}

impl Allocation {
    pub fn zeros(n: usize, m: usize) -> Self {
        Allocation {
            n,
            m,
            data: vec![0.0; n * m],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == m), "ragged allocation rows");
        Allocation {
            n,
            m,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.m + j]
    }

    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        self.data[i * self.m + j] = x;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.m.max(1)).take(self.n)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(|r| r.to_vec()).collect()
    }

    pub fn column_sum(&self, j: usize) -> f64 {
        (0..self.n).map(|i| self.get(i, j)).sum()
    }

    /// Checks nonnegativity and per-item mass `<= 1 + FEASIBILITY_TOL`.
    pub fn check_feasible(&self) -> Result<()> {
        for i in 0..self.n {
            for j in 0..self.m {
                let x = self.get(i, j);
                if !(x >= 0.0) {
                    return Err(Error::Invariant(format!(
                        "allocation entry ({i},{j}) = {x} is negative"
                    )));
                }
            }
        }
        for j in 0..self.m {
            let s = self.column_sum(j);
            if s > 1.0 + FEASIBILITY_TOL {
                return Err(Error::Invariant(format!(
                    "item {j} is over-allocated: column sum {s}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_feasible(&self) -> bool {
        self.check_feasible().is_ok()
    }

    /// Values every agent of `inst` assigns to its own row.
    pub fn values(&self, inst: &Instance) -> Result<Vec<f64>> {
        (0..self.n).map(|i| inst.value_of(i, self.row(i))).collect()
    }
}

impl Serialize for Allocation {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> serde::Deserialize<'de> for Allocation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let m = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != m) {
            return Err(serde::de::Error::custom("ragged allocation rows"));
        }
        Ok(Allocation::from_rows(rows))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    /// Relative accuracy on the product objective, in (0, 1).
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Randomizes the starting point when set; `None` starts uniform.
    pub seed: Option<u64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-9,
            max_iterations: 1_000_000,
            seed: None,
        }
    }
}

impl SolverConfig {
    pub fn with_tolerance(tolerance: f64) -> Self {
        SolverConfig {
            tolerance,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(Error::invalid("config.tolerance", "must lie in (0, 1)"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("config.max_iterations", "must be >= 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> Instance {
        Instance::linear(&[vec![3.0, 1.0], vec![1.0, 3.0]]).unwrap()
    }

    #[test]
    fn well_formed_instance_is_ok() {
        assert!(validate_instance(&two_by_two()).is_empty());
    }

    #[test]
    fn zero_valuation_flagged() {
        let mut inst = two_by_two();
        inst.agents[1].valuation = ValuationSpec::Linear(vec![0.0, 0.0]);
        let v = validate_instance(&inst);
        assert!(v.iter().any(|v| v.message == "agent values nothing"), "{v:?}");
    }

    #[test]
    fn cobb_douglas_sum_flagged() {
        let mut inst = two_by_two();
        inst.agents[0].valuation = ValuationSpec::CobbDouglas(vec![0.6, 0.6]);
        let v = validate_instance(&inst);
        assert!(v.iter().any(|v| v.message.contains("!= 1")), "{v:?}");
    }

    #[test]
    fn structural_violations() {
        let inst = Instance {
            items: vec!["a".into(), "a".into()],
            agents: vec![
                Agent::new("A", 0.5, ValuationSpec::Linear(vec![1.0])).with_degree(0.0),
                Agent::new(
                    "A",
                    1.0,
                    ValuationSpec::Ces {
                        weights: vec![1.0, 1.0],
                        rho: 1.0,
                    },
                ),
            ],
        };
        let paths: Vec<_> = validate_instance(&inst).into_iter().map(|v| v.path).collect();
        for p in [
            "items[1]",
            "agents[0].weight",
            "agents[0].degree",
            "agents[0].valuation.params",
            "agents[1].id",
            "agents[1].valuation.rho",
        ] {
            assert!(paths.iter().any(|q| q == p), "missing {p} in {paths:?}");
        }
    }

    #[test]
    fn feasibility_rejects_overallocation() {
        let ok = Allocation::from_rows(vec![vec![0.5, 1.0], vec![0.5, 0.0]]);
        assert!(ok.is_feasible());
        let bad = Allocation::from_rows(vec![vec![0.5, 1.0], vec![0.5 + 2e-9, 0.0]]);
        assert!(!bad.is_feasible());
        let neg = Allocation::from_rows(vec![vec![-0.1]]);
        assert!(!neg.is_feasible());
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        assert!(SolverConfig::with_tolerance(1.0).validate().is_err());
        let cfg = SolverConfig {
            max_iterations: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
