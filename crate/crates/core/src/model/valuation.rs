use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of Cobb-Douglas exponents.
pub const COBB_DOUGLAS_SUM_TOL: f64 = 1e-12;

/// A homogeneous valuation over bundles of divisible items.
///
/// Every variant is homogeneous of degree one; higher degrees are applied by
/// the owning [`Agent`](super::Agent) through [`evaluate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ValuationSpec {
    /// Additive: `sum_j v_j x_j`.
    Linear(Vec<f64>),
    /// Perfect complements: `min_{j: a_j > 0} x_j / a_j`.
    Leontief(Vec<f64>),
    /// `prod_j x_j^{alpha_j}` with exponents summing to one.
    CobbDouglas(Vec<f64>),
    /// `(sum_j w_j x_j^rho)^{1/rho}` with `rho` in (0, 1).
    Ces { weights: Vec<f64>, rho: f64 },
}

/// Valuation family tag, used by dispatch and generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Linear,
    Leontief,
    CobbDouglas,
    Ces,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::Leontief => "leontief",
            Family::CobbDouglas => "cobb_douglas",
            Family::Ces => "ces",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        match s {
            "linear" => Some(Family::Linear),
            "leontief" => Some(Family::Leontief),
            "cobb_douglas" => Some(Family::CobbDouglas),
            "ces" => Some(Family::Ces),
            _ => None,
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Family::parse(s).ok_or_else(|| format!("unknown family `{s}`"))
    }
}

impl ValuationSpec {
    pub fn family(&self) -> Family {
        match self {
            ValuationSpec::Linear(_) => Family::Linear,
            ValuationSpec::Leontief(_) => Family::Leontief,
            ValuationSpec::CobbDouglas(_) => Family::CobbDouglas,
            ValuationSpec::Ces { .. } => Family::Ces,
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            ValuationSpec::Linear(p)
            | ValuationSpec::Leontief(p)
            | ValuationSpec::CobbDouglas(p)
            | ValuationSpec::Ces { weights: p, .. } => p,
        }
    }

    /// Same family (and CES exponent) with a new parameter vector.
    pub fn with_params(&self, params: Vec<f64>) -> ValuationSpec {
        match self {
            ValuationSpec::Linear(_) => ValuationSpec::Linear(params),
            ValuationSpec::Leontief(_) => ValuationSpec::Leontief(params),
            ValuationSpec::CobbDouglas(_) => ValuationSpec::CobbDouglas(params),
            ValuationSpec::Ces { rho, .. } => ValuationSpec::Ces {
                weights: params,
                rho: *rho,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.params().len()
    }

    pub fn is_empty(&self) -> bool {
        self.params().is_empty()
    }

    /// True if some parameter is strictly positive.
    pub fn values_something(&self) -> bool {
        self.params().iter().any(|&p| p > 0.0)
    }

    /// Degree-one value of `bundle`. Lengths must already agree.
    pub fn base_value(&self, bundle: &[f64]) -> f64 {
        debug_assert_eq!(bundle.len(), self.len());
        match self {
            ValuationSpec::Linear(v) => v.iter().zip(bundle).map(|(v, x)| v * x).sum(),
            ValuationSpec::Leontief(a) => {
                let mut best = f64::INFINITY;
                for (a, x) in a.iter().zip(bundle) {
                    if *a > 0.0 {
                        best = best.min(x / a);
                    }
                }
                if best.is_finite() {
                    best.max(0.0)
                } else {
                    0.0
                }
            }
            ValuationSpec::CobbDouglas(alpha) => {
                let mut log = 0.0;
                for (a, x) in alpha.iter().zip(bundle) {
                    if *a > 0.0 {
                        if *x <= 0.0 {
                            return 0.0;
                        }
                        log += a * x.ln();
                    }
                }
                log.exp()
            }
            ValuationSpec::Ces { weights, rho } => {
                let s: f64 = weights
                    .iter()
                    .zip(bundle)
                    .filter(|(w, x)| **w > 0.0 && **x > 0.0)
                    .map(|(w, x)| w * x.powf(*rho))
                    .sum();
                if s <= 0.0 {
                    0.0
                } else {
                    s.powf(1.0 / rho)
                }
            }
        }
    }

    /// Partial derivative of `ln base_value` in coordinate `j`.
    ///
    /// Returns `+inf` where the derivative blows up at a zero coordinate.
    /// Not defined for Leontief valuations (returns NaN).
    pub fn log_partial(&self, bundle: &[f64], j: usize) -> f64 {
        match self {
            ValuationSpec::Linear(v) => {
                if v[j] == 0.0 {
                    return 0.0;
                }
                let total: f64 = v.iter().zip(bundle).map(|(v, x)| v * x).sum();
                if total <= 0.0 {
                    f64::INFINITY
                } else {
                    v[j] / total
                }
            }
            ValuationSpec::CobbDouglas(alpha) => {
                if alpha[j] == 0.0 {
                    0.0
                } else if bundle[j] <= 0.0 {
                    f64::INFINITY
                } else {
                    alpha[j] / bundle[j]
                }
            }
            ValuationSpec::Ces { weights, rho } => {
                if weights[j] == 0.0 {
                    return 0.0;
                }
                if bundle[j] <= 0.0 {
                    return f64::INFINITY;
                }
                let s: f64 = weights
                    .iter()
                    .zip(bundle)
                    .filter(|(w, x)| **w > 0.0 && **x > 0.0)
                    .map(|(w, x)| w * x.powf(*rho))
                    .sum();
                weights[j] * bundle[j].powf(rho - 1.0) / s
            }
            ValuationSpec::Leontief(_) => f64::NAN,
        }
    }
}

/// Value of `bundle` under `valuation` raised to `degree`.
pub fn evaluate(valuation: &ValuationSpec, degree: f64, bundle: &[f64]) -> Result<f64> {
    if bundle.len() != valuation.len() {
        return Err(Error::invalid(
            "bundle",
            format!(
                "length {} does not match parameter length {}",
                bundle.len(),
                valuation.len()
            ),
        ));
    }
    if let Some(j) = bundle.iter().position(|x| !(*x >= 0.0)) {
        return Err(Error::invalid(
            format!("bundle[{j}]"),
            "entries must be nonnegative",
        ));
    }
    let base = valuation.base_value(bundle);
    Ok(if degree == 1.0 { base } else { base.powf(degree) })
}
