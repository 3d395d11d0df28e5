use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gen::normalize_exponents;
use crate::error::{Error, Result};
use crate::model::{Family, Instance, SolverConfig, ValuationSpec};
use crate::pa::run_pa;
use crate::par;
use crate::sdm::run_sdm;

/// Random misreports scale each parameter by `2^u`, `u` uniform on
/// `[-PERTURB_LOG2, PERTURB_LOG2]`.
pub const PERTURB_LOG2: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    Pa,
    Sdm,
}

impl Mechanism {
    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::Pa => "pa",
            Mechanism::Sdm => "sdm",
        }
    }

    /// Values delivered to every agent under the mechanism.
    pub fn delivered(self, inst: &Instance, config: &SolverConfig) -> Result<Vec<f64>> {
        match self {
            Mechanism::Pa => Ok(run_pa(inst, config)?.delivered),
            Mechanism::Sdm => Ok(run_sdm(inst)?.values),
        }
    }
}

impl std::str::FromStr for Mechanism {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pa" => Ok(Mechanism::Pa),
            "sdm" => Ok(Mechanism::Sdm),
            _ => Err(format!("unknown mechanism `{s}` (expected pa or sdm)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationResult {
    pub agent: usize,
    /// `truth`, `uniform`, `spike:{j}`, `copy:{k}` or `random:{probe}`.
    pub label: String,
    pub misreport: ValuationSpec,
    pub truthful_value: f64,
    /// The agent's true value for the bundle it gets after misreporting.
    pub deviant_value: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub best: DeviationResult,
    pub probes: usize,
    /// Misreports the mechanism rejected, with the error text.
    pub failures: Vec<(String, String)>,
}

/// Structured lies first (truth, uniform vector, single-item spikes, other
/// agents' reports of the same family), then random perturbations of the
/// truth, truncated to `probes` reports in total.
pub fn misreports(inst: &Instance, agent: usize, probes: usize, seed: u64) -> Vec<(String, ValuationSpec)> {
    let truth = &inst.agents[agent].valuation;
    let m = inst.m();
    let mut out = vec![("truth".to_string(), truth.clone())];
    let uniform = match truth.family() {
        Family::CobbDouglas => vec![1.0 / m as f64; m],
        _ => vec![truth.params().iter().sum::<f64>() / m as f64; m],
    };
    out.push(("uniform".into(), truth.with_params(uniform)));
    for j in 0..m {
        let mut spike = vec![0.0; m];
        spike[j] = 1.0;
        out.push((format!("spike:{j}"), truth.with_params(spike)));
    }
    for (k, other) in inst.agents.iter().enumerate() {
        if k != agent && other.valuation.family() == truth.family() {
            out.push((format!("copy:{k}"), other.valuation.clone()));
        }
    }
    out.truncate(probes);
    let structured = out.len();
    out.extend((structured..probes).map(|p| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((agent as u64) << 32) | p as u64);
        (format!("random:{p}"), perturb(truth, &mut rng))
    }));
    out
}

fn perturb<R: Rng>(truth: &ValuationSpec, rng: &mut R) -> ValuationSpec {
    let params: Vec<f64> = truth
        .params()
        .iter()
        .map(|&x| x * rng.gen_range(-PERTURB_LOG2..=PERTURB_LOG2).exp2())
        .collect();
    match truth.family() {
        Family::CobbDouglas => truth.with_params(normalize_exponents(params)),
        _ => truth.with_params(params),
    }
}

/// Reruns `mechanism` on each misreport of `agent` and returns the report
/// with the largest gain in the agent's true value. Rejected misreports are
/// collected, not fatal; the truthful run must succeed.
pub fn truthfulness_probe(
    mechanism: Mechanism,
    inst: &Instance,
    agent: usize,
    probes: usize,
    seed: u64,
    config: &SolverConfig,
) -> Result<ProbeReport> {
    if agent >= inst.n() {
        return Err(Error::NotApplicable(format!("agent {agent} out of range")));
    }
    let truthful_value = mechanism.delivered(inst, config)?[agent];
    let reports = misreports(inst, agent, probes.max(1), seed);
    let runs = par::map_slice(&reports, |(_, spec)| {
        true_value_after(mechanism, inst, &inst.with_report(agent, spec.clone()), agent, config)
    });
    let mut best: Option<DeviationResult> = None;
    let mut failures = Vec::new();
    for ((label, spec), run) in reports.iter().zip(runs) {
        match run {
            Ok(deviant_value) => {
                let gain = if truthful_value > 0.0 {
                    deviant_value / truthful_value
                } else if deviant_value > 0.0 {
                    f64::INFINITY
                } else {
                    1.0
                };
                if best.as_ref().map_or(true, |b| gain > b.gain) {
                    best = Some(DeviationResult {
                        agent,
                        label: label.clone(),
                        misreport: spec.clone(),
                        truthful_value,
                        deviant_value,
                        gain,
                    });
                }
            }
            Err(e) => failures.push((label.clone(), e.to_string())),
        }
    }
    let best = best.ok_or_else(|| Error::Degenerate("every misreport was rejected".into()))?;
    Ok(ProbeReport {
        best,
        probes: reports.len(),
        failures,
    })
}

/// The agent's true value for the bundle the mechanism gives it on `lie`.
fn true_value_after(
    mechanism: Mechanism,
    truth: &Instance,
    lie: &Instance,
    agent: usize,
    config: &SolverConfig,
) -> Result<f64> {
    let bundle = match mechanism {
        Mechanism::Pa => run_pa(lie, config)?.allocation.row(agent).to_vec(),
        Mechanism::Sdm => run_sdm(lie)?.allocation.row(agent).to_vec(),
    };
    truth.value_of(agent, &bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ValuationSpec;

    fn crossed() -> Instance {
        Instance::linear(&[vec![3.0, 1.0], vec![1.0, 3.0]]).unwrap()
    }

    #[test]
    fn truth_has_gain_one() {
        let r = truthfulness_probe(Mechanism::Pa, &crossed(), 0, 1, 0, &SolverConfig::default()).unwrap();
        assert_eq!(r.best.label, "truth");
        assert_eq!(r.best.gain, 1.0);
    }

    #[test]
    fn crossed_lie_loses() {
        let inst = crossed();
        let cfg = SolverConfig::default();
        let lie = inst.with_report(0, ValuationSpec::Linear(vec![1.0, 3.0]));
        let v = true_value_after(Mechanism::Pa, &inst, &lie, 0, &cfg).unwrap();
        assert!(v < 9.0 / 4.0);
        assert!(v <= 5.0 / 3.0 + 1e-9);
        let r = truthfulness_probe(Mechanism::Pa, &inst, 0, 64, 3, &cfg).unwrap();
        assert!(r.best.gain <= 1.0 + 1e-6, "{:?}", r.best);
        assert_eq!(r.probes, 64);
    }

    #[test]
    fn sdm_probes() {
        let inst = Instance::linear(&vec![vec![1.0, 1.0]; 3]).unwrap();
        let r = truthfulness_probe(Mechanism::Sdm, &inst, 2, 40, 1, &SolverConfig::default()).unwrap();
        assert!(r.best.gain <= 1.0 + 1e-6, "{:?}", r.best);
    }

    #[test]
    fn misreport_list_is_deterministic() {
        let inst = crossed();
        let a = misreports(&inst, 1, 20, 9);
        assert_eq!(a, misreports(&inst, 1, 20, 9));
        assert_eq!(a.len(), 20);
        assert_eq!(a[0].0, "truth");
        assert_eq!(a[1].0, "uniform");
        assert_eq!(a[4].0, "copy:0");
        assert_eq!(a[5].0, "random:5");
        assert_eq!(misreports(&inst, 1, 2, 9).len(), 2);
    }
}
