//! Property checks, truthfulness probes and instance generators.

mod checks;
mod gen;
mod probe;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Instance, SolverConfig};
use crate::pa::run_pa;
use crate::pf;
use crate::sdm::{price_ratio_bound, run_sdm};

pub use checks::{
    approx_ratio, envy_check, envy_check_allocation, envy_margins, lemma_bound_sample, lemma_gap, psi_bound,
    sample_lemma_pairs, vcg_identity_residual, EnvyCheck, LEMMA_LOG_TOL,
};
pub use gen::{gen_lower_bound_instance, gen_random, gen_random_weighted, gen_single_item};
pub use probe::{misreports, truthfulness_probe, DeviationResult, Mechanism, ProbeReport, PERTURB_LOG2};

/// Default tolerance for audit verdicts.
pub const AUDIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub mechanism: Mechanism,
    pub rho: f64,
    pub psi: f64,
    pub psi_bound: f64,
    /// SDM only: `min_j p*_j / ceil(p*_j)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub price_bound: Option<f64>,
    pub envy_margins: Vec<Vec<f64>>,
    /// PA only; `None` when a fraction was clamped.
    pub vcg_residual: Option<f64>,
    pub deviation_results: Vec<DeviationResult>,
    pub probe_failures: usize,
    pub checks: Vec<Check>,
}

impl AuditReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Debug, Clone)]
pub struct AuditConfig {
    pub probes: usize,
    pub seed: u64,
    pub tol: f64,
    pub solver: SolverConfig,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            probes: 100,
            seed: 0,
            tol: AUDIT_TOL,
            solver: SolverConfig::default(),
        }
    }
}

fn check(name: &str, pass: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        pass,
        detail,
    }
}

/// Runs `mechanism` on `inst` and checks its guarantees.
pub fn run_audit(inst: &Instance, mechanism: Mechanism, cfg: &AuditConfig) -> Result<AuditReport> {
    let (psi, bound) = psi_bound(inst);
    let mut checks = Vec::new();
    let (rho, price_bound, envy, vcg_residual) = match mechanism {
        Mechanism::Pa => {
            let out = run_pa(inst, &cfg.solver)?;
            let rho = approx_ratio(inst, &out.allocation, &out.base)?;
            checks.push(check(
                "psi-bound",
                rho >= bound - cfg.tol,
                format!("rho {rho} vs (1+1/psi)^-psi {bound}"),
            ));
            let envy = envy_check(inst, &out, cfg.tol)?;
            let vcg = match vcg_identity_residual(inst, &out) {
                Ok(r) => {
                    checks.push(check("vcg-identity", r <= cfg.tol, format!("residual {r:e}")));
                    Some(r)
                }
                Err(Error::IdentityNotApplicable(i)) => {
                    checks.push(check("vcg-identity", true, format!("skipped: agent {i} clamped")));
                    None
                }
                Err(e) => return Err(e),
            };
            (rho, None, envy, vcg)
        }
        Mechanism::Sdm => {
            let out = run_sdm(inst)?;
            let pf = pf::solve(inst, &cfg.solver)?;
            let rho = approx_ratio(inst, &out.allocation, &pf)?;
            let pb = price_ratio_bound(pf.prices.as_deref().unwrap_or(&[]));
            checks.push(check(
                "price-bound",
                rho >= pb - cfg.tol,
                format!("rho {rho} vs min p*/ceil(p*) {pb}"),
            ));
            let envy = envy_check_allocation(inst, &out.allocation, cfg.tol)?;
            (rho, Some(pb), envy, None)
        }
    };
    let worst_envy = envy.margins.iter().flatten().copied().fold(0.0, f64::min);
    if inst.agents.iter().all(|a| a.weight == 1.0) {
        checks.push(check("envy-free", envy.pass, format!("smallest margin {worst_envy:e}")));
    } else {
        checks.push(check(
            "envy-free",
            true,
            format!("skipped: unequal weights (smallest margin {worst_envy:e})"),
        ));
    }

    let mut deviation_results = Vec::with_capacity(inst.n());
    let mut probe_failures = 0;
    for i in 0..inst.n() {
        let r = truthfulness_probe(mechanism, inst, i, cfg.probes, cfg.seed, &cfg.solver)?;
        probe_failures += r.failures.len();
        deviation_results.push(r.best);
    }
    let max_gain = deviation_results.iter().map(|d| d.gain).fold(0.0, f64::max);
    checks.push(check(
        "truthful-probes",
        max_gain <= 1.0 + cfg.tol,
        format!("largest gain {max_gain} over {} probes per agent", cfg.probes),
    ));

    Ok(AuditReport {
        mechanism,
        rho,
        psi,
        psi_bound: bound,
        price_bound,
        envy_margins: envy.margins,
        vcg_residual,
        deviation_results,
        probe_failures,
        checks,
    })
}
