use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Allocation, Instance};
use crate::pa::PaOutcome;
use crate::pf::PfSolution;

/// Slack used by [`lemma_bound_sample`] in log space.
pub const LEMMA_LOG_TOL: f64 = 1e-12;

/// `min_i v_i(final_i) / u_i(pf)`.
pub fn approx_ratio(inst: &Instance, allocation: &Allocation, pf: &PfSolution) -> Result<f64> {
    let delivered = allocation.values(inst)?;
    let mut rho = f64::INFINITY;
    for (i, (&d, &u)) in delivered.iter().zip(&pf.utilities).enumerate() {
        if !(u > 0.0) {
            return Err(Error::Degenerate(format!(
                "agent `{}` has zero PF utility",
                inst.agents[i].id
            )));
        }
        rho = rho.min(d / u);
    }
    Ok(rho)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvyCheck {
    /// `margins[i][j] = v_i(bundle_i) - v_i(bundle_j)`.
    pub margins: Vec<Vec<f64>>,
    pub pass: bool,
}

pub fn envy_margins(inst: &Instance, allocation: &Allocation) -> Result<Vec<Vec<f64>>> {
    let n = inst.n();
    let mut margins = vec![vec![0.0; n]; n];
    for i in 0..n {
        let own = inst.value_of(i, allocation.row(i))?;
        for j in (0..n).filter(|&j| j != i) {
            margins[i][j] = own - inst.value_of(i, allocation.row(j))?;
        }
    }
    Ok(margins)
}

pub fn envy_check_allocation(inst: &Instance, allocation: &Allocation, tol: f64) -> Result<EnvyCheck> {
    let margins = envy_margins(inst, allocation)?;
    let pass = margins.iter().flatten().all(|&x| x >= -tol);
    Ok(EnvyCheck { margins, pass })
}

pub fn envy_check(inst: &Instance, outcome: &PaOutcome, tol: f64) -> Result<EnvyCheck> {
    envy_check_allocation(inst, &outcome.allocation, tol)
}

/// `max_i |b_i log delivered_i - b_i log u_i(x*)
///   + sum_{i' != i} b_i' (log u_i'(x*_{-i}) - log u_i'(x*))|`.
pub fn vcg_identity_residual(inst: &Instance, outcome: &PaOutcome) -> Result<f64> {
    if let Some(i) = outcome.clamped.iter().position(|&c| c) {
        return Err(Error::IdentityNotApplicable(i));
    }
    let weights = inst.weights();
    let base = &outcome.base.utilities;
    let mut worst: f64 = 0.0;
    for (i, excl) in outcome.exclusions.iter().enumerate() {
        let mut externality = 0.0;
        for (k, &b) in weights.iter().enumerate() {
            if k != i {
                externality += b * (excl.utilities[k].ln() - base[k].ln());
            }
        }
        let lhs = weights[i] * (outcome.delivered[i].ln() - base[i].ln());
        worst = worst.max((lhs + externality).abs());
    }
    Ok(worst)
}

/// Right minus left side of
/// `sum_i beta_i log(1 + delta_i) <= B log(1 + b/B)` with `B = sum_i beta_i`.
pub fn lemma_gap(pairs: &[(f64, f64)], b: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::RejectedSample("no pairs".into()));
    }
    let mut total_beta = 0.0;
    let mut spent = 0.0;
    let mut lhs = 0.0;
    for &(delta, beta) in pairs {
        if !(delta >= 0.0) || !(beta >= 1.0) {
            return Err(Error::RejectedSample(format!(
                "need delta >= 0 and beta >= 1, got ({delta}, {beta})"
            )));
        }
        total_beta += beta;
        spent += beta * delta;
        lhs += beta * delta.ln_1p();
    }
    if spent > b * (1.0 + 1e-12) {
        return Err(Error::RejectedSample(format!(
            "sum beta_i delta_i = {spent} exceeds b = {b}"
        )));
    }
    Ok(total_beta * (b / total_beta).ln_1p() - lhs)
}

/// `prod_i (1 + delta_i)^beta_i <= (1 + b/B)^B`, evaluated in log space.
pub fn lemma_bound_sample(pairs: &[(f64, f64)], b: f64) -> Result<bool> {
    Ok(lemma_gap(pairs, b)? >= -LEMMA_LOG_TOL)
}

/// A random admissible draw: 1 to 8 pairs, `beta` uniform on [1, 5],
/// `delta` uniform on [0, 2], and `b` at least `sum beta_i delta_i`.
pub fn sample_lemma_pairs<R: Rng>(rng: &mut R) -> (Vec<(f64, f64)>, f64) {
    let k = rng.gen_range(1..=8);
    let pairs: Vec<(f64, f64)> = (0..k)
        .map(|_| (rng.gen_range(0.0..=2.0), rng.gen_range(1.0..=5.0)))
        .collect();
    let spent: f64 = pairs.iter().map(|(d, b)| d * b).sum();
    (pairs, spent * rng.gen_range(1.0..=2.0))
}

/// `psi = (sum b - min b) / min b` and `(1 + 1/psi)^(-psi)`; a single agent
/// gets `(0, 1)`.
pub fn psi_bound(inst: &Instance) -> (f64, f64) {
    if inst.n() < 2 {
        return (0.0, 1.0);
    }
    let w = inst.weights();
    let min = w.iter().copied().fold(f64::INFINITY, f64::min);
    let psi = (w.iter().sum::<f64>() - min) / min;
    (psi, (-psi * (1.0 / psi).ln_1p()).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::gen::gen_single_item;
    use crate::model::SolverConfig;
    use crate::pa::run_pa;
    use crate::pf;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn crossed() -> Instance {
        Instance::linear(&[vec![3.0, 1.0], vec![1.0, 3.0]]).unwrap()
    }

    #[test]
    fn approx_ratio_examples() {
        let inst = crossed();
        let pf = pf::solve(&inst, &SolverConfig::default()).unwrap();
        assert_eq!(approx_ratio(&inst, &pf.allocation, &pf).unwrap(), 1.0);
        let single = gen_single_item(&[1.0, 1.0]).unwrap();
        let out = run_pa(&single, &SolverConfig::default()).unwrap();
        assert!((approx_ratio(&single, &out.allocation, &out.base).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn envy_examples() {
        let disjoint = Instance::linear(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let out = run_pa(&disjoint, &SolverConfig::default()).unwrap();
        let e = envy_check(&disjoint, &out, 1e-6).unwrap();
        assert!(e.pass);
        assert_eq!(e.margins, vec![vec![0.0, 1.0], vec![2.0, 0.0]]);

        let inst = crossed();
        let out = run_pa(&inst, &SolverConfig::default()).unwrap();
        let e = envy_check(&inst, &out, 1e-6).unwrap();
        assert!((e.margins[0][1] - 1.5).abs() < 1e-9);

        let swapped = Allocation::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(!envy_check_allocation(&inst, &swapped, 1e-6).unwrap().pass);
    }

    #[test]
    fn vcg_examples() {
        let cfg = SolverConfig::default();
        for inst in [
            Instance::linear(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            crossed(),
            gen_single_item(&[1.0, 1.0]).unwrap(),
        ] {
            let out = run_pa(&inst, &cfg).unwrap();
            assert!(vcg_identity_residual(&inst, &out).unwrap() < 1e-9);
        }
    }

    #[test]
    fn vcg_refuses_clamped_outcomes() {
        let inst = crossed();
        let mut out = run_pa(&inst, &SolverConfig::default()).unwrap();
        out.clamped[1] = true;
        assert!(matches!(vcg_identity_residual(&inst, &out), Err(Error::IdentityNotApplicable(1))));
    }

    #[test]
    fn lemma_examples() {
        assert!(lemma_bound_sample(&[(0.0, 1.0), (0.0, 2.0)], 1.0).unwrap());
        let pairs = [(0.25, 2.0), (0.25, 1.0), (0.25, 1.0)];
        assert!(lemma_gap(&pairs, 1.0).unwrap().abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (pairs, b) = sample_lemma_pairs(&mut rng);
        assert!(lemma_bound_sample(&pairs, b).unwrap());
        assert!(matches!(lemma_bound_sample(&[(1.0, 1.0)], 0.5), Err(Error::RejectedSample(_))));
        assert!(lemma_bound_sample(&[(1.0, 0.5)], 5.0).is_err());
    }

    #[test]
    fn psi_examples() {
        let (psi, b) = psi_bound(&gen_single_item(&[1.0, 1.0]).unwrap());
        assert_eq!((psi, b), (1.0, 0.5));
        let (psi, b) = psi_bound(&gen_single_item(&[1.0; 5]).unwrap());
        assert_eq!(psi, 4.0);
        assert!((b - 0.4096).abs() < 1e-15);
        let (_, b) = psi_bound(&gen_single_item(&[1.0; 100_001]).unwrap());
        assert!((b - (-1.0f64).exp()).abs() < 1e-5);
        assert_eq!(psi_bound(&gen_single_item(&[3.0]).unwrap()), (0.0, 1.0));
    }
}
