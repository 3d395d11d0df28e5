use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Agent, Family, Instance, ValuationSpec};

/// `n` bidders and `m = (k+1)n` items.
///
/// For `index <= n`, bidder `index` values every item at 1 and every other
/// bidder `i` values item `i` at `kn+1` and the rest at 1. For
/// `index = n+1`, every bidder `i` values item `i` at `kn+1`. Indices are
/// one-based.
pub fn gen_lower_bound_instance(n: usize, k: usize, index: usize) -> Result<Instance> {
    if n < 2 {
        return Err(Error::invalid("n", "lower-bound instances need n >= 2"));
    }
    if k < 1 {
        return Err(Error::invalid("k", "lower-bound instances need k >= 1"));
    }
    if index < 1 || index > n + 1 {
        return Err(Error::invalid("index", format!("index {index} outside [1, {}]", n + 1)));
    }
    let m = (k + 1) * n;
    let high = (k * n + 1) as f64;
    let rows: Vec<Vec<f64>> = (1..=n)
        .map(|i| {
            let mut row = vec![1.0; m];
            if i != index {
                row[i - 1] = high;
            }
            row
        })
        .collect();
    Instance::linear(&rows)
}

/// One item valued 1 by `weights.len()` agents.
pub fn gen_single_item(weights: &[f64]) -> Result<Instance> {
    if weights.is_empty() {
        return Err(Error::invalid("n", "need at least one agent"));
    }
    Instance::from_valuations(weights, vec![ValuationSpec::Linear(vec![1.0]); weights.len()])
}

/// Unit-weight random instance; parameters i.i.d. uniform on (0, 1].
///
/// Linear and Cobb-Douglas rows are normalized to sum 1, CES weights too
/// (with `rho` uniform on [0.25, 0.75]); Leontief rows are left as drawn.
pub fn gen_random(n: usize, m: usize, family: Family, seed: u64) -> Result<Instance> {
    gen_random_weighted(n, m, family, seed, 1.0)
}

/// [`gen_random`] with weights uniform on `[1, max_weight]`.
pub fn gen_random_weighted(n: usize, m: usize, family: Family, seed: u64, max_weight: f64) -> Result<Instance> {
    if n == 0 || m == 0 {
        return Err(Error::invalid("n", "need at least one agent and one item"));
    }
    if !(max_weight >= 1.0) {
        return Err(Error::invalid("max_weight", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agents = Vec::with_capacity(n);
    for i in 0..n {
        let raw: Vec<f64> = (0..m).map(|_| 1.0 - rng.gen::<f64>()).collect();
        let sum: f64 = raw.iter().sum();
        let normalized: Vec<f64> = raw.iter().map(|x| x / sum).collect();
        let valuation = match family {
            Family::Linear => ValuationSpec::Linear(normalized),
            Family::Leontief => ValuationSpec::Leontief(raw),
            Family::CobbDouglas => ValuationSpec::CobbDouglas(normalize_exponents(normalized)),
            Family::Ces => ValuationSpec::Ces {
                weights: normalized,
                rho: rng.gen_range(0.25..=0.75),
            },
        };
        let weight = if max_weight > 1.0 {
            rng.gen_range(1.0..=max_weight)
        } else {
            1.0
        };
        agents.push(Agent::new(format!("agent{i}"), weight, valuation));
    }
    Instance::new((0..m).map(|j| format!("item{j}")).collect(), agents)
}

/// Pushes the rounding error of a normalized vector into its largest entry so
/// the exponents sum to one as closely as floats allow.
pub(crate) fn normalize_exponents(mut v: Vec<f64>) -> Vec<f64> {
    let sum: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= sum);
    let err = 1.0 - v.iter().sum::<f64>();
    if let Some(big) = v.iter_mut().max_by(|a, b| a.total_cmp(b)) {
        *big += err;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_bound_shapes() {
        let inst = gen_lower_bound_instance(3, 2, 4).unwrap();
        assert_eq!(inst.m(), 9);
        for i in 0..3 {
            let p = inst.agents[i].valuation.params();
            assert_eq!(p[i], 7.0);
            assert_eq!(p.iter().filter(|&&x| x == 1.0).count(), 8);
        }
        let inst = gen_lower_bound_instance(3, 2, 1).unwrap();
        assert!(inst.agents[0].valuation.params().iter().all(|&x| x == 1.0));
        assert_eq!(inst.agents[1].valuation.params()[1], 7.0);

        let inst = gen_lower_bound_instance(2, 1, 3).unwrap();
        assert_eq!(inst.m(), 4);
        assert_eq!(inst.agents[0].valuation.params()[0], 3.0);
        assert_eq!(inst.agents[1].valuation.params()[1], 3.0);

        assert_eq!(gen_lower_bound_instance(3, 20, 4).unwrap().m(), 63);
        assert!(gen_lower_bound_instance(3, 2, 5).is_err());
        assert!(gen_lower_bound_instance(3, 2, 0).is_err());
        assert!(gen_lower_bound_instance(1, 2, 1).is_err());
    }

    #[test]
    fn single_item() {
        let inst = gen_single_item(&[1.0, 1.0]).unwrap();
        assert_eq!((inst.n(), inst.m()), (2, 1));
        assert!(gen_single_item(&[]).is_err());
    }

    #[test]
    fn random_is_deterministic_and_valid() {
        let a = gen_random(3, 3, Family::Linear, 7).unwrap();
        let b = gen_random(3, 3, Family::Linear, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_random(3, 3, Family::Linear, 8).unwrap());
        let l = gen_random(4, 5, Family::Leontief, 1).unwrap();
        for a in &l.agents {
            assert_eq!(a.valuation.len(), 5);
            assert!(a.valuation.params().iter().all(|&x| x > 0.0));
        }
        for fam in [Family::CobbDouglas, Family::Ces] {
            for seed in 0..50 {
                gen_random(5, 4, fam, seed).unwrap();
            }
        }
        let w = gen_random_weighted(5, 2, Family::Linear, 3, 4.0).unwrap();
        assert!(w.agents.iter().all(|a| (1.0..=4.0).contains(&a.weight)));
    }
}
