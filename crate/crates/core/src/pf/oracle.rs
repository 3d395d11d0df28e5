//! Exhaustive grid oracle for tiny instances.
//!
//! Every item is split among the agents in multiples of `1/k`. The first
//! `m - 1` columns are enumerated outright. For the last column the agents'
//! objectives are separable and concave in their share, so handing out its
//! `k` units greedily by marginal gain reaches the exact grid maximum.

use super::PfSolution;
use crate::error::{Error, Result};
use crate::model::{Allocation, Instance};
use crate::par;

/// Cap on enumerated partial grids (compositions per column to the power
/// `m - 1`).
pub const ORACLE_MAX_LEAVES: f64 = 2e8;
const MAX_CELLS: usize = 9;
const MAX_GRID: usize = 100;
const MAX_TABLE: usize = 1 << 22;

/// Maximizes `sum_i b_i ln v_i` over the `k`-step grid of full allocations.
/// The returned solution carries no prices and a zero residual.
pub fn brute_force_oracle(inst: &Instance, k: usize) -> Result<PfSolution> {
    inst.ensure_valid()?;
    let (n, m) = (inst.n(), inst.m());
    if n * m > MAX_CELLS || k > MAX_GRID || k == 0 {
        return Err(Error::OracleTooLarge(format!(
            "need n*m <= {MAX_CELLS} and 1 <= k <= {MAX_GRID}, got n*m = {} and k = {k}",
            n * m
        )));
    }
    let comps = compositions(k, n);
    let leaves = (comps.len() as f64).powi(m as i32 - 1);
    if leaves > ORACLE_MAX_LEAVES {
        return Err(Error::OracleTooLarge(format!(
            "{leaves:.3e} partial grids exceed the {ORACLE_MAX_LEAVES:.0e} budget"
        )));
    }

    let grid = Grid::new(inst, k);
    let search = |prefix: &[usize]| -> (f64, Vec<usize>) {
        let mut units = vec![0usize; n * m];
        let mut best = (f64::NEG_INFINITY, Vec::new());
        grid.descend(&comps, prefix, 0, &mut units, &mut best);
        best
    };
    let results: Vec<(f64, Vec<usize>)> = if m >= 2 {
        par::map_slice(&comps, |first| search(first))
    } else {
        vec![search(&[])]
    };
    let (_, units) = results
        .into_iter()
        .fold((f64::NEG_INFINITY, Vec::new()), |acc, r| {
            if r.0 > acc.0 || acc.1.is_empty() {
                r
            } else {
                acc
            }
        });

    let mut alloc = Allocation::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            alloc.set(i, j, units[i * m + j] as f64 / k as f64);
        }
    }
    Ok(PfSolution::assemble(inst, alloc, None, 0.0))
}

struct Grid<'a> {
    inst: &'a Instance,
    k: usize,
    n: usize,
    m: usize,
    /// Per-agent `b_i ln v_i` over all bundles, when small enough.
    tables: Option<Vec<Vec<f64>>>,
}

impl<'a> Grid<'a> {
    fn new(inst: &'a Instance, k: usize) -> Self {
        let (n, m) = (inst.n(), inst.m());
        let size = (k + 1).checked_pow(m as u32).unwrap_or(usize::MAX);
        let tables = (size <= MAX_TABLE).then(|| {
            par::map_range(n, |i| {
                let mut bundle = vec![0.0; m];
                (0..size)
                    .map(|mut idx| {
                        for x in bundle.iter_mut() {
                            *x = (idx % (k + 1)) as f64 / k as f64;
                            idx /= k + 1;
                        }
                        log_value(inst, i, &bundle)
                    })
                    .collect()
            })
        });
        Grid {
            inst,
            k,
            n,
            m,
            tables,
        }
    }

    fn score(&self, i: usize, units: &[usize]) -> f64 {
        let row = &units[i * self.m..(i + 1) * self.m];
        match &self.tables {
            Some(t) => {
                let idx = row.iter().rev().fold(0, |acc, &u| acc * (self.k + 1) + u);
                t[i][idx]
            }
            None => {
                let bundle: Vec<f64> = row.iter().map(|&u| u as f64 / self.k as f64).collect();
                log_value(self.inst, i, &bundle)
            }
        }
    }

    fn descend(
        &self,
        comps: &[Vec<usize>],
        prefix: &[usize],
        j: usize,
        units: &mut [usize],
        best: &mut (f64, Vec<usize>),
    ) {
        let (n, m) = (self.n, self.m);
        if j + 1 == m {
            let total = self.fill_last(units);
            if total > best.0 || best.1.is_empty() {
                *best = (total, units.to_vec());
            }
            return;
        }
        if j == 0 && !prefix.is_empty() {
            for i in 0..n {
                units[i * m] = prefix[i];
            }
            self.descend(comps, prefix, 1, units, best);
            return;
        }
        for c in comps {
            for i in 0..n {
                units[i * m + j] = c[i];
            }
            self.descend(comps, prefix, j + 1, units, best);
        }
    }

    /// Greedy split of the last column; writes it into `units`.
    fn fill_last(&self, units: &mut [usize]) -> f64 {
        let (n, m, k) = (self.n, self.m, self.k);
        let last = m - 1;
        for i in 0..n {
            units[i * m + last] = 0;
        }
        let mut current: Vec<f64> = (0..n).map(|i| self.score(i, units)).collect();
        let mut next = vec![0.0; n];
        for i in 0..n {
            units[i * m + last] = 1;
            next[i] = self.score(i, units);
            units[i * m + last] = 0;
        }
        for _ in 0..k {
            let mut pick = 0;
            let mut pick_gain = f64::NEG_INFINITY;
            for i in 0..n {
                let g = gain(current[i], next[i]);
                if g > pick_gain {
                    pick = i;
                    pick_gain = g;
                }
            }
            let slot = pick * m + last;
            units[slot] += 1;
            current[pick] = next[pick];
            if units[slot] < k {
                units[slot] += 1;
                next[pick] = self.score(pick, units);
                units[slot] -= 1;
            } else {
                next[pick] = f64::NEG_INFINITY;
            }
        }
        current.iter().sum()
    }
}

fn gain(cur: f64, next: f64) -> f64 {
    if next == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else if cur == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        next - cur
    }
}

fn log_value(inst: &Instance, i: usize, bundle: &[f64]) -> f64 {
    let v = inst.value_of(i, bundle).unwrap_or(0.0);
    if v > 0.0 {
        inst.agents[i].weight * v.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// All `n`-tuples of nonnegative integers summing to `k`, lexicographic.
fn compositions(k: usize, n: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, slots: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for x in 0..=left {
            cur.push(x);
            rec(left - x, slots - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, n, &mut Vec::with_capacity(n), &mut out);
    out
}

/// Rounds every column of `alloc` to multiples of `1/k` summing to exactly
/// one (largest remainder, lowest index first on ties).
pub fn grid_round(alloc: &Allocation, k: usize) -> Allocation {
    let (n, m) = (alloc.n(), alloc.m());
    let mut out = Allocation::zeros(n, m);
    for j in 0..m {
        let scaled: Vec<f64> = (0..n).map(|i| alloc.get(i, j) * k as f64).collect();
        let mut units: Vec<usize> = scaled.iter().map(|s| s.floor().max(0.0) as usize).collect();
        let used: usize = units.iter().sum();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            let ra = scaled[a] - scaled[a].floor();
            let rb = scaled[b] - scaled[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for t in 0..k.saturating_sub(used) {
            units[order[t % n]] += 1;
        }
        let mut excess = used.saturating_sub(k);
        for i in (0..n).rev() {
            let take = excess.min(units[i]);
            units[i] -= take;
            excess -= take;
        }
        for i in 0..n {
            out.set(i, j, units[i] as f64 / k as f64);
        }
    }
    out
}

/// Objective lost by snapping `reference` onto the `k`-grid. The grid
/// optimum is at least `objective(reference) - grid_slack`.
pub fn grid_slack(inst: &Instance, k: usize, reference: &Allocation) -> f64 {
    let obj = |a: &Allocation| -> f64 {
        (0..inst.n())
            .map(|i| log_value(inst, i, a.row(i)))
            .sum()
    };
    (obj(reference) - obj(&grid_round(reference, k))).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ValuationSpec;

    /// Plain enumeration of every column, no greedy shortcut.
    fn naive(inst: &Instance, k: usize) -> f64 {
        let (n, m) = (inst.n(), inst.m());
        let comps = compositions(k, n);
        let mut best = f64::NEG_INFINITY;
        let mut idx = vec![0usize; m];
        loop {
            let mut alloc = Allocation::zeros(n, m);
            for j in 0..m {
                for i in 0..n {
                    alloc.set(i, j, comps[idx[j]][i] as f64 / k as f64);
                }
            }
            let v: f64 = (0..n).map(|i| log_value(inst, i, alloc.row(i))).sum();
            best = best.max(v);
            let mut j = 0;
            loop {
                if j == m {
                    return best;
                }
                idx[j] += 1;
                if idx[j] < comps.len() {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
        }
    }

    #[test]
    fn compositions_count() {
        assert_eq!(compositions(4, 3).len(), 15);
        assert!(compositions(4, 3).iter().all(|c| c.iter().sum::<usize>() == 4));
    }

    #[test]
    fn greedy_last_column_matches_naive_enumeration() {
        let cases = vec![
            Instance::linear(&[vec![0.3, 0.7], vec![0.9, 0.1], vec![0.5, 0.5]]).unwrap(),
            Instance::from_valuations(
                &[1.0, 2.0],
                vec![
                    ValuationSpec::Leontief(vec![0.4, 1.0]),
                    ValuationSpec::Leontief(vec![1.0, 0.2]),
                ],
            )
            .unwrap(),
            Instance::from_valuations(
                &[1.0, 1.5],
                vec![
                    ValuationSpec::CobbDouglas(vec![0.3, 0.7]),
                    ValuationSpec::Ces {
                        weights: vec![0.6, 0.4],
                        rho: 0.4,
                    },
                ],
            )
            .unwrap(),
        ];
        for inst in &cases {
            let k = 8;
            let fast = brute_force_oracle(inst, k).unwrap().objective;
            let slow = naive(inst, k);
            assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
        }
    }

    #[test]
    fn disjoint_instance_objective_zero() {
        let inst = Instance::linear(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let s = brute_force_oracle(&inst, 10).unwrap();
        assert!(s.objective.abs() < 1e-15);
    }

    #[test]
    fn single_item_equal_split() {
        let inst = Instance::linear(&[vec![1.0], vec![1.0]]).unwrap();
        let s = brute_force_oracle(&inst, 100).unwrap();
        assert!((s.allocation.get(0, 0) - 0.5).abs() <= 0.01);
        assert!((s.allocation.get(1, 0) - 0.5).abs() <= 0.01);
    }

    #[test]
    fn size_limits() {
        let inst = Instance::linear(&[vec![1.0; 5], vec![1.0; 5]]).unwrap();
        assert!(matches!(brute_force_oracle(&inst, 10), Err(Error::OracleTooLarge(_))));
        let small = Instance::linear(&[vec![1.0]]).unwrap();
        assert!(matches!(brute_force_oracle(&small, 101), Err(Error::OracleTooLarge(_))));
    }

    #[test]
    fn rounding_stays_on_grid() {
        let a = Allocation::from_rows(vec![vec![0.333, 0.5], vec![0.667, 0.2]]);
        let r = grid_round(&a, 10);
        for j in 0..2 {
            assert!((r.column_sum(j) - 1.0).abs() < 1e-12);
        }
        assert!((r.get(0, 0) - 0.3).abs() < 1e-12);
    }
}
