//! The Strong Demand Matching mechanism for unit-weight linear bidders.
//!
//! Prices start at one and only rise. Each round computes a maximum valid
//! assignment in the demand graph (bidders to MBB items, item `j` holding at
//! most `floor(p_j)` bidders). While some bidder is unmatched, the prices of
//! all items reachable from unmatched bidders are scaled up together until an
//! item reaches an integral price or a bidder whose MBB items are all
//! reachable starts demanding an outside item. Matched bidders finally get
//! `1/q_j` of their item. All prices and MBB tests are exact rationals.

mod graph;
mod rational;

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Allocation, Family, Instance};

pub use graph::{demand_graph_exact, max_valid_assignment, reachable_items, DemandGraph, Reach, ValidAssignment};
pub use rational::{decimal_rational, to_decimal, Price, DECIMAL_DIGITS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    /// A raised item reached an integral price; the matching is recomputed.
    Integral,
    /// `R` grew by an item with spare capacity; the matching is recomputed.
    MbbExpansionRematch,
    /// `R` grew by saturated items only; prices keep rising.
    MbbExpansionContinue,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Integral => "integral",
            EventKind::MbbExpansionRematch => "mbb-expansion-rematch",
            EventKind::MbbExpansionContinue => "mbb-expansion-continue",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub kind: EventKind,
    /// Multiplier applied to every item of `affected`.
    pub r: Price,
    pub affected: Vec<usize>,
    /// Items that joined `R`; empty for integral events.
    pub added: Vec<usize>,
    /// Prices after the raise.
    pub prices: Vec<Price>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EventCounts {
    pub integral: usize,
    pub rematch: usize,
    #[serde(rename = "continue")]
    pub continued: usize,
}

impl EventCounts {
    pub fn of(events: &[Event]) -> Self {
        let mut c = EventCounts::default();
        for e in events {
            match e.kind {
                EventKind::Integral => c.integral += 1,
                EventKind::MbbExpansionRematch => c.rematch += 1,
                EventKind::MbbExpansionContinue => c.continued += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdmOutcome {
    pub prices: Vec<Price>,
    /// Item index of each bidder.
    pub assignment: Vec<usize>,
    /// Exact share `1/q_j` each bidder receives of its item.
    pub shares: Vec<Price>,
    pub allocation: Allocation,
    pub values: Vec<f64>,
    pub event_counts: EventCounts,
    pub events: Vec<Event>,
}

/// Valuations as exact decimal rationals; rejects anything but unit-weight,
/// degree-one linear bidders.
pub fn exact_values(inst: &Instance) -> Result<Vec<Vec<BigRational>>> {
    inst.ensure_valid()?;
    inst.agents
        .iter()
        .map(|a| {
            if a.valuation.family() != Family::Linear || a.degree != 1.0 {
                return Err(Error::Unsupported(format!(
                    "SDM needs linear valuations; agent `{}` is {}",
                    a.id,
                    a.valuation.family()
                )));
            }
            if a.weight != 1.0 {
                return Err(Error::Unsupported(format!(
                    "SDM needs unit weights; agent `{}` has weight {}",
                    a.id, a.weight
                )));
            }
            a.valuation
                .params()
                .iter()
                .map(|&v| {
                    decimal_rational(v).ok_or_else(|| Error::invalid(format!("agents.{}", a.id), "non-finite value"))
                })
                .collect()
        })
        .collect()
}

pub fn demand_graph(inst: &Instance, prices: &[Price]) -> Result<DemandGraph> {
    Ok(demand_graph_exact(&exact_values(inst)?, prices))
}

pub fn capacities(prices: &[Price]) -> Vec<usize> {
    prices.iter().map(Price::capacity).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NextKind {
    /// Lowest-index item of `R` that becomes integral.
    Integral(usize),
    Expansion,
}

/// Smallest multiplier `r > 1` for the prices of `R` at which an item of `R`
/// turns integral or a bidder of `d(R)` gains an MBB item outside `R`.
/// Integral events win ties.
pub fn next_event(
    values: &[Vec<BigRational>],
    prices: &[Price],
    graph: &DemandGraph,
    reach: &Reach,
) -> Result<(BigRational, NextKind)> {
    let mut best: Option<(BigRational, usize)> = None;
    for j in reach.item_list() {
        let r = prices[j].next_integer() / &prices[j].0;
        if best.as_ref().map_or(true, |(b, _)| r < *b) {
            best = Some((r, j));
        }
    }
    let (r_int, item) = best.ok_or_else(|| Error::Invariant("price raise with empty reachable set".into()))?;
    Ok(match expansion_multiplier(values, prices, graph, reach) {
        Some(r) if r < r_int => (r, NextKind::Expansion),
        _ => (r_int, NextKind::Integral(item)),
    })
}

/// `min (v_ij*/p_j*) (p_k/v_ik)` over `i` in `d(R)`, `j*` an MBB item of `i`
/// and `k` outside `R` with `v_ik > 0`.
pub fn expansion_multiplier(
    values: &[Vec<BigRational>],
    prices: &[Price],
    graph: &DemandGraph,
    reach: &Reach,
) -> Option<BigRational> {
    let mut best: Option<BigRational> = None;
    for &i in &reach.bidders {
        let j = graph.edges[i][0];
        let bang = &values[i][j] / &prices[j].0;
        for k in (0..graph.m).filter(|&k| !reach.items[k] && !values[i][k].is_zero()) {
            let r = &bang * &prices[k].0 / &values[i][k];
            if best.as_ref().map_or(true, |b| r < *b) {
                best = Some(r);
            }
        }
    }
    best
}

/// `x_ij = 1/q_j` for the assigned item; fails if an item holds more than
/// `floor(q_j)` bidders.
pub fn final_allocation(assignment: &[usize], prices: &[Price]) -> Result<(Allocation, Vec<Price>)> {
    let m = prices.len();
    let mut load = vec![0usize; m];
    for &j in assignment {
        load[j] += 1;
    }
    for j in 0..m {
        if load[j] > prices[j].capacity() {
            return Err(Error::Invariant(format!(
                "item {j} holds {} bidders at price {}",
                load[j], prices[j]
            )));
        }
    }
    let mut alloc = Allocation::zeros(assignment.len(), m);
    let shares: Vec<Price> = assignment
        .iter()
        .map(|&j| Price(BigRational::one() / &prices[j].0))
        .collect();
    for (i, (&j, s)) in assignment.iter().zip(&shares).enumerate() {
        alloc.set(i, j, s.to_f64());
    }
    Ok((alloc, shares))
}

pub fn run_sdm(inst: &Instance) -> Result<SdmOutcome> {
    let values = exact_values(inst)?;
    let (n, m) = (inst.n(), inst.m());
    let mut prices = vec![Price::one(); m];
    let mut events = Vec::new();
    // Each round adds a matched bidder; a round holds at most min(n, m)
    // continue events.
    let limit = (n + 1) * (n.min(m) + 2);

    let assignment = 'rematch: loop {
        let graph = demand_graph_exact(&values, &prices);
        let caps = capacities(&prices);
        let assign = max_valid_assignment(&graph, &caps);
        if assign.is_total() {
            break assign;
        }
        let unmatched = assign.unmatched();
        let loads = assign.loads(m);
        let mut graph = graph;
        let mut reach = reachable_items(&graph, &assign, &unmatched);
        loop {
            if events.len() >= limit {
                return Err(Error::Invariant(format!("SDM exceeded {limit} events")));
            }
            let (r, kind) = next_event(&values, &prices, &graph, &reach)?;
            let affected = reach.item_list();
            for &j in &affected {
                prices[j] = Price(&prices[j].0 * &r);
            }
            let mut event = Event {
                kind: EventKind::Integral,
                r: Price(r),
                affected,
                added: Vec::new(),
                prices: prices.clone(),
            };
            if let NextKind::Integral(_) = kind {
                events.push(event);
                continue 'rematch;
            }
            graph = demand_graph_exact(&values, &prices);
            let grown = reachable_items(&graph, &assign, &unmatched);
            event.added = (0..m).filter(|&j| grown.items[j] && !reach.items[j]).collect();
            let spare = event.added.iter().any(|&j| loads[j] < prices[j].capacity());
            if spare {
                event.kind = EventKind::MbbExpansionRematch;
                events.push(event);
                continue 'rematch;
            }
            event.kind = EventKind::MbbExpansionContinue;
            events.push(event);
            reach = grown;
        }
    };

    let assignment: Vec<usize> = assignment.matched.into_iter().flatten().collect();
    let (allocation, shares) = final_allocation(&assignment, &prices)?;
    let values = allocation.values(inst)?;
    Ok(SdmOutcome {
        prices,
        assignment,
        shares,
        allocation,
        values,
        event_counts: EventCounts::of(&events),
        events,
    })
}

/// `min_j p*_j / ceil(p*_j)` over items with a positive PF price.
pub fn price_ratio_bound(pf_prices: &[f64]) -> f64 {
    pf_prices
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p / p.ceil())
        .fold(1.0, f64::min)
}

/// `max_j ceil(p*_j) / p*_j` over items with a positive PF price.
pub fn price_scale_factor(pf_prices: &[f64]) -> f64 {
    pf_prices
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p.ceil() / p)
        .fold(1.0, f64::max)
}
