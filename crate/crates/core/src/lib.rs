//! Truthful division of divisible items without money.
//!
//! * [`model`]: instances, valuation families, allocations.
//! * [`pf`]: proportionally fair (Eisenberg-Gale) solvers and certificates.
//! * [`pa`]: the Partial Allocation mechanism.
//! * [`sdm`]: the Strong Demand Matching mechanism with exact rational prices.
//! * [`audit`]: property checks, truthfulness probes and instance generators.
//! * [`cli`]: the `fairdiv` command-line front end.

pub mod audit;
pub mod cli;
pub mod error;
pub mod model;
pub mod pa;
pub mod par;
pub mod pf;
pub mod sdm;

pub use error::{Error, Result};
pub use model::{evaluate, validate_instance, Agent, Allocation, Family, Instance, SolverConfig, ValuationSpec};
pub use pf::{solve, solve_excluding, verify_pf_certificate, PfSolution};
