//! The `fairdiv` command line.
//!
//! Exit codes: 0 success, 1 mechanism or solver failure (including a failed
//! audit), 2 input error. Results go to `--output` or standard output,
//! diagnostics to standard error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use crate::audit::{self, AuditConfig, AuditReport, Mechanism};
use crate::error::Error;
use crate::model::{parse_instance, render_instance, Family, Instance, SolverConfig};
use crate::pa::{run_pa, PaOutcome};
use crate::pf::{self, PfSolution};
use crate::par;
use crate::sdm::{price_ratio_bound, run_sdm, SdmOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "FAIRDIV_THREADS";

#[derive(Debug, Parser)]
#[command(name = "fairdiv", version, about = "Truthful division of divisible items without money")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Proportionally fair allocation.
    Solve(RunArgs),
    /// Partial Allocation mechanism.
    Pa(RunArgs),
    /// Strong Demand Matching mechanism.
    Sdm {
        #[command(flatten)]
        run: RunArgs,
        /// Include the full price-raise event log.
        #[arg(long)]
        log_events: bool,
    },
    /// Check a mechanism's guarantees on one instance.
    Audit {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "pa")]
        mechanism: MechanismArg,
        #[arg(long, default_value_t = 100)]
        probes: usize,
    },
    /// Generate instances.
    #[command(subcommand)]
    Gen(GenCommand),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Instance JSON; standard input when absent or `-`.
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Defaults to `json` when writing a file and `table` on standard output.
    #[arg(long)]
    pub format: Option<Format>,
}

#[derive(Debug, Subcommand)]
pub enum GenCommand {
    /// Adversarial family with n bidders and (k+1)n items.
    LowerBound {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        /// One-based instance index in [1, n+1].
        #[arg(long)]
        index: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// One item valued 1 by every agent.
    SingleItem {
        #[arg(long)]
        n: usize,
        /// Comma-separated weights; all 1 when absent.
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Random instance of one valuation family.
    Random {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value = "linear")]
        family: FamilyArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Weights uniform on [1, max-weight].
        #[arg(long, default_value_t = 1.0)]
        max_weight: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MechanismArg {
    Pa,
    Sdm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Linear,
    Leontief,
    CobbDouglas,
    Ces,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Family {
        match f {
            FamilyArg::Linear => Family::Linear,
            FamilyArg::Leontief => Family::Leontief,
            FamilyArg::CobbDouglas => Family::CobbDouglas,
            FamilyArg::Ces => Family::Ces,
        }
    }
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let mut root = &e;
        while let Error::SubSolve { source, .. } = root {
            root = source;
        }
        let code = match root {
            Error::InvalidInstance(_) | Error::Unsupported(_) => EXIT_INPUT,
            _ => EXIT_FAILURE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Entry point for the binary.
pub fn main() -> i32 {
    main_with_args(std::env::args_os())
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {}", e.message);
        return e.code;
    }
    match run(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn configure_threads() -> CliResult<()> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::input(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
            par::configure_threads(n);
            Ok(())
        }
        Err(_) => Ok(()),
    }
}

pub fn run(command: &Command) -> CliResult<()> {
    match command {
        Command::Solve(args) => {
            let inst = read_instance(args)?;
            let sol = pf::solve(&inst, &solver_config(args)?)?;
            emit(args, &sol, || solve_table(&inst, &sol))
        }
        Command::Pa(args) => {
            let inst = read_instance(args)?;
            let out = run_pa(&inst, &solver_config(args)?)?;
            emit(args, &out, || pa_table(&inst, &out))
        }
        Command::Sdm { run, log_events } => {
            let inst = read_instance(run)?;
            let out = run_sdm(&inst)?;
            let pf = pf::solve(&inst, &solver_config(run)?)?;
            let report = SdmReport::new(&inst, &out, &pf)?;
            let mut value = serde_json::to_value(&report).expect("SDM report serializes");
            if !log_events {
                if let Value::Object(map) = &mut value {
                    map.remove("events");
                }
            }
            emit(run, &value, || sdm_table(&inst, &report, *log_events))
        }
        Command::Audit { run, mechanism, probes } => {
            let inst = read_instance(run)?;
            let cfg = AuditConfig {
                probes: *probes,
                seed: run.seed.unwrap_or(0),
                solver: solver_config(run)?,
                ..AuditConfig::default()
            };
            let mechanism = match mechanism {
                MechanismArg::Pa => Mechanism::Pa,
                MechanismArg::Sdm => Mechanism::Sdm,
            };
            let report = audit::run_audit(&inst, mechanism, &cfg)?;
            emit(run, &report, || audit_table(&inst, &report))?;
            if report.pass() {
                Ok(())
            } else {
                let failed: Vec<&str> = report
                    .checks
                    .iter()
                    .filter(|c| !c.pass)
                    .map(|c| c.name.as_str())
                    .collect();
                Err(CliError {
                    code: EXIT_FAILURE,
                    message: format!("audit failed: {}", failed.join(", ")),
                })
            }
        }
        Command::Gen(cmd) => {
            let (inst, output) = generate(cmd)?;
            write_output(output.as_ref(), &(render_instance(&inst) + "\n"))
        }
    }
}

fn generate(cmd: &GenCommand) -> CliResult<(Instance, Option<PathBuf>)> {
    Ok(match cmd {
        GenCommand::LowerBound { n, k, index, output } => {
            (audit::gen_lower_bound_instance(*n, *k, *index)?, output.clone())
        }
        GenCommand::SingleItem { n, weights, output } => {
            let w = weights.clone().unwrap_or_else(|| vec![1.0; *n]);
            if w.len() != *n {
                return Err(CliError::input(format!("--weights has {} entries, --n is {n}", w.len())));
            }
            (audit::gen_single_item(&w)?, output.clone())
        }
        GenCommand::Random {
            n,
            m,
            family,
            seed,
            max_weight,
            output,
        } => (
            audit::gen_random_weighted(*n, *m, (*family).into(), *seed, *max_weight)?,
            output.clone(),
        ),
    })
}

fn solver_config(args: &RunArgs) -> CliResult<SolverConfig> {
    let cfg = SolverConfig {
        seed: args.seed,
        ..SolverConfig::with_tolerance(args.tol)
    };
    cfg.validate().map_err(|e| CliError::input(e.to_string()))?;
    Ok(cfg)
}

fn read_instance(args: &RunArgs) -> CliResult<Instance> {
    let bytes = match args.input.as_ref().filter(|p| p.as_os_str() != "-") {
        Some(path) => std::fs::read(path)
            .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?,
        None => {
            let mut buf = Vec::new();
            std::io::stdin()
                .read_to_end(&mut buf)
                .map_err(|e| CliError::input(format!("cannot read standard input: {e}")))?;
            buf
        }
    };
    parse_instance(&bytes).map_err(|e| match e {
        Error::InvalidInstance(v) => CliError::input(
            v.iter()
                .map(|v| format!("invalid instance: {v}"))
                .collect::<Vec<_>>()
                .join("\n"),
        ),
        other => other.into(),
    })
}

fn write_output(path: Option<&PathBuf>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::input(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::input(format!("cannot write standard output: {e}")))
        }
    }
}

fn emit<T: Serialize>(args: &RunArgs, value: &T, table: impl FnOnce() -> Table) -> CliResult<()> {
    let format = args.format.unwrap_or(if args.output.is_some() { Format::Json } else { Format::Table });
    let text = match format {
        Format::Json => serde_json::to_string_pretty(value).expect("report serializes") + "\n",
        Format::Csv => table().to_csv(),
        Format::Table => table().to_text(),
    };
    write_output(args.output.as_ref(), &text)
}

/// SDM outcome plus its comparison with the PF solution.
#[derive(Debug, Serialize)]
pub struct SdmReport<'a> {
    #[serde(flatten)]
    pub outcome: &'a SdmOutcome,
    pub pf_utilities: Vec<f64>,
    pub pf_prices: Vec<f64>,
    pub rho: f64,
    /// `min_j p*_j / ceil(p*_j)` over priced items.
    pub price_bound: f64,
}

impl<'a> SdmReport<'a> {
    pub fn new(inst: &Instance, outcome: &'a SdmOutcome, pf: &PfSolution) -> CliResult<Self> {
        let pf_prices = pf.prices.clone().unwrap_or_default();
        Ok(SdmReport {
            outcome,
            rho: audit::approx_ratio(inst, &outcome.allocation, pf)?,
            price_bound: price_ratio_bound(&pf_prices),
            pf_utilities: pf.utilities.clone(),
            pf_prices,
        })
    }
}

/// Rows plus `key = value` summary lines. CSV writes summaries as two-column
/// rows after the table.
#[derive(Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub summary: Vec<(String, String)>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let line = |cells: &[String]| cells.iter().map(|c| csv_cell(c)).collect::<Vec<_>>().join(",");
        writeln!(s, "{}", line(&self.header)).unwrap();
        for r in &self.rows {
            writeln!(s, "{}", line(r)).unwrap();
        }
        for (k, v) in &self.summary {
            writeln!(s, "{},{}", csv_cell(k), csv_cell(v)).unwrap();
        }
        s
    }

    pub fn to_text(&self) -> String {
        let cols = self.header.len();
        let mut width = vec![0; cols];
        for r in std::iter::once(&self.header).chain(&self.rows) {
            for (w, c) in width.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut s = String::new();
        for r in std::iter::once(&self.header).chain(&self.rows) {
            let cells: Vec<String> = r.iter().zip(&width).map(|(c, w)| format!("{c:>w$}")).collect();
            writeln!(s, "{}", cells.join("  ").trim_end()).unwrap();
        }
        if !self.summary.is_empty() {
            s.push('\n');
            for (k, v) in &self.summary {
                writeln!(s, "{k} = {v}").unwrap();
            }
        }
        s
    }
}

fn csv_cell(c: &str) -> String {
    if c.contains([',', '"', '\n']) {
        format!("\"{}\"", c.replace('"', "\"\""))
    } else {
        c.to_string()
    }
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

fn list(xs: impl IntoIterator<Item = String>) -> String {
    xs.into_iter().collect::<Vec<_>>().join(" ")
}

fn solve_table(inst: &Instance, sol: &PfSolution) -> Table {
    let mut header = vec!["agent".to_string()];
    header.extend(inst.items.iter().cloned());
    header.push("utility".into());
    let rows = inst
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut r = vec![a.id.clone()];
            r.extend(sol.allocation.row(i).iter().map(|&x| num(x)));
            r.push(num(sol.utilities[i]));
            r
        })
        .collect();
    let mut summary = vec![("objective".to_string(), num(sol.objective))];
    if let Some(p) = &sol.prices {
        summary.push(("prices".into(), list(p.iter().map(|&x| num(x)))));
    }
    summary.push(("residual".into(), format!("{:e}", sol.residual)));
    Table { header, rows, summary }
}

fn pa_table(inst: &Instance, out: &PaOutcome) -> Table {
    let mut header = vec!["agent".to_string()];
    header.extend(inst.items.iter().cloned());
    header.extend(["f", "pf_value", "delivered", "ratio"].map(String::from));
    let rows = inst
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut r = vec![a.id.clone()];
            r.extend(out.allocation.row(i).iter().map(|&x| num(x)));
            r.push(num(out.fractions[i]));
            r.push(num(out.base.utilities[i]));
            r.push(num(out.delivered[i]));
            r.push(num(crate::pa::delivered_ratio(out, i)));
            r
        })
        .collect();
    let summary = vec![
        ("f".to_string(), list(out.fractions.iter().map(|&f| num(f)))),
        ("rho".to_string(), num(crate::pa::min_ratio(out))),
    ];
    Table { header, rows, summary }
}

fn sdm_table(inst: &Instance, report: &SdmReport<'_>, log_events: bool) -> Table {
    let out = report.outcome;
    let header = ["agent", "item", "share", "value", "pf_value", "ratio"].map(String::from).to_vec();
    let rows = inst
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| {
            vec![
                a.id.clone(),
                inst.items[out.assignment[i]].clone(),
                out.shares[i].to_string(),
                num(out.values[i]),
                num(report.pf_utilities[i]),
                num(out.values[i] / report.pf_utilities[i]),
            ]
        })
        .collect();
    let mut summary = vec![
        ("prices".to_string(), list(out.prices.iter().map(|p| p.to_string()))),
        ("rho".to_string(), num(report.rho)),
        ("price_bound".to_string(), num(report.price_bound)),
        (
            "events".to_string(),
            format!(
                "integral {} rematch {} continue {}",
                out.event_counts.integral, out.event_counts.rematch, out.event_counts.continued
            ),
        ),
    ];
    if log_events {
        for (k, e) in out.events.iter().enumerate() {
            summary.push((
                format!("event {k}"),
                format!(
                    "{} r={} items={:?} added={:?}",
                    e.kind.as_str(),
                    e.r,
                    e.affected,
                    e.added
                ),
            ));
        }
    }
    Table { header, rows, summary }
}

fn audit_table(inst: &Instance, report: &AuditReport) -> Table {
    let header = ["check", "pass", "detail"].map(String::from).to_vec();
    let rows = report
        .checks
        .iter()
        .map(|c| vec![c.name.clone(), c.pass.to_string(), c.detail.clone()])
        .collect();
    let mut summary = vec![
        ("mechanism".to_string(), report.mechanism.as_str().to_string()),
        ("rho".to_string(), num(report.rho)),
        ("psi".to_string(), num(report.psi)),
        ("psi_bound".to_string(), num(report.psi_bound)),
    ];
    for d in &report.deviation_results {
        summary.push((
            format!("best deviation {}", inst.agents[d.agent].id),
            format!("{} gain {:.9}", d.label, d.gain),
        ));
    }
    Table { header, rows, summary }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(CliError::from(Error::invalid("x", "bad")).code, EXIT_INPUT);
        assert_eq!(CliError::from(Error::Unsupported("x".into())).code, EXIT_INPUT);
        assert_eq!(CliError::from(Error::Degenerate("x".into())).code, EXIT_FAILURE);
        assert_eq!(CliError::from(Error::Invariant("x".into())).code, EXIT_FAILURE);
        let wrapped = Error::Unsupported("x".into()).context("outer");
        assert_eq!(CliError::from(wrapped).code, EXIT_INPUT);
    }

    #[test]
    fn table_rendering() {
        let t = Table {
            header: vec!["a".into(), "bb".into()],
            rows: vec![vec!["1".into(), "x,y".into()]],
            summary: vec![("rho".into(), "0.5".into())],
        };
        assert_eq!(t.to_csv(), "a,bb\n1,\"x,y\"\nrho,0.5\n");
        assert_eq!(t.to_text(), "a   bb\n1  x,y\n\nrho = 0.5\n");
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(main_with_args(["fairdiv", "frobnicate"]), EXIT_INPUT);
        assert_eq!(main_with_args(["fairdiv", "--version"]), EXIT_OK);
    }
}
