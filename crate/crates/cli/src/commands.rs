//! Argument parsing and the subcommands of `rdo`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rdo_core::config::default_r_max;
use rdo_core::hierarchy::{exit_code, solve_bounds, BoundsOptions, BoundsReport, UpperPolicy};
use rdo_core::outer::{check_bounded, check_origin_interior, convergence_bound, convergence_bound_fixed_rho, fixed_point_reached};
use rdo_core::switched::{jsr_lower_bound, jsr_upper_bound, path_complete_feasible};
use rdo_core::{numlin, Backend, Config, LedgerStatus, RdoInstance};

use crate::error::{CliError, CliResult};
use crate::hard::{gen_hard_instance, parse_edge};
use crate::instance_file::InstanceFile;
use crate::plot::plot_data;
use crate::report::{bound_table, point, Rows};

pub const SOLVER_ENV: &str = "RDO_SOLVER";

#[derive(Debug, Parser)]
#[command(name = "rdo", version, about = "Bounds for linear programs whose solutions must stay feasible under linear dynamics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Stop once upper - lower <= TOL; also the JSR bisection tolerance.
    #[arg(long, global = true, default_value_t = 1e-4)]
    pub tol: f64,
    /// Highest level of the hierarchies (default 64, or 12 for switched dynamics).
    #[arg(long, global = true)]
    pub r_max: Option<usize>,
    /// Path-complete level for switched dynamics.
    #[arg(long, global = true)]
    pub l: Option<usize>,
    /// Conic solver backend; the RDO_SOLVER environment variable takes precedence.
    #[arg(long, global = true, default_value = "clarabel")]
    pub solver: String,
    /// Write the main output to this file instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate an instance and report its basic properties.
    Check { file: PathBuf },
    /// Lower bounds from the outer hierarchy.
    Lower { file: PathBuf },
    /// Lower and upper bounds; fails if upper bounds are unavailable.
    Upper { file: PathBuf },
    /// Lower bounds plus upper bounds when available.
    Solve { file: PathBuf },
    /// Step bound after which the outer hierarchy is exact.
    Bound {
        file: PathBuf,
        /// Known bound on the spectral radius (overrides the file's rho_star).
        #[arg(long)]
        rho_star: Option<f64>,
        /// Also run the fixed-point test at the bound.
        #[arg(long)]
        verify: bool,
    },
    /// Joint spectral radius bounds and path-complete feasibility.
    Jsr {
        file: PathBuf,
        /// Longest product used for the lower bound.
        #[arg(long, default_value_t = 4)]
        k_max: usize,
    },
    /// Plot data for a 2-D instance at level R.
    Plot {
        file: PathBuf,
        #[arg(long, default_value_t = 0)]
        r: usize,
    },
    /// Instance whose membership question encodes walks in a digraph.
    GenHard {
        #[arg(long)]
        nodes: usize,
        /// Comma-separated 1-based edges, e.g. 1-2,2-1.
        #[arg(long, value_delimiter = ',', value_parser = parse_edge)]
        edges: Vec<(usize, usize)>,
        /// Simulation horizon for the query point.
        #[arg(long, default_value_t = 50)]
        k: usize,
    },
}

impl Cli {
    pub fn config(&self) -> CliResult<Config> {
        let name = std::env::var(SOLVER_ENV).ok().filter(|s| !s.trim().is_empty()).unwrap_or_else(|| self.solver.clone());
        let backend: Backend = name.parse()?;
        Ok(Config { backend, ..Config::default() })
    }

    fn options(&self, inst: &RdoInstance, upper: UpperPolicy) -> BoundsOptions {
        BoundsOptions { r_max: self.r_max.unwrap_or_else(|| default_r_max(inst.s())), l: self.l, tol: self.tol, upper }
    }
}

fn load(path: &Path) -> CliResult<(InstanceFile, RdoInstance)> {
    let file = InstanceFile::read(path)?;
    let inst = file.instance()?;
    Ok((file, inst))
}

fn title(file: &InstanceFile, path: &Path, inst: &RdoInstance) -> String {
    let name = file.name.clone().unwrap_or_else(|| path.display().to_string());
    format!("instance: {name} (n = {}, m = {}, s = {})", inst.n(), inst.polytope.rows(), inst.s())
}

/// Runs one subcommand, writing its report to `out` (or to `--out`).
/// Returns the process exit status.
pub fn run(cli: &Cli, out: &mut dyn Write) -> CliResult<i32> {
    let cfg = cli.config()?;
    let mut buf: Vec<u8> = Vec::new();
    let code = dispatch(cli, &cfg, &mut buf)?;
    match &cli.out {
        Some(path) => std::fs::write(path, &buf).map_err(|source| CliError::Io { path: path.display().to_string(), source })?,
        None => out.write_all(&buf).map_err(|source| CliError::Io { path: "<stdout>".into(), source })?,
    }
    Ok(code)
}

fn dispatch(cli: &Cli, cfg: &Config, out: &mut Vec<u8>) -> CliResult<i32> {
    match &cli.command {
        Command::Check { file } => cmd_check(file, cfg, out),
        Command::Lower { file } => cmd_bounds(cli, file, UpperPolicy::Skip, cfg, out),
        Command::Upper { file } => cmd_bounds(cli, file, UpperPolicy::Require, cfg, out),
        Command::Solve { file } => cmd_bounds(cli, file, UpperPolicy::IfAvailable, cfg, out),
        Command::Bound { file, rho_star, verify } => cmd_bound(file, *rho_star, *verify, cfg, out),
        Command::Jsr { file, k_max } => cmd_jsr(cli, file, *k_max, cfg, out),
        Command::Plot { file, r } => {
            let (_, inst) = load(file)?;
            out.extend_from_slice(plot_data(&inst, *r, cli.l, cfg)?.emit().as_bytes());
            Ok(0)
        }
        Command::GenHard { nodes, edges, k } => {
            let hard = gen_hard_instance(*nodes, edges)?;
            out.extend_from_slice(hard.file().emit().as_bytes());
            let verdict = hard.membership(*k, cfg)?;
            let zs: Vec<String> = hard.z.iter().map(|v| v.to_string()).collect();
            eprintln!("query z = [{}]: {verdict}", zs.join(", "));
            Ok(0)
        }
    }
}

fn cmd_check(path: &Path, cfg: &Config, out: &mut Vec<u8>) -> CliResult<i32> {
    let (file, inst) = load(path)?;
    let yes_no = |b: bool| if b { "yes" } else { "no" };
    writeln!(out, "{}", title(&file, path, &inst)).ok();
    writeln!(out, "origin interior: {}", yes_no(check_origin_interior(&inst.polytope))).ok();
    match check_bounded(&inst.polytope, cfg) {
        Ok(b) => writeln!(out, "bounded: {}", yes_no(b)).ok(),
        Err(e) => writeln!(out, "bounded: {e}").ok(),
    };
    if inst.dynamics.is_single() {
        let rho = numlin::spectral_radius(&inst.dynamics.matrices()[0])?;
        writeln!(out, "spectral radius: {rho:.10} ({})", if rho < 1.0 { "stable" } else { "not stable" }).ok();
    } else {
        let lower = jsr_lower_bound(&inst.dynamics, 2, cfg)?;
        writeln!(out, "joint spectral radius >= {lower:.10} (products up to length 2)").ok();
    }
    if let Some(r) = file.rho_star {
        writeln!(out, "rho_star: {r}").ok();
    }
    Ok(0)
}

fn certificates(report: &BoundsReport, inst: &RdoInstance, out: &mut Vec<u8>) -> CliResult<()> {
    if let Some(note) = &report.upper_note {
        writeln!(out, "upper bounds unavailable: {note}").ok();
    }
    if !report.feasibility.is_empty() {
        let items: Vec<String> =
            report.feasibility.iter().map(|(l, ok)| format!("l={l} {}", if *ok { "feasible" } else { "infeasible" })).collect();
        writeln!(out, "path-complete: {}", items.join(", ")).ok();
    }
    if let Some(l) = report.l_used {
        writeln!(out, "inner sets: multi-ellipsoids at path-complete level l = {l}").ok();
    } else if report.upper_note.is_none() && inst.dynamics.is_single() && report.ledger.rows.iter().any(|r| r.upper.is_some()) {
        let rho = numlin::spectral_radius(&inst.dynamics.matrices()[0])?;
        writeln!(out, "inner sets: invariant ellipsoids, spectral radius {rho:.10}").ok();
    }
    Ok(())
}

fn cmd_bounds(cli: &Cli, path: &Path, upper: UpperPolicy, cfg: &Config, out: &mut Vec<u8>) -> CliResult<i32> {
    let (file, inst) = load(path)?;
    let report = solve_bounds(&inst, &cli.options(&inst, upper), cfg)?;
    let ledger = &report.ledger;
    let rows = if upper == UpperPolicy::Skip { Rows::Lower } else { Rows::Both };
    writeln!(out, "{}", title(&file, path, &inst)).ok();
    write!(out, "{}", bound_table(ledger, rows)).ok();
    let last = ledger.last().expect("at least one level");
    writeln!(out, "status: {} at r = {}", ledger.status(), last.r).ok();
    if let Some(lo) = ledger.best_lower() {
        writeln!(out, "best lower bound: {lo:.10}").ok();
    }
    if let Some(up) = ledger.best_upper() {
        writeln!(out, "best upper bound: {up:.10}").ok();
    }
    if ledger.status() == LedgerStatus::FixedPoint {
        let v = last.lower.expect("fixed point has a value");
        writeln!(out, "optimal value: {v:.10} (|value| = {:.10}; reported as min c^T x, negate for the max -c^T x convention)", v.abs()).ok();
    }
    if let Some(w) = &last.witness {
        writeln!(out, "witness: {}", point(w)).ok();
    }
    certificates(&report, &inst, out)?;
    Ok(exit_code(ledger.status()))
}

fn cmd_bound(path: &Path, rho_star: Option<f64>, verify: bool, cfg: &Config, out: &mut Vec<u8>) -> CliResult<i32> {
    let (file, inst) = load(path)?;
    let rho_star = rho_star.or(file.rho_star);
    let sb = match rho_star {
        Some(rs) => convergence_bound_fixed_rho(&inst, rs, cfg)?,
        None => convergence_bound(&inst, cfg)?,
    };
    writeln!(out, "{}", title(&file, path, &inst)).ok();
    if let Some(rs) = rho_star {
        writeln!(out, "using rho_star = {rs}").ok();
    }
    writeln!(out, "M =").ok();
    for i in 0..sb.m.nrows() {
        let row: Vec<String> = sb.m.row(i).iter().map(|v| format!("{v:>16.10}")).collect();
        writeln!(out, "  {}", row.join("")).ok();
    }
    writeln!(out, "alpha1 = {:.10}", sb.alpha1).ok();
    writeln!(out, "alpha2 = {:.10}", sb.alpha2).ok();
    writeln!(out, "gamma = {:.10}", sb.gamma).ok();
    writeln!(out, "r_bar = {}", sb.r_bar).ok();
    if verify {
        let ok = fixed_point_reached(&inst, sb.r_bar, cfg)?;
        writeln!(out, "fixed point at r_bar: {}", if ok { "yes" } else { "no" }).ok();
        if !ok {
            return Ok(1);
        }
    }
    Ok(0)
}

fn cmd_jsr(cli: &Cli, path: &Path, k_max: usize, cfg: &Config, out: &mut Vec<u8>) -> CliResult<i32> {
    let (file, inst) = load(path)?;
    let l = cli.l.unwrap_or(2).max(1);
    let dyn_ = &inst.dynamics;
    let lower = jsr_lower_bound(dyn_, k_max, cfg)?;
    let bounds = jsr_upper_bound(dyn_, l, cli.tol, cfg)?;
    let mut items = Vec::new();
    for level in 1..=l {
        let ok = path_complete_feasible(dyn_, level, cfg)?.is_feasible();
        items.push(format!("l={level} {}", if ok { "feasible" } else { "infeasible" }));
    }
    writeln!(out, "{}", title(&file, path, &inst)).ok();
    writeln!(out, "lower = {lower:.10} (products up to length {k_max})").ok();
    writeln!(out, "upper = {:.10} (path-complete, l = {})", bounds.upper, bounds.l_used).ok();
    writeln!(out, "{}", items.join(", ")).ok();
    Ok(0)
}
