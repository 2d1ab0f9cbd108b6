//! Batch front end: parse a problem config, run one subcommand, write
//! CSV/Matrix Market reports.
//!
//! Exit status: 0 on success, 1 on validation failure (bad config, bad
//! geometry, failed hypothesis checks), 2 on numerical failure (solver
//! non-convergence, degenerate null space). Identical config and seed
//! produce bitwise-identical output files regardless of thread count.

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use janus::assembly::energy;
use janus::config::parse_config;
use janus::error::Error;
use janus::io::{
    write_cells_csv, write_domain_csv, write_energy_csv, write_occupancy_csv, write_poincare_csv,
    write_residual_csv, write_solution_csv,
};
use janus::particle::{build_chain, simulate_stationary, source_balance_check};
use janus::problem::{build_problem, check_domain, poincare_report, ProblemInstance};
use janus::solver::{check_compatibility, residual_euler_lagrange, solve_cg, ResidualRegions};
use janus::sparse::write_matrix_market;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "janus",
    version,
    about = "Coupled local/nonlocal Neumann diffusion: solve, track constants, validate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Problem description file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Directory receiving the report files.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,

    /// Override the simulation seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (fallback: JANUS_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Also write the assembled operator in Matrix Market form.
    #[arg(long, global = true)]
    dump_matrix: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble the model and solve the Euler-Lagrange system.
    Solve,
    /// Compute the spectral Poincare constant and its tracked lower bound.
    Poincare,
    /// Check the standing hypotheses (P1), (P2), (J1), (G1) on the geometry.
    CheckDomain,
    /// Run the jump-process validator against the stationary law.
    Simulate,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                0
            } else {
                1
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    ExitCode::from(run(cli))
}

/// Validation failures exit 1; numerical failures exit 2.
fn classify(e: &Error) -> u8 {
    match e {
        Error::NoConvergence { .. } | Error::DegenerateNullSpace(_) => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> u8 {
    if let Some(threads) = cli.threads.or_else(threads_from_env) {
        if threads == 0 {
            eprintln!("janus: --threads must be at least 1");
            return 1;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("janus: thread pool: {e}");
            return 1;
        }
    }

    let Some(config_path) = cli.config else {
        eprintln!("janus: --config <PATH> is required");
        return 1;
    };
    let text = match std::fs::read_to_string(&config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("janus: cannot read {}: {e}", config_path.display());
            return 1;
        }
    };
    let cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(issues) => {
            for issue in &issues {
                eprintln!("janus: {}: {issue}", config_path.display());
            }
            return 1;
        }
    };
    let inst = match build_problem(&cfg) {
        Ok(i) => i,
        Err(e) => {
            eprintln!("janus: {e}");
            return classify(&e);
        }
    };

    if let Err(e) = std::fs::create_dir_all(&cli.out) {
        eprintln!("janus: cannot create {}: {e}", cli.out.display());
        return 1;
    }
    if cli.dump_matrix {
        let dumped = write_file(
            &cli.out,
            "operator.mtx",
            &write_matrix_market(&inst.operators.total.matrix),
        )
        .and_then(|()| write_file(&cli.out, "cells.csv", &write_cells_csv(&inst.numbering)));
        if dumped.is_err() {
            return 1;
        }
    }

    let result = match cli.command {
        Command::Solve => cmd_solve(&inst, &cli.out),
        Command::Poincare => cmd_poincare(&inst, &cli.out),
        Command::CheckDomain => cmd_check_domain(&inst, &cli.out),
        Command::Simulate => cmd_simulate(&inst, &cli.out, cli.seed),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("janus: {e}");
            classify(&e)
        }
    }
}

fn threads_from_env() -> Option<usize> {
    std::env::var("JANUS_THREADS").ok()?.parse().ok()
}

fn write_file(out: &Path, name: &str, content: &str) -> Result<(), ()> {
    let path = out.join(name);
    std::fs::write(&path, content).map_err(|e| {
        eprintln!("janus: cannot write {}: {e}", path.display());
    })
}

fn cmd_solve(inst: &ProblemInstance, out: &Path) -> Result<u8, Error> {
    check_compatibility(&inst.load, inst.solver.tol)?;
    let sol = solve_cg(&inst.operators.total, &inst.load, &inst.solve_options())?;
    let regions = match &inst.interface {
        Some(gamma) => ResidualRegions::Mixed {
            numbering: &inst.numbering,
            gamma,
        },
        None => ResidualRegions::Volumetric,
    };
    let residuals = residual_euler_lagrange(&inst.operators.total, &inst.load, &sol.u, regions)?;
    let breakdown = energy(&inst.operators, &inst.load, &sol.u)?;

    let wrote = write_file(
        out,
        "solution.csv",
        &write_solution_csv(&inst.numbering, &sol.u),
    )
    .and_then(|()| write_file(out, "energy.csv", &write_energy_csv(&breakdown)))
    .and_then(|()| write_file(out, "residuals.csv", &write_residual_csv(&residuals)));
    if wrote.is_err() {
        return Ok(1);
    }

    println!(
        "solved {} cells in {} iterations, residual {:.3e} (rhs {:.3e})",
        inst.numbering.n(),
        sol.iterations,
        sol.residual_norm,
        sol.rhs_norm
    );
    println!(
        "energy: local {:.6e}, nonlocal {:.6e}, coupling {:.6e}, source {:.6e}, total {:.6e}",
        breakdown.local_term,
        breakdown.nonlocal_term,
        breakdown.coupling_term,
        breakdown.source_term,
        breakdown.total
    );
    for region in &residuals.regions {
        println!(
            "residual[{}] = {:.3e} over {} rows",
            region.name, region.norm, region.rows
        );
    }
    Ok(0)
}

fn cmd_poincare(inst: &ProblemInstance, out: &Path) -> Result<u8, Error> {
    let (report, setup) = poincare_report(inst)?;
    if write_file(out, "poincare.csv", &write_poincare_csv(&report)).is_err() {
        return Ok(1);
    }
    match report.computed {
        Some(c) => println!(
            "computed constant {:.6e}, tracked lower bound {:.6e} (ratio {:.3})",
            c,
            report.tracked,
            c / report.tracked
        ),
        None => println!(
            "degenerate null space; tracked bound {:.6e}",
            report.tracked
        ),
    }
    println!(
        "components: sigma {:.6e}, coupling {:.6e}, tree constant {:.6e} (m_J {:.3e}, m_G {:.3e})",
        report.components.sigma,
        report.components.coupling,
        report.components.tree,
        report.components.m_j,
        report.components.m_g
    );
    println!(
        "tree: {} parts, degree {}, coupling sets |A| = {}, |B| = {} cells",
        setup.tree.parts.len(),
        report.tree_degree,
        setup
            .a_faces
            .as_ref()
            .map(|g| g.faces.len())
            .unwrap_or(setup.a_cells.len()),
        setup.coupling_b.len()
    );
    Ok(0)
}

fn cmd_check_domain(inst: &ProblemInstance, out: &Path) -> Result<u8, Error> {
    let chk = check_domain(inst);
    if write_file(out, "domain.csv", &write_domain_csv(&chk)).is_err() {
        return Ok(1);
    }
    println!(
        "(P1) delta-connectivity: {} ({} component(s) at delta = {})",
        pass(chk.connected),
        chk.components,
        chk.delta
    );
    println!("(P2) proximity: {}", pass(chk.proximate));
    println!(
        "(J1) jump-kernel visibility: {} (m_J = {:.6e})",
        pass(chk.m_j > 0.0),
        chk.m_j
    );
    println!(
        "(G1) coupling-kernel visibility: {} (m_G = {:.6e})",
        pass(chk.m_g > 0.0),
        chk.m_g
    );
    if let Some((parts, degree, max_len)) = chk.tree_shape {
        println!("delta-tree: {parts} parts, degree {degree}, longest branch {max_len}");
    }
    if chk.all_pass() {
        Ok(0)
    } else {
        if !chk.connected {
            eprintln!(
                "janus: connectivity hypothesis (P1) fails: the nonlocal region splits into {} parts at distance >= delta = {}",
                chk.components, chk.delta
            );
        }
        if !chk.proximate {
            eprintln!("janus: proximity hypothesis (P2) fails: the coupled sets are farther than delta apart");
        }
        if chk.m_j <= 0.0 {
            eprintln!("janus: visibility hypothesis (J1) fails: the jump kernel vanishes inside the 2*delta ball");
        }
        if chk.m_g <= 0.0 {
            eprintln!("janus: visibility hypothesis (G1) fails: the coupling kernel vanishes inside the 2*delta ball");
        }
        Ok(1)
    }
}

fn cmd_simulate(inst: &ProblemInstance, out: &Path, seed_flag: Option<u64>) -> Result<u8, Error> {
    let seed = seed_flag.unwrap_or(inst.simulate.seed);
    let chain = build_chain(&inst.operators.total)?;

    check_compatibility(&inst.load, inst.solver.tol)?;
    let sol = solve_cg(&inst.operators.total, &inst.load, &inst.solve_options())?;
    let discrepancy = source_balance_check(&chain, &inst.load, &sol.u)?;

    let rep = simulate_stationary(&chain, inst.simulate.particles, inst.simulate.horizon, seed);
    if write_file(out, "occupancy.csv", &write_occupancy_csv(&rep)).is_err() {
        return Ok(1);
    }

    println!(
        "simulated {} particles to horizon {} (seed {seed})",
        rep.particles, rep.horizon
    );
    println!(
        "TV distance to the stationary law: {:.6e} over {} cells",
        rep.tv_distance,
        rep.occupancy.len()
    );
    println!(
        "source balance discrepancy: {:.6e} (solver tol {:.1e})",
        discrepancy, inst.solver.tol
    );
    Ok(0)
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}
