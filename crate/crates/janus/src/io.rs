//! Report writers: CSV artifacts for every subcommand.
//!
//! Floating-point fields use 17 significant digits (`{:.16e}`), enough
//! for exact round-trips, so downstream tooling can reproduce residuals
//! bit-for-bit. Writers return the full file content as a `String`; the
//! front end decides where it lands.

use crate::analysis::PoincareReport;
use crate::assembly::{EnergyBreakdown, Numbering};
use crate::domain::Role;
use crate::particle::OccupancyReport;
use crate::problem::DomainCheck;
use crate::solver::ResidualReport;
use std::fmt::Write as _;

fn f(x: f64) -> String {
    format!("{x:.16e}")
}

/// Cell table: flat index, center coordinates, region role.
pub fn write_cells_csv(num: &Numbering) -> String {
    let dim = num.grid.dim;
    let mut out = String::from("index");
    for ax in 0..dim {
        let _ = write!(out, ",center{ax}");
    }
    out.push_str(",role\n");
    for i in 0..num.n() {
        let role = if i < num.n_local() {
            Role::Local
        } else {
            Role::Nonlocal
        };
        let _ = write!(out, "{i}");
        for ax in 0..dim {
            let _ = write!(out, ",{}", f(num.centers[i][ax]));
        }
        let _ = writeln!(
            out,
            ",{}",
            match role {
                Role::Local => "local",
                Role::Nonlocal => "nonlocal",
            }
        );
    }
    out
}

/// Solution table: flat index, center coordinates, solution value.
pub fn write_solution_csv(num: &Numbering, u: &[f64]) -> String {
    let dim = num.grid.dim;
    let mut out = String::from("index");
    for ax in 0..dim {
        let _ = write!(out, ",center{ax}");
    }
    out.push_str(",value\n");
    for (i, &v) in u.iter().enumerate() {
        let _ = write!(out, "{i}");
        for ax in 0..dim {
            let _ = write!(out, ",{}", f(num.centers[i][ax]));
        }
        let _ = writeln!(out, ",{}", f(v));
    }
    out
}

/// Energy breakdown of a solution, one labeled row per term.
pub fn write_energy_csv(e: &EnergyBreakdown) -> String {
    let mut out = String::from("term,value\n");
    let _ = writeln!(out, "local,{}", f(e.local_term));
    let _ = writeln!(out, "nonlocal,{}", f(e.nonlocal_term));
    let _ = writeln!(out, "coupling,{}", f(e.coupling_term));
    let _ = writeln!(out, "source,{}", f(e.source_term));
    let _ = writeln!(out, "total,{}", f(e.total));
    out
}

/// Region-wise Euler-Lagrange residuals of a solution.
pub fn write_residual_csv(r: &ResidualReport) -> String {
    let mut out = String::from("region,rows,residual\n");
    for region in &r.regions {
        let _ = writeln!(out, "{},{},{}", region.name, region.rows, f(region.norm));
    }
    let _ = writeln!(out, "overall,,{}", f(r.overall));
    out
}

/// Occupancy table: cell, empirical fraction, stationary fraction, and
/// their signed deviation.
pub fn write_occupancy_csv(rep: &OccupancyReport) -> String {
    let mut out = String::from("index,occupancy,expected,deviation\n");
    for (i, (&occ, &exp)) in rep.occupancy.iter().zip(&rep.expected).enumerate() {
        let _ = writeln!(out, "{i},{},{},{}", f(occ), f(exp), f(occ - exp));
    }
    out
}

/// One row: the computed constant against the tracked bound and every
/// quantity the chain is built from.
pub fn write_poincare_csv(rep: &PoincareReport) -> String {
    let mut out = String::from(
        "model,computed,tracked,sigma,coupling,tree,m_j,m_g,coupling_measure,\
         tree_degree,max_branch_len,cube_alpha,cube_beta,exponential\n",
    );
    let computed = rep
        .computed
        .map(f)
        .unwrap_or_else(|| "degenerate".to_string());
    let max_branch = rep.branch_lengths.iter().copied().max().unwrap_or(0);
    let _ = writeln!(
        out,
        "{},{computed},{},{},{},{},{},{},{},{},{max_branch},{},{},{}",
        rep.model,
        f(rep.tracked),
        f(rep.components.sigma),
        f(rep.components.coupling),
        f(rep.components.tree),
        f(rep.components.m_j),
        f(rep.components.m_g),
        f(rep.components.coupling_measure),
        rep.tree_degree,
        f(rep.cube_annotation.0),
        f(rep.cube_annotation.1),
        f(rep.exponential_annotation),
    );
    out
}

/// Hypothesis checklist: one row per standing assumption.
pub fn write_domain_csv(chk: &DomainCheck) -> String {
    let mut out = String::from("check,status,detail\n");
    let _ = writeln!(
        out,
        "P1-delta-connected,{},{} component(s) at delta = {}",
        if chk.connected { "pass" } else { "fail" },
        chk.components,
        chk.delta
    );
    let _ = writeln!(
        out,
        "P2-proximity,{},regions within the horizon",
        if chk.proximate { "pass" } else { "fail" }
    );
    let _ = writeln!(
        out,
        "J1-visibility,{},m_J = {}",
        if chk.m_j > 0.0 { "pass" } else { "fail" },
        f(chk.m_j)
    );
    let _ = writeln!(
        out,
        "G1-visibility,{},m_G = {}",
        if chk.m_g > 0.0 { "pass" } else { "fail" },
        f(chk.m_g)
    );
    match chk.tree_shape {
        Some((parts, degree, max_len)) => {
            let _ = writeln!(
                out,
                "delta-tree,pass,{parts} parts; degree {degree}; longest branch {max_len}"
            );
        }
        None => {
            let _ = writeln!(out, "delta-tree,fail,no tree on a disconnected region");
        }
    }
    let _ = writeln!(
        out,
        "sizes,info,{} local / {} nonlocal cells",
        chk.n_local, chk.n_nonlocal
    );
    out
}
