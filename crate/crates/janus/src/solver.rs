//! Linear solvers and Euler-Lagrange residual diagnostics.
//!
//! The assembled operator A is symmetric positive semidefinite with the
//! constant vector in its null space, so the Neumann system Au = Mf is
//! solvable only for mean-zero loads and its solution is unique only up to
//! an additive constant. Both solvers pin the gauge the same way: the
//! returned solution has weighted mean zero (w'u = 0). Because the weights
//! are a uniform h^N per cell, w is parallel to the constant null vector
//! and the weighted-mean projector is exactly the projector onto the range
//! of A; conjugate gradients run entirely inside that subspace.

use crate::assembly::{DiscreteOperator, LoadVector, Numbering};
use crate::domain::Interface;
use crate::error::{Error, Result};

/// Largest n the dense eigensolver paths accept.
pub const DENSE_LIMIT: usize = 2000;

/// Options for the projected conjugate-gradient solver.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Relative residual target: stop once ||r||_2 <= tol * ||Mf||_2.
    pub tol: f64,
    /// Iteration cap; 0 means 20 * n.
    pub max_iter: usize,
    /// Apply diagonal (Jacobi) preconditioning.
    pub jacobi: bool,
    /// Start from this vector instead of zero. The converged solution does
    /// not depend on it beyond roundoff: the gauge projection removes the
    /// only undetermined component.
    pub initial_guess: Option<Vec<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-10,
            max_iter: 0,
            jacobi: false,
            initial_guess: None,
        }
    }
}

/// Converged solve with its iteration ledger.
#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Solution with weighted mean zero.
    pub u: Vec<f64>,
    pub iterations: usize,
    /// Final absolute residual ||Au - Mf||_2.
    pub residual_norm: f64,
    /// Reference norm ||Mf||_2 the tolerance was measured against.
    pub rhs_norm: f64,
}

/// Verify the Neumann compatibility condition sum_i w_i f_i = 0.
///
/// The comparison is relative: the sum must not exceed
/// tol * (sum_i w_i |f_i| + 1), so a zero load always passes and the check
/// scales with the size of the data.
pub fn check_compatibility(load: &LoadVector, tol: f64) -> Result<()> {
    let scale: f64 = load
        .values
        .iter()
        .zip(&load.weights)
        .map(|(f, w)| (f * w).abs())
        .sum::<f64>()
        + 1.0;
    let threshold = tol * scale;
    if load.compatibility_sum.abs() <= threshold {
        Ok(())
    } else {
        Err(Error::IncompatibleSource {
            sum: load.compatibility_sum,
            tol: threshold,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Remove the weighted-mean component: v <- v - (w'v / w'w) w.
fn project_out_weighted_mean(v: &mut [f64], w: &[f64], ww: f64) {
    let alpha = dot(w, v) / ww;
    for (vi, wi) in v.iter_mut().zip(w) {
        *vi -= alpha * wi;
    }
}

/// Solve Au = Mf by conjugate gradients projected onto the mean-zero
/// subspace.
///
/// The right-hand side, the initial guess, and the running residual are all
/// kept orthogonal to the weight vector; the final iterate is projected once
/// more so the returned solution satisfies w'u = 0 exactly (to roundoff).
/// Fails with [`Error::NoConvergence`] when the iteration cap is reached,
/// which is also how an inconsistent load (one with a component in the null
/// space of A that the global projection cannot see, e.g. per-block
/// imbalance in a decoupled model) manifests.
pub fn solve_cg(
    op: &DiscreteOperator,
    load: &LoadVector,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let n = op.n();
    if load.values.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "solve_cg: operator n = {n}, load n = {}",
            load.values.len()
        )));
    }
    let a = &op.matrix;
    let w = &op.weights;
    let ww = dot(w, w);
    let max_iter = if opts.max_iter == 0 {
        20 * n
    } else {
        opts.max_iter
    };

    let mut b = load.weighted();
    let rhs_norm = norm(&b);
    project_out_weighted_mean(&mut b, w, ww);

    let mut x = match &opts.initial_guess {
        Some(g) => {
            if g.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "solve_cg: initial guess has {} entries for {n} unknowns",
                    g.len()
                )));
            }
            g.clone()
        }
        None => vec![0.0; n],
    };
    project_out_weighted_mean(&mut x, w, ww);

    if rhs_norm == 0.0 {
        return Ok(SolveReport {
            u: x.iter().map(|_| 0.0).collect(),
            iterations: 0,
            residual_norm: 0.0,
            rhs_norm,
        });
    }
    let threshold = opts.tol * rhs_norm;

    let inv_diag: Option<Vec<f64>> = if opts.jacobi {
        Some(
            a.diagonal()
                .iter()
                .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
                .collect(),
        )
    } else {
        None
    };
    let precond = |r: &[f64]| -> Vec<f64> {
        match &inv_diag {
            Some(di) => r.iter().zip(di).map(|(ri, mi)| ri * mi).collect(),
            None => r.to_vec(),
        }
    };

    let mut r = {
        let ax = a.apply(&x);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        project_out_weighted_mean(&mut r, w, ww);
        r
    };
    let mut res = norm(&r);
    if res <= threshold {
        project_out_weighted_mean(&mut x, w, ww);
        return Ok(SolveReport {
            u: x,
            iterations: 0,
            residual_norm: res,
            rhs_norm,
        });
    }

    let mut z = precond(&r);
    project_out_weighted_mean(&mut z, w, ww);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);

    for k in 1..=max_iter {
        let ap = a.apply(&p);
        let pap = dot(&p, &ap);
        // The negated comparison also bails out on a NaN curvature.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(pap > 0.0) {
            // Direction collapsed: the remaining residual lies in the null
            // space, so the system is inconsistent at this tolerance.
            return Err(Error::NoConvergence {
                iterations: k - 1,
                residual: res / rhs_norm,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        project_out_weighted_mean(&mut r, w, ww);
        res = norm(&r);
        if res <= threshold {
            project_out_weighted_mean(&mut x, w, ww);
            return Ok(SolveReport {
                u: x,
                iterations: k,
                residual_norm: res,
                rhs_norm,
            });
        }
        z = precond(&r);
        project_out_weighted_mean(&mut z, w, ww);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rz = rz_new;
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: res / rhs_norm,
    })
}

/// Independent dense reference solve via spectral pseudo-inverse.
///
/// Intended as an oracle for the iterative path on small problems; fails
/// with [`Error::TooLarge`] beyond [`DENSE_LIMIT`] unknowns. Eigenvalues
/// below 1e-12 times the largest are treated as null directions, and the
/// result is gauge-fixed to weighted mean zero like [`solve_cg`].
pub fn dense_oracle(op: &DiscreteOperator, load: &LoadVector) -> Result<Vec<f64>> {
    let n = op.n();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge {
            n,
            limit: DENSE_LIMIT,
        });
    }
    let dense = op.matrix.to_dense();
    let eig = nalgebra::SymmetricEigen::new(dense);
    let b = nalgebra::DVector::from_vec(load.weighted());
    let lam_max = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
    let cutoff = 1e-12 * lam_max;
    let mut u = nalgebra::DVector::zeros(n);
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > cutoff {
            let q = eig.eigenvectors.column(k);
            let coef = q.dot(&b) / lam;
            u.axpy(coef, &q, 1.0);
        }
    }
    let mut u: Vec<f64> = u.iter().copied().collect();
    let ww = dot(&op.weights, &op.weights);
    project_out_weighted_mean(&mut u, &op.weights, ww);
    Ok(u)
}

/// How to group rows when reporting Euler-Lagrange residuals.
#[derive(Debug, Clone, Copy)]
pub enum ResidualRegions<'a> {
    /// Two groups: local rows, nonlocal rows.
    Volumetric,
    /// Three groups: local rows away from the interface, rows owning an
    /// interface face (the discrete flux balance), and nonlocal rows.
    Mixed {
        numbering: &'a Numbering,
        gamma: &'a Interface,
    },
}

/// Residual norm over one row group.
#[derive(Debug, Clone)]
pub struct RegionResidual {
    pub name: &'static str,
    /// sqrt(sum_{i in region} r_i^2 / w_i), relative to the load scale.
    pub norm: f64,
    pub rows: usize,
}

#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub regions: Vec<RegionResidual>,
    /// All rows together, same normalization.
    pub overall: f64,
    /// Normalization sqrt(sum_i (Mf)_i^2 / w_i), or 1 for a zero load.
    pub scale: f64,
}

fn weighted_region_norm(r: &[f64], w: &[f64], rows: &[usize]) -> f64 {
    rows.iter().map(|&i| r[i] * r[i] / w[i]).sum::<f64>().sqrt()
}

/// Row-grouped norms of the discrete Euler-Lagrange residual r = Au - Mf.
///
/// Each group reports sqrt(sum r_i^2 / w_i) over its rows, normalized by the
/// same weighted norm of the load, so a converged solve yields numbers on
/// the order of the solver tolerance in every group. The `Mixed` grouping
/// isolates the interface-owner rows, where the residual expresses the
/// discrete balance between the local flux and the coupling exchange.
pub fn residual_euler_lagrange(
    op: &DiscreteOperator,
    load: &LoadVector,
    u: &[f64],
    regions: ResidualRegions<'_>,
) -> Result<ResidualReport> {
    let n = op.n();
    if u.len() != n || load.values.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "residual_euler_lagrange: operator n = {n}, load n = {}, u n = {}",
            load.values.len(),
            u.len()
        )));
    }
    let au = op.matrix.apply(u);
    let mf = load.weighted();
    let r: Vec<f64> = au.iter().zip(&mf).map(|(a, b)| a - b).collect();
    let w = &op.weights;

    let mut scale = mf
        .iter()
        .zip(w)
        .map(|(b, wi)| b * b / wi)
        .sum::<f64>()
        .sqrt();
    if scale == 0.0 {
        scale = 1.0;
    }

    let groups: Vec<(&'static str, Vec<usize>)> = match regions {
        ResidualRegions::Volumetric => vec![
            ("local", (0..op.n_local).collect()),
            ("nonlocal", (op.n_local..n).collect()),
        ],
        ResidualRegions::Mixed { numbering, gamma } => {
            let mut owner = vec![false; n];
            for face in &gamma.faces {
                let g = numbering.local_global(face.owner).ok_or_else(|| {
                    Error::DimensionMismatch(
                        "interface face owned by a cell outside the local set".into(),
                    )
                })?;
                owner[g] = true;
            }
            vec![
                (
                    "local-interior",
                    (0..op.n_local).filter(|&i| !owner[i]).collect(),
                ),
                (
                    "interface-flux",
                    (0..op.n_local).filter(|&i| owner[i]).collect(),
                ),
                ("nonlocal", (op.n_local..n).collect()),
            ]
        }
    };

    let regions_out: Vec<RegionResidual> = groups
        .into_iter()
        .map(|(name, rows)| RegionResidual {
            name,
            norm: weighted_region_norm(&r, w, &rows) / scale,
            rows: rows.len(),
        })
        .collect();
    let overall = weighted_region_norm(&r, w, &(0..n).collect::<Vec<_>>()) / scale;
    Ok(ResidualReport {
        regions: regions_out,
        overall,
        scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{
        assemble_load, assemble_local, assemble_nonlocal, assemble_surface_coupling,
        assemble_volumetric_coupling, sum_blocks,
    };
    use crate::domain::{build_domain, extract_interface, BoxRegion, GridSpec};
    use crate::kernels::{CouplingSpec, KernelSpec};
    use crate::sparse::Triplets;

    /// 1D coupled pair on [-1, 1], local on the right.
    fn coupled_1d(h: f64, g_amp: f64) -> (Numbering, DiscreteOperator) {
        let grid = GridSpec::new(1, h, &[[-1.0, 1.0]]).unwrap();
        let dom = build_domain(
            &grid,
            &[BoxRegion::new_1d(0.0, 1.0)],
            &[BoxRegion::new_1d(-1.0, 0.0)],
        )
        .unwrap();
        let num = Numbering::new(grid, dom.local, dom.nonlocal);
        let j = KernelSpec::indicator(1.0, 0.5);
        let g = CouplingSpec::symmetric(KernelSpec::indicator(g_amp, 0.5));
        let ops = sum_blocks(
            &num,
            &assemble_local(&num),
            &assemble_nonlocal(&num, &j),
            &assemble_volumetric_coupling(&num, &g),
        );
        (num, ops.total)
    }

    fn balanced_load(num: &Numbering) -> LoadVector {
        let mut f = vec![1.0; num.n_local()];
        f.extend(vec![
            -(num.n_local() as f64)
                / (num.n() - num.n_local()) as f64;
            num.n() - num.n_local()
        ]);
        assemble_load(num, &f).unwrap()
    }

    /// Path-graph operator with identity weights, outside any grid.
    fn path3() -> DiscreteOperator {
        let mut t = Triplets::new(3);
        t.add_edge(0, 1, 0.5);
        t.add_edge(1, 2, 0.5);
        DiscreteOperator {
            matrix: t.to_csr(),
            weights: vec![1.0; 3],
            n_local: 3,
        }
    }

    #[test]
    fn compatibility_examples() {
        let (num, _) = coupled_1d(0.25, 1.0);
        let ones = assemble_load(&num, &vec![1.0; num.n()]).unwrap();
        assert!(matches!(
            check_compatibility(&ones, 1e-9),
            Err(Error::IncompatibleSource { .. })
        ));
        let balanced = balanced_load(&num);
        check_compatibility(&balanced, 1e-9).unwrap();
        let zero = assemble_load(&num, &vec![0.0; num.n()]).unwrap();
        check_compatibility(&zero, 1e-15).unwrap();
    }

    #[test]
    fn path_graph_hand_solution() {
        let op = path3();
        let load = LoadVector {
            values: vec![1.0, 0.0, -1.0],
            weights: vec![1.0; 3],
            compatibility_sum: 0.0,
        };
        let rep = solve_cg(&op, &load, &SolveOptions::default()).unwrap();
        for (ui, want) in rep.u.iter().zip([1.0, 0.0, -1.0]) {
            assert!((ui - want).abs() < 1e-10);
        }
        let dense = dense_oracle(&op, &load).unwrap();
        for (ui, want) in dense.iter().zip([1.0, 0.0, -1.0]) {
            assert!((ui - want).abs() < 1e-12);
        }
    }

    #[test]
    fn cg_matches_dense_oracle() {
        let (num, op) = coupled_1d(0.0625, 1.0);
        let load = balanced_load(&num);
        let rep = solve_cg(&op, &load, &SolveOptions::default()).unwrap();
        let dense = dense_oracle(&op, &load).unwrap();
        let sup = rep
            .u
            .iter()
            .zip(&dense)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(sup < 1e-8, "CG and dense oracle differ by {sup}");
    }

    #[test]
    fn jacobi_reaches_same_solution() {
        let (num, op) = coupled_1d(0.0625, 2.0);
        let load = balanced_load(&num);
        let plain = solve_cg(&op, &load, &SolveOptions::default()).unwrap();
        let jac = solve_cg(
            &op,
            &load,
            &SolveOptions {
                jacobi: true,
                ..SolveOptions::default()
            },
        )
        .unwrap();
        let sup = plain
            .u
            .iter()
            .zip(&jac.u)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(sup < 1e-8);
    }

    #[test]
    fn initial_guess_does_not_change_solution() {
        let (num, op) = coupled_1d(0.125, 1.0);
        let load = balanced_load(&num);
        let a = solve_cg(&op, &load, &SolveOptions::default()).unwrap();
        let wild: Vec<f64> = (0..num.n())
            .map(|i| (i as f64 * 1.3).sin() * 40.0)
            .collect();
        let b = solve_cg(
            &op,
            &load,
            &SolveOptions {
                initial_guess: Some(wild),
                ..SolveOptions::default()
            },
        )
        .unwrap();
        let sup =
            a.u.iter()
                .zip(&b.u)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0f64, f64::max);
        assert!(sup < 1e-8, "initial guess changed the solution by {sup}");
        // Gauge is pinned: weighted mean is zero.
        let mean: f64 = b.u.iter().zip(&op.weights).map(|(u, w)| u * w).sum();
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn zero_load_returns_zero() {
        let (num, op) = coupled_1d(0.25, 1.0);
        let load = assemble_load(&num, &vec![0.0; num.n()]).unwrap();
        let rep = solve_cg(&op, &load, &SolveOptions::default()).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(rep.u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn decoupled_blockwise_balanced_converges() {
        // G = 0: two disconnected components. A load balanced within each
        // block is orthogonal to both null vectors, so CG still converges.
        let (num, op) = coupled_1d(0.25, 0.0);
        let nl = num.n_local();
        let nn = num.n() - nl;
        let mut f = Vec::new();
        for i in 0..nl {
            f.push(if i < nl / 2 { 1.0 } else { -1.0 });
        }
        for i in 0..nn {
            f.push(if i < nn / 2 { 2.0 } else { -2.0 });
        }
        let load = assemble_load(&num, &f).unwrap();
        let rep = solve_cg(&op, &load, &SolveOptions::default()).unwrap();
        assert!(rep.residual_norm <= 1e-10 * rep.rhs_norm);
    }

    #[test]
    fn decoupled_per_block_imbalance_fails() {
        // Globally balanced but each block integrates to a nonzero value:
        // the projected residual stalls at the block-constant component.
        let (num, op) = coupled_1d(0.25, 0.0);
        let nl = num.n_local();
        let mut f = vec![1.0; nl];
        f.extend(vec![-(nl as f64) / (num.n() - nl) as f64; num.n() - nl]);
        let load = assemble_load(&num, &f).unwrap();
        check_compatibility(&load, 1e-9).unwrap();
        assert!(matches!(
            solve_cg(&op, &load, &SolveOptions::default()),
            Err(Error::NoConvergence { .. })
        ));
    }

    #[test]
    fn dense_oracle_size_guard() {
        let n = DENSE_LIMIT + 1;
        let op = DiscreteOperator {
            matrix: Triplets::new(n).to_csr(),
            weights: vec![1.0; n],
            n_local: n,
        };
        let load = LoadVector {
            values: vec![0.0; n],
            weights: vec![1.0; n],
            compatibility_sum: 0.0,
        };
        assert!(matches!(
            dense_oracle(&op, &load),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn residual_regions_volumetric() {
        let (num, op) = coupled_1d(0.0625, 1.0);
        let load = balanced_load(&num);
        let opts = SolveOptions::default();
        let rep = solve_cg(&op, &load, &opts).unwrap();
        let res = residual_euler_lagrange(&op, &load, &rep.u, ResidualRegions::Volumetric).unwrap();
        assert_eq!(res.regions.len(), 2);
        assert_eq!(res.regions[0].name, "local");
        assert_eq!(res.regions[1].name, "nonlocal");
        assert_eq!(res.regions[0].rows + res.regions[1].rows, num.n());
        for reg in &res.regions {
            assert!(
                reg.norm <= 10.0 * opts.tol,
                "{} residual {} above 10*tol",
                reg.name,
                reg.norm
            );
        }
        assert!(res.overall <= 10.0 * opts.tol);
    }

    #[test]
    fn residual_regions_mixed() {
        let grid = GridSpec::new(1, 0.125, &[[-1.0, 1.0]]).unwrap();
        let dom = build_domain(
            &grid,
            &[BoxRegion::new_1d(0.0, 1.0)],
            &[BoxRegion::new_1d(-1.0, 0.0)],
        )
        .unwrap();
        let gamma = extract_interface(&grid, &dom.local, &[BoxRegion::new_1d(0.0, 0.0)]).unwrap();
        let num = Numbering::new(grid, dom.local, dom.nonlocal);
        let j = KernelSpec::indicator(1.0, 0.5);
        let g = CouplingSpec::symmetric(KernelSpec::indicator(1.0, 0.5));
        let ops = sum_blocks(
            &num,
            &assemble_local(&num),
            &assemble_nonlocal(&num, &j),
            &assemble_surface_coupling(&num, &gamma, &g),
        );
        let load = balanced_load(&num);
        let opts = SolveOptions::default();
        let rep = solve_cg(&ops.total, &load, &opts).unwrap();
        let res = residual_euler_lagrange(
            &ops.total,
            &load,
            &rep.u,
            ResidualRegions::Mixed {
                numbering: &num,
                gamma: &gamma,
            },
        )
        .unwrap();
        assert_eq!(res.regions.len(), 3);
        assert_eq!(res.regions[1].name, "interface-flux");
        assert_eq!(res.regions[1].rows, 1);
        assert_eq!(res.regions[0].rows + res.regions[1].rows, num.n_local());
        for reg in &res.regions {
            assert!(reg.norm <= 10.0 * opts.tol);
        }
    }
}
