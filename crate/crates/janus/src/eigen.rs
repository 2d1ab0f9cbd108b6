//! Smallest constrained eigenvalue of the pencil (A, M).
//!
//! Shared subproblem of the constant-tracking module: compute
//!
//! ```text
//! lambda = min { u'Au / u'Mu :  c'u = 0 }
//! ```
//!
//! for the assembled symmetric positive semidefinite A, the diagonal weight
//! matrix M, and a constraint functional c (the weighted indicator of a cell
//! subset, face measures on interface owners, or the full weight vector).
//!
//! Two routes are provided and cross-checked in the tests:
//! * a dense path (n <= [`DENSE_LIMIT`]) that symmetrizes to
//!   B = M^(-1/2) A M^(-1/2), rotates the constraint onto the first
//!   coordinate with a Householder reflection, and eigensolves the trailing
//!   principal block;
//! * an iterative path for larger problems, valid only when c is parallel
//!   to the weight vector (then the constraint removes exactly the constant
//!   null vector and inverse power iteration with projected-CG inner solves
//!   applies). A large problem with a general constraint is rejected as
//!   [`Error::TooLarge`].

use crate::assembly::DiscreteOperator;
use crate::error::{Error, Result};
use crate::solver::{solve_cg, SolveOptions, DENSE_LIMIT};
use crate::sparse::Csr;

/// Constrained eigenpair; the vector is M-normalized and satisfies c'u = 0.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub value: f64,
    pub vector: Vec<f64>,
    /// Outer iterations (0 for the dense path).
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dispatch on problem size; see the module docs for the two routes.
pub fn smallest_constrained(
    matrix: &Csr,
    weights: &[f64],
    constraint: &[f64],
) -> Result<EigenResult> {
    let n = matrix.n;
    if constraint.iter().all(|&c| c == 0.0) {
        return Err(Error::EmptySubset);
    }
    if n <= DENSE_LIMIT {
        return dense_constrained(matrix, weights, constraint);
    }
    // Iterative route requires the constraint to pin the constant mode.
    let ww = dot(weights, weights);
    let alpha = dot(weights, constraint) / ww;
    let dev = constraint
        .iter()
        .zip(weights)
        .map(|(c, w)| (c - alpha * w).powi(2))
        .sum::<f64>()
        .sqrt();
    let cn = dot(constraint, constraint).sqrt();
    if dev > 1e-12 * cn {
        return Err(Error::TooLarge {
            n,
            limit: DENSE_LIMIT,
        });
    }
    inverse_iteration_constrained(matrix, weights)
}

/// Dense route: Householder deflation of the constraint direction.
pub fn dense_constrained(matrix: &Csr, weights: &[f64], constraint: &[f64]) -> Result<EigenResult> {
    let n = matrix.n;
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge {
            n,
            limit: DENSE_LIMIT,
        });
    }
    if n < 2 {
        return Err(Error::DimensionMismatch(
            "constrained eigenproblem needs at least two unknowns".into(),
        ));
    }
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();

    // B = M^(-1/2) A M^(-1/2).
    let mut b = matrix.to_dense();
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] /= sqrt_w[i] * sqrt_w[j];
        }
    }

    // Unit constraint direction in the symmetrized variables.
    let mut d =
        nalgebra::DVector::from_iterator(n, constraint.iter().zip(&sqrt_w).map(|(c, s)| c / s));
    let dn = d.norm();
    if dn == 0.0 {
        return Err(Error::EmptySubset);
    }
    d /= dn;

    // Householder vector v = d + sign(d_0) e_0 maps d to -sign(d_0) e_0,
    // so { y : d'y = 0 } = H { z : z_0 = 0 }.
    let sign = if d[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut v = d.clone();
    v[0] += sign;
    let beta = 2.0 / v.dot(&v);

    // C = H B H as two rank-1 updates plus a correction.
    let bv = &b * &v;
    let vbv = v.dot(&bv);
    b.ger(-beta, &v, &bv, 1.0);
    b.ger(-beta, &bv, &v, 1.0);
    b.ger(beta * beta * vbv, &v, &v, 1.0);

    let sub = b.view((1, 1), (n - 1, n - 1)).into_owned();
    let eig = nalgebra::SymmetricEigen::new(sub);
    let mut k_min = 0;
    for k in 1..(n - 1) {
        if eig.eigenvalues[k] < eig.eigenvalues[k_min] {
            k_min = k;
        }
    }
    let value = eig.eigenvalues[k_min];

    // Undo the reflection and the symmetrizing scaling.
    let mut z = nalgebra::DVector::zeros(n);
    for i in 1..n {
        z[i] = eig.eigenvectors[(i - 1, k_min)];
    }
    let vz = v.dot(&z);
    let y = &z - v.scale(beta * vz);
    let mut u: Vec<f64> = y.iter().zip(&sqrt_w).map(|(yi, s)| yi / s).collect();
    normalize_m(&mut u, weights);
    Ok(EigenResult {
        value,
        vector: u,
        iterations: 0,
    })
}

/// Scale to unit M-norm and pin the sign of the largest component.
fn normalize_m(u: &mut [f64], weights: &[f64]) {
    let s = u
        .iter()
        .zip(weights)
        .map(|(ui, wi)| wi * ui * ui)
        .sum::<f64>()
        .sqrt();
    if s > 0.0 {
        let mut peak = 0usize;
        for (i, ui) in u.iter().enumerate() {
            if ui.abs() > u[peak].abs() {
                peak = i;
            }
        }
        let flip = if u[peak] < 0.0 { -1.0 } else { 1.0 };
        for ui in u.iter_mut() {
            *ui *= flip / s;
        }
    }
}

const MAX_OUTER: usize = 500;

/// Iterative route: inverse power iteration on the mean-zero subspace.
///
/// Each step solves A y = M v with projected conjugate gradients (so this
/// route assumes the null space of A is exactly the constants, i.e. a
/// connected model); the Rayleigh quotient of the normalized iterate is the
/// eigenvalue estimate, declared converged when its relative change drops
/// below 1e-9. A degenerate smallest eigenvalue is harmless: the iterate
/// may wander inside the eigenspace but the quotient still settles.
pub fn inverse_iteration_constrained(matrix: &Csr, weights: &[f64]) -> Result<EigenResult> {
    let n = matrix.n;
    let op = DiscreteOperator {
        matrix: matrix.clone(),
        weights: weights.to_vec(),
        n_local: n,
    };
    let ww = dot(weights, weights);
    let project = |v: &mut Vec<f64>| {
        let alpha = dot(weights, v) / ww;
        for (vi, wi) in v.iter_mut().zip(weights) {
            *vi -= alpha * wi;
        }
    };

    // Deterministic generic start vector.
    let mut v: Vec<f64> = (0..n).map(|i| (0.7 * i as f64 + 0.3).sin()).collect();
    project(&mut v);
    normalize_m(&mut v, weights);

    let opts = SolveOptions {
        tol: 1e-12,
        ..SolveOptions::default()
    };
    let mut rho_old = f64::INFINITY;
    for outer in 1..=MAX_OUTER {
        let load = crate::assembly::LoadVector {
            values: v.clone(),
            weights: weights.to_vec(),
            compatibility_sum: 0.0,
        };
        let rep = solve_cg(&op, &load, &opts)?;
        let mut y = rep.u;
        project(&mut y);
        normalize_m(&mut y, weights);
        let ay = matrix.apply(&y);
        let rho = dot(&y, &ay); // y'Ay with y'My = 1
        v = y;
        if (rho - rho_old).abs() <= 1e-9 * rho.abs().max(1e-300) + 1e-14 {
            return Ok(EigenResult {
                value: rho,
                vector: v,
                iterations: outer,
            });
        }
        rho_old = rho;
    }
    Err(Error::NoConvergence {
        iterations: MAX_OUTER,
        residual: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_local, Numbering};
    use crate::domain::{CellSet, GridSpec, Role};

    fn interval_laplacian(n: usize) -> (DiscreteOperator, Vec<f64>) {
        let h = 1.0 / n as f64;
        let grid = GridSpec::new(1, h, &[[0.0, 1.0]]).unwrap();
        let set = CellSet::new((0..n).collect(), Role::Local);
        let num = Numbering::single(grid, set);
        let op = assemble_local(&num);
        let w = op.weights.clone();
        (op, w)
    }

    fn square_laplacian(cells: usize) -> (DiscreteOperator, Vec<f64>, f64) {
        let h = 1.0 / cells as f64;
        let grid = GridSpec::new(2, h, &[[0.0, 1.0], [0.0, 1.0]]).unwrap();
        let set = CellSet::new((0..grid.total_cells()).collect(), Role::Local);
        let num = Numbering::single(grid, set);
        let op = assemble_local(&num);
        let w = op.weights.clone();
        (op, w, h)
    }

    /// Exact second pencil eigenvalue of the 1D cell-centered Neumann
    /// Laplacian: 2(1 - cos(pi h)) / h^2.
    fn lambda2_interval(h: f64) -> f64 {
        2.0 * (1.0 - (std::f64::consts::PI * h).cos()) / (h * h)
    }

    #[test]
    fn interval_second_eigenvalue_dense() {
        let n = 10;
        let (op, w) = interval_laplacian(n);
        let r = smallest_constrained(&op.matrix, &w, &w).unwrap();
        let want = lambda2_interval(0.1);
        assert!((r.value - want).abs() <= 1e-9 * want);
        // Constraint satisfied, M-norm one.
        let c: f64 = r.vector.iter().zip(&w).map(|(u, wi)| u * wi).sum();
        assert!(c.abs() < 1e-8);
        let m: f64 = r.vector.iter().zip(&w).map(|(u, wi)| wi * u * u).sum();
        assert!((m - 1.0).abs() < 1e-10);
    }

    #[test]
    fn dense_and_iterative_agree() {
        let (op, w) = interval_laplacian(24);
        let dense = dense_constrained(&op.matrix, &w, &w).unwrap();
        let iter = inverse_iteration_constrained(&op.matrix, &w).unwrap();
        assert!(
            (dense.value - iter.value).abs() <= 1e-7 * dense.value,
            "dense {} vs iterative {}",
            dense.value,
            iter.value
        );
        assert!(iter.iterations > 0);
    }

    #[test]
    fn householder_general_constraint() {
        // Path graph with unit edges and weights, constrained to u_0 = 0:
        // minimize over span{e_1, e_2}, i.e. smallest eigenvalue of
        // [[2, -1], [-1, 1]] = (3 - sqrt(5)) / 2.
        let mut t = crate::sparse::Triplets::new(3);
        t.add_edge(0, 1, 0.5);
        t.add_edge(1, 2, 0.5);
        let a = t.to_csr();
        let w = vec![1.0; 3];
        let c = vec![1.0, 0.0, 0.0];
        let r = dense_constrained(&a, &w, &c).unwrap();
        let want = (3.0 - 5.0f64.sqrt()) / 2.0;
        assert!((r.value - want).abs() < 1e-12);
        assert!(r.vector[0].abs() < 1e-10, "constrained coordinate not zero");
    }

    #[test]
    fn degenerate_pair_on_square() {
        // The unit square's second Neumann eigenvalue has multiplicity two;
        // both routes must settle on it anyway.
        let (op, w, h) = square_laplacian(8);
        let want = lambda2_interval(h);
        let dense = dense_constrained(&op.matrix, &w, &w).unwrap();
        assert!((dense.value - want).abs() <= 1e-9 * want);
        let iter = inverse_iteration_constrained(&op.matrix, &w).unwrap();
        assert!((iter.value - want).abs() <= 1e-7 * want);
    }

    #[test]
    fn large_problem_iterative_dispatch() {
        // 48 x 48 = 2304 > DENSE_LIMIT with c = w routes to inverse
        // iteration and matches the closed-form eigenvalue.
        let (op, w, h) = square_laplacian(48);
        assert!(op.n() > DENSE_LIMIT);
        let r = smallest_constrained(&op.matrix, &w, &w).unwrap();
        let want = lambda2_interval(h);
        assert!(
            (r.value - want).abs() <= 1e-7 * want,
            "got {}, want {}",
            r.value,
            want
        );
    }

    #[test]
    fn large_problem_general_constraint_rejected() {
        let (op, w) = interval_laplacian(2001);
        let mut c = vec![0.0; 2001];
        c[0] = 1.0;
        assert!(matches!(
            smallest_constrained(&op.matrix, &w, &c),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn zero_constraint_rejected() {
        let (op, w) = interval_laplacian(4);
        assert!(matches!(
            smallest_constrained(&op.matrix, &w, &[0.0; 4]),
            Err(Error::EmptySubset)
        ));
    }
}
