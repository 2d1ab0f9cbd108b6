//! Poincare constants: spectral computation and explicit tracked bounds.
//!
//! For the assembled operator A with weight matrix M, the optimal discrete
//! Poincare constant is the smallest nonzero eigenvalue of the pencil
//! (A, M), i.e. the largest lambda with u'Au >= lambda u'Mu on the
//! weighted-mean-zero subspace. [`poincare_computed`] evaluates it
//! spectrally; [`tracked_bound`] evaluates an explicit lower bound built
//! from three traceable components and packages both numbers into a
//! [`PoincareReport`].
//!
//! The tracked chain, written with v = u - (mean of u over the coupling
//! set A) and the half-energies E_J = 1/2 u'A_J u, E_G = 1/2 u'A_G u:
//!
//! ```text
//! int_{local} v^2    <= (1/sigma_A) u'A_loc u        (constrained eigenvalue)
//! int_B v^2          <= (2/(m_G |A|)) E_G            (coupling visibility)
//! int_{nonlocal} v^2 <= Gamma int_B v^2 + Eta E_J    (tree propagation)
//! u'Mu <= int v^2  whenever u has weighted mean zero
//! ```
//!
//! With C_T = max(Gamma, Eta) these combine into
//!
//! ```text
//! u'Au >= min(sigma_A, 2/C_T, m_G |A| / C_T) * u'Mu,
//! ```
//!
//! and every factor on the right is reported: the sigma component, the
//! coupling component m_G|A|/2, and the tree constant C_T. Soundness
//! (tracked <= computed) is asserted test-side on every shipped geometry;
//! it is the discrete form of the central estimate this library exists to
//! check.

use crate::assembly::{assemble_local, DiscreteOperator, Numbering};
use crate::domain::tree::DeltaTree;
use crate::domain::{diameter_of_cell_union, CellSet, GridSpec, Interface};
use crate::eigen::smallest_constrained;
use crate::error::{Error, Result};
use crate::kernels::{verify_visibility, verify_visibility_coupling, CouplingSpec, KernelSpec};

/// Eigenvalues at or below this are treated as a second null direction.
pub const DEGENERACY_CUTOFF: f64 = 1e-12;

/// Sample count handed to the kernel visibility scans.
const VISIBILITY_SAMPLES: usize = 128;

/// Smallest nonzero eigenvalue of (A, M) on the weighted-mean-zero
/// subspace: the computed Poincare constant.
///
/// Requires a coupled operator whose null space is exactly the constants;
/// a second numerically-zero eigenvalue (decoupled blocks) is reported as
/// [`Error::DegenerateNullSpace`]. Dense eigensolve up to the solver's
/// dense limit, inverse power iteration beyond it (where a decoupled
/// operator surfaces as an inner-solver convergence failure instead).
pub fn poincare_computed(op: &DiscreteOperator) -> Result<f64> {
    let r = smallest_constrained(&op.matrix, &op.weights, &op.weights)?;
    if r.value <= DEGENERACY_CUTOFF {
        return Err(Error::DegenerateNullSpace(r.value));
    }
    Ok(r.value)
}

/// Explicit coefficients of the branch inequality.
///
/// For a part sequence B_0, ..., B_L with consecutive unions of diameter
/// below 2*delta, iterating the two-point transfer inequality gives
///
/// ```text
/// sum_k int_{B_k} u^2 <= alpha int_{B_0} u^2 + sum_i beta_i E_J,
/// alpha  = sum_k 2^k |B_k| / |B_0|,
/// beta_i = (2^i / m_J) sum_{k >= i} |B_k| / (|B_{k-i}| |B_{k-i+1}|).
/// ```
///
/// Returns (alpha, [beta_1, ..., beta_L]) evaluated from the measured part
/// volumes. `m_j = 0` yields infinite energy coefficients, which downstream
/// consumers turn into a zero tracked bound rather than an error.
pub fn branch_constant(tree: &DeltaTree, branch: &[usize], m_j: f64) -> Result<(f64, Vec<f64>)> {
    if branch.is_empty() {
        return Err(Error::EmptyBranch);
    }
    assert!(m_j >= 0.0, "kernel visibility minimum cannot be negative");
    let vols: Vec<f64> = branch
        .iter()
        .map(|&p| {
            tree.parts
                .get(p)
                .map(|part| part.volume)
                .ok_or(Error::DimensionMismatch(format!(
                    "branch references part {p} outside the tree"
                )))
        })
        .collect::<Result<_>>()?;
    let v0 = vols[0];
    let mut alpha = 0.0;
    for (k, &vk) in vols.iter().enumerate() {
        alpha += 2f64.powi(k as i32) * vk / v0;
    }
    let l = vols.len() - 1;
    let mut betas = Vec::with_capacity(l);
    for i in 1..=l {
        let mut s = 0.0;
        for k in i..=l {
            s += vols[k] / (vols[k - i] * vols[k - i + 1]);
        }
        betas.push(2f64.powi(i as i32) / m_j * s);
    }
    Ok((alpha, betas))
}

/// Tree-composed constant C with
/// `int_{nonlocal} u^2 <= C (int_B u^2 + E_J)`, B the root part.
///
/// Each part carries a pair (gamma, eta) meaning
/// `int_{part's branch} u^2 <= gamma int_B u^2 + eta E_J`. The tree root
/// starts at (1, 0). A branch with root coefficient alpha and total energy
/// coefficient beta hanging off a part with pair (gamma_r, eta_r)
/// contributes the pair (alpha * gamma_r, alpha * eta_r + beta) to each of
/// its members: the branch inequality is applied first, then the root
/// part's own chain back to B. Summing over branches covers every part at
/// least once (branch sums include their root), so with
///
/// ```text
/// Gamma = sum_b alpha_b gamma_{root(b)},
/// Eta   = sum_b (alpha_b eta_{root(b)} + beta_b),
/// ```
///
/// the constant is C = max(Gamma, Eta); a single-part tree gives C = 1.
///
/// Worked two-branch example (equal part volumes 1/4, m_J = 1): parts
/// P0, P1, P2, P3 with branch one P0 -> [P1, P2] and branch two
/// P1 -> [P3]. Branch one: alpha = 1 + 2 + 4 = 7, beta = 16 + 16 = 32.
/// Branch two: alpha = 1 + 2 = 3, beta = 8. P0 has (1, 0), so branch one
/// contributes Gamma += 7, Eta += 32 and stamps (7, 32) on P1 and P2;
/// branch two roots at P1: Gamma += 3 * 7 = 21, Eta += 3 * 32 + 8 = 104.
/// Hence Gamma = 28, Eta = 136, C = 136.
///
/// With `m_j = 0` the energy coefficients are infinite and so is C; the
/// tracked bound built from it degrades to zero.
pub fn tree_constant(tree: &DeltaTree, m_j: f64) -> f64 {
    if tree.branches.is_empty() {
        return 1.0;
    }
    let mut pair: Vec<Option<(f64, f64)>> = vec![None; tree.parts.len()];
    pair[tree.root] = Some((1.0, 0.0));
    let mut big_gamma = 0.0;
    let mut big_eta = 0.0;
    for branch in &tree.branches {
        let seq = branch.sequence();
        let (alpha, betas) = branch_constant(tree, &seq, m_j)
            .expect("tree branches are nonempty and reference existing parts");
        let beta: f64 = betas.iter().sum();
        let (gamma_r, eta_r) =
            pair[branch.root].expect("branch roots are placed before the branches they grow");
        let g = alpha * gamma_r;
        let e = alpha * eta_r + beta;
        big_gamma += g;
        big_eta += e;
        for &m in &branch.members {
            pair[m] = Some((g, e));
        }
    }
    big_gamma.max(big_eta)
}

/// Closed-form single-branch cube annotation: the pair
/// `(2^(8^N |Omega_nl| / delta^N + 1), 2^N / (c_N delta^N m_J))` with
/// c_1 = 2, c_2 = pi. The generic constant for a cube-shaped nonlocal
/// domain covered by one equal-volume branch; reported so the measured
/// tree constant can be compared against it (it is always coarser).
pub fn cube_tree_annotation(dim: usize, nonlocal_volume: f64, delta: f64, m_j: f64) -> (f64, f64) {
    let c_n = match dim {
        1 => 2.0,
        _ => std::f64::consts::PI,
    };
    let exponent = 8f64.powi(dim as i32) * nonlocal_volume / delta.powi(dim as i32) + 1.0;
    let first = 2f64.powf(exponent);
    let second = 2f64.powi(dim as i32) / (c_n * delta.powi(dim as i32) * m_j);
    (first, second)
}

/// Exponential-form annotation `c delta^N exp(c delta^-N) min(m_J, m_G)`
/// with the unspecified absolute constant taken as 1. Reported for
/// reference only and never asserted: its delta-dependence disagrees in
/// sign with the cube bound it descends from, which is an open question
/// recorded in the project docs.
pub fn exponential_annotation(dim: usize, delta: f64, m_j: f64, m_g: f64) -> f64 {
    let dn = delta.powi(dim as i32);
    dn * (1.0 / dn).exp() * m_j.min(m_g)
}

/// Computed and analytic lower estimates of sigma(local, subset).
#[derive(Debug, Clone, Copy)]
pub struct SigmaLocal {
    /// Constrained eigenvalue of the local Dirichlet block.
    pub computed: f64,
    /// `pi^2 / diam^2(local) / (2 (1 + (|local| / |subset|)^2))`.
    pub bound: f64,
}

/// Where the zero-mean constraint of the sigma eigenproblem lives.
#[derive(Debug, Clone, Copy)]
pub enum SigmaSubset<'a> {
    /// Volume subset: sorted cell ids inside the local set.
    Cells(&'a [usize]),
    /// Trace subset: interface faces, weighted by face measure.
    Faces(&'a Interface),
}

/// Constrained first eigenvalue of the local Neumann block:
/// `sigma = min { u'A_loc u / u'Mu : mean of u over subset = 0 }`,
/// together with its convex-domain analytic lower estimate.
///
/// The trace variant (subset = faces) constrains the face-measure-weighted
/// mean of the owner cells; any trace constant is thereby absorbed into
/// the computed eigenvalue rather than estimated separately.
pub fn sigma_local(
    grid: &GridSpec,
    local: &CellSet,
    subset: SigmaSubset<'_>,
) -> Result<SigmaLocal> {
    let num = Numbering::single(grid.clone(), local.clone());
    let op = assemble_local(&num);
    let n = num.n();
    let w = grid.cell_volume();

    let mut c = vec![0.0; n];
    let measure = match subset {
        SigmaSubset::Cells(cells) => {
            if cells.is_empty() {
                return Err(Error::EmptySubset);
            }
            for &cell in cells {
                let idx = num.local_global(cell).ok_or_else(|| {
                    Error::DimensionMismatch(format!(
                        "subset cell {cell} lies outside the local region"
                    ))
                })?;
                c[idx] = w;
            }
            cells.len() as f64 * w
        }
        SigmaSubset::Faces(gamma) => {
            if gamma.faces.is_empty() {
                return Err(Error::EmptySubset);
            }
            for face in &gamma.faces {
                let idx = num.local_global(face.owner).ok_or_else(|| {
                    Error::DimensionMismatch(format!(
                        "interface owner {} lies outside the local region",
                        face.owner
                    ))
                })?;
                c[idx] += gamma.face_measure;
            }
            gamma.total_measure()
        }
    };

    let computed = smallest_constrained(&op.matrix, &op.weights, &c)?.value;
    let diam = diameter_of_cell_union(grid, &local.indices, &[]);
    let ratio = local.volume(grid) / measure;
    let bound = std::f64::consts::PI.powi(2) / (diam * diam) / (2.0 * (1.0 + ratio * ratio));
    Ok(SigmaLocal { computed, bound })
}

/// The three tracked components and the kernel minima they came from.
#[derive(Debug, Clone, Copy)]
pub struct PoincareComponents {
    /// Sigma component entering the final min (analytic bound for the
    /// volumetric chain, computed trace eigenvalue for the mixed chain).
    pub sigma: f64,
    /// Coupling component m_G |A| / 2 (volume or face measure of A).
    pub coupling: f64,
    /// Tree constant C_T = C(tree, m_J).
    pub tree: f64,
    /// Visibility minimum of the jump kernel on the 2*delta ball.
    pub m_j: f64,
    /// Visibility minimum of the coupling kernel (including multipliers).
    pub m_g: f64,
    /// |A|: volume of the coupling cell set or measure of Gamma_A.
    pub coupling_measure: f64,
}

/// Computed constant, tracked bound, components, and tree shape.
#[derive(Debug, Clone)]
pub struct PoincareReport {
    /// "volumetric" or "mixed", after the coupling mechanism used.
    pub model: &'static str,
    /// Spectral constant; `None` when the operator is degenerate (then
    /// the tracked bound is zero as well).
    pub computed: Option<f64>,
    /// min(sigma, 2 / C_T, m_G |A| / C_T); always a valid lower bound.
    pub tracked: f64,
    pub components: PoincareComponents,
    pub tree_degree: usize,
    pub branch_lengths: Vec<usize>,
    /// Generic single-branch cube pair for comparison with `tree`.
    pub cube_annotation: (f64, f64),
    /// Exponential-form reference value; never asserted.
    pub exponential_annotation: f64,
}

/// The coupling set A: cells for the volumetric chain, faces for mixed.
#[derive(Debug, Clone, Copy)]
pub enum CouplingRegion<'a> {
    Volume(&'a [usize]),
    Surface(&'a Interface),
}

/// Diameter of the union of a coupling set A and a cell set B, under the
/// same (conservative) measure the horizon check applies: exact box-union
/// diameter for volumes, center-plus-radius bounds when faces are mixed
/// in. Growing A while this stays below 2*delta guarantees the
/// visibility minima cover every pair the chain uses.
pub fn coupling_diameter(grid: &GridSpec, a: CouplingRegion<'_>, b: &[usize]) -> f64 {
    match a {
        CouplingRegion::Volume(cells) => diameter_of_cell_union(grid, cells, b),
        CouplingRegion::Surface(gamma) => diam_faces_and_cells(grid, gamma, b),
    }
}

/// Largest pairwise separation between closed faces and closed cells,
/// bounding each by a ball around its center. Slightly above the exact
/// box-union diameter, hence conservative for the horizon check.
fn diam_faces_and_cells(grid: &GridSpec, gamma: &Interface, cells: &[usize]) -> f64 {
    let r_cell = 0.5 * grid.h * (grid.dim as f64).sqrt();
    let r_face = 0.5 * grid.h * ((grid.dim - 1) as f64).sqrt();
    let mut pts: Vec<([f64; crate::domain::MAX_DIM], f64)> = Vec::new();
    for face in &gamma.faces {
        pts.push((face.center, r_face));
    }
    for &cell in cells {
        pts.push((grid.cell_center(cell), r_cell));
    }
    let mut best = 0.0f64;
    for (i, (ci, ri)) in pts.iter().enumerate() {
        for (cj, rj) in pts.iter().skip(i) {
            let d2: f64 = (0..grid.dim).map(|k| (ci[k] - cj[k]).powi(2)).sum();
            best = best.max(d2.sqrt() + ri + rj);
        }
    }
    best
}

/// Evaluate the tracked lower bound for a coupled model and package it
/// with the computed spectral constant.
///
/// `coupling_b` must be exactly the root part of `tree`, and the union of
/// the coupling sets must have diameter below 2*delta so the coupling
/// kernel's visibility minimum applies to every pair
/// ([`Error::HorizonViolation`] otherwise). A degenerate operator (e.g.
/// G identically zero) yields `computed: None` and a zero tracked bound
/// rather than an error.
#[allow(clippy::too_many_arguments)]
pub fn tracked_bound(
    grid: &GridSpec,
    local: &CellSet,
    total: &DiscreteOperator,
    j: &KernelSpec,
    g: &CouplingSpec,
    delta: f64,
    tree: &DeltaTree,
    coupling_a: CouplingRegion<'_>,
    coupling_b: &[usize],
) -> Result<PoincareReport> {
    let root_cells = &tree.parts[tree.root].cells;
    let mut b_sorted = coupling_b.to_vec();
    b_sorted.sort_unstable();
    if &b_sorted != root_cells {
        return Err(Error::DimensionMismatch(
            "coupling set B must coincide with the root part of the tree".into(),
        ));
    }

    let limit = 2.0 * delta;
    let diam = coupling_diameter(grid, coupling_a, &b_sorted);
    if diam >= limit {
        return Err(Error::HorizonViolation { diam, limit });
    }

    let (_, m_j) = verify_visibility(j, grid.dim, delta, VISIBILITY_SAMPLES);
    let (_, m_g) = verify_visibility_coupling(g, grid.dim, delta, VISIBILITY_SAMPLES);

    let (model, sigma, coupling_measure) = match coupling_a {
        CouplingRegion::Volume(cells) => {
            let s = sigma_local(grid, local, SigmaSubset::Cells(cells))?;
            // Analytic component: a true lower bound for the continuum
            // constant, kept because it is the number the chain tracks.
            (
                "volumetric",
                s.bound,
                cells.len() as f64 * grid.cell_volume(),
            )
        }
        CouplingRegion::Surface(gamma) => {
            // Trace variant: the constrained eigensolve absorbs the trace
            // constant, so the computed value is the sound choice.
            let s = sigma_local(grid, local, SigmaSubset::Faces(gamma))?;
            ("mixed", s.computed, gamma.total_measure())
        }
    };

    let c_t = tree_constant(tree, m_j);
    let coupling = 0.5 * m_g * coupling_measure;
    let tracked = sigma.min(2.0 / c_t).min(m_g * coupling_measure / c_t);

    let computed = match poincare_computed(total) {
        Ok(v) => Some(v),
        Err(Error::DegenerateNullSpace(_)) => None,
        Err(e) => return Err(e),
    };

    let nonlocal_volume: f64 = tree.parts.iter().map(|p| p.volume).sum();
    Ok(PoincareReport {
        model,
        computed,
        tracked,
        components: PoincareComponents {
            sigma,
            coupling,
            tree: c_t,
            m_j,
            m_g,
            coupling_measure,
        },
        tree_degree: tree.degree,
        branch_lengths: tree.branches.iter().map(|b| b.len()).collect(),
        cube_annotation: cube_tree_annotation(grid.dim, nonlocal_volume, delta, m_j),
        exponential_annotation: exponential_annotation(grid.dim, delta, m_j, m_g),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{
        assemble_local as asm_local, assemble_nonlocal, assemble_surface_coupling,
        assemble_volumetric_coupling, sum_blocks, ModelOperators,
    };
    use crate::domain::tree::build_delta_tree;
    use crate::domain::{build_domain, extract_interface, BoxRegion, Role};

    fn pure_nonlocal_unit(h: f64) -> DiscreteOperator {
        let grid = GridSpec::new(1, h, &[[0.0, 1.0]]).unwrap();
        let set = CellSet::new((0..grid.total_cells()).collect(), Role::Nonlocal);
        let num = Numbering::single(grid, set);
        // Indicator with 2*delta covering the domain: J = 1 on every pair.
        let j = KernelSpec::indicator(1.0, 10.0);
        assemble_nonlocal(&num, &j)
    }

    #[test]
    fn pure_nonlocal_constant_is_two_at_any_resolution() {
        for h in [0.25, 0.125, 0.0625] {
            let op = pure_nonlocal_unit(h);
            let lambda = poincare_computed(&op).unwrap();
            assert!(
                (lambda - 2.0).abs() < 1e-9,
                "h = {h}: constant {lambda} != 2"
            );
        }
    }

    #[test]
    fn pure_local_interval_approaches_pi_squared() {
        let grid = GridSpec::new(1, 1.0 / 64.0, &[[0.0, 1.0]]).unwrap();
        let set = CellSet::new((0..64).collect(), Role::Local);
        let num = Numbering::single(grid, set);
        let op = asm_local(&num);
        let lambda = poincare_computed(&op).unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        assert!(
            (lambda - pi2).abs() < 0.002 * pi2,
            "lambda = {lambda} not within 0.2% of pi^2"
        );
    }

    #[test]
    fn decoupled_operator_is_degenerate() {
        let grid = GridSpec::new(1, 0.25, &[[-1.0, 1.0]]).unwrap();
        let dom = build_domain(
            &grid,
            &[BoxRegion::new_1d(0.0, 1.0)],
            &[BoxRegion::new_1d(-1.0, 0.0)],
        )
        .unwrap();
        let num = Numbering::new(grid, dom.local, dom.nonlocal);
        let j = KernelSpec::indicator(1.0, 0.5);
        let g = CouplingSpec::symmetric(KernelSpec::indicator(0.0, 0.5));
        let ops = sum_blocks(
            &num,
            &asm_local(&num),
            &assemble_nonlocal(&num, &j),
            &assemble_volumetric_coupling(&num, &g),
        );
        assert!(matches!(
            poincare_computed(&ops.total),
            Err(Error::DegenerateNullSpace(_))
        ));
    }

    fn interval_tree(h: f64, delta: f64) -> DeltaTree {
        let grid = GridSpec::new(1, h, &[[0.0, 1.0]]).unwrap();
        let set = CellSet::new((0..grid.total_cells()).collect(), Role::Nonlocal);
        build_delta_tree(&grid, &set, delta, None).unwrap()
    }

    #[test]
    fn branch_constant_examples() {
        let tree = interval_tree(0.0625, 0.5);
        assert_eq!(tree.parts.len(), 4);
        // Single part: alpha = 1, no energy terms.
        let (alpha, betas) = branch_constant(&tree, &[0], 1.0).unwrap();
        assert_eq!(alpha, 1.0);
        assert!(betas.is_empty());
        // Equal volumes, length 3: alpha = 1 + 2 + 4 + 8 = 15 and energy
        // coefficients 24, 32, 32 (volumes 1/4 each).
        let (alpha, betas) = branch_constant(&tree, &[0, 1, 2, 3], 1.0).unwrap();
        assert!((alpha - 15.0).abs() < 1e-12);
        let want = [24.0, 32.0, 32.0];
        assert_eq!(betas.len(), 3);
        for (b, w) in betas.iter().zip(want) {
            assert!((b - w).abs() < 1e-9, "beta {b} != {w}");
        }
        // Halving m_J doubles every energy coefficient, alpha unchanged.
        let (alpha_half, betas_half) = branch_constant(&tree, &[0, 1, 2, 3], 0.5).unwrap();
        assert_eq!(alpha_half, alpha);
        for (b2, b1) in betas_half.iter().zip(&betas) {
            assert!((b2 - 2.0 * b1).abs() < 1e-9);
        }
        assert!(matches!(
            branch_constant(&tree, &[], 1.0),
            Err(Error::EmptyBranch)
        ));
    }

    #[test]
    fn tree_constant_unit_interval() {
        // One branch over four equal parts: C = max(15, 24 + 32 + 32) = 88.
        let tree = interval_tree(0.0625, 0.5);
        assert_eq!(tree.branches.len(), 1);
        let c = tree_constant(&tree, 1.0);
        assert!((c - 88.0).abs() < 1e-9, "C = {c}");
        // Remark-style cube annotation dominates it.
        let (first, second) = cube_tree_annotation(1, 1.0, 0.5, 1.0);
        assert_eq!(first, 131072.0);
        assert_eq!(second, 2.0);
        assert!(c <= first * second.max(1.0));
    }

    #[test]
    fn tree_constant_single_part() {
        let tree = interval_tree(0.25, 4.0);
        assert_eq!(tree.parts.len(), 1);
        assert_eq!(tree_constant(&tree, 1.0), 1.0);
    }

    #[test]
    fn tree_constant_infinite_when_kernel_invisible() {
        let tree = interval_tree(0.0625, 0.5);
        assert!(tree_constant(&tree, 0.0).is_infinite());
    }

    #[test]
    fn sigma_interval_full_and_half() {
        let grid = GridSpec::new(1, 1.0 / 64.0, &[[0.0, 1.0]]).unwrap();
        let local = CellSet::new((0..64).collect(), Role::Local);
        let pi2 = std::f64::consts::PI.powi(2);

        let full = sigma_local(&grid, &local, SigmaSubset::Cells(&local.indices)).unwrap();
        let h = 1.0 / 64.0;
        let exact = 2.0 * (1.0 - (std::f64::consts::PI * h).cos()) / (h * h);
        assert!((full.computed - exact).abs() <= 1e-9 * exact);
        assert!((full.bound - pi2 / 4.0).abs() < 1e-12);
        assert!(full.bound <= full.computed);

        let left: Vec<usize> = (0..32).collect();
        let half = sigma_local(&grid, &local, SigmaSubset::Cells(&left)).unwrap();
        assert!((half.bound - pi2 / 10.0).abs() < 1e-12);
        assert!(half.bound <= half.computed);
        // Constraining a smaller set can only lower the constrained min.
        assert!(half.computed <= full.computed + 1e-12);
    }

    #[test]
    fn sigma_trace_subset() {
        let grid = GridSpec::new(1, 0.125, &[[-1.0, 1.0]]).unwrap();
        let dom = build_domain(
            &grid,
            &[BoxRegion::new_1d(0.0, 1.0)],
            &[BoxRegion::new_1d(-1.0, 0.0)],
        )
        .unwrap();
        let gamma = extract_interface(&grid, &dom.local, &[BoxRegion::new_1d(0.0, 0.0)]).unwrap();
        let s = sigma_local(&grid, &dom.local, SigmaSubset::Faces(&gamma)).unwrap();
        assert!(s.computed > 0.0);
        assert!(s.bound <= s.computed);
        assert!(matches!(
            sigma_local(&grid, &dom.local, SigmaSubset::Cells(&[])),
            Err(Error::EmptySubset)
        ));
    }

    /// Two adjacent unit squares, indicator kernels, assembled volumetric.
    fn two_squares(h: f64, j_amp: f64, g_amp: f64, delta: f64) -> TwoSquares {
        let grid = GridSpec::new(2, h, &[[-1.0, 1.0], [0.0, 1.0]]).unwrap();
        let dom = build_domain(
            &grid,
            &[BoxRegion::new_2d([0.0, 0.0], [1.0, 1.0])],
            &[BoxRegion::new_2d([-1.0, 0.0], [0.0, 1.0])],
        )
        .unwrap();
        let num = Numbering::new(grid.clone(), dom.local.clone(), dom.nonlocal.clone());
        let j = KernelSpec::indicator(j_amp, delta);
        let g = CouplingSpec::symmetric(KernelSpec::indicator(g_amp, delta));
        let ops = sum_blocks(
            &num,
            &asm_local(&num),
            &assemble_nonlocal(&num, &j),
            &assemble_volumetric_coupling(&num, &g),
        );
        TwoSquares {
            grid,
            num,
            j,
            g,
            ops,
            delta,
        }
    }

    struct TwoSquares {
        grid: GridSpec,
        num: Numbering,
        j: KernelSpec,
        g: CouplingSpec,
        ops: ModelOperators,
        delta: f64,
    }

    impl TwoSquares {
        /// Tree rooted at the nonlocal cell touching the interface bottom.
        fn tree(&self) -> DeltaTree {
            let hint = self
                .num
                .nonlocal
                .indices
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    let ca = self.grid.cell_center(a);
                    let cb = self.grid.cell_center(b);
                    let da = ca[0].abs() + ca[1];
                    let db = cb[0].abs() + cb[1];
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            build_delta_tree(&self.grid, &self.num.nonlocal, self.delta, Some(hint)).unwrap()
        }

        /// Local cells within `reach` of the origin corner.
        fn coupling_a(&self, reach: f64) -> Vec<usize> {
            self.num
                .local
                .indices
                .iter()
                .copied()
                .filter(|&c| {
                    let p = self.grid.cell_center(c);
                    p[0] < reach && p[1] < reach
                })
                .collect()
        }
    }

    #[test]
    fn tracked_bound_two_squares_sound() {
        let ts = two_squares(0.125, 1.0, 1.0, 0.5);
        let tree = ts.tree();
        let a = ts.coupling_a(0.3);
        let b = tree.parts[tree.root].cells.clone();
        let report = tracked_bound(
            &ts.grid,
            &ts.num.local,
            &ts.ops.total,
            &ts.j,
            &ts.g,
            ts.delta,
            &tree,
            CouplingRegion::Volume(&a),
            &b,
        )
        .unwrap();
        assert_eq!(report.model, "volumetric");
        let computed = report.computed.expect("coupled operator");
        assert!(report.tracked > 0.0, "tracked bound must be positive");
        assert!(
            report.tracked <= computed,
            "soundness violated: tracked {} > computed {}",
            report.tracked,
            computed
        );
        assert!(report.components.sigma > 0.0);
        assert!(report.components.coupling > 0.0);
        assert!(report.components.tree >= 1.0);
        assert!((report.components.m_j - 1.0).abs() < 1e-12);
        assert!((report.components.m_g - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tracked_bound_shrinking_delta_decreases() {
        let h = 1.0 / 16.0;
        let ts_big = two_squares(h, 1.0, 1.0, 0.5);
        let ts_small = two_squares(h, 1.0, 1.0, 0.25);
        let run = |ts: &TwoSquares| {
            let tree = ts.tree();
            let a = ts.coupling_a(0.15);
            let b = tree.parts[tree.root].cells.clone();
            tracked_bound(
                &ts.grid,
                &ts.num.local,
                &ts.ops.total,
                &ts.j,
                &ts.g,
                ts.delta,
                &tree,
                CouplingRegion::Volume(&a),
                &b,
            )
            .unwrap()
            .tracked
        };
        let big = run(&ts_big);
        let small = run(&ts_small);
        assert!(
            small <= big * (1.0 + 1e-12),
            "tracked grew as delta shrank: {small} > {big}"
        );
    }

    #[test]
    fn tracked_bound_monotone_in_kernel_minima() {
        let base = two_squares(0.125, 1.0, 1.0, 0.5);
        let strong_j = two_squares(0.125, 2.0, 1.0, 0.5);
        let strong_g = two_squares(0.125, 1.0, 2.0, 0.5);
        let run = |ts: &TwoSquares| {
            let tree = ts.tree();
            let a = ts.coupling_a(0.3);
            let b = tree.parts[tree.root].cells.clone();
            tracked_bound(
                &ts.grid,
                &ts.num.local,
                &ts.ops.total,
                &ts.j,
                &ts.g,
                ts.delta,
                &tree,
                CouplingRegion::Volume(&a),
                &b,
            )
            .unwrap()
            .tracked
        };
        let t0 = run(&base);
        assert!(run(&strong_j) >= t0 - 1e-15);
        assert!(run(&strong_g) >= t0 - 1e-15);
    }

    #[test]
    fn tracked_bound_degenerate_coupling() {
        let ts = two_squares(0.125, 1.0, 0.0, 0.5);
        let tree = ts.tree();
        let a = ts.coupling_a(0.3);
        let b = tree.parts[tree.root].cells.clone();
        let report = tracked_bound(
            &ts.grid,
            &ts.num.local,
            &ts.ops.total,
            &ts.j,
            &ts.g,
            ts.delta,
            &tree,
            CouplingRegion::Volume(&a),
            &b,
        )
        .unwrap();
        assert_eq!(report.components.m_g, 0.0);
        assert_eq!(report.tracked, 0.0);
        assert!(report.computed.is_none());
    }

    #[test]
    fn tracked_bound_horizon_violation() {
        let ts = two_squares(0.125, 1.0, 1.0, 0.5);
        let tree = ts.tree();
        let b = tree.parts[tree.root].cells.clone();
        // Far corner of the local square: diam(A u B) well above 1.
        let far: Vec<usize> = ts
            .num
            .local
            .indices
            .iter()
            .copied()
            .filter(|&c| {
                let p = ts.grid.cell_center(c);
                p[0] > 0.75 && p[1] > 0.75
            })
            .collect();
        assert!(matches!(
            tracked_bound(
                &ts.grid,
                &ts.num.local,
                &ts.ops.total,
                &ts.j,
                &ts.g,
                ts.delta,
                &tree,
                CouplingRegion::Volume(&far),
                &b,
            ),
            Err(Error::HorizonViolation { .. })
        ));
    }

    #[test]
    fn tracked_bound_mixed_sound() {
        let h = 0.125;
        let grid = GridSpec::new(2, h, &[[-1.0, 1.0], [0.0, 1.0]]).unwrap();
        let dom = build_domain(
            &grid,
            &[BoxRegion::new_2d([0.0, 0.0], [1.0, 1.0])],
            &[BoxRegion::new_2d([-1.0, 0.0], [0.0, 1.0])],
        )
        .unwrap();
        let gamma = extract_interface(
            &grid,
            &dom.local,
            &[BoxRegion::new_2d([0.0, 0.0], [0.0, 1.0])],
        )
        .unwrap();
        let num = Numbering::new(grid.clone(), dom.local.clone(), dom.nonlocal.clone());
        let delta = 0.5;
        let j = KernelSpec::indicator(1.0, delta);
        let g = CouplingSpec::symmetric(KernelSpec::indicator(1.0, delta));
        let ops = sum_blocks(
            &num,
            &asm_local(&num),
            &assemble_nonlocal(&num, &j),
            &assemble_surface_coupling(&num, &gamma, &g),
        );
        // Tree rooted near the interface bottom; Gamma_A = lower faces.
        let hint = num
            .nonlocal
            .indices
            .iter()
            .copied()
            .min_by(|&a, &b| {
                let ca = grid.cell_center(a);
                let cb = grid.cell_center(b);
                (ca[0].abs() + ca[1])
                    .partial_cmp(&(cb[0].abs() + cb[1]))
                    .unwrap()
            })
            .unwrap();
        let tree = build_delta_tree(&grid, &num.nonlocal, delta, Some(hint)).unwrap();
        let b = tree.parts[tree.root].cells.clone();
        let lower = Interface {
            faces: gamma
                .faces
                .iter()
                .filter(|f| f.center[1] < 0.5)
                .cloned()
                .collect(),
            face_measure: gamma.face_measure,
        };
        let report = tracked_bound(
            &grid,
            &num.local,
            &ops.total,
            &j,
            &g,
            delta,
            &tree,
            CouplingRegion::Surface(&lower),
            &b,
        )
        .unwrap();
        assert_eq!(report.model, "mixed");
        let computed = report.computed.expect("coupled operator");
        assert!(report.tracked > 0.0);
        assert!(
            report.tracked <= computed,
            "mixed soundness violated: {} > {}",
            report.tracked,
            computed
        );
    }

    #[test]
    fn tracked_bound_requires_tree_rooted_at_b() {
        let ts = two_squares(0.125, 1.0, 1.0, 0.5);
        let tree = ts.tree();
        let a = ts.coupling_a(0.3);
        let wrong_b = tree.parts[(tree.root + 1) % tree.parts.len()].cells.clone();
        assert!(tracked_bound(
            &ts.grid,
            &ts.num.local,
            &ts.ops.total,
            &ts.j,
            &ts.g,
            ts.delta,
            &tree,
            CouplingRegion::Volume(&a),
            &wrong_b,
        )
        .is_err());
    }
}
