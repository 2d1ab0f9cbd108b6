//! Discretization of the coupled energies into sparse symmetric operators.
//!
//! Every energy is a sum of difference edges k*(u_i - u_j)^2 plus a source
//! term, so the assembled operator A satisfies E(u) = 1/2 u'Au - sum w_i f_i
//! u_i with A a weighted graph Laplacian. Conventions:
//!
//! * local Dirichlet term: cell-centered finite differences with natural
//!   (do-nothing) Neumann boundary; a face between local cells i, j carries
//!   energy h^N*((u_i-u_j)/h)^2/2, i.e. k = h^(N-2)/2;
//! * nonlocal term: midpoint quadrature on cell-center pairs, exact for
//!   piecewise-constant fields; an unordered pair carries the coefficient
//!   k = J(x_i-x_j) * h^(2N) (the double integral visits each unordered
//!   pair twice and the energy carries the prefactor 1/2);
//! * volumetric coupling: each ordered (local, nonlocal) pair appears once
//!   in the double integral, so k = 1/2 * G(x_i, x_j) * h^(2N);
//! * surface coupling: the trace of u on a face is the owner cell value,
//!   and k = 1/2 * G(z, x_j) * h^(N-1) * h^N per (face, nonlocal cell);
//! * fractional kernels: the center rule as above for non-adjacent pairs;
//!   pairs of cells with center distance < 2h use a fixed product midpoint
//!   rule with 4 points per axis per cell. The continuum cell-pair integral
//!   diverges for s >= 1/2, so the refined rule is a modeling convention:
//!   it keeps the discrete energy finite and deterministic.

use crate::domain::{CellSet, GridSpec, Interface, MAX_DIM};
use crate::error::{Error, Result};
use crate::kernels::{eval_coupling, eval_kernel, CouplingSpec, KernelFamily, KernelSpec};
use crate::sparse::{Csr, Triplets};

/// Global unknown numbering: local cells first (in sorted cell order), then
/// nonlocal cells.
#[derive(Debug, Clone)]
pub struct Numbering {
    pub grid: GridSpec,
    pub local: CellSet,
    pub nonlocal: CellSet,
    pub centers: Vec<[f64; MAX_DIM]>,
}

impl Numbering {
    pub fn new(grid: GridSpec, local: CellSet, nonlocal: CellSet) -> Self {
        let centers = local
            .indices
            .iter()
            .chain(nonlocal.indices.iter())
            .map(|&c| grid.cell_center(c))
            .collect();
        Numbering {
            grid,
            local,
            nonlocal,
            centers,
        }
    }

    /// Numbering over a single cell set (pure nonlocal or pure local
    /// studies); the set keeps its role, the other block is empty.
    pub fn single(grid: GridSpec, set: CellSet) -> Self {
        use crate::domain::Role;
        let empty_role = match set.role {
            Role::Local => Role::Nonlocal,
            Role::Nonlocal => Role::Local,
        };
        let empty = CellSet::new(Vec::new(), empty_role);
        match set.role {
            Role::Local => Numbering::new(grid, set, empty),
            Role::Nonlocal => Numbering::new(grid, empty, set),
        }
    }

    pub fn n(&self) -> usize {
        self.local.len() + self.nonlocal.len()
    }

    pub fn n_local(&self) -> usize {
        self.local.len()
    }

    /// Global index of a local cell.
    pub fn local_global(&self, cell: usize) -> Option<usize> {
        self.local.indices.binary_search(&cell).ok()
    }

    /// Global index of a nonlocal cell.
    pub fn nonlocal_global(&self, cell: usize) -> Option<usize> {
        self.nonlocal
            .indices
            .binary_search(&cell)
            .ok()
            .map(|p| p + self.local.len())
    }

    /// Uniform cell-volume weights w_i = h^N.
    pub fn weights(&self) -> Vec<f64> {
        vec![self.grid.cell_volume(); self.n()]
    }
}

/// Sparse symmetric operator block with its weights and block split.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub matrix: Csr,
    /// Cell-volume weights w_i = h^N, shared across blocks.
    pub weights: Vec<f64>,
    /// Unknowns 0..n_local are local cells, the rest nonlocal.
    pub n_local: usize,
}

impl DiscreteOperator {
    pub fn n(&self) -> usize {
        self.matrix.n
    }

    /// 1/2 u'Au, the quadratic energy carried by this block.
    pub fn energy(&self, u: &[f64]) -> f64 {
        0.5 * self.matrix.quadratic_form(u)
    }
}

/// Source data with its compatibility ledger.
#[derive(Debug, Clone)]
pub struct LoadVector {
    /// Source density per unknown.
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
    /// Sum of w_i f_i; a Neumann problem needs this to vanish.
    pub compatibility_sum: f64,
}

impl LoadVector {
    /// Weighted right-hand side entries w_i f_i.
    pub fn weighted(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(f, w)| f * w)
            .collect()
    }
}

/// The four labeled energy terms; `total` must reproduce
/// 1/2 u'Au - sum w_i f_i u_i of the summed operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    pub local_term: f64,
    pub nonlocal_term: f64,
    pub coupling_term: f64,
    pub source_term: f64,
    pub total: f64,
}

/// Assembled model: the three quadratic blocks and their sum.
#[derive(Debug, Clone)]
pub struct ModelOperators {
    pub local: DiscreteOperator,
    pub nonlocal: DiscreteOperator,
    pub coupling: DiscreteOperator,
    pub total: DiscreteOperator,
}

impl ModelOperators {
    pub fn n(&self) -> usize {
        self.total.n()
    }
}

fn empty_block(num: &Numbering) -> Triplets {
    Triplets::new(num.n())
}

fn finish(num: &Numbering, t: Triplets) -> DiscreteOperator {
    DiscreteOperator {
        matrix: t.to_csr(),
        weights: num.weights(),
        n_local: num.n_local(),
    }
}

/// Local Dirichlet block: one difference edge per interior face of the
/// local set. Boundary faces contribute nothing (natural Neumann flux).
pub fn assemble_local(num: &Numbering) -> DiscreteOperator {
    let grid = &num.grid;
    let k_face = 0.5 * grid.h.powi(grid.dim as i32 - 2);
    let mut t = empty_block(num);
    for (gi, &cell) in num.local.indices.iter().enumerate() {
        for axis in 0..grid.dim {
            // Each interior face visited once from its low-side cell.
            if let Some(nb) = grid.neighbor(cell, axis, 1) {
                if let Some(gj) = num.local_global(nb) {
                    t.add_edge(gi, gj, k_face);
                }
            }
        }
    }
    finish(num, t)
}

/// Nonlocal block: midpoint rule on cell-center pairs of the nonlocal set.
pub fn assemble_nonlocal(num: &Numbering, j: &KernelSpec) -> DiscreteOperator {
    let grid = &num.grid;
    let pair_weight = grid.cell_volume() * grid.cell_volume();
    let support = j.support_radius();
    let mut t = empty_block(num);
    let base = num.n_local();
    let cells = &num.nonlocal.indices;
    for a in 0..cells.len() {
        let ca = grid.cell_center(cells[a]);
        for (b, &cell_b) in cells.iter().enumerate().skip(a + 1) {
            let cb = grid.cell_center(cell_b);
            let mut z = [0.0; MAX_DIM];
            for k in 0..grid.dim {
                z[k] = ca[k] - cb[k];
            }
            if let Some(r) = support {
                let d2: f64 = z[..grid.dim].iter().map(|v| v * v).sum();
                if d2 > r * r {
                    continue;
                }
            }
            let kv = eval_kernel(j, &z[..grid.dim]);
            if kv > 0.0 {
                t.add_edge(base + a, base + b, kv * pair_weight);
            }
        }
    }
    finish(num, t)
}

/// Number of refined points per axis per cell for near-singular pairs.
const FRACTIONAL_REFINE: usize = 4;

/// Fractional block: center rule for separated pairs; pairs with center
/// distance < 2h use the fixed refined product midpoint rule.
pub fn assemble_fractional(num: &Numbering, j: &KernelSpec) -> Result<DiscreteOperator> {
    let (s, _) = match j.family {
        KernelFamily::Fractional { s, epsilon } => (s, epsilon),
        _ => {
            return Err(Error::UnknownModel(
                "assemble_fractional requires a fractional kernel".into(),
            ))
        }
    };
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::InvalidOrder(s));
    }
    let grid = &num.grid;
    let pair_weight = grid.cell_volume() * grid.cell_volume();
    let near = 2.0 * grid.h;
    let mut t = empty_block(num);
    let base = num.n_local();
    let cells = &num.nonlocal.indices;
    for a in 0..cells.len() {
        let ca = grid.cell_center(cells[a]);
        for (b, &cell_b) in cells.iter().enumerate().skip(a + 1) {
            let cb = grid.cell_center(cell_b);
            let mut d2 = 0.0;
            for k in 0..grid.dim {
                let d = ca[k] - cb[k];
                d2 += d * d;
            }
            let k_pair = if d2.sqrt() < near {
                refined_pair_weight(grid, &ca, &cb, j)
            } else {
                let mut z = [0.0; MAX_DIM];
                for k in 0..grid.dim {
                    z[k] = ca[k] - cb[k];
                }
                eval_kernel(j, &z[..grid.dim]) * pair_weight
            };
            t.add_edge(base + a, base + b, k_pair);
        }
    }
    Ok(finish(num, t))
}

/// Refined product midpoint rule over a cell pair: each cell contributes
/// FRACTIONAL_REFINE^N subcell midpoints of weight (h/4)^N.
fn refined_pair_weight(
    grid: &GridSpec,
    ca: &[f64; MAX_DIM],
    cb: &[f64; MAX_DIM],
    j: &KernelSpec,
) -> f64 {
    let m = FRACTIONAL_REFINE;
    let sub = grid.h / m as f64;
    let subvol = sub.powi(grid.dim as i32);
    let offsets: Vec<f64> = (0..m)
        .map(|i| -0.5 * grid.h + (i as f64 + 0.5) * sub)
        .collect();
    let points = |c: &[f64; MAX_DIM]| -> Vec<[f64; MAX_DIM]> {
        let mut pts = Vec::with_capacity(m.pow(grid.dim as u32));
        match grid.dim {
            1 => {
                for &ox in &offsets {
                    pts.push([c[0] + ox, 0.0]);
                }
            }
            _ => {
                for &oy in &offsets {
                    for &ox in &offsets {
                        pts.push([c[0] + ox, c[1] + oy]);
                    }
                }
            }
        }
        pts
    };
    let pa = points(ca);
    let pb = points(cb);
    let mut acc = 0.0;
    for x in &pa {
        for y in &pb {
            let mut z = [0.0; MAX_DIM];
            for k in 0..grid.dim {
                z[k] = x[k] - y[k];
            }
            acc += eval_kernel(j, &z[..grid.dim]);
        }
    }
    acc * subvol * subvol
}

/// Volumetric coupling block over ordered (local, nonlocal) pairs. Each
/// ordered pair occurs once in the energy, hence the single 1/2.
pub fn assemble_volumetric_coupling(num: &Numbering, g: &CouplingSpec) -> DiscreteOperator {
    let grid = &num.grid;
    let pair_weight = 0.5 * grid.cell_volume() * grid.cell_volume();
    let support = g.kernel.support_radius();
    let mut t = empty_block(num);
    let base = num.n_local();
    for (gi, &ci) in num.local.indices.iter().enumerate() {
        let xi = grid.cell_center(ci);
        for (bj, &cj) in num.nonlocal.indices.iter().enumerate() {
            let xj = grid.cell_center(cj);
            if let Some(r) = support {
                let d2: f64 = (0..grid.dim).map(|k| (xi[k] - xj[k]).powi(2)).sum();
                if d2 > r * r {
                    continue;
                }
            }
            let gv = eval_coupling(g, grid.dim, &xi, &xj);
            if gv > 0.0 {
                t.add_edge(gi, base + bj, gv * pair_weight);
            }
        }
    }
    finish(num, t)
}

/// Surface coupling block over (interface face, nonlocal cell) pairs; the
/// trace on a face is its owner cell's value.
pub fn assemble_surface_coupling(
    num: &Numbering,
    gamma: &Interface,
    g: &CouplingSpec,
) -> DiscreteOperator {
    let grid = &num.grid;
    let pair_weight = 0.5 * gamma.face_measure * grid.cell_volume();
    let support = g.kernel.support_radius();
    let mut t = empty_block(num);
    let base = num.n_local();
    for face in &gamma.faces {
        let owner = num
            .local_global(face.owner)
            .expect("interface face owned by a cell outside the local set");
        for (bj, &cj) in num.nonlocal.indices.iter().enumerate() {
            let xj = grid.cell_center(cj);
            if let Some(r) = support {
                let d2: f64 = (0..grid.dim)
                    .map(|k| (face.center[k] - xj[k]).powi(2))
                    .sum();
                if d2 > r * r {
                    continue;
                }
            }
            let gv = eval_coupling(g, grid.dim, &face.center, &xj);
            if gv > 0.0 {
                t.add_edge(owner, base + bj, gv * pair_weight);
            }
        }
    }
    finish(num, t)
}

/// Load vector from cellwise source values (indexed by global unknown).
pub fn assemble_load(num: &Numbering, f: &[f64]) -> Result<LoadVector> {
    if f.len() != num.n() {
        return Err(Error::DimensionMismatch(format!(
            "load has {} entries for {} unknowns",
            f.len(),
            num.n()
        )));
    }
    let weights = num.weights();
    let compatibility_sum = f.iter().zip(&weights).map(|(fi, wi)| fi * wi).sum();
    Ok(LoadVector {
        values: f.to_vec(),
        weights,
        compatibility_sum,
    })
}

/// Sum the three blocks into the full operator.
pub fn sum_blocks(
    num: &Numbering,
    local: &DiscreteOperator,
    nonlocal: &DiscreteOperator,
    coupling: &DiscreteOperator,
) -> ModelOperators {
    let mut t = Triplets::new(num.n());
    for block in [local, nonlocal, coupling] {
        let m = &block.matrix;
        for i in 0..m.n {
            let (cols, vals) = m.row(i);
            for (c, v) in cols.iter().zip(vals) {
                t.push(i, *c as usize, *v);
            }
        }
    }
    ModelOperators {
        local: local.clone(),
        nonlocal: nonlocal.clone(),
        coupling: coupling.clone(),
        total: finish(num, t),
    }
}

/// Four-term energy breakdown at `u`.
pub fn energy(ops: &ModelOperators, f: &LoadVector, u: &[f64]) -> Result<EnergyBreakdown> {
    if u.len() != ops.n() || f.values.len() != ops.n() {
        return Err(Error::DimensionMismatch(format!(
            "energy(): operator n = {}, load n = {}, u n = {}",
            ops.n(),
            f.values.len(),
            u.len()
        )));
    }
    let local_term = ops.local.energy(u);
    let nonlocal_term = ops.nonlocal.energy(u);
    let coupling_term = ops.coupling.energy(u);
    let source_term: f64 = f
        .values
        .iter()
        .zip(&f.weights)
        .zip(u)
        .map(|((fi, wi), ui)| fi * wi * ui)
        .sum();
    Ok(EnergyBreakdown {
        local_term,
        nonlocal_term,
        coupling_term,
        source_term,
        total: local_term + nonlocal_term + coupling_term - source_term,
    })
}
