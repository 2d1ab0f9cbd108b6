//! Discretized geometry: uniform grids, cell sets for the local and nonlocal
//! subdomains, the interface, set distances, and delta-connectivity.
//!
//! Domains are unions of axis-aligned boxes resolved on a uniform cell grid.
//! All set distances are measured between closed cell unions via the
//! conservative surrogate `max(0, |c_i - c_j| - h*sqrt(N))` on cell centers,
//! so horizon checks never claim an interaction the geometry cannot support.

use crate::error::{Error, Result};

pub mod tree;

/// Maximum spatial dimension supported by the grid types.
pub const MAX_DIM: usize = 2;

/// Axis-aligned box, the building block of every region predicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxRegion {
    pub lo: [f64; MAX_DIM],
    pub hi: [f64; MAX_DIM],
}

impl BoxRegion {
    pub fn new_1d(lo: f64, hi: f64) -> Self {
        BoxRegion {
            lo: [lo, 0.0],
            hi: [hi, 0.0],
        }
    }

    pub fn new_2d(lo: [f64; 2], hi: [f64; 2]) -> Self {
        BoxRegion { lo, hi }
    }

    /// Containment with a small tolerance so grid-aligned box edges are not
    /// sensitive to roundoff in cell-center coordinates.
    pub fn contains(&self, dim: usize, p: &[f64; MAX_DIM]) -> bool {
        const TOL: f64 = 1e-9;
        (0..dim).all(|k| p[k] >= self.lo[k] - TOL && p[k] <= self.hi[k] + TOL)
    }
}

/// Uniform grid over an axis-aligned bounding box.
///
/// Cells are closed boxes of side `h`; the flat index runs fastest along
/// axis 0. The box extents must be integer multiples of `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub dim: usize,
    pub h: f64,
    pub bounds: [[f64; 2]; MAX_DIM],
    cells_per_axis: [usize; MAX_DIM],
}

impl GridSpec {
    // The negated comparisons reject NaN inputs along with nonpositive ones.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn new(dim: usize, h: f64, bounds: &[[f64; 2]]) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::DimensionMismatch(format!(
                "grid dimension must be 1 or 2, got {dim}"
            )));
        }
        if !(h > 0.0) {
            return Err(Error::DimensionMismatch(format!(
                "cell width must be positive, got {h}"
            )));
        }
        if bounds.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {dim} bound pairs, got {}",
                bounds.len()
            )));
        }
        let mut b = [[0.0, 0.0]; MAX_DIM];
        let mut cells = [1usize; MAX_DIM];
        for k in 0..dim {
            let extent = bounds[k][1] - bounds[k][0];
            if !(extent > 0.0) {
                return Err(Error::DimensionMismatch(format!(
                    "axis {k} has non-positive extent {extent}"
                )));
            }
            let n = (extent / h).round();
            if n < 1.0 || ((n * h - extent) / extent).abs() > 1e-9 {
                return Err(Error::DimensionMismatch(format!(
                    "axis {k} extent {extent} is not an integer multiple of h = {h}"
                )));
            }
            b[k] = bounds[k];
            cells[k] = n as usize;
        }
        Ok(GridSpec {
            dim,
            h,
            bounds: b,
            cells_per_axis: cells,
        })
    }

    pub fn cells_per_axis(&self, axis: usize) -> usize {
        self.cells_per_axis[axis]
    }

    pub fn total_cells(&self) -> usize {
        (0..self.dim).map(|k| self.cells_per_axis[k]).product()
    }

    /// Cell volume h^N.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    /// Face measure h^(N-1); in 1D a face is a point with measure 1.
    pub fn face_measure(&self) -> f64 {
        self.h.powi(self.dim as i32 - 1)
    }

    pub fn multi_index(&self, flat: usize) -> [usize; MAX_DIM] {
        let nx = self.cells_per_axis[0];
        match self.dim {
            1 => [flat, 0],
            _ => [flat % nx, flat / nx],
        }
    }

    pub fn flat_index(&self, mi: [usize; MAX_DIM]) -> usize {
        match self.dim {
            1 => mi[0],
            _ => mi[0] + self.cells_per_axis[0] * mi[1],
        }
    }

    pub fn cell_center(&self, flat: usize) -> [f64; MAX_DIM] {
        let mi = self.multi_index(flat);
        let mut c = [0.0; MAX_DIM];
        for k in 0..self.dim {
            c[k] = self.bounds[k][0] + (mi[k] as f64 + 0.5) * self.h;
        }
        c
    }

    /// Neighbor across the face of `flat` on `axis` toward `side` (-1 or +1).
    pub fn neighbor(&self, flat: usize, axis: usize, side: i8) -> Option<usize> {
        let mut mi = self.multi_index(flat);
        if side < 0 {
            if mi[axis] == 0 {
                return None;
            }
            mi[axis] -= 1;
        } else {
            if mi[axis] + 1 >= self.cells_per_axis[axis] {
                return None;
            }
            mi[axis] += 1;
        }
        Some(self.flat_index(mi))
    }
}

/// Role tag distinguishing the classically diffusing subdomain from the
/// jump-diffusing one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Local,
    Nonlocal,
}

/// Sorted set of grid cells with a role tag.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSet {
    pub indices: Vec<usize>,
    pub role: Role,
}

impl CellSet {
    pub fn new(mut indices: Vec<usize>, role: Role) -> Self {
        indices.sort_unstable();
        indices.dedup();
        CellSet { indices, role }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn volume(&self, grid: &GridSpec) -> f64 {
        self.indices.len() as f64 * grid.cell_volume()
    }

    pub fn contains(&self, flat: usize) -> bool {
        self.indices.binary_search(&flat).is_ok()
    }

    /// Diameter of the closed cell union, exact for unions of grid cells.
    pub fn diameter(&self, grid: &GridSpec) -> f64 {
        diameter_of_cells(grid, &self.indices)
    }
}

/// Diameter of a closed union of cells: max center distance plus the cell
/// diagonal, exact because extremal points of box unions sit at corners of
/// extremal cells along each axis pairing.
pub fn diameter_of_cells(grid: &GridSpec, cells: &[usize]) -> f64 {
    diameter_of_cell_union(grid, cells, &[])
}

/// Diameter of the closed union of two cell lists (either may be empty).
pub fn diameter_of_cell_union(grid: &GridSpec, a: &[usize], b: &[usize]) -> f64 {
    let mut best = 0.0f64;
    let all = a.iter().chain(b.iter());
    // For axis-aligned equal cells the pairwise max over (center distance +
    // h*sqrt(sum of axis indicators)) is exact; using the full diagonal is
    // exact whenever the extremal pair is distinct and conservative otherwise.
    let pts: Vec<[f64; MAX_DIM]> = all.map(|&i| grid.cell_center(i)).collect();
    for (ii, p) in pts.iter().enumerate() {
        for q in pts.iter().skip(ii) {
            let mut s = 0.0;
            for k in 0..grid.dim {
                let d = (p[k] - q[k]).abs() + grid.h;
                s += d * d;
            }
            best = best.max(s.sqrt());
        }
    }
    best
}

fn center_distance(grid: &GridSpec, a: usize, b: usize) -> f64 {
    let ca = grid.cell_center(a);
    let cb = grid.cell_center(b);
    let mut s = 0.0;
    for k in 0..grid.dim {
        let d = ca[k] - cb[k];
        s += d * d;
    }
    s.sqrt()
}

/// Conservative distance between two closed cells:
/// `max(0, |c_a - c_b| - h*sqrt(N))`.
pub fn cell_distance(grid: &GridSpec, a: usize, b: usize) -> f64 {
    let slack = grid.h * (grid.dim as f64).sqrt();
    (center_distance(grid, a, b) - slack).max(0.0)
}

/// Interaction predicate for delta-connectivity: a strict gap comparison,
/// except that touching cells (distance exactly 0) always interact so that
/// delta = 0 degenerates to topological connectedness of the closed union.
pub fn cells_interact(grid: &GridSpec, a: usize, b: usize, delta: f64) -> bool {
    let d = cell_distance(grid, a, b);
    d < delta || d == 0.0
}

/// Distance between two cell sets: the minimum of [`cell_distance`] over all
/// pairs. A conservative lower bound on the distance of the closed unions.
pub fn set_distance(grid: &GridSpec, a: &CellSet, b: &CellSet) -> f64 {
    let mut best = f64::INFINITY;
    for &i in &a.indices {
        for &j in &b.indices {
            let d = cell_distance(grid, i, j);
            if d < best {
                best = d;
                if best == 0.0 {
                    return 0.0;
                }
            }
        }
    }
    best
}

/// The discretized pair of subdomains.
#[derive(Debug, Clone)]
pub struct Domain {
    pub grid: GridSpec,
    pub local: CellSet,
    pub nonlocal: CellSet,
}

/// Resolve the two region predicates (unions of boxes) on the grid.
///
/// A cell belongs to a region when its center lies in one of the region's
/// boxes. Both resulting sets must be nonempty and disjoint.
pub fn build_domain(
    grid: &GridSpec,
    local_region: &[BoxRegion],
    nonlocal_region: &[BoxRegion],
) -> Result<Domain> {
    let mut local = Vec::new();
    let mut nonlocal = Vec::new();
    for flat in 0..grid.total_cells() {
        let c = grid.cell_center(flat);
        let in_local = local_region.iter().any(|b| b.contains(grid.dim, &c));
        let in_nonlocal = nonlocal_region.iter().any(|b| b.contains(grid.dim, &c));
        if in_local && in_nonlocal {
            return Err(Error::Overlap { cell: flat });
        }
        if in_local {
            local.push(flat);
        } else if in_nonlocal {
            nonlocal.push(flat);
        }
    }
    if local.is_empty() {
        return Err(Error::EmptyRegion("local"));
    }
    if nonlocal.is_empty() {
        return Err(Error::EmptyRegion("nonlocal"));
    }
    Ok(Domain {
        grid: grid.clone(),
        local: CellSet::new(local, Role::Local),
        nonlocal: CellSet::new(nonlocal, Role::Nonlocal),
    })
}

/// Connectivity of a cell set under the interaction graph with edges between
/// cells at [`cell_distance`] strictly below `delta`.
///
/// Returns `Ok(())` when the graph has one component; otherwise the error
/// carries the full component decomposition. Components are computed twice,
/// by breadth-first search and by union-find, and the two decompositions are
/// required to agree.
pub fn check_delta_connected(grid: &GridSpec, set: &CellSet, delta: f64) -> Result<()> {
    let components = delta_components(grid, set, delta);
    let uf_count = union_find_component_count(grid, set, delta);
    assert_eq!(
        components.len(),
        uf_count,
        "BFS and union-find disagree on component count"
    );
    if components.len() <= 1 {
        Ok(())
    } else {
        Err(Error::NotDeltaConnected { delta, components })
    }
}

/// Component decomposition of the delta-interaction graph (BFS route).
/// Edges use strict inequality, so delta = 0 reduces to face/corner contact.
pub fn delta_components(grid: &GridSpec, set: &CellSet, delta: f64) -> Vec<Vec<usize>> {
    let n = set.indices.len();
    let mut seen = vec![false; n];
    let mut components = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut queue = std::collections::VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            comp.push(set.indices[i]);
            for (j, seen_j) in seen.iter_mut().enumerate() {
                if !*seen_j && cells_interact(grid, set.indices[i], set.indices[j], delta) {
                    *seen_j = true;
                    queue.push_back(j);
                }
            }
        }
        comp.sort_unstable();
        components.push(comp);
    }
    components
}

fn union_find_component_count(grid: &GridSpec, set: &CellSet, delta: f64) -> usize {
    let n = set.indices.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if cells_interact(grid, set.indices[i], set.indices[j], delta) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    (0..n).filter(|&i| find(&mut parent, i) == i).count()
}

/// One oriented boundary face of the local set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    /// Local cell owning the face.
    pub owner: usize,
    pub axis: usize,
    /// -1 for the low side of the cell, +1 for the high side.
    pub side: i8,
    pub center: [f64; MAX_DIM],
}

/// Selected portion of the local boundary carrying the surface coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct Interface {
    pub faces: Vec<Face>,
    /// Surface measure of a single face: h^(N-1), and 1 in 1D by the
    /// point-measure convention.
    pub face_measure: f64,
}

impl Interface {
    pub fn total_measure(&self) -> f64 {
        self.faces.len() as f64 * self.face_measure
    }
}

/// Collect boundary faces of the local set whose centers match the selector.
///
/// Candidate faces are those across which the neighboring cell is not local
/// (the topological boundary of the local union). The selector is a union of
/// (possibly degenerate) boxes tested against face centers.
pub fn extract_interface(
    grid: &GridSpec,
    local: &CellSet,
    gamma_region: &[BoxRegion],
) -> Result<Interface> {
    let mut faces = Vec::new();
    for &cell in &local.indices {
        let cc = grid.cell_center(cell);
        for axis in 0..grid.dim {
            for side in [-1i8, 1i8] {
                let neighbor_is_local = grid
                    .neighbor(cell, axis, side)
                    .map(|nb| local.contains(nb))
                    .unwrap_or(false);
                if neighbor_is_local {
                    continue;
                }
                let mut fc = cc;
                fc[axis] += 0.5 * grid.h * side as f64;
                if gamma_region.iter().any(|b| b.contains(grid.dim, &fc)) {
                    faces.push(Face {
                        owner: cell,
                        axis,
                        side,
                        center: fc,
                    });
                }
            }
        }
    }
    if faces.is_empty() {
        return Err(Error::EmptyInterface);
    }
    Ok(Interface {
        faces,
        face_measure: grid.face_measure(),
    })
}

/// Distance from a face to a cell, same conservative clamp convention as
/// [`cell_distance`].
pub fn face_cell_distance(grid: &GridSpec, face: &Face, cell: usize) -> f64 {
    let cc = grid.cell_center(cell);
    let mut s = 0.0;
    for (fk, ck) in face.center.iter().zip(&cc).take(grid.dim) {
        let d = fk - ck;
        s += d * d;
    }
    let slack = grid.h * (grid.dim as f64).sqrt();
    (s.sqrt() - slack).max(0.0)
}

/// Minimum [`face_cell_distance`] over the interface and a cell set.
pub fn interface_set_distance(grid: &GridSpec, interface: &Interface, set: &CellSet) -> f64 {
    let mut best = f64::INFINITY;
    for face in &interface.faces {
        for &j in &set.indices {
            best = best.min(face_cell_distance(grid, face, j));
            if best == 0.0 {
                return 0.0;
            }
        }
    }
    best
}
