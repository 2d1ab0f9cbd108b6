//! Delta-tree covering of the nonlocal subdomain.
//!
//! The nonlocal cell set is partitioned into axis-aligned blocks ("parts") of
//! diameter at most delta/2, and the parts are organized into a rooted tree of
//! branches grown greedily: starting from the root, a branch repeatedly
//! appends the nearest unused part within distance delta of its current tail;
//! when the tail has no candidate the branch closes, further branches are
//! grown from already-placed parts in placement order until every part is
//! used. Consecutive branch elements then satisfy diam(B u B~) < 2*delta,
//! which is what the branch inequality of the constant-tracking module needs.

use super::{cell_distance, CellSet, GridSpec};
use crate::error::{Error, Result};

/// One part of the covering: a block of cells with diameter <= delta/2.
#[derive(Debug, Clone, PartialEq)]
pub struct Part {
    pub cells: Vec<usize>,
    pub volume: f64,
}

/// A branch: the index of its root part and the ordered member parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub root: usize,
    pub members: Vec<usize>,
}

impl Branch {
    /// Branch length counts members only, not the root.
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// The full part sequence B_0, ..., B_n starting at the root.
    pub fn sequence(&self) -> Vec<usize> {
        let mut seq = Vec::with_capacity(1 + self.members.len());
        seq.push(self.root);
        seq.extend_from_slice(&self.members);
        seq
    }
}

/// Rooted covering tree of the nonlocal set.
#[derive(Debug, Clone)]
pub struct DeltaTree {
    pub delta: f64,
    pub parts: Vec<Part>,
    pub root: usize,
    pub branches: Vec<Branch>,
    /// Parent part per part; `None` exactly at the root.
    pub parent: Vec<Option<usize>>,
    /// Maximum number of branches rooted at a single part.
    pub degree: usize,
    /// Maximum branch length (members, excluding the root).
    pub max_branch_len: usize,
}

impl DeltaTree {
    /// Distance between two parts under the conservative cell metric.
    pub fn part_distance(&self, grid: &GridSpec, a: usize, b: usize) -> f64 {
        part_distance(grid, &self.parts[a], &self.parts[b])
    }
}

fn part_distance(grid: &GridSpec, a: &Part, b: &Part) -> f64 {
    let mut best = f64::INFINITY;
    for &i in &a.cells {
        for &j in &b.cells {
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

/// Partition `set` into axis-aligned blocks whose side is delta/(2*sqrt(N))
/// snapped down to a multiple of h, then grow the branch structure.
///
/// `root_hint` names a cell; the part containing it becomes the root B_0.
/// Without a hint the part with the lowest cell index is the root.
pub fn build_delta_tree(
    grid: &GridSpec,
    set: &CellSet,
    delta: f64,
    root_hint: Option<usize>,
) -> Result<DeltaTree> {
    super::check_delta_connected(grid, set, delta)?;
    let side_limit = delta / (2.0 * (grid.dim as f64).sqrt());
    let cells_per_block = (side_limit / grid.h + 1e-9).floor() as i64;
    if cells_per_block < 1 {
        return Err(Error::HorizonTooSmall {
            limit: side_limit,
            h: grid.h,
        });
    }
    let parts = make_parts(grid, set, cells_per_block as usize);

    let root = match root_hint {
        Some(cell) => parts
            .iter()
            .position(|p| p.cells.binary_search(&cell).is_ok())
            .ok_or(Error::EmptyRegion("root hint outside the nonlocal set"))?,
        None => 0,
    };

    let n = parts.len();
    let mut used = vec![false; n];
    used[root] = true;
    let mut placement = vec![root];
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut branches: Vec<Branch> = Vec::new();

    let mut cursor = 0;
    while placement.len() < n {
        if cursor >= placement.len() {
            // Unreachable when the connectivity precondition holds; reported
            // as a connectivity failure over the leftover parts.
            let leftovers: Vec<Vec<usize>> = parts
                .iter()
                .enumerate()
                .filter(|(i, _)| !used[*i])
                .map(|(_, p)| p.cells.clone())
                .collect();
            return Err(Error::NotDeltaConnected {
                delta,
                components: leftovers,
            });
        }
        let branch_root = placement[cursor];
        let mut members = Vec::new();
        let mut tail = branch_root;
        loop {
            let candidate = (0..n)
                .filter(|&q| !used[q])
                .find(|&q| part_distance(grid, &parts[tail], &parts[q]) < delta);
            match candidate {
                Some(q) => {
                    used[q] = true;
                    parent[q] = Some(tail);
                    placement.push(q);
                    members.push(q);
                    tail = q;
                }
                None => break,
            }
        }
        if members.is_empty() {
            cursor += 1;
        } else {
            branches.push(Branch {
                root: branch_root,
                members,
            });
        }
    }

    let degree = (0..n)
        .map(|p| branches.iter().filter(|b| b.root == p).count())
        .max()
        .unwrap_or(0);
    let max_branch_len = branches.iter().map(|b| b.len()).max().unwrap_or(0);
    Ok(DeltaTree {
        delta,
        parts,
        root,
        branches,
        parent,
        degree,
        max_branch_len,
    })
}

/// Group cells of `set` into blocks of `m` cells per axis, anchored at the
/// set's minimal multi-index. Parts are ordered by their lowest cell index.
fn make_parts(grid: &GridSpec, set: &CellSet, m: usize) -> Vec<Part> {
    let mut min_mi = [usize::MAX; super::MAX_DIM];
    for &cell in &set.indices {
        let mi = grid.multi_index(cell);
        for k in 0..grid.dim {
            min_mi[k] = min_mi[k].min(mi[k]);
        }
    }
    let mut blocks: std::collections::BTreeMap<[usize; super::MAX_DIM], Vec<usize>> =
        std::collections::BTreeMap::new();
    for &cell in &set.indices {
        let mi = grid.multi_index(cell);
        let mut key = [0usize; super::MAX_DIM];
        for k in 0..grid.dim {
            key[k] = (mi[k] - min_mi[k]) / m;
        }
        blocks.entry(key).or_default().push(cell);
    }
    let mut parts: Vec<Part> = blocks
        .into_values()
        .map(|mut cells| {
            cells.sort_unstable();
            let volume = cells.len() as f64 * grid.cell_volume();
            Part { cells, volume }
        })
        .collect();
    parts.sort_by_key(|p| p.cells[0]);
    parts
}
