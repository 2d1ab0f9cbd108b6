//! From a validated config to a runnable problem instance.
//!
//! The builder resolves regions on the grid, assembles the operator
//! blocks the model tag calls for, and materializes the source term. The
//! constant-tracking setup (delta-tree, coupling sets A and B) is derived
//! here too: B is always the root part of the tree, rooted by default at
//! the nonlocal cell nearest the local region, and A is grown greedily
//! from the side of the local region (cells, or interface faces for the
//! mixed models) while the union A u B stays strictly inside one
//! 2*delta-visibility ball. Config overrides (`coupling` block) replace
//! the defaults but are still checked, never trusted.

use crate::analysis::{coupling_diameter, tracked_bound, CouplingRegion, PoincareReport};
use crate::assembly::{
    assemble_fractional, assemble_load, assemble_local, assemble_nonlocal,
    assemble_surface_coupling, assemble_volumetric_coupling, sum_blocks, LoadVector,
    ModelOperators, Numbering,
};
use crate::config::{CouplingConfig, ProblemConfig, SimulateConfig, SolverConfig, SourceConfig};
use crate::domain::tree::{build_delta_tree, DeltaTree};
use crate::domain::{
    build_domain, cell_distance, check_delta_connected, delta_components, extract_interface,
    face_cell_distance, Face, GridSpec, Interface,
};
use crate::error::{Error, Result};
use crate::kernels::{
    verify_proximity, verify_proximity_interface, verify_visibility, verify_visibility_coupling,
    CouplingSpec, KernelSpec,
};
use crate::solver::SolveOptions;

/// Everything a subcommand needs: numbering, assembled blocks, source,
/// and the knobs carried over from the config.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub model: crate::config::ModelTag,
    pub numbering: Numbering,
    /// The coupling interface; present exactly for mixed models.
    pub interface: Option<Interface>,
    pub operators: ModelOperators,
    pub load: LoadVector,
    pub kernel_j: KernelSpec,
    pub coupling_g: CouplingSpec,
    /// Interaction horizon: the jump kernel's delta.
    pub delta: f64,
    pub solver: SolverConfig,
    pub simulate: SimulateConfig,
    pub coupling_cfg: CouplingConfig,
}

impl ProblemInstance {
    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            jacobi: self.solver.preconditioner,
            initial_guess: None,
        }
    }
}

/// Resolve regions, assemble the model's operator blocks, and build the
/// source vector.
pub fn build_problem(cfg: &ProblemConfig) -> Result<ProblemInstance> {
    let grid = GridSpec::new(cfg.dim, cfg.h, &cfg.bounds)?;
    let dom = build_domain(&grid, &cfg.local_boxes, &cfg.nonlocal_boxes)?;
    let numbering = Numbering::new(dom.grid, dom.local, dom.nonlocal);

    let interface = if cfg.model.is_mixed() {
        Some(extract_interface(
            &numbering.grid,
            &numbering.local,
            &cfg.gamma_boxes,
        )?)
    } else {
        None
    };

    let coupling_g = cfg.coupling_spec();
    let local_block = assemble_local(&numbering);
    let nonlocal_block = if cfg.model.is_fractional() {
        assemble_fractional(&numbering, &cfg.kernel_j)?
    } else {
        assemble_nonlocal(&numbering, &cfg.kernel_j)
    };
    let coupling_block = match &interface {
        Some(gamma) => assemble_surface_coupling(&numbering, gamma, &coupling_g),
        None => assemble_volumetric_coupling(&numbering, &coupling_g),
    };
    let operators = sum_blocks(&numbering, &local_block, &nonlocal_block, &coupling_block);
    let load = build_load(&numbering, &cfg.source)?;

    Ok(ProblemInstance {
        model: cfg.model,
        numbering,
        interface,
        operators,
        load,
        kernel_j: cfg.kernel_j,
        coupling_g,
        delta: cfg.kernel_j.delta,
        solver: cfg.solver.clone(),
        simulate: cfg.simulate.clone(),
        coupling_cfg: cfg.coupling.clone(),
    })
}

/// Materialize the source on the global numbering.
fn build_load(num: &Numbering, source: &SourceConfig) -> Result<LoadVector> {
    let n = num.n();
    let mut f = vec![0.0; n];
    match source {
        SourceConfig::BalancedStep { amplitude } => {
            let n_local = num.n_local();
            let n_nonlocal = n - n_local;
            if n_nonlocal == 0 {
                return Err(Error::EmptyRegion("balanced step needs a nonlocal region"));
            }
            let negative = -amplitude * n_local as f64 / n_nonlocal as f64;
            for v in f.iter_mut().take(n_local) {
                *v = *amplitude;
            }
            for v in f.iter_mut().skip(n_local) {
                *v = negative;
            }
        }
        SourceConfig::Boxes(list) => {
            for (i, v) in f.iter_mut().enumerate() {
                let c = num.centers[i];
                if let Some(&(_, value)) = list.iter().find(|(b, _)| b.contains(num.grid.dim, &c)) {
                    *v = value;
                }
            }
        }
    }
    assemble_load(num, &f)
}

// ---------------------------------------------------------------------------
// Constant-tracking setup.

/// Resolved tree and coupling sets for the tracked bound.
#[derive(Debug, Clone)]
pub struct PoincareSetup {
    pub tree: DeltaTree,
    /// Coupling set B: the root part of the tree.
    pub coupling_b: Vec<usize>,
    /// Volumetric coupling set A (empty for mixed models).
    pub a_cells: Vec<usize>,
    /// Mixed coupling set Gamma_A (None for volumetric models).
    pub a_faces: Option<Interface>,
}

/// Nonlocal cell nearest the local region; ties resolve to the lowest
/// index, so the default tree root is deterministic.
fn default_root(inst: &ProblemInstance) -> usize {
    let grid = &inst.numbering.grid;
    let mut best = (f64::INFINITY, usize::MAX);
    for &nl in &inst.numbering.nonlocal.indices {
        let d = inst
            .numbering
            .local
            .indices
            .iter()
            .map(|&lc| cell_distance(grid, nl, lc))
            .fold(f64::INFINITY, f64::min);
        if d < best.0 {
            best = (d, nl);
        }
    }
    best.1
}

fn grow_volume_a(grid: &GridSpec, local: &[usize], b: &[usize], delta: f64) -> Result<Vec<usize>> {
    let limit = 2.0 * delta;
    let mut cands: Vec<(f64, usize)> = local
        .iter()
        .map(|&c| {
            let d = b
                .iter()
                .map(|&bb| cell_distance(grid, c, bb))
                .fold(f64::INFINITY, f64::min);
            (d, c)
        })
        .collect();
    cands.sort_by(|x, y| x.partial_cmp(y).expect("distances are finite"));
    let mut a = Vec::new();
    for &(d, c) in &cands {
        if d >= limit {
            break;
        }
        a.push(c);
        if coupling_diameter(grid, CouplingRegion::Volume(&a), b) >= limit {
            a.pop();
        }
    }
    if a.is_empty() {
        let diam = coupling_diameter(grid, CouplingRegion::Volume(&[cands[0].1]), b);
        return Err(Error::HorizonViolation { diam, limit });
    }
    a.sort_unstable();
    Ok(a)
}

fn grow_surface_a(
    grid: &GridSpec,
    gamma: &Interface,
    b: &[usize],
    delta: f64,
) -> Result<Interface> {
    let limit = 2.0 * delta;
    let mut cands: Vec<(f64, &Face)> = gamma
        .faces
        .iter()
        .map(|face| {
            let d = b
                .iter()
                .map(|&bb| face_cell_distance(grid, face, bb))
                .fold(f64::INFINITY, f64::min);
            (d, face)
        })
        .collect();
    cands.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("distances are finite"));
    let mut faces: Vec<Face> = Vec::new();
    for &(d, face) in &cands {
        if d >= limit {
            break;
        }
        faces.push(*face);
        let probe = Interface {
            faces: faces.clone(),
            face_measure: gamma.face_measure,
        };
        if coupling_diameter(grid, CouplingRegion::Surface(&probe), b) >= limit {
            faces.pop();
        }
    }
    if faces.is_empty() {
        let probe = Interface {
            faces: vec![*cands[0].1],
            face_measure: gamma.face_measure,
        };
        let diam = coupling_diameter(grid, CouplingRegion::Surface(&probe), b);
        return Err(Error::HorizonViolation { diam, limit });
    }
    Ok(Interface {
        faces,
        face_measure: gamma.face_measure,
    })
}

/// Build the tree and the coupling sets, honoring config overrides.
pub fn poincare_setup(inst: &ProblemInstance) -> Result<PoincareSetup> {
    let grid = &inst.numbering.grid;
    let root_hint = inst.coupling_cfg.root.unwrap_or_else(|| default_root(inst));
    let tree = build_delta_tree(grid, &inst.numbering.nonlocal, inst.delta, Some(root_hint))?;
    let coupling_b = tree.parts[tree.root].cells.clone();

    match &inst.interface {
        None => {
            let a_cells = if inst.coupling_cfg.a_boxes.is_empty() {
                grow_volume_a(grid, &inst.numbering.local.indices, &coupling_b, inst.delta)?
            } else {
                let cells: Vec<usize> = inst
                    .numbering
                    .local
                    .indices
                    .iter()
                    .copied()
                    .filter(|&c| {
                        let center = grid.cell_center(c);
                        inst.coupling_cfg
                            .a_boxes
                            .iter()
                            .any(|b| b.contains(grid.dim, &center))
                    })
                    .collect();
                if cells.is_empty() {
                    return Err(Error::EmptyRegion("coupling a_box selects no local cell"));
                }
                cells
            };
            Ok(PoincareSetup {
                tree,
                coupling_b,
                a_cells,
                a_faces: None,
            })
        }
        Some(gamma) => {
            let a_faces = if inst.coupling_cfg.a_boxes.is_empty() {
                grow_surface_a(grid, gamma, &coupling_b, inst.delta)?
            } else {
                let faces: Vec<Face> = gamma
                    .faces
                    .iter()
                    .filter(|f| {
                        inst.coupling_cfg
                            .a_boxes
                            .iter()
                            .any(|b| b.contains(grid.dim, &f.center))
                    })
                    .cloned()
                    .collect();
                if faces.is_empty() {
                    return Err(Error::EmptyRegion(
                        "coupling a_box selects no interface face",
                    ));
                }
                Interface {
                    faces,
                    face_measure: gamma.face_measure,
                }
            };
            Ok(PoincareSetup {
                tree,
                coupling_b,
                a_cells: Vec::new(),
                a_faces: Some(a_faces),
            })
        }
    }
}

/// Tracked bound plus computed constant for an instance, with the setup
/// that produced them.
pub fn poincare_report(inst: &ProblemInstance) -> Result<(PoincareReport, PoincareSetup)> {
    let setup = poincare_setup(inst)?;
    let region = match &setup.a_faces {
        Some(g) => CouplingRegion::Surface(g),
        None => CouplingRegion::Volume(&setup.a_cells),
    };
    let report = tracked_bound(
        &inst.numbering.grid,
        &inst.numbering.local,
        &inst.operators.total,
        &inst.kernel_j,
        &inst.coupling_g,
        inst.delta,
        &setup.tree,
        region,
        &setup.coupling_b,
    )?;
    Ok((report, setup))
}

// ---------------------------------------------------------------------------
// Domain hypotheses report.

/// Pass/fail record for the standing hypotheses on an instance's
/// geometry and kernels.
#[derive(Debug, Clone)]
pub struct DomainCheck {
    pub n_local: usize,
    pub n_nonlocal: usize,
    pub delta: f64,
    /// (P1): the nonlocal region is delta-connected.
    pub connected: bool,
    /// Number of delta-components (1 when connected).
    pub components: usize,
    /// (P2): the coupled sets are within reach of the horizon.
    pub proximate: bool,
    /// (J1): jump kernel uniformly positive on the 2*delta ball (sampled
    /// minimum m_J).
    pub m_j: f64,
    /// (G1): coupling kernel uniformly positive on the 2*delta ball
    /// (sampled minimum m_G, including asymmetry factors).
    pub m_g: f64,
    /// Tree shape when (P1) holds: parts, degree, longest branch.
    pub tree_shape: Option<(usize, usize, usize)>,
}

impl DomainCheck {
    pub fn all_pass(&self) -> bool {
        self.connected && self.proximate && self.m_j > 0.0 && self.m_g > 0.0
    }
}

/// Evaluate (P1), (P2), (J1), (G1) on a built instance.
pub fn check_domain(inst: &ProblemInstance) -> DomainCheck {
    let grid = &inst.numbering.grid;
    let nonlocal = &inst.numbering.nonlocal;
    let connected = check_delta_connected(grid, nonlocal, inst.delta).is_ok();
    let components = delta_components(grid, nonlocal, inst.delta).len();
    let proximate = match &inst.interface {
        Some(gamma) => verify_proximity_interface(grid, gamma, nonlocal, inst.delta),
        None => verify_proximity(grid, &inst.numbering.local, nonlocal, inst.delta),
    };
    let (_, m_j) = verify_visibility(&inst.kernel_j, grid.dim, inst.delta, 128);
    let (_, m_g) = verify_visibility_coupling(&inst.coupling_g, grid.dim, inst.delta, 128);
    let tree_shape = if connected {
        build_delta_tree(grid, nonlocal, inst.delta, None)
            .ok()
            .map(|t| (t.parts.len(), t.degree, t.max_branch_len))
    } else {
        None
    };
    DomainCheck {
        n_local: inst.numbering.local.len(),
        n_nonlocal: nonlocal.len(),
        delta: inst.delta,
        connected,
        components,
        proximate,
        m_j,
        m_g,
        tree_shape,
    }
}
