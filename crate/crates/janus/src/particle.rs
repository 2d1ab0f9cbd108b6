//! Continuous-time jump process whose generator is the assembled operator.
//!
//! The operator A is a symmetric graph Laplacian, so Q = -M^(-1) A is the
//! generator of a conservative Markov jump chain on the cells: off-diagonal
//! rates q_ij = -A_ij / w_i >= 0, exit rates the diagonal. Local difference
//! edges become nearest-neighbor walk rates (the discrete reflected random
//! walk), nonlocal and coupling edges become long-range jumps; no separate
//! crossing rules are needed because the coupling mechanism is already in
//! A's sparsity. Symmetry of A gives detailed balance w_i q_ij = w_j q_ji
//! bitwise, so the volume-weighted uniform law is stationary, and the
//! adjoint identity Q'(w . u) = -Au ties the chain to the deterministic
//! Euler-Lagrange system: at a solution, sources inject and the chain flux
//! removes exactly balanced mass.
//!
//! Randomness: ChaCha8 counter-based streams, one stream per particle
//! derived from (seed, particle index), so trajectories are independent of
//! scheduling; particles are summed in fixed blocks to make the reported
//! occupancy bitwise independent of the thread count.

use crate::assembly::{DiscreteOperator, LoadVector};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Conservative jump chain derived from a discrete operator.
#[derive(Debug, Clone)]
pub struct JumpChain {
    /// Row pointers into `cols`/`rates` (one row per cell).
    row_ptr: Vec<usize>,
    /// Jump targets per row.
    cols: Vec<u32>,
    /// Cumulative rates per row: rates[row_ptr[i]..row_ptr[i+1]] is the
    /// prefix-sum of q_ij within row i, ending at the total exit rate.
    cumulative: Vec<f64>,
    /// Exit rate of each cell (last cumulative entry, 0 for absorbing).
    exit: Vec<f64>,
    /// Cell volumes (the reversing measure, up to normalization).
    pub weights: Vec<f64>,
}

impl JumpChain {
    pub fn n(&self) -> usize {
        self.exit.len()
    }

    /// Exit rate |Q_ii| of a cell.
    pub fn exit_rate(&self, i: usize) -> f64 {
        self.exit[i]
    }

    /// Jump targets and their individual rates for one cell.
    pub fn rates_from(&self, i: usize) -> Vec<(usize, f64)> {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        let mut prev = 0.0;
        let mut out = Vec::with_capacity(hi - lo);
        for k in lo..hi {
            out.push((self.cols[k] as usize, self.cumulative[k] - prev));
            prev = self.cumulative[k];
        }
        out
    }

    /// Stationary law: volumes normalized to a probability vector.
    pub fn stationary(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / total).collect()
    }

    /// Largest violation of w_i q_ij = w_j q_ji over all pairs (exactly
    /// zero for an operator with bitwise-symmetric entries).
    pub fn detailed_balance_error(&self) -> f64 {
        let mut flux = std::collections::HashMap::new();
        for i in 0..self.n() {
            for (j, r) in self.rates_from(i) {
                flux.insert((i, j), self.weights[i] * r);
            }
        }
        let mut worst = 0.0f64;
        for (&(i, j), &fij) in &flux {
            let fji = flux.get(&(j, i)).copied().unwrap_or(0.0);
            worst = worst.max((fij - fji).abs());
        }
        worst
    }
}

/// Derive the jump chain from an assembled operator.
///
/// Rates are q_ij = -A_ij / w_i; a positive off-diagonal entry of A would
/// mean a negative rate and is rejected ([`Error::NegativeRate`]) — it
/// cannot arise from the difference-edge assembly, only from hand-built
/// matrices.
pub fn build_chain(op: &DiscreteOperator) -> Result<JumpChain> {
    let n = op.n();
    let a = &op.matrix;
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut cumulative = Vec::new();
    let mut exit = Vec::with_capacity(n);
    row_ptr.push(0);
    for i in 0..n {
        let (rcols, rvals) = a.row(i);
        let mut acc = 0.0;
        for (&j, &v) in rcols.iter().zip(rvals) {
            if j as usize == i {
                continue;
            }
            let rate = -v / op.weights[i];
            if rate < 0.0 {
                return Err(Error::NegativeRate {
                    i,
                    j: j as usize,
                    value: v,
                });
            }
            if rate > 0.0 {
                acc += rate;
                cols.push(j);
                cumulative.push(acc);
            }
        }
        exit.push(acc);
        row_ptr.push(cols.len());
    }
    Ok(JumpChain {
        row_ptr,
        cols,
        cumulative,
        exit,
        weights: op.weights.clone(),
    })
}

/// Empirical occupancy of a simulation against the stationary law.
#[derive(Debug, Clone)]
pub struct OccupancyReport {
    /// Time-averaged fraction of particle-time per cell; sums to 1.
    pub occupancy: Vec<f64>,
    /// Stationary law (volume-weighted uniform).
    pub expected: Vec<f64>,
    /// Total-variation distance between the two.
    pub tv_distance: f64,
    pub particles: usize,
    pub horizon: f64,
}

/// Particles per accumulation block; fixed so the merge order (and hence
/// the bitwise result) never depends on the thread count.
const PARTICLE_BLOCK: usize = 64;

/// Simulate independent walkers and report time-averaged occupancy.
///
/// Each particle p runs its own ChaCha8 stream (`seed_from_u64(seed)` with
/// stream p+1) from initial cell p mod n: exponential holding times with
/// the cell's exit rate, jump targets by inverse-CDF over the row rates.
/// Blocks of [`PARTICLE_BLOCK`] particles are simulated in parallel and
/// merged in index order, so the output depends only on (chain, particles,
/// horizon, seed).
pub fn simulate_stationary(
    chain: &JumpChain,
    particles: usize,
    horizon: f64,
    seed: u64,
) -> OccupancyReport {
    let n = chain.n();
    assert!(particles >= 1, "need at least one particle");
    assert!(horizon > 0.0, "horizon must be positive");

    let blocks = particles.div_ceil(PARTICLE_BLOCK);
    let partials: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let lo = b * PARTICLE_BLOCK;
            let hi = (lo + PARTICLE_BLOCK).min(particles);
            let mut occ = vec![0.0; n];
            for p in lo..hi {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(p as u64 + 1);
                walk(chain, p % n, horizon, &mut rng, &mut occ);
            }
            occ
        })
        .collect();

    let mut occupancy = vec![0.0; n];
    for part in &partials {
        for (o, p) in occupancy.iter_mut().zip(part) {
            *o += p;
        }
    }
    let total = particles as f64 * horizon;
    for o in occupancy.iter_mut() {
        *o /= total;
    }

    let expected = chain.stationary();
    let tv_distance = 0.5
        * occupancy
            .iter()
            .zip(&expected)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    OccupancyReport {
        occupancy,
        expected,
        tv_distance,
        particles,
        horizon,
    }
}

/// One trajectory; adds holding times into `occ` (unnormalized).
fn walk(chain: &JumpChain, start: usize, horizon: f64, rng: &mut ChaCha8Rng, occ: &mut [f64]) {
    let mut cell = start;
    let mut t = 0.0;
    while t < horizon {
        let lambda = chain.exit[cell];
        if lambda <= 0.0 {
            occ[cell] += horizon - t;
            return;
        }
        // U in (0, 1]: -ln is finite.
        let u: f64 = 1.0 - rng.random::<f64>();
        let dt = -u.ln() / lambda;
        let stay = dt.min(horizon - t);
        occ[cell] += stay;
        t += dt;
        if t >= horizon {
            return;
        }
        // Inverse CDF over the cumulative row rates.
        let target: f64 = rng.random::<f64>() * lambda;
        let lo = chain.row_ptr[cell];
        let hi = chain.row_ptr[cell + 1];
        let row = &chain.cumulative[lo..hi];
        let k = row.partition_point(|&c| c <= target).min(row.len() - 1);
        cell = chain.cols[lo + k] as usize;
    }
}

/// Relative norm of Q'(w . u) + Mf: the stationarity identity that links
/// the chain to the Euler-Lagrange system (Q'Mu = -Au, so a converged
/// solution leaves a residual at the solver tolerance).
///
/// Evaluated from the chain's own rate tables — not by shortcutting
/// through A — so it genuinely validates the chain construction.
pub fn source_balance_check(chain: &JumpChain, f: &LoadVector, u: &[f64]) -> Result<f64> {
    let n = chain.n();
    if u.len() != n || f.values.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "source_balance_check: chain n = {n}, load n = {}, u n = {}",
            f.values.len(),
            u.len()
        )));
    }
    let v: Vec<f64> = u
        .iter()
        .zip(&chain.weights)
        .map(|(ui, wi)| ui * wi)
        .collect();
    let mut flux = vec![0.0; n];
    for i in 0..n {
        for (j, r) in chain.rates_from(i) {
            flux[j] += r * v[i];
        }
        flux[i] -= chain.exit[i] * v[i];
    }
    let mf = f.weighted();
    let mismatch: f64 = flux
        .iter()
        .zip(&mf)
        .map(|(q, b)| (q + b) * (q + b))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = mf.iter().map(|b| b * b).sum::<f64>().sqrt();
    Ok(mismatch / scale.max(f64::MIN_POSITIVE))
}
