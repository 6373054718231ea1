//! The alternating projection optimiser.
//!
//! Maximises `f(U, Q) = ‖Uᵀ Φ Q‖_F²` over blockwise partial permutations `U`
//! and blockwise semi-orthogonal `Q`. With `S = Σ_i P_iᵀ Φ_i C_i` (`d × b'`)
//! we have `f = ‖S‖²`; every product is formed in the factored order, so
//! neither `Φ Q Qᵀ Φᵀ` (`m × m`) nor `Φᵀ U Uᵀ Φ` (`kb × kb`) is ever built.
//! `U` is kept as index lists: products with it are gathers and scatters.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{project_blocks, AuctionConfig, PartialPermutation};
use crate::fmap::PairwiseMap;
use crate::ortho::project_blocks_q;
use crate::spectral::SpectralBasis;
use crate::universe::{UniverseMaps, UniverseMatching};
use crate::{Error, Result};

/// Block-diagonal `Φ = diag(Φ_1, …, Φ_k)`, stored as its blocks.
#[derive(Clone, Debug)]
pub struct StackedBasis {
    blocks: Vec<DMatrix<f64>>,
}

impl StackedBasis {
    pub fn new(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let b = blocks
            .first()
            .ok_or_else(|| Error::InvalidArgument("no basis blocks".into()))?
            .ncols();
        if let Some(i) = blocks.iter().position(|p| p.ncols() != b) {
            return Err(Error::Dimension(format!("basis block {i} has {} columns, expected {b}", blocks[i].ncols())));
        }
        Ok(StackedBasis { blocks })
    }

    /// First `b` eigenfunctions of each basis.
    pub fn from_bases(bases: &[SpectralBasis], b: usize) -> Result<Self> {
        if let Some(i) = bases.iter().position(|s| s.size() < b) {
            return Err(Error::Dimension(format!("basis {i} has {} < {b} functions", bases[i].size())));
        }
        Self::new(bases.iter().map(|s| s.phi.columns(0, b).into_owned()).collect())
    }

    pub fn num_shapes(&self) -> usize {
        self.blocks.len()
    }

    pub fn basis_size(&self) -> usize {
        self.blocks[0].ncols()
    }

    pub fn block(&self, i: usize) -> &DMatrix<f64> {
        &self.blocks[i]
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(DMatrix::nrows).collect()
    }
}

fn check_dims(u: &UniverseMatching, q: &UniverseMaps, phi: &StackedBasis) -> Result<()> {
    let k = phi.num_shapes();
    if u.num_shapes() != k || q.num_shapes() != k {
        return Err(Error::Dimension(format!(
            "{} matchings, {} maps, {} bases",
            u.num_shapes(),
            q.num_shapes(),
            k
        )));
    }
    if q.rows() != phi.basis_size() {
        return Err(Error::Dimension(format!("maps have {} rows, basis size is {}", q.rows(), phi.basis_size())));
    }
    if u.block_sizes() != phi.block_sizes() {
        return Err(Error::Dimension("matching block sizes differ from basis block sizes".into()));
    }
    Ok(())
}

/// `A_i = Φ_i C_i` for every shape.
fn aligned_blocks(q: &UniverseMaps, phi: &StackedBasis) -> Vec<DMatrix<f64>> {
    (0..phi.num_shapes())
        .into_par_iter()
        .map(|i| phi.block(i) * q.block(i))
        .collect()
}

/// `S = Σ_i P_iᵀ A_i` by scattering rows into universe order.
fn universe_sum(u: &UniverseMatching, aligned: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(u.universe_size(), aligned[0].ncols());
    for (i, a) in aligned.iter().enumerate() {
        for (v, &p) in u.block(i).iter().enumerate() {
            let mut row = s.row_mut(p);
            row += a.row(v);
        }
    }
    s
}

/// The `d × b'` universe matrix `S = Uᵀ Φ Q`.
pub fn universe_matrix(u: &UniverseMatching, q: &UniverseMaps, phi: &StackedBasis) -> Result<DMatrix<f64>> {
    check_dims(u, q, phi)?;
    Ok(universe_sum(u, &aligned_blocks(q, phi)))
}

/// `f(U, Q) = ‖Uᵀ Φ Q‖_F²`.
pub fn objective(u: &UniverseMatching, q: &UniverseMaps, phi: &StackedBasis) -> Result<f64> {
    Ok(universe_matrix(u, q, phi)?.norm_squared())
}

/// Per-block U-update scores `[Φ Q Qᵀ Φᵀ U]_i = A_i Sᵀ` (`m_i × d`).
pub fn u_scores(u: &UniverseMatching, q: &UniverseMaps, phi: &StackedBasis) -> Result<Vec<DMatrix<f64>>> {
    check_dims(u, q, phi)?;
    let a = aligned_blocks(q, phi);
    let bt = universe_sum(u, &a).transpose();
    Ok(a.par_iter().map(|ai| ai * &bt).collect())
}

/// Per-block Q-update scores `[Φᵀ U Uᵀ Φ Q]_i = Φ_iᵀ S[P_i]` (`b × b'`).
pub fn q_scores(u: &UniverseMatching, q: &UniverseMaps, phi: &StackedBasis) -> Result<Vec<DMatrix<f64>>> {
    let s = universe_matrix(u, q, phi)?;
    Ok((0..phi.num_shapes())
        .into_par_iter()
        .map(|i| {
            let gathered = s.select_rows(u.block(i));
            phi.block(i).tr_mul(&gathered)
        })
        .collect())
}

fn block_inner(score: &DMatrix<f64>, assign: &[usize]) -> f64 {
    assign.iter().enumerate().map(|(r, &c)| score[(r, c)]).sum()
}

/// `U_{t+1} = proj_P(Φ Q Qᵀ Φᵀ U_t)`: one assignment per shape.
///
/// A block keeps its previous assignment unless the new one strictly improves
/// its linear score, so ties and profit rounding never undo progress.
pub fn u_update(u: &UniverseMatching, q: &UniverseMaps, phi: &StackedBasis, lap: &AuctionConfig) -> Result<UniverseMatching> {
    let scores = u_scores(u, q, phi)?;
    let solved = project_blocks(&scores, lap)?;
    let blocks = solved
        .into_iter()
        .zip(&scores)
        .enumerate()
        .map(|(i, (p, score))| {
            let old = u.block(i);
            if block_inner(score, p.assignment()) > block_inner(score, old) {
                p.into_assignment()
            } else {
                old.to_vec()
            }
        })
        .collect();
    UniverseMatching::new(blocks, u.universe_size())
}

/// `Q_{t+1} = proj_O(Φᵀ U Uᵀ Φ Q_t)`: one SVD per shape.
pub fn q_update(u: &UniverseMatching, q: &UniverseMaps, phi: &StackedBasis) -> Result<UniverseMaps> {
    let scores = q_scores(u, q, phi)?;
    let projected = project_blocks_q(&scores)?;
    let blocks = projected
        .into_iter()
        .zip(&scores)
        .enumerate()
        .map(|(i, (p, score))| {
            let old = q.block(i);
            if score.dot(&p.values) >= score.dot(old) {
                p.values
            } else {
                old.clone()
            }
        })
        .collect();
    UniverseMaps::new(blocks)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Stop once `f_t / f_{t+1} ≥ 1 − epsilon`.
    pub epsilon: f64,
    pub max_iters: usize,
    pub auction: AuctionConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: 2.2e-16,
            max_iters: 200,
            auction: AuctionConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    /// Relative improvement fell below epsilon.
    Converged,
    /// Hit `max_iters` first.
    MaxIterations,
    /// The objective was zero; the stopping ratio is undefined.
    ZeroObjective,
}

#[derive(Clone, Debug)]
pub struct SolverState {
    pub u: UniverseMatching,
    pub q: UniverseMaps,
    pub iteration: usize,
    /// `f(U_t, Q_t)` for `t = 0..=iteration`.
    pub trace: Vec<f64>,
    /// `f(U_{t+1}, Q_t)` after each U-update.
    pub u_step_trace: Vec<f64>,
    /// Wall time since start at each trace entry.
    pub elapsed: Vec<Duration>,
    pub epsilon: f64,
    pub max_iters: usize,
    pub status: SolverStatus,
}

impl SolverState {
    pub fn objective(&self) -> f64 {
        *self.trace.last().expect("trace has the initial value")
    }

    /// CSV with columns `iteration,f,f_after_u_step,elapsed_s`.
    pub fn trace_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::from("iteration,f,f_after_u_step,elapsed_s\n");
        for (t, f) in self.trace.iter().enumerate() {
            let fu = if t == 0 { String::new() } else { format!("{:e}", self.u_step_trace[t - 1]) };
            let _ = writeln!(s, "{t},{f:e},{fu},{:.6}", self.elapsed[t].as_secs_f64());
        }
        s
    }
}

/// Runs alternating U/Q updates until the relative improvement stopping rule
/// holds or `max_iters` iterations have been done.
pub fn run(u0: UniverseMatching, q0: UniverseMaps, phi: &StackedBasis, cfg: &SolverConfig) -> Result<SolverState> {
    check_dims(&u0, &q0, phi)?;
    if !(cfg.epsilon >= 0.0) {
        return Err(Error::Config(format!("epsilon {} must be non-negative", cfg.epsilon)));
    }
    let start = Instant::now();
    let f0 = objective(&u0, &q0, phi)?;
    let mut state = SolverState {
        u: u0,
        q: q0,
        iteration: 0,
        trace: vec![f0],
        u_step_trace: Vec::new(),
        elapsed: vec![start.elapsed()],
        epsilon: cfg.epsilon,
        max_iters: cfg.max_iters,
        status: SolverStatus::MaxIterations,
    };
    if f0 == 0.0 {
        state.status = SolverStatus::ZeroObjective;
        return Ok(state);
    }
    while state.iteration < cfg.max_iters {
        let u_next = u_update(&state.u, &state.q, phi, &cfg.auction)?;
        state.u_step_trace.push(objective(&u_next, &state.q, phi)?);
        let q_next = q_update(&u_next, &state.q, phi)?;
        let f_next = objective(&u_next, &q_next, phi)?;
        let f_prev = state.objective();
        state.u = u_next;
        state.q = q_next;
        state.iteration += 1;
        state.trace.push(f_next);
        state.elapsed.push(start.elapsed());
        if f_next == 0.0 {
            state.status = SolverStatus::ZeroObjective;
            break;
        }
        let ratio = f_prev / f_next;
        if ratio >= 1.0 - cfg.epsilon {
            if ratio > 1.0 {
                log::debug!("objective ratio {ratio} exceeds 1 at iteration {}", state.iteration);
            }
            state.status = SolverStatus::Converged;
            break;
        }
    }
    Ok(state)
}

/// `P_ij = P_i P_jᵀ`: vertices of `i` and `j` correspond iff they share a
/// universe point.
pub fn pairwise_from_universe(u: &UniverseMatching, i: usize, j: usize) -> PairwiseMap {
    let inv = u.inverse(j);
    PairwiseMap {
        source: i,
        target: j,
        matches: u.block(i).iter().map(|&a| inv[a]).collect(),
        target_len: u.block(j).len(),
    }
}

/// Blocks of `U` as [`PartialPermutation`]s.
pub fn blocks_as_permutations(u: &UniverseMatching) -> Vec<PartialPermutation> {
    u.blocks()
        .iter()
        .map(|b| PartialPermutation::new(b.clone(), u.universe_size()).expect("valid universe block"))
        .collect()
}
