//! Linear assignment over partial permutations.
//!
//! [`solve_lap_max`] is an ε-scaling auction on integer-rescaled profits.
//! Rectangular `m × d` problems (`m ≤ d`) use forward bidding by rows
//! followed by reverse bidding by free columns. Benefits are multiplied by
//! `d + 1` so the final phase at `ε = 1` is below `1/(d+1)` in the rescaled
//! integer units, which makes the result exactly optimal for the rescaled
//! problem.
//!
//! [`hungarian_oracle`] is the O(n³) shortest-augmenting-path Hungarian
//! method, kept as an independent reference.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::universe::UniverseMatching;
use crate::{Error, Result};

/// Row-to-column assignment with distinct columns; every row is assigned.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartialPermutation {
    n_cols: usize,
    assign: Vec<usize>,
}

impl PartialPermutation {
    pub fn new(assign: Vec<usize>, n_cols: usize) -> Result<Self> {
        if assign.len() > n_cols {
            return Err(Error::UniverseTooSmall { rows: assign.len(), cols: n_cols });
        }
        let mut used = vec![false; n_cols];
        for &c in &assign {
            if c >= n_cols || used[c] {
                return Err(Error::InvalidArgument(format!("column {c} invalid or repeated")));
            }
            used[c] = true;
        }
        Ok(PartialPermutation { n_cols, assign })
    }

    pub fn n_rows(&self) -> usize {
        self.assign.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assign
    }

    pub fn into_assignment(self) -> Vec<usize> {
        self.assign
    }

    /// `⟨profit, P⟩`.
    pub fn objective(&self, profit: &DMatrix<f64>) -> f64 {
        self.assign.iter().enumerate().map(|(r, &c)| profit[(r, c)]).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuctionConfig {
    /// Profit grid spacing as a fraction of the profit range.
    pub resolution: f64,
    /// ε is divided by this factor between phases.
    pub scaling_factor: i64,
}

impl Default for AuctionConfig {
    fn default() -> Self {
        AuctionConfig {
            resolution: 1e-9,
            scaling_factor: 5,
        }
    }
}

fn check_shape(rows: usize, cols: usize) -> Result<()> {
    if rows > cols {
        return Err(Error::UniverseTooSmall { rows, cols });
    }
    Ok(())
}

/// Maximises `⟨profit, P⟩` over row-complete partial permutations.
pub fn solve_lap_max(profit: &DMatrix<f64>, cfg: &AuctionConfig) -> Result<PartialPermutation> {
    let (rows, cols) = profit.shape();
    check_shape(rows, cols)?;
    if profit.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite profit".into()));
    }
    if !(cfg.resolution > 0.0 && cfg.resolution < 1.0) || cfg.scaling_factor < 2 {
        return Err(Error::Config(format!("invalid auction configuration {cfg:?}")));
    }
    if rows == 0 {
        return PartialPermutation::new(Vec::new(), cols);
    }
    let lo = profit.min();
    let range = profit.max() - lo;
    let levels = (1.0 / cfg.resolution).round();
    let mut benefit = vec![0i64; rows * cols];
    if range > 0.0 {
        // Column-major source, row-major target.
        for (c, col) in profit.column_iter().enumerate() {
            for (r, &v) in col.iter().enumerate() {
                benefit[r * cols + c] = ((v - lo) / range * levels).round() as i64;
            }
        }
    }
    let assign = auction_integer(&benefit, rows, cols, cfg.scaling_factor);
    Ok(PartialPermutation { n_cols: cols, assign })
}

/// Exact auction on integer benefits (`rows × cols`, row-major).
pub fn solve_lap_max_int(benefit: &[i64], rows: usize, cols: usize) -> Result<PartialPermutation> {
    check_shape(rows, cols)?;
    if benefit.len() != rows * cols {
        return Err(Error::Dimension(format!("{} benefits for {rows}x{cols}", benefit.len())));
    }
    let lo = benefit.iter().copied().min().unwrap_or(0);
    let shifted: Vec<i64> = benefit.iter().map(|b| b - lo).collect();
    let assign = auction_integer(&shifted, rows, cols, AuctionConfig::default().scaling_factor);
    Ok(PartialPermutation { n_cols: cols, assign })
}

const FREE: usize = usize::MAX;

/// Best and second-best value, lowest index on ties.
#[inline]
fn best_two(values: impl Iterator<Item = i64>) -> (usize, i64, i64) {
    let (mut best, mut v1, mut v2) = (0usize, i64::MIN, i64::MIN);
    for (j, v) in values.enumerate() {
        if v > v1 {
            v2 = v1;
            v1 = v;
            best = j;
        } else if v > v2 {
            v2 = v;
        }
    }
    (best, v1, v2)
}

/// ε-scaling auction for `rows ≤ n` on non-negative integer benefits.
///
/// Each phase runs forward bidding by rows until all are assigned. When
/// `rows < n`, reverse bidding by the unassigned columns follows: a column
/// priced above `λ` (the lowest assigned price) either lures a row away or
/// drops to `λ`. At the end every row is within ε of its best value and no
/// free column is dearer than any assigned one, which is the optimality
/// certificate for the asymmetric problem. Benefits are scaled by `n + 1`
/// so the final `ε = 1` phase is exact.
fn auction_integer(benefit: &[i64], rows: usize, n: usize, scaling: i64) -> Vec<usize> {
    let mult = n as i64 + 1;
    let scaled: Vec<i64> = benefit.iter().map(|b| b * mult).collect();
    let top = scaled.iter().copied().max().unwrap_or(0);
    let mut eps = (top / 4).max(1);
    let mut prices = vec![0i64; n];
    let mut owner = vec![FREE; n];
    let mut row_col = vec![FREE; rows];
    let mut profit = vec![0i64; rows];
    loop {
        owner.fill(FREE);
        row_col.fill(FREE);
        let mut queue: VecDeque<usize> = (0..rows).collect();
        while let Some(i) = queue.pop_front() {
            let row = &scaled[i * n..(i + 1) * n];
            let (best, v1, v2) = best_two(row.iter().zip(&prices).map(|(b, p)| b - p));
            let increment = if v2 == i64::MIN { eps } else { v1 - v2 + eps };
            prices[best] += increment;
            profit[i] = v1 - increment;
            let prev = owner[best];
            if prev != FREE {
                row_col[prev] = FREE;
                queue.push_back(prev);
            }
            owner[best] = i;
            row_col[i] = best;
        }
        if rows < n {
            reverse_phase(&scaled, rows, n, eps, &mut prices, &mut owner, &mut row_col, &mut profit);
        }
        if eps == 1 {
            break;
        }
        eps = (eps / scaling).max(1);
    }
    row_col
}

/// Reverse bidding by free columns priced above the lowest assigned price.
#[allow(clippy::too_many_arguments)]
fn reverse_phase(
    scaled: &[i64],
    rows: usize,
    n: usize,
    eps: i64,
    prices: &mut [i64],
    owner: &mut [usize],
    row_col: &mut [usize],
    profit: &mut [i64],
) {
    let lambda = (0..n).filter(|&j| owner[j] != FREE).map(|j| prices[j]).min().unwrap_or(0);
    let mut queue: VecDeque<usize> = (0..n).filter(|&j| owner[j] == FREE && prices[j] > lambda).collect();
    while let Some(j) = queue.pop_front() {
        let (i, beta, omega) = best_two((0..rows).map(|i| scaled[i * n + j] - profit[i]));
        if lambda >= beta - eps {
            prices[j] = lambda;
            continue;
        }
        // `omega` may be absent with a single row; λ bounds the price anyway.
        let price = if omega == i64::MIN { lambda } else { lambda.max(omega - eps) };
        prices[j] = price;
        profit[i] = scaled[i * n + j] - price;
        let old = row_col[i];
        owner[old] = FREE;
        owner[j] = i;
        row_col[i] = j;
        if prices[old] > lambda {
            queue.push_back(old);
        }
    }
}

/// Exact maximiser by the Hungarian method on the zero-padded square problem.
pub fn hungarian_oracle(profit: &DMatrix<f64>) -> Result<PartialPermutation> {
    let (rows, n) = profit.shape();
    check_shape(rows, n)?;
    if rows == 0 {
        return PartialPermutation::new(Vec::new(), n);
    }
    let cost = |i: usize, j: usize| if i < rows { -profit[(i, j)] } else { 0.0 };
    // 1-based potentials; column 0 is the virtual root.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; rows];
    for j in 1..=n {
        if p[j] >= 1 && p[j] <= rows {
            assign[p[j] - 1] = j - 1;
        }
    }
    PartialPermutation::new(assign, n)
}

/// Solves one assignment per block, in parallel.
pub fn project_blocks(blocks: &[DMatrix<f64>], cfg: &AuctionConfig) -> Result<Vec<PartialPermutation>> {
    blocks.par_iter().map(|b| solve_lap_max(b, cfg)).collect()
}

/// Projection of a tall `m × d` score onto the blockwise partial-permutation
/// set: `k` independent maximisations, stacked.
pub fn project_blockwise_p(score: &DMatrix<f64>, block_sizes: &[usize], cfg: &AuctionConfig) -> Result<UniverseMatching> {
    let total: usize = block_sizes.iter().sum();
    if total != score.nrows() {
        return Err(Error::Dimension(format!(
            "block sizes sum to {total}, score has {} rows",
            score.nrows()
        )));
    }
    let mut offset = 0;
    let blocks: Vec<DMatrix<f64>> = block_sizes
        .iter()
        .map(|&m| {
            let b = score.rows(offset, m).into_owned();
            offset += m;
            b
        })
        .collect();
    let perms = project_blocks(&blocks, cfg)?;
    UniverseMatching::new(perms.into_iter().map(PartialPermutation::into_assignment).collect(), score.ncols())
}
