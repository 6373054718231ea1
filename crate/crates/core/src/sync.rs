//! Synchronisation of pairwise results into universe form: the initial
//! `Q_0` from pairwise functional maps and the initial `U_0` by clustering
//! the universe-aligned spectral embeddings.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::assignment::{solve_lap_max, AuctionConfig};
use crate::fmap::PairwiseFmap;
use crate::ortho::project_orthogonal;
use crate::spectral::SpectralBasis;
use crate::{Error, Result};

pub use crate::universe::{UniverseMaps, UniverseMatching};

/// Eigen-gaps below this make the synchronised subspace ambiguous.
const GAP_TOL: f64 = 1e-10;

/// Zeroes every entry with `|row − col| > radius`.
pub fn band_filter(c: &DMatrix<f64>, radius: usize) -> DMatrix<f64> {
    DMatrix::from_fn(c.nrows(), c.ncols(), |r, col| {
        if r.abs_diff(col) > radius {
            0.0
        } else {
            c[(r, col)]
        }
    })
}

/// Band-filters each pairwise map and projects it onto the orthogonal set.
pub fn prepare_pairwise(fmaps: &[PairwiseFmap], radius: usize) -> Result<Vec<PairwiseFmap>> {
    fmaps
        .iter()
        .map(|f| {
            Ok(PairwiseFmap {
                source: f.source,
                target: f.target,
                c: project_orthogonal(&band_filter(&f.c, radius))?.values,
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct OrthoSyncOutcome {
    pub maps: UniverseMaps,
    /// Gap between the `b'`-th and `(b'+1)`-th largest eigenvalue of the
    /// block matrix (infinite when there is no `(b'+1)`-th).
    pub eigen_gap: f64,
    pub ambiguous: bool,
}

/// Orthogonal transformation synchronisation.
///
/// Builds the symmetric `kb × kb` block matrix with identity diagonal blocks,
/// `C_ij` above and `C_ijᵀ` below the diagonal (pairs given in either
/// direction; missing pairs stay zero), takes its top `b_prime`
/// eigenvectors, scales each `b × b'` block by `√k` and projects it onto the
/// semi-orthogonal set. For consistent input `C_ij = Ĉ_i Ĉ_jᵀ` the result
/// reproduces every `C_ij` up to a global gauge.
pub fn ortho_sync(pairwise: &[PairwiseFmap], k: usize, b: usize, b_prime: usize) -> Result<OrthoSyncOutcome> {
    if k == 0 || b == 0 || b_prime < b || b_prime > k * b {
        return Err(Error::InvalidArgument(format!(
            "ortho_sync needs k > 0 and b <= b' <= kb (k={k}, b={b}, b'={b_prime})"
        )));
    }
    let mut upper: BTreeMap<(usize, usize), DMatrix<f64>> = BTreeMap::new();
    for f in pairwise {
        if f.c.shape() != (b, b) {
            return Err(Error::Dimension(format!("pairwise map {}->{} is {:?}, expected {b}x{b}", f.source, f.target, f.c.shape())));
        }
        if f.source >= k || f.target >= k {
            return Err(Error::Dimension(format!("pair ({}, {}) out of range for k = {k}", f.source, f.target)));
        }
        if f.source == f.target {
            continue;
        }
        if f.source < f.target {
            upper.insert((f.source, f.target), f.c.clone());
        } else {
            upper.entry((f.target, f.source)).or_insert_with(|| f.c.transpose());
        }
    }

    let n = k * b;
    let mut w = DMatrix::zeros(n, n);
    for i in 0..k {
        w.view_mut((i * b, i * b), (b, b)).fill_with_identity();
    }
    for (&(i, j), c) in &upper {
        w.view_mut((i * b, j * b), (b, b)).copy_from(c);
        w.view_mut((j * b, i * b), (b, b)).copy_from(&c.transpose());
    }
    let eig = nalgebra::linalg::SymmetricEigen::try_new(w, 1e-15, 0)
        .ok_or_else(|| Error::Numerical("synchronisation eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&c)));
    let eigen_gap = if b_prime < n {
        eig.eigenvalues[order[b_prime - 1]] - eig.eigenvalues[order[b_prime]]
    } else {
        f64::INFINITY
    };
    let ambiguous = eigen_gap < GAP_TOL;
    if ambiguous {
        log::warn!("orthogonal synchronisation is ambiguous: eigen-gap {eigen_gap:.3e}");
    }

    let mut top = DMatrix::zeros(n, b_prime);
    for (c, &src) in order.iter().take(b_prime).enumerate() {
        top.set_column(c, &eig.eigenvectors.column(src));
    }
    top *= (k as f64).sqrt();
    let blocks = (0..k)
        .map(|i| project_orthogonal(&top.rows(i * b, b).into_owned()).map(|o| o.values))
        .collect::<Result<Vec<_>>>()?;
    Ok(OrthoSyncOutcome {
        maps: UniverseMaps::new(blocks)?,
        eigen_gap,
        ambiguous,
    })
}

/// `Ψ = [Φ_1 C_1; …; Φ_k C_k]` (`m × b'`), using the first `b` basis
/// functions of each shape.
pub fn build_universe_embedding(bases: &[SpectralBasis], maps: &UniverseMaps) -> Result<DMatrix<f64>> {
    if bases.len() != maps.num_shapes() {
        return Err(Error::Dimension(format!("{} bases for {} maps", bases.len(), maps.num_shapes())));
    }
    let b = maps.rows();
    if let Some(i) = bases.iter().position(|s| s.size() < b) {
        return Err(Error::Dimension(format!("basis {i} has fewer than {b} functions")));
    }
    let m: usize = bases.iter().map(SpectralBasis::num_vertices).sum();
    let mut psi = DMatrix::zeros(m, maps.cols());
    let mut offset = 0;
    for (basis, c) in bases.iter().zip(maps.blocks()) {
        let rows = basis.num_vertices();
        psi.rows_mut(offset, rows).copy_from(&(basis.phi.columns(0, b) * c));
        offset += rows;
    }
    Ok(psi)
}

/// Greedy-reference constrained clustering of the rows of `Ψ` into `d`
/// universe points.
///
/// Shape 0 seeds universe points `0..m_0`. Each following shape is assigned
/// by a maximum-similarity assignment of its rows against the current
/// centroids (similarity = inner product, unseeded centroids are zero), and
/// the centroids become running means of their assigned rows. The output is
/// order-dependent and deterministic.
pub fn perm_sync(psi: &DMatrix<f64>, block_sizes: &[usize], d: usize, lap: &AuctionConfig) -> Result<UniverseMatching> {
    let total: usize = block_sizes.iter().sum();
    if total != psi.nrows() {
        return Err(Error::Dimension(format!("block sizes sum to {total}, Ψ has {} rows", psi.nrows())));
    }
    if let Some(&m) = block_sizes.iter().find(|&&m| m > d) {
        return Err(Error::UniverseTooSmall { rows: m, cols: d });
    }
    let width = psi.ncols();
    let mut centroids = DMatrix::zeros(d, width);
    let mut counts = vec![0usize; d];
    let mut blocks = Vec::with_capacity(block_sizes.len());
    let mut offset = 0;
    for (i, &m) in block_sizes.iter().enumerate() {
        let rows = psi.rows(offset, m);
        let assign: Vec<usize> = if i == 0 {
            (0..m).collect()
        } else {
            let sim = rows * centroids.transpose();
            solve_lap_max(&sim, lap)?.into_assignment()
        };
        for (v, &a) in assign.iter().enumerate() {
            let n = counts[a] as f64;
            let row: DVector<f64> = rows.row(v).transpose();
            let mut cen = centroids.row_mut(a);
            let updated = (cen.transpose() * n + row) / (n + 1.0);
            cen.copy_from(&updated.transpose());
            counts[a] += 1;
        }
        blocks.push(assign);
        offset += m;
    }
    UniverseMatching::new(blocks, d)
}
