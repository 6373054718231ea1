//! Euclidean projection onto (semi-)orthogonal matrices.
//!
//! For `A = U Σ Vᵀ` (thin SVD, `b ≤ b'`) the closest `Y` with `Y Yᵀ = I_b`
//! is `U Vᵀ`, which also maximises `⟨A, Y⟩` with optimum `Σ σ_i`.

use nalgebra::DMatrix;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::universe::UniverseMaps;
use crate::{Error, Result};

/// Relative singular-value floor below which the projection is not unique.
const GAUGE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct OrthoBlock {
    pub values: DMatrix<f64>,
    /// `σ_min < 1e-12 σ_max`: the input is (numerically) rank-deficient and
    /// the projection is one of many maximisers.
    pub gauge_ambiguous: bool,
}

pub fn project_orthogonal(a: &DMatrix<f64>) -> Result<OrthoBlock> {
    let (b, bp) = a.shape();
    if b == 0 || b > bp {
        return Err(Error::Dimension(format!("cannot project a {b}x{bp} matrix: needs 0 < rows <= cols")));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite entry in orthogonal projection input".into()));
    }
    let svd = a
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::Numerical("SVD factors missing".into())),
    };
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    Ok(OrthoBlock {
        values: u * vt,
        gauge_ambiguous: !(smin >= GAUGE_TOL * smax) || smax == 0.0,
    })
}

/// Projects every block independently (in parallel).
pub fn project_blocks_q(blocks: &[DMatrix<f64>]) -> Result<Vec<OrthoBlock>> {
    blocks.par_iter().map(project_orthogonal).collect()
}

/// Blockwise projection of a tall `kb × b'` score onto the stacked
/// orthogonal set.
pub fn project_blockwise_q(score: &DMatrix<f64>, k: usize) -> Result<UniverseMaps> {
    if k == 0 || score.nrows() % k != 0 {
        return Err(Error::Dimension(format!("{} rows do not split into {k} blocks", score.nrows())));
    }
    let b = score.nrows() / k;
    let blocks: Vec<DMatrix<f64>> = (0..k).map(|i| score.rows(i * b, b).into_owned()).collect();
    UniverseMaps::new(project_blocks_q(&blocks)?.into_iter().map(|o| o.values).collect())
}

/// Uniformly random `b × b'` matrix with orthonormal rows, from the QR of a
/// Gaussian matrix.
pub fn random_semi_orthogonal<R: rand::Rng>(rng: &mut R, b: usize, bp: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(bp, b, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut q = q.columns(0, b).into_owned();
    for j in 0..b {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q.transpose()
}
