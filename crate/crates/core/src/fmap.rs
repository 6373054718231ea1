//! Pairwise functional maps: least-squares estimation from descriptors,
//! point-wise extraction, and spectral upsampling refinement.
//!
//! Maps act on row vectors of spectral coefficients: a pairwise map `C`
//! from shape `i` to shape `j` satisfies `Φ_i C ≈ Π Φ_j`, where `Π` sends
//! each vertex of `i` to its partner on `j`. This is the convention of the
//! universe objective (`Φ_i C_i`) and of `min_C ‖F C − G‖`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::spectral::SpectralBasis;
use crate::{Error, Result};

/// Relative singular value below which a descriptor matrix is rank-deficient.
const RANK_TOL: f64 = 1e-10;

/// Squared distances closer than this are treated as equal in nearest-vertex
/// search.
const TIE_REL: f64 = 1e-12;
const TIE_ABS: f64 = 1e-24;

#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseFmap {
    pub source: usize,
    pub target: usize,
    /// `b_cur × b_cur` coefficient map.
    pub c: DMatrix<f64>,
}

impl PairwiseFmap {
    pub fn size(&self) -> usize {
        self.c.nrows()
    }
}

/// Vertex correspondence from `source` to `target`; `None` marks a vertex
/// without partner.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairwiseMap {
    pub source: usize,
    pub target: usize,
    pub matches: Vec<Option<usize>>,
    pub target_len: usize,
}

impl PairwiseMap {
    pub fn matched_count(&self) -> usize {
        self.matches.iter().filter(|m| m.is_some()).count()
    }

    /// True when every source vertex lands on the same target vertex.
    pub fn is_degenerate(&self) -> bool {
        let mut it = self.matches.iter().flatten();
        match it.next() {
            Some(first) => self.matches.len() > 1 && it.all(|v| v == first),
            None => false,
        }
    }

    /// Injective on matched vertices.
    pub fn is_injective(&self) -> bool {
        let mut seen = vec![false; self.target_len];
        self.matches.iter().flatten().all(|&v| !std::mem::replace(&mut seen[v], true))
    }

    /// Total permutation of equally sized shapes.
    pub fn is_bijective(&self) -> bool {
        self.matches.len() == self.target_len && self.matches.iter().all(Option::is_some) && self.is_injective()
    }

    /// Reverse direction. Requires injectivity.
    pub fn transpose(&self) -> Result<PairwiseMap> {
        if !self.is_injective() {
            return Err(Error::InvalidArgument("cannot transpose a non-injective map".into()));
        }
        let mut matches = vec![None; self.target_len];
        for (u, v) in self.matches.iter().enumerate() {
            if let Some(v) = v {
                matches[*v] = Some(u);
            }
        }
        Ok(PairwiseMap {
            source: self.target,
            target: self.source,
            matches,
            target_len: self.matches.len(),
        })
    }

    /// Two-column text, `source_vertex target_vertex` per matched vertex,
    /// 0-based.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (u, v) in self.matches.iter().enumerate() {
            if let Some(v) = v {
                let _ = writeln!(s, "{u} {v}");
            }
        }
        s
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read_text(path: &Path, source: usize, target: usize, source_len: usize, target_len: usize) -> Result<PairwiseMap> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut matches = vec![None; source_len];
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut t = line.split_whitespace();
            let mut next = |what: &str, bound: usize| -> Result<usize> {
                let tok = t.next().ok_or_else(|| Error::parse(path, i + 1, format!("missing {what}")))?;
                let v: usize = tok
                    .parse()
                    .map_err(|_| Error::parse(path, i + 1, format!("bad {what} {tok:?}")))?;
                if v >= bound {
                    return Err(Error::parse(path, i + 1, format!("{what} {v} out of range (< {bound})")));
                }
                Ok(v)
            };
            let u = next("source vertex", source_len)?;
            let v = next("target vertex", target_len)?;
            matches[u] = Some(v);
        }
        Ok(PairwiseMap { source, target, matches, target_len })
    }
}

/// Descriptor coefficients `(Φᵀ M D)ᵀ`, one row per descriptor (`q × b`).
pub fn descriptor_coefficients(basis: &SpectralBasis, descriptors: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if descriptors.nrows() != basis.num_vertices() {
        return Err(Error::Dimension(format!(
            "{} descriptor rows for {} vertices",
            descriptors.nrows(),
            basis.num_vertices()
        )));
    }
    Ok(basis.project(descriptors).transpose())
}

/// Least-squares `argmin_C ‖F C − G‖_F` via the SVD of `F`.
pub fn solve_fmap(f: &DMatrix<f64>, g: &DMatrix<f64>, source: usize, target: usize) -> Result<PairwiseFmap> {
    if f.shape() != g.shape() {
        return Err(Error::Dimension(format!("F is {:?}, G is {:?}", f.shape(), g.shape())));
    }
    let (q, b) = f.shape();
    if q < b {
        return Err(Error::RankDeficient { ratio: 0.0 });
    }
    let svd = f
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD of descriptor matrix did not converge".into()))?;
    let s = &svd.singular_values;
    let ratio = if s.max() > 0.0 { s.min() / s.max() } else { 0.0 };
    if !(ratio >= RANK_TOL) {
        return Err(Error::RankDeficient { ratio });
    }
    let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let mut ut_g = u.tr_mul(g);
    for (r, mut row) in ut_g.row_iter_mut().enumerate() {
        row /= s[r];
    }
    Ok(PairwiseFmap {
        source,
        target,
        c: vt.tr_mul(&ut_g),
    })
}

/// Maps vertex `u` of `i` to `argmin_v ‖Φ_i(u,:) C − Φ_j(v,:)‖`, lowest `v`
/// on ties, using the first `fmap.size()` basis functions. Distances within
/// rounding noise of each other count as ties.
pub fn extract_pointwise(basis_i: &SpectralBasis, basis_j: &SpectralBasis, fmap: &PairwiseFmap) -> Result<PairwiseMap> {
    let s = fmap.size();
    if fmap.c.ncols() != s || s > basis_i.size() || s > basis_j.size() {
        return Err(Error::Dimension(format!(
            "map of size {:?} does not fit bases of sizes {} and {}",
            fmap.c.shape(),
            basis_i.size(),
            basis_j.size()
        )));
    }
    let transported = basis_i.phi.columns(0, s) * &fmap.c;
    // Columns of `targets` are the spectral rows of shape j.
    let targets = basis_j.phi.columns(0, s).transpose();
    let matches = (0..transported.nrows())
        .into_par_iter()
        .map(|u| {
            let t = transported.row(u);
            let mut best = (0usize, f64::INFINITY);
            for (v, col) in targets.column_iter().enumerate() {
                let d: f64 = col.iter().zip(t.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.1 * (1.0 - TIE_REL) - TIE_ABS {
                    best = (v, d);
                }
            }
            Some(best.0)
        })
        .collect();
    Ok(PairwiseMap {
        source: fmap.source,
        target: fmap.target,
        matches,
        target_len: basis_j.num_vertices(),
    })
}

/// Mass-weighted least-squares map of size `size` induced by a point-wise
/// map: `Φ_iᵀ M_i Φ_j[match]`. Unmatched vertices contribute nothing.
pub fn fmap_from_pointwise(basis_i: &SpectralBasis, basis_j: &SpectralBasis, map: &PairwiseMap, size: usize) -> Result<PairwiseFmap> {
    if size > basis_i.size() || size > basis_j.size() {
        return Err(Error::Dimension(format!("size {size} exceeds basis")));
    }
    if map.matches.len() != basis_i.num_vertices() {
        return Err(Error::Dimension("map length does not match source basis".into()));
    }
    let mut pulled = DMatrix::zeros(basis_i.num_vertices(), size);
    for (u, v) in map.matches.iter().enumerate() {
        if let Some(v) = v {
            pulled.row_mut(u).copy_from(&basis_j.phi.view((*v, 0), (1, size)));
        }
    }
    let c = basis_i.truncated(size).project(&pulled);
    Ok(PairwiseFmap {
        source: map.source,
        target: map.target,
        c,
    })
}

/// Iterative refinement: extract a point-wise map at the current size, refit
/// the functional map at `size + step`, repeat until `b_target`; the final
/// point-wise map is extracted at `b_target`.
pub fn spectral_upsample(
    basis_i: &SpectralBasis,
    basis_j: &SpectralBasis,
    fmap0: &PairwiseFmap,
    b_target: usize,
    step: usize,
) -> Result<(PairwiseFmap, PairwiseMap)> {
    if step == 0 {
        return Err(Error::InvalidArgument("upsampling step must be positive".into()));
    }
    if fmap0.size() > b_target || b_target > basis_i.size() || b_target > basis_j.size() {
        return Err(Error::InvalidArgument(format!(
            "need {} <= b_target {} <= basis sizes ({}, {})",
            fmap0.size(),
            b_target,
            basis_i.size(),
            basis_j.size()
        )));
    }
    let mut fmap = fmap0.clone();
    loop {
        let map = extract_pointwise(basis_i, basis_j, &fmap)?;
        if fmap.size() >= b_target {
            return Ok((fmap, map));
        }
        let next = (fmap.size() + step).min(b_target);
        fmap = fmap_from_pointwise(basis_i, basis_j, &map, next)?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::shape_basis;
    use crate::synth;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob() -> crate::Shape {
        synth::bumpy_sphere(9, 12, 0.3, 77)
    }

    #[test]
    fn identical_descriptors_give_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = DMatrix::from_fn(20, 6, |_, _| rng.gen_range(-1.0..1.0));
        let c = solve_fmap(&f, &f, 0, 1).unwrap().c;
        assert!((c - DMatrix::<f64>::identity(6, 6)).amax() < 1e-8);
    }

    #[test]
    fn rotated_descriptors_give_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = DMatrix::from_fn(20, 5, |_, _| rng.gen_range(-1.0..1.0));
        let r = crate::ortho::random_semi_orthogonal(&mut rng, 5, 5);
        let c = solve_fmap(&f, &(&f * &r), 0, 1).unwrap().c;
        assert!((c - r).amax() < 1e-8);
    }

    #[test]
    fn matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = DMatrix::from_fn(30, 8, |_, _| rng.gen_range(-1.0..1.0));
        let g = DMatrix::from_fn(30, 8, |_, _| rng.gen_range(-1.0..1.0));
        let c = solve_fmap(&f, &g, 0, 1).unwrap().c;
        // Oracle: Cholesky on FᵀF X = FᵀG.
        let x = (f.transpose() * &f).cholesky().unwrap().solve(&(f.transpose() * &g));
        let res_c = (&f * &c - &g).norm();
        let res_x = (&f * &x - &g).norm();
        assert!((res_c - res_x).abs() < 1e-10);
        assert!(res_c <= g.norm());
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let f = DMatrix::from_fn(10, 3, |r, c| if c == 2 { 0.0 } else { (r + c) as f64 });
        assert!(matches!(solve_fmap(&f, &f, 0, 1), Err(Error::RankDeficient { .. })));
        let short = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(solve_fmap(&short, &short, 0, 1), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn self_map_extracts_identity() {
        let basis = shape_basis(&blob(), 20, None).unwrap();
        let fm = PairwiseFmap { source: 0, target: 0, c: DMatrix::identity(20, 20) };
        let map = extract_pointwise(&basis, &basis, &fm).unwrap();
        assert!(map.matches.iter().enumerate().all(|(u, v)| *v == Some(u)));
    }

    #[test]
    fn permuted_copy_recovers_permutation() {
        let s = blob();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let order = synth::random_permutation(&mut rng, s.len());
        let basis_i = shape_basis(&s, 20, None).unwrap();
        // Φ_j = Π Φ_i: vertex v of j is vertex order[v] of i.
        let mut basis_j = basis_i.clone();
        for (v, &o) in order.iter().enumerate() {
            basis_j.phi.row_mut(v).copy_from(&basis_i.phi.row(o));
            basis_j.mass[v] = basis_i.mass[o];
        }
        let fm = PairwiseFmap { source: 0, target: 1, c: DMatrix::identity(20, 20) };
        let map = extract_pointwise(&basis_i, &basis_j, &fm).unwrap();
        for (v, &o) in order.iter().enumerate() {
            assert_eq!(map.matches[o], Some(v));
        }
        assert!(map.is_bijective());
    }

    #[test]
    fn constant_basis_is_degenerate() {
        let basis = shape_basis(&blob(), 5, None).unwrap();
        let fm = PairwiseFmap { source: 0, target: 1, c: DMatrix::identity(1, 1) };
        let map = extract_pointwise(&basis, &basis, &fm).unwrap();
        assert!(map.is_degenerate());
    }

    #[test]
    fn upsample_self_map_stays_identity() {
        let basis = shape_basis(&blob(), 25, None).unwrap();
        let fm = PairwiseFmap { source: 0, target: 0, c: DMatrix::identity(10, 10) };
        let (out, map) = spectral_upsample(&basis, &basis, &fm, 25, 5).unwrap();
        assert_eq!(out.size(), 25);
        assert!((out.c - DMatrix::<f64>::identity(25, 25)).amax() < 1e-8);
        assert!(map.matches.iter().enumerate().all(|(u, v)| *v == Some(u)));
        // b0 == b_target: one extraction, map unchanged.
        let (same, _) = spectral_upsample(&basis, &basis, &fm, 10, 5).unwrap();
        assert_eq!(same, fm);
    }

    #[test]
    fn upsample_recovers_isometry() {
        let s = blob();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let order = synth::random_permutation(&mut rng, s.len());
        let t = s.permuted(&order).unwrap();
        let bi = shape_basis(&s, 30, None).unwrap();
        let bj = shape_basis(&t, 30, None).unwrap();
        // Ground-truth map at b0 = 10 from the known permutation.
        let mut gt = vec![None; s.len()];
        for (v, &o) in order.iter().enumerate() {
            gt[o] = Some(v);
        }
        let gt_map = PairwiseMap { source: 0, target: 1, matches: gt.clone(), target_len: t.len() };
        let c0 = fmap_from_pointwise(&bi, &bj, &gt_map, 10).unwrap();
        let (_, map) = spectral_upsample(&bi, &bj, &c0, 30, 5).unwrap();
        let wrong = map.matches.iter().zip(&gt).filter(|(a, b)| a != b).count();
        assert_eq!(wrong, 0);
    }

    #[test]
    fn text_round_trip_and_transpose() {
        let dir = tempfile::tempdir().unwrap();
        let m = PairwiseMap { source: 0, target: 1, matches: vec![Some(2), None, Some(0)], target_len: 4 };
        let p = dir.path().join("m.txt");
        m.write_text(&p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "0 2\n2 0\n");
        assert_eq!(PairwiseMap::read_text(&p, 0, 1, 3, 4).unwrap(), m);
        let t = m.transpose().unwrap();
        assert_eq!(t.matches, vec![Some(2), None, Some(0), None]);
        assert!(PairwiseMap::read_text(&p, 0, 1, 3, 2).is_err());
    }
}
