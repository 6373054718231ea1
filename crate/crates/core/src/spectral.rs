//! Cotangent Laplace–Beltrami discretisation and its truncated eigenbasis.
//!
//! Open boundaries get natural (Neumann) conditions: a boundary edge simply
//! receives the cotangent of its single opposite angle.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::mesh::Shape;
use crate::{Error, Result};

/// Sparse symmetric matrix in CSR layout, columns sorted per row.
#[derive(Clone, Debug)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSym {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.cols[range.clone()].binary_search(&col) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        self.cols[range.clone()].iter().copied().zip(self.vals[range].iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.n, (0..self.n).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                d[(r, c)] = v;
            }
        }
        d
    }
}

/// Positive semi-definite cotangent stiffness `W` and lumped mass `M`.
///
/// `W[u][v] = -w_uv` for every edge, with `w_uv = (cot α + cot β) / 2`, and
/// the diagonal makes each row sum to zero.
#[derive(Clone, Debug)]
pub struct Laplacian {
    pub stiffness: SparseSym,
    pub mass: Vec<f64>,
    edge_weights: Vec<((usize, usize), f64)>,
}

impl Laplacian {
    /// Cotangent weight `w_uv` of an edge, 0 if `(u, v)` is not an edge.
    pub fn edge_weight(&self, u: usize, v: usize) -> f64 {
        let key = (u.min(v), u.max(v));
        self.edge_weights
            .binary_search_by(|(e, _)| e.cmp(&key))
            .map(|k| self.edge_weights[k].1)
            .unwrap_or(0.0)
    }
}

pub fn cotangent_laplacian(shape: &Shape) -> Result<Laplacian> {
    let edges = shape.edges();
    let mut weights = vec![0.0; edges.len()];
    let pts = shape.vertices();
    let max_len = shape.edge_lengths().iter().copied().fold(0.0, f64::max);

    for (fi, f) in shape.faces().iter().enumerate() {
        for k in 0..3 {
            let (a, b, c) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
            // Angle at c, opposite edge (a, b).
            let ea = pts[a] - pts[c];
            let eb = pts[b] - pts[c];
            let cross = ea.cross(&eb).norm();
            if cross <= 1e-14 * max_len * max_len {
                return Err(Error::InvalidMesh(format!("face {fi} {f:?} has zero area")));
            }
            let cot = ea.dot(&eb) / cross;
            let key = (a.min(b), a.max(b));
            let e = edges.binary_search(&key).expect("face edge present in edge list");
            weights[e] += 0.5 * cot;
        }
    }

    let n = shape.len();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (&(a, b), &w) in edges.iter().zip(&weights) {
        rows[a].push((b, -w));
        rows[b].push((a, -w));
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    row_ptr.push(0);
    for (r, row) in rows.iter_mut().enumerate() {
        let diag: f64 = -row.iter().map(|(_, v)| v).sum::<f64>();
        row.push((r, diag));
        row.sort_unstable_by_key(|(c, _)| *c);
        for &(c, v) in row.iter() {
            cols.push(c);
            vals.push(v);
        }
        row_ptr.push(cols.len());
    }

    Ok(Laplacian {
        stiffness: SparseSym { n, row_ptr, cols, vals },
        mass: shape.vertex_areas().to_vec(),
        edge_weights: edges.iter().copied().zip(weights).collect(),
    })
}

/// The `b` smallest eigenpairs of `W φ = λ M φ`, mass-orthonormal.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBasis {
    /// Ascending eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// `m × b` eigenfunctions, one per column.
    pub phi: DMatrix<f64>,
    /// Lumped per-vertex mass.
    pub mass: Vec<f64>,
}

impl SpectralBasis {
    pub fn size(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.phi.nrows()
    }

    /// The first `b` eigenpairs.
    pub fn truncated(&self, b: usize) -> SpectralBasis {
        let b = b.min(self.size());
        SpectralBasis {
            eigenvalues: self.eigenvalues[..b].to_vec(),
            phi: self.phi.columns(0, b).into_owned(),
            mass: self.mass.clone(),
        }
    }

    /// `Φᵀ M f` for every column of `f` (`b × q`).
    pub fn project(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        let mut weighted = f.clone();
        for (mut row, &w) in weighted.row_iter_mut().zip(&self.mass) {
            row *= w;
        }
        self.phi.tr_mul(&weighted)
    }

    /// Max abs entry of `ΦᵀMΦ − I`.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.project(&self.phi);
        (g - DMatrix::identity(self.size(), self.size())).amax()
    }

    /// `‖Wφ_j − λ_j Mφ_j‖ / ‖φ_j‖` per eigenpair.
    pub fn residuals(&self, stiffness: &SparseSym) -> Vec<f64> {
        (0..self.size())
            .map(|j| {
                let phi = self.phi.column(j).into_owned();
                let mut r = stiffness.mul_vec(&phi);
                for (i, ri) in r.iter_mut().enumerate() {
                    *ri -= self.eigenvalues[j] * self.mass[i] * phi[i];
                }
                r.norm() / phi.norm()
            })
            .collect()
    }

    /// ASCII dump: header, eigenvalues, mass, then one row of `Φ` per line.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        let _ = writeln!(s, "isomush-basis 1 {} {}", self.num_vertices(), self.size());
        write_row(&mut s, self.eigenvalues.iter());
        write_row(&mut s, self.mass.iter());
        for r in self.phi.row_iter() {
            write_row(&mut s, r.iter());
        }
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn read_from(path: &Path) -> Result<SpectralBasis> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty basis file"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 4 || h[0] != "isomush-basis" || h[1] != "1" {
            return Err(Error::parse(path, 1, "not a basis file"));
        }
        let m: usize = h[2].parse().map_err(|_| Error::parse(path, 1, "bad row count"))?;
        let b: usize = h[3].parse().map_err(|_| Error::parse(path, 1, "bad column count"))?;
        let mut next_row = |len: usize| -> Result<Vec<f64>> {
            let (i, l) = lines.next().ok_or_else(|| Error::parse(path, 0, "truncated basis file"))?;
            let row: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::parse(path, i + 1, format!("bad number {t:?}"))))
                .collect::<Result<_>>()?;
            if row.len() != len {
                return Err(Error::parse(path, i + 1, format!("expected {len} values, found {}", row.len())));
            }
            Ok(row)
        };
        let eigenvalues = next_row(b)?;
        let mass = next_row(m)?;
        let mut phi = DMatrix::zeros(m, b);
        for r in 0..m {
            for (c, v) in next_row(b)?.into_iter().enumerate() {
                phi[(r, c)] = v;
            }
        }
        Ok(SpectralBasis { eigenvalues, phi, mass })
    }
}

fn write_row<'a>(s: &mut String, vals: impl Iterator<Item = &'a f64>) {
    let mut first = true;
    for v in vals {
        if !first {
            s.push(' ');
        }
        first = false;
        let _ = write!(s, "{v:e}");
    }
    s.push('\n');
}

/// Smallest `b` generalized eigenpairs of `(W, M)` by a dense symmetric
/// solve of `M^{-1/2} W M^{-1/2}`.
///
/// Each eigenvector is sign-fixed so that its largest-magnitude entry is
/// positive (first such entry on exact ties).
pub fn eigenbasis(laplacian: &Laplacian, b: usize) -> Result<SpectralBasis> {
    let n = laplacian.stiffness.dim();
    if b == 0 || b > n {
        return Err(Error::InvalidArgument(format!(
            "basis size {b} must be in 1..={n}"
        )));
    }
    let inv_sqrt: Vec<f64> = laplacian.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let mut sym = laplacian.stiffness.to_dense();
    for r in 0..n {
        for c in 0..n {
            sym[(r, c)] *= inv_sqrt[r] * inv_sqrt[c];
        }
    }
    let eig = nalgebra::linalg::SymmetricEigen::try_new(sym, 1e-15, 0).ok_or(Error::EigenNotConverged {
        max_residual: f64::NAN,
        tolerance: 0.0,
    })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[c]).then(a.cmp(&c)));
    let mut phi = DMatrix::zeros(n, b);
    let mut eigenvalues = Vec::with_capacity(b);
    for (j, &src) in order.iter().take(b).enumerate() {
        let y = eig.eigenvectors.column(src);
        let mut col: Vec<f64> = y.iter().zip(&inv_sqrt).map(|(v, s)| v * s).collect();
        let pivot = col
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc })
            .0;
        if col[pivot] < 0.0 {
            col.iter_mut().for_each(|v| *v = -*v);
        }
        phi.set_column(j, &DVector::from_vec(col));
        eigenvalues.push(eig.eigenvalues[src]);
    }

    let basis = SpectralBasis {
        eigenvalues,
        phi,
        mass: laplacian.mass.clone(),
    };
    let scale = (0..n).map(|r| laplacian.stiffness.get(r, r).abs()).fold(1.0, f64::max);
    let tolerance = 1e-7 * scale;
    let max_residual = basis.residuals(&laplacian.stiffness).into_iter().fold(0.0, f64::max);
    if !(max_residual < tolerance) {
        return Err(Error::EigenNotConverged { max_residual, tolerance });
    }
    Ok(basis)
}

/// Laplacian + eigenbasis for a shape, reusing a cache file keyed by the mesh
/// content hash and `b` when `cache_dir` is given.
pub fn shape_basis(shape: &Shape, b: usize, cache_dir: Option<&Path>) -> Result<SpectralBasis> {
    let cache_file: Option<PathBuf> = cache_dir.map(|d| d.join(format!("{}_b{b}.basis", shape.content_hash())));
    if let Some(p) = &cache_file {
        if p.exists() {
            if let Ok(basis) = SpectralBasis::read_from(p) {
                if basis.num_vertices() == shape.len() && basis.size() == b {
                    return Ok(basis);
                }
            }
            log::warn!("ignoring unusable basis cache {}", p.display());
        }
    }
    let basis = eigenbasis(&cotangent_laplacian(shape)?, b)?;
    if let Some(p) = &cache_file {
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        basis.write_to(p)?;
    }
    Ok(basis)
}
