//! Stacked shape-to-universe representations: the matching stack `U` and the
//! functional-map stack `Q`.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Shape-to-universe matchings `U = [P_1; …; P_k]`, stored as one universe
/// index per vertex. Every block is injective and assigns every vertex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UniverseMatching {
    d: usize,
    blocks: Vec<Vec<usize>>,
}

impl UniverseMatching {
    pub fn new(blocks: Vec<Vec<usize>>, d: usize) -> Result<Self> {
        for (i, b) in blocks.iter().enumerate() {
            if b.len() > d {
                return Err(Error::UniverseTooSmall { rows: b.len(), cols: d });
            }
            let mut used = vec![false; d];
            for (v, &a) in b.iter().enumerate() {
                if a >= d {
                    return Err(Error::Dimension(format!(
                        "shape {i} vertex {v} assigned to universe point {a} >= {d}"
                    )));
                }
                if used[a] {
                    return Err(Error::InvalidArgument(format!(
                        "shape {i} assigns universe point {a} twice"
                    )));
                }
                used[a] = true;
            }
        }
        Ok(UniverseMatching { d, blocks })
    }

    /// Each shape's vertex `v` goes to universe point `v`.
    pub fn identity(block_sizes: &[usize], d: usize) -> Result<Self> {
        Self::new(block_sizes.iter().map(|&m| (0..m).collect()).collect(), d)
    }

    pub fn universe_size(&self) -> usize {
        self.d
    }

    pub fn num_shapes(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, i: usize) -> &[usize] {
        &self.blocks[i]
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }

    pub fn total_rows(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    /// Universe point -> vertex of shape `i`, if any.
    pub fn inverse(&self, i: usize) -> Vec<Option<usize>> {
        let mut inv = vec![None; self.d];
        for (v, &a) in self.blocks[i].iter().enumerate() {
            inv[a] = Some(v);
        }
        inv
    }

    /// `U Π` for a permutation of the universe: point `a` becomes `perm[a]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.d {
            return Err(Error::Dimension(format!("relabelling of length {} for d = {}", perm.len(), self.d)));
        }
        Self::new(
            self.blocks.iter().map(|b| b.iter().map(|&a| perm[a]).collect()).collect(),
            self.d,
        )
    }

    /// Dense 0/1 matrix of one block (tests and debugging only).
    pub fn dense_block(&self, i: usize) -> DMatrix<f64> {
        let b = &self.blocks[i];
        let mut m = DMatrix::zeros(b.len(), self.d);
        for (v, &a) in b.iter().enumerate() {
            m[(v, a)] = 1.0;
        }
        m
    }
}

/// Shape-to-universe functional maps `Q = [C_1; …; C_k]`, each `b × b'` and
/// semi-orthogonal (`C Cᵀ = I_b`).
#[derive(Clone, Debug, PartialEq)]
pub struct UniverseMaps {
    blocks: Vec<DMatrix<f64>>,
}

impl UniverseMaps {
    pub fn new(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::InvalidArgument("no functional-map blocks".into()))?;
        let shape = first.shape();
        if shape.0 > shape.1 {
            return Err(Error::Dimension(format!("block is {}x{}, needs rows <= cols", shape.0, shape.1)));
        }
        if let Some(i) = blocks.iter().position(|b| b.shape() != shape) {
            return Err(Error::Dimension(format!(
                "block {i} is {:?}, expected {:?}",
                blocks[i].shape(),
                shape
            )));
        }
        Ok(UniverseMaps { blocks })
    }

    /// `k` copies of the leading `b × b'` identity pattern.
    pub fn identity(k: usize, b: usize, b_prime: usize) -> Result<Self> {
        Self::new(vec![DMatrix::identity(b, b_prime); k])
    }

    pub fn num_shapes(&self) -> usize {
        self.blocks.len()
    }

    /// Block rows `b`.
    pub fn rows(&self) -> usize {
        self.blocks[0].nrows()
    }

    /// Block columns `b'`.
    pub fn cols(&self) -> usize {
        self.blocks[0].ncols()
    }

    pub fn block(&self, i: usize) -> &DMatrix<f64> {
        &self.blocks[i]
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<DMatrix<f64>> {
        self.blocks
    }

    /// The tall `kb × b'` stack.
    pub fn stacked(&self) -> DMatrix<f64> {
        let (b, bp) = (self.rows(), self.cols());
        let mut q = DMatrix::zeros(b * self.num_shapes(), bp);
        for (i, c) in self.blocks.iter().enumerate() {
            q.rows_mut(i * b, b).copy_from(c);
        }
        q
    }

    pub fn from_stacked(q: &DMatrix<f64>, k: usize) -> Result<Self> {
        if k == 0 || q.nrows() % k != 0 {
            return Err(Error::Dimension(format!("{} rows do not split into {k} blocks", q.nrows())));
        }
        let b = q.nrows() / k;
        Self::new((0..k).map(|i| q.rows(i * b, b).into_owned()).collect())
    }

    /// Max over blocks of `max |C Cᵀ − I|`.
    pub fn orthogonality_error(&self) -> f64 {
        let b = self.rows();
        self.blocks
            .iter()
            .map(|c| (c * c.transpose() - DMatrix::<f64>::identity(b, b)).amax())
            .fold(0.0, f64::max)
    }

    /// `Q G` for a `b' × b'` matrix `G`.
    pub fn right_multiply(&self, g: &DMatrix<f64>) -> Result<Self> {
        if g.nrows() != self.cols() {
            return Err(Error::Dimension(format!("gauge is {}x{}, maps have {} columns", g.nrows(), g.ncols(), self.cols())));
        }
        Self::new(self.blocks.iter().map(|c| c * g).collect())
    }
}
