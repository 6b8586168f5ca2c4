use ndarray::Array2;

use super::frames::LocalFrameSet;
use crate::error::{Error, Result};
use crate::geometry::GeometricGraph;

/// Largest `n * d` accepted by [`dense_materialize`].
pub const MAX_DENSE_DIM: usize = 4096;

/// A linear operator acting on flattened node signals.
pub trait DiffusionOperator: Send + Sync {
    /// Length of the signals this operator acts on (`n` or `n * d`).
    fn signal_len(&self) -> usize;

    /// Number of graph vertices.
    fn nodes(&self) -> usize;

    /// Values per node (1 for scalar operators, `d` for block operators).
    fn block_dim(&self) -> usize;

    /// `y = op x`. Both slices must have length [`signal_len`](Self::signal_len).
    fn apply_into(&self, x: &[f64], y: &mut [f64]);

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.signal_len(), x.len())?;
        let mut y = vec![0.0; x.len()];
        self.apply_into(x, &mut y);
        Ok(y)
    }

    fn to_dense(&self) -> Result<Array2<f64>>;
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        Err(Error::DimensionMismatch { expected, got })
    } else {
        Ok(())
    }
}

/// Row-compressed `n x n` operator.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    row_stochastic: bool,
}

impl SparseOperator {
    pub fn from_parts(
        n: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
        row_stochastic: bool,
    ) -> Result<Self> {
        if indptr.len() != n + 1
            || indices.len() != values.len()
            || indptr.last() != Some(&indices.len())
            || indptr.windows(2).any(|w| w[0] > w[1])
            || indices.iter().any(|&j| j >= n)
        {
            return Err(Error::Format("inconsistent compressed-row arrays".into()));
        }
        Ok(Self {
            n,
            indptr,
            indices,
            values,
            row_stochastic,
        })
    }

    /// Keeps every nonzero entry of a dense square matrix.
    pub fn from_dense(dense: &Array2<f64>) -> Result<Self> {
        let n = dense.nrows();
        check_len(n, dense.ncols())?;
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if dense[[i, j]] != 0.0 {
                    indices.push(j);
                    values.push(dense[[i, j]]);
                }
            }
            indptr.push(indices.len());
        }
        let row_stochastic = (0..n).all(|i| {
            let s: f64 = values[indptr[i]..indptr[i + 1]].iter().sum();
            (s - 1.0).abs() <= 1e-12
        }) && values.iter().all(|&v| v >= 0.0);
        Self::from_parts(n, indptr, indices, values, row_stochastic)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_row_stochastic(&self) -> bool {
        self.row_stochastic
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[i]..self.indptr[i + 1];
        self.indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.indptr[i]..self.indptr[i + 1];
        match self.indices[range.clone()].binary_search(&j) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }
}

impl DiffusionOperator for SparseOperator {
    fn signal_len(&self) -> usize {
        self.n
    }

    fn nodes(&self) -> usize {
        self.n
    }

    fn block_dim(&self) -> usize {
        1
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            *yi = acc;
        }
    }

    fn to_dense(&self) -> Result<Array2<f64>> {
        if self.n > MAX_DENSE_DIM {
            return Err(Error::TooLargeToMaterialize(self.n));
        }
        let mut out = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                out[[i, j]] = v;
            }
        }
        Ok(out)
    }
}

/// Block row-compressed operator with `d x d` row-major blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSparseOperator {
    n: usize,
    d: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    blocks: Vec<f64>,
}

impl BlockSparseOperator {
    pub fn from_parts(
        n: usize,
        d: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        blocks: Vec<f64>,
    ) -> Result<Self> {
        if indptr.len() != n + 1
            || blocks.len() != indices.len() * d * d
            || indptr.last() != Some(&indices.len())
            || indptr.windows(2).any(|w| w[0] > w[1])
            || indices.iter().any(|&j| j >= n)
        {
            return Err(Error::Format("inconsistent block compressed-row arrays".into()));
        }
        Ok(Self {
            n,
            d,
            indptr,
            indices,
            blocks,
        })
    }

    /// Re-sparsifies a dense `nd x nd` matrix, keeping every block that has
    /// at least one nonzero entry.
    pub fn from_dense(dense: &Array2<f64>, d: usize) -> Result<Self> {
        let nd = dense.nrows();
        check_len(nd, dense.ncols())?;
        if d == 0 || !nd.is_multiple_of(d) {
            return Err(Error::ShapeMismatch(format!(
                "{nd}x{nd} matrix is not a multiple of block size {d}"
            )));
        }
        let n = nd / d;
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut blocks = Vec::new();
        for bi in 0..n {
            for bj in 0..n {
                let block: Vec<f64> = (0..d)
                    .flat_map(|r| (0..d).map(move |c| (r, c)))
                    .map(|(r, c)| dense[[bi * d + r, bj * d + c]])
                    .collect();
                if block.iter().any(|&v| v != 0.0) {
                    indices.push(bj);
                    blocks.extend(block);
                }
            }
            indptr.push(indices.len());
        }
        Self::from_parts(n, d, indptr, indices, blocks)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn raw_blocks(&self) -> &[f64] {
        &self.blocks
    }

    /// Number of stored scalar entries, `(n + m) d^2`.
    pub fn nnz(&self) -> usize {
        self.blocks.len()
    }

    /// Block `(i, j)` as a `d x d` array, zero if not stored.
    pub fn block(&self, i: usize, j: usize) -> Array2<f64> {
        let d = self.d;
        let range = self.indptr[i]..self.indptr[i + 1];
        match self.indices[range.clone()].binary_search(&j) {
            Ok(pos) => {
                let k = range.start + pos;
                Array2::from_shape_vec((d, d), self.blocks[k * d * d..(k + 1) * d * d].to_vec())
                    .expect("block shape")
            }
            Err(_) => Array2::zeros((d, d)),
        }
    }
}

impl DiffusionOperator for BlockSparseOperator {
    fn signal_len(&self) -> usize {
        self.n * self.d
    }

    fn nodes(&self) -> usize {
        self.n
    }

    fn block_dim(&self) -> usize {
        self.d
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let d = self.d;
        let dd = d * d;
        for i in 0..self.n {
            let yi = &mut y[i * d..(i + 1) * d];
            yi.iter_mut().for_each(|v| *v = 0.0);
            for k in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[k];
                let block = &self.blocks[k * dd..(k + 1) * dd];
                let xj = &x[j * d..(j + 1) * d];
                for r in 0..d {
                    let row = &block[r * d..(r + 1) * d];
                    yi[r] += row.iter().zip(xj).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
    }

    fn to_dense(&self) -> Result<Array2<f64>> {
        let nd = self.n * self.d;
        if nd > MAX_DENSE_DIM {
            return Err(Error::TooLargeToMaterialize(nd));
        }
        let d = self.d;
        let mut out = Array2::zeros((nd, nd));
        for i in 0..self.n {
            for k in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[k];
                for r in 0..d {
                    for c in 0..d {
                        out[[i * d + r, j * d + c]] = self.blocks[k * d * d + r * d + c];
                    }
                }
            }
        }
        Ok(out)
    }
}

/// `P = (I + D^-1 A) / 2`, using kernel weights or, when `weighted` is
/// false, the 0/1 adjacency.
pub fn build_lazy_walk(graph: &GeometricGraph, weighted: bool) -> Result<SparseOperator> {
    let n = graph.n();
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(n + graph.directed_edge_count());
    let mut values = Vec::with_capacity(n + graph.directed_edge_count());
    indptr.push(0);
    for i in 0..n {
        let degree = if weighted {
            graph.weighted_degree(i)
        } else {
            graph.degree(i) as f64
        };
        if !(degree > 0.0) {
            return Err(Error::ZeroDegree(i));
        }
        let mut diagonal_done = false;
        for (j, w) in graph.neighbors(i) {
            if !diagonal_done && j > i {
                indices.push(i);
                values.push(0.5);
                diagonal_done = true;
            }
            let a = if weighted { w } else { 1.0 };
            indices.push(j);
            values.push(0.5 * a / degree);
        }
        if !diagonal_done {
            indices.push(i);
            values.push(0.5);
        }
        indptr.push(indices.len());
    }
    SparseOperator::from_parts(n, indptr, indices, values, true)
}

/// Assembles `Q[i,j] = P[i,j] U_i U_j^T` on `P`'s pattern.
pub fn build_vector_diffusion(
    p: &SparseOperator,
    frames: &LocalFrameSet,
) -> Result<BlockSparseOperator> {
    let n = p.n();
    check_len(n, frames.len())?;
    let d = frames.d();
    let dd = d * d;
    let mut blocks = vec![0.0; p.nnz() * dd];
    for i in 0..n {
        let ui = frames.basis(i);
        for k in p.indptr()[i]..p.indptr()[i + 1] {
            let j = p.indices()[k];
            let pij = p.values()[k];
            let block = &mut blocks[k * dd..(k + 1) * dd];
            if i == j {
                for r in 0..d {
                    block[r * d + r] = pij;
                }
                continue;
            }
            let uj = frames.basis(j);
            let o = ui.dot(&uj.t());
            for r in 0..d {
                for c in 0..d {
                    block[r * d + c] = pij * o[[r, c]];
                }
            }
        }
    }
    BlockSparseOperator::from_parts(n, d, p.indptr().to_vec(), p.indices().to_vec(), blocks)
}

/// `op^t x` by `t` successive sparse applications.
pub fn apply_power<O: DiffusionOperator + ?Sized>(op: &O, signal: &[f64], t: usize) -> Result<Vec<f64>> {
    check_len(op.signal_len(), signal.len())?;
    let mut current = signal.to_vec();
    let mut scratch = vec![0.0; signal.len()];
    for _ in 0..t {
        op.apply_into(&current, &mut scratch);
        std::mem::swap(&mut current, &mut scratch);
    }
    Ok(current)
}

/// Exact dense copy of an operator (guarded by [`MAX_DENSE_DIM`]).
pub fn dense_materialize<O: DiffusionOperator + ?Sized>(op: &O) -> Result<Array2<f64>> {
    op.to_dense()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_knn_graph, GeometricGraph};
    use ndarray::array;

    fn two_node() -> GeometricGraph {
        GeometricGraph::from_edges(array![[0.0, 0.0], [1.0, 0.0]], &[(0, 1, 1.0)], f64::INFINITY)
            .unwrap()
    }

    #[test]
    fn two_node_lazy_walk() {
        let p = build_lazy_walk(&two_node(), false).unwrap();
        assert_eq!(p.to_dense().unwrap(), array![[0.5, 0.5], [0.5, 0.5]]);
    }

    #[test]
    fn triangle_lazy_walk() {
        let g = GeometricGraph::from_edges(
            array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)],
            f64::INFINITY,
        )
        .unwrap();
        let p = build_lazy_walk(&g, false).unwrap().to_dense().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(p[[i, j]], if i == j { 0.5 } else { 0.25 });
            }
        }
    }

    #[test]
    fn pattern_has_n_plus_m_entries_and_exact_diagonal() {
        let pts = array![[0.0, 0.0], [1.0, 0.2], [2.1, 0.0], [0.5, 1.7], [1.4, 2.5]];
        let g = build_knn_graph(&pts, 2).unwrap();
        let p = build_lazy_walk(&g, true).unwrap();
        assert_eq!(p.nnz(), g.n() + g.directed_edge_count());
        for i in 0..g.n() {
            assert_eq!(p.get(i, i), 0.5);
            let s: f64 = p.row(i).map(|(_, v)| v).sum();
            assert!((s - 1.0).abs() <= 1e-12);
            let cols: Vec<usize> = p.row(i).map(|(j, _)| j).collect();
            assert!(cols.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn power_zero_is_identity_and_constants_are_fixed() {
        let pts = array![[0.0, 0.0], [1.0, 0.2], [2.1, 0.0], [0.5, 1.7]];
        let g = build_knn_graph(&pts, 2).unwrap();
        let p = build_lazy_walk(&g, true).unwrap();
        let x = vec![0.3, -1.0, 2.0, 7.0];
        assert_eq!(apply_power(&p, &x, 0).unwrap(), x);
        let ones = vec![1.0; 4];
        let y = apply_power(&p, &ones, 9).unwrap();
        assert!(y.iter().all(|v| (v - 1.0).abs() < 1e-15));
        assert!(matches!(
            apply_power(&p, &[1.0, 2.0], 1),
            Err(Error::DimensionMismatch { expected: 4, got: 2 })
        ));
    }

    #[test]
    fn dense_guard() {
        let n = MAX_DENSE_DIM + 1;
        let op = SparseOperator::from_parts(n, vec![0; n + 1], vec![], vec![], false).unwrap();
        assert!(matches!(op.to_dense(), Err(Error::TooLargeToMaterialize(_))));
    }

    #[test]
    fn sparse_round_trip_through_dense() {
        let p = build_lazy_walk(&two_node(), false).unwrap();
        let back = SparseOperator::from_dense(&p.to_dense().unwrap()).unwrap();
        assert_eq!(back, p);
    }
}
