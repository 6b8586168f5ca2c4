//! Geometric graphs: point clouds, k-NN connectivity with Gaussian kernel
//! weights, Dirac signal placement and rigid rotations.

use std::collections::VecDeque;

use ndarray::{Array2, Array3, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};

/// A graph whose vertices live in `R^d`, with symmetric positively weighted
/// edges and scalar / vector node signals.
///
/// Adjacency is stored row-compressed with neighbors in ascending index
/// order; every undirected edge appears once in each endpoint's row.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricGraph {
    coords: Array2<f64>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    weights: Vec<f64>,
    epsilon: f64,
    scalar_signals: Array2<f64>,
    vector_signals: Array3<f64>,
}

impl GeometricGraph {
    /// Builds a graph from an undirected edge list. Duplicate edges are merged
    /// (the last weight wins); self-loops are rejected.
    ///
    /// `epsilon = f64::INFINITY` marks a graph whose weights are not kernel
    /// weights (unit weights, `K = 1`).
    pub fn from_edges(
        coords: Array2<f64>,
        edges: &[(usize, usize, f64)],
        epsilon: f64,
    ) -> Result<Self> {
        let n = coords.nrows();
        let d = coords.ncols();
        if n == 0 || d == 0 {
            return Err(Error::InvalidArgument("empty coordinate array".into()));
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({i},{j}) out of range for {n} vertices"
                )));
            }
            if i == j {
                return Err(Error::InvalidArgument(format!("self-loop at vertex {i}")));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "edge ({i},{j}) has non-positive weight {w}"
                )));
            }
            upsert(&mut rows[i], j, w);
            upsert(&mut rows[j], i, w);
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            for (j, w) in row {
                neighbors.push(j);
                weights.push(w);
            }
            offsets.push(neighbors.len());
        }
        Ok(Self {
            coords,
            offsets,
            neighbors,
            weights,
            epsilon,
            scalar_signals: Array2::zeros((n, 0)),
            vector_signals: Array3::zeros((n, 0, d)),
        })
    }

    pub fn n(&self) -> usize {
        self.coords.nrows()
    }

    pub fn d(&self) -> usize {
        self.coords.ncols()
    }

    pub fn coords(&self) -> &Array2<f64> {
        &self.coords
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.coords.row(i)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Sum of edge weights incident to `i`.
    pub fn weighted_degree(&self, i: usize) -> f64 {
        self.weights[self.offsets[i]..self.offsets[i + 1]].iter().sum()
    }

    pub fn neighbor_indices(&self, i: usize) -> &[usize] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn neighbor_weights(&self, i: usize) -> &[f64] {
        &self.weights[self.offsets[i]..self.offsets[i + 1]]
    }

    /// `(neighbor, weight)` pairs of vertex `i` in ascending neighbor order.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.neighbor_indices(i)
            .iter()
            .copied()
            .zip(self.neighbor_weights(i).iter().copied())
    }

    /// Number of stored directed adjacency entries (twice the edge count).
    pub fn directed_edge_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    /// Undirected edges `(i, j, w)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n())
            .flat_map(|i| {
                self.neighbors(i)
                    .filter(move |&(j, _)| i < j)
                    .map(move |(j, w)| (i, j, w))
            })
            .collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbor_indices(i).binary_search(&j).is_ok()
    }

    /// Row-compressed adjacency as `(offsets, neighbors)`.
    pub fn adjacency(&self) -> (&[usize], &[usize]) {
        (&self.offsets, &self.neighbors)
    }

    pub fn min_degree(&self) -> usize {
        (0..self.n()).map(|i| self.degree(i)).min().unwrap_or(0)
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n()).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    pub fn component_count(&self) -> usize {
        connected_components(self.n(), &self.offsets, &self.neighbors)
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() == 1
    }

    /// `exp(-|v_i - v_j|^2 / epsilon)`; identically 1 for unit-weight graphs.
    pub fn kernel(&self, i: usize, j: usize) -> f64 {
        gaussian_kernel(sq_dist(self.point(i), self.point(j)), self.epsilon)
    }

    pub fn scalar_signals(&self) -> &Array2<f64> {
        &self.scalar_signals
    }

    /// Vector signals as `n x F_vec x d`.
    pub fn vector_signals(&self) -> &Array3<f64> {
        &self.vector_signals
    }

    pub fn set_scalar_signals(&mut self, signals: Array2<f64>) -> Result<()> {
        if signals.nrows() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: signals.nrows(),
            });
        }
        self.scalar_signals = signals;
        Ok(())
    }

    pub fn set_vector_signals(&mut self, signals: Array3<f64>) -> Result<()> {
        let (n, _, d) = signals.dim();
        if n != self.n() || d != self.d() {
            return Err(Error::ShapeMismatch(format!(
                "vector signals must be {}x_x{}, got {:?}",
                self.n(),
                self.d(),
                signals.dim()
            )));
        }
        self.vector_signals = signals;
        Ok(())
    }

    /// Uses the vertex coordinates themselves as the single vector signal.
    pub fn with_coordinate_field(mut self) -> Self {
        let field = self.coords.clone().insert_axis(Axis(1));
        self.vector_signals = field;
        self
    }

    /// Pairwise-distance diameter by exhaustive scan.
    pub fn diameter(&self) -> f64 {
        diameter(&self.coords)
    }

    fn with_weights(&self, weights: Vec<f64>, epsilon: f64) -> Self {
        Self {
            weights,
            epsilon,
            ..self.clone()
        }
    }
}

fn upsert(row: &mut Vec<(usize, f64)>, j: usize, w: f64) {
    match row.iter_mut().find(|(k, _)| *k == j) {
        Some(entry) => entry.1 = w,
        None => row.push((j, w)),
    }
}

fn connected_components(n: usize, offsets: &[usize], neighbors: &[usize]) -> usize {
    let mut seen = vec![false; n];
    let mut components = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            for &v in &neighbors[offsets[u]..offsets[u + 1]] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    components
}

pub(crate) fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn gaussian_kernel(sq_distance: f64, epsilon: f64) -> f64 {
    if epsilon.is_infinite() {
        1.0
    } else {
        (-sq_distance / epsilon).exp()
    }
}

/// Largest pairwise Euclidean distance among the rows of `points`.
pub fn diameter(points: &Array2<f64>) -> f64 {
    let n = points.nrows();
    let mut best = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            best = best.max(sq_dist(points.row(i), points.row(j)));
        }
    }
    best.sqrt()
}

/// Symmetrized k-NN graph with unit weights (`epsilon = inf`).
///
/// Distance ties are broken by the lower vertex index. Vertices with fewer
/// than `d` neighbors afterwards are connected to their next-nearest
/// non-neighbors until the degree floor holds.
pub fn build_knn_graph(points: &Array2<f64>, k: usize) -> Result<GeometricGraph> {
    let n = points.nrows();
    let d = points.ncols();
    if k == 0 || n <= k {
        return Err(Error::InvalidArgument(format!(
            "k-NN needs n > k >= 1 (n = {n}, k = {k})"
        )));
    }
    let ranked = ranked_neighbors(points)?;

    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, order) in ranked.iter().enumerate() {
        for &j in order.iter().take(k) {
            if !adj[i].contains(&j) {
                adj[i].push(j);
            }
            if !adj[j].contains(&i) {
                adj[j].push(i);
            }
        }
    }
    let (offsets, flat) = flatten(&adj);
    let components = connected_components(n, &offsets, &flat);
    if components != 1 {
        return Err(Error::DisconnectedGraph { components });
    }

    // degree floor
    let floor = d.min(n - 1);
    for i in 0..n {
        let mut cursor = 0;
        while adj[i].len() < floor {
            let j = ranked[i][cursor];
            cursor += 1;
            if !adj[i].contains(&j) {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }

    let edges: Vec<(usize, usize, f64)> = adj
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().filter(move |&&j| i < j).map(move |&j| (i, j, 1.0)))
        .collect();
    GeometricGraph::from_edges(points.clone(), &edges, f64::INFINITY)
}

/// Every other vertex of each vertex, sorted by (distance, index).
fn ranked_neighbors(points: &Array2<f64>) -> Result<Vec<Vec<usize>>> {
    let n = points.nrows();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut row: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
        for j in 0..n {
            if j == i {
                continue;
            }
            let dist = sq_dist(points.row(i), points.row(j));
            if dist == 0.0 {
                return Err(Error::DegeneratePoints(i.min(j), i.max(j)));
            }
            row.push((dist, j));
        }
        row.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out.push(row.into_iter().map(|(_, j)| j).collect());
    }
    Ok(out)
}

fn flatten(adj: &[Vec<usize>]) -> (Vec<usize>, Vec<usize>) {
    let mut offsets = vec![0];
    let mut flat = Vec::new();
    for row in adj {
        flat.extend_from_slice(row);
        offsets.push(flat.len());
    }
    (offsets, flat)
}

/// How the Gaussian kernel scale is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonMode {
    Explicit(f64),
    /// Square of the mean (over nodes) of each node's mean neighbor distance.
    MeanNeighborSq,
}

/// Mean over vertices of the mean distance to their neighbors, pooled over
/// all vertices of all given graphs.
pub fn mean_neighbor_distance<'a>(graphs: impl IntoIterator<Item = &'a GeometricGraph>) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for g in graphs {
        for i in 0..g.n() {
            let deg = g.degree(i);
            if deg == 0 {
                continue;
            }
            let mean: f64 = g
                .neighbor_indices(i)
                .iter()
                .map(|&j| sq_dist(g.point(i), g.point(j)).sqrt())
                .sum::<f64>()
                / deg as f64;
            total += mean;
            count += 1;
        }
    }
    total / count as f64
}

/// Dataset-level kernel scale: `(mean neighbor distance)^2` over all graphs.
pub fn dataset_epsilon<'a>(graphs: impl IntoIterator<Item = &'a GeometricGraph>) -> f64 {
    let m = mean_neighbor_distance(graphs);
    m * m
}

/// Sets every edge weight to `exp(-|v_i - v_j|^2 / epsilon)`.
pub fn kernel_weights(graph: &GeometricGraph, mode: EpsilonMode) -> Result<GeometricGraph> {
    let epsilon = match mode {
        EpsilonMode::Explicit(eps) => eps,
        EpsilonMode::MeanNeighborSq => {
            if graph.directed_edge_count() == 0 {
                return Err(Error::InvalidArgument("graph has no edges".into()));
            }
            dataset_epsilon(std::iter::once(graph))
        }
    };
    if !(epsilon > 0.0) {
        return Err(Error::NonpositiveEpsilon(epsilon));
    }
    let mut weights = Vec::with_capacity(graph.directed_edge_count());
    for i in 0..graph.n() {
        for &j in graph.neighbor_indices(i) {
            weights.push(gaussian_kernel(
                sq_dist(graph.point(i), graph.point(j)),
                epsilon,
            ));
        }
    }
    Ok(graph.with_weights(weights, epsilon))
}

/// Indices of the vertices nearest to and farthest from the centroid.
///
/// Ties go to the lowest index; if both picks coincide the farthest pick
/// moves to the next candidate so the two Diracs are distinct.
pub fn dirac_indices(coords: &Array2<f64>) -> Result<(usize, usize)> {
    let n = coords.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "Dirac placement needs at least two vertices".into(),
        ));
    }
    let centroid = coords.mean_axis(Axis(0)).expect("non-empty");
    let dists: Vec<f64> = (0..n)
        .map(|i| sq_dist(coords.row(i), centroid.view()))
        .collect();
    let mut by_near: Vec<usize> = (0..n).collect();
    by_near.sort_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(a.cmp(&b)));
    let mut by_far: Vec<usize> = (0..n).collect();
    by_far.sort_by(|&a, &b| dists[b].total_cmp(&dists[a]).then(a.cmp(&b)));
    let nearest = by_near[0];
    let farthest = by_far
        .into_iter()
        .find(|&i| i != nearest)
        .expect("n >= 2");
    Ok((nearest, farthest))
}

/// Two one-hot scalar signals (columns): nearest-to-centroid and
/// farthest-from-centroid vertex.
pub fn place_dirac_signals(graph: &GeometricGraph) -> Result<Array2<f64>> {
    let (near, far) = dirac_indices(graph.coords())?;
    let mut out = Array2::zeros((graph.n(), 2));
    out[[near, 0]] = 1.0;
    out[[far, 1]] = 1.0;
    Ok(out)
}

/// An element of `SO(d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation {
    matrix: Array2<f64>,
}

impl Rotation {
    const TOL: f64 = 1e-12;

    /// Validates `R^T R = I` and `det R = +1` to `1e-12`.
    pub fn new(matrix: Array2<f64>) -> Result<Self> {
        let d = matrix.nrows();
        if matrix.ncols() != d || !(d == 2 || d == 3) {
            return Err(Error::UnsupportedDimension(d));
        }
        let gram = matrix.t().dot(&matrix);
        let orth = gram
            .indexed_iter()
            .map(|((i, j), g)| (g - if i == j { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max);
        let det = determinant(&matrix);
        if orth > Self::TOL || (det - 1.0).abs() > Self::TOL {
            return Err(Error::InvalidArgument(format!(
                "not a rotation: orthogonality error {orth:e}, det {det}"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            matrix: Array2::eye(d),
        }
    }

    pub fn planar(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            matrix: ndarray::array![[c, -s], [s, c]],
        }
    }

    /// Rotation by `angle` radians about the z-axis in `R^3`.
    pub fn about_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            matrix: ndarray::array![[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Quarter turn about z, built exactly so that `(x, y, z) -> (-y, x, z)`.
    pub fn quarter_turn_z() -> Self {
        Self {
            matrix: ndarray::array![[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Rotation matrix from a (not necessarily normalized) quaternion `(w, x, y, z)`.
    pub fn from_quaternion(q: [f64; 4]) -> Self {
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let [w, x, y, z] = q.map(|v| v / norm);
        Self {
            matrix: ndarray::array![
                [
                    1.0 - 2.0 * (y * y + z * z),
                    2.0 * (x * y - z * w),
                    2.0 * (x * z + y * w)
                ],
                [
                    2.0 * (x * y + z * w),
                    1.0 - 2.0 * (x * x + z * z),
                    2.0 * (y * z - x * w)
                ],
                [
                    2.0 * (x * z - y * w),
                    2.0 * (y * z + x * w),
                    1.0 - 2.0 * (x * x + y * y)
                ]
            ],
        }
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn d(&self) -> usize {
        self.matrix.nrows()
    }

    /// Applies `R` to every row of an `n x d` array (`X R^T`).
    pub fn apply_rows(&self, rows: &Array2<f64>) -> Array2<f64> {
        rows.dot(&self.matrix.t())
    }

    /// Applies `R` node-wise to a flattened `nd` vector field.
    pub fn apply_flat(&self, field: &[f64]) -> Vec<f64> {
        let d = self.d();
        let mut out = vec![0.0; field.len()];
        for (src, dst) in field.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            for r in 0..d {
                dst[r] = (0..d).map(|c| self.matrix[[r, c]] * src[c]).sum();
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        Self {
            matrix: self.matrix.t().to_owned(),
        }
    }
}

pub(crate) fn determinant(m: &Array2<f64>) -> f64 {
    match m.nrows() {
        1 => m[[0, 0]],
        2 => m[[0, 0]] * m[[1, 1]] - m[[0, 1]] * m[[1, 0]],
        3 => {
            m[[0, 0]] * (m[[1, 1]] * m[[2, 2]] - m[[1, 2]] * m[[2, 1]])
                - m[[0, 1]] * (m[[1, 0]] * m[[2, 2]] - m[[1, 2]] * m[[2, 0]])
                + m[[0, 2]] * (m[[1, 0]] * m[[2, 1]] - m[[1, 1]] * m[[2, 0]])
        }
        _ => f64::NAN,
    }
}

/// Haar-uniform rotation: uniform angle for `d = 2`, normalized Gaussian
/// quaternion for `d = 3`.
pub fn random_rotation(seed: u64, d: usize) -> Result<Rotation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_rotation_with(&mut rng, d)
}

pub fn random_rotation_with<R: rand::Rng + ?Sized>(rng: &mut R, d: usize) -> Result<Rotation> {
    match d {
        2 => {
            let angle = Uniform::new(0.0, std::f64::consts::TAU)
                .expect("valid range")
                .sample(rng);
            Ok(Rotation::planar(angle))
        }
        3 => loop {
            let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
            if q.iter().map(|v| v * v).sum::<f64>() > 1e-12 {
                return Ok(Rotation::from_quaternion(q));
            }
        },
        other => Err(Error::UnsupportedDimension(other)),
    }
}

/// Rotates coordinates and vector signals; connectivity, weights and scalar
/// signals are carried over unchanged.
pub fn rotate_graph(graph: &GeometricGraph, rotation: &Rotation) -> Result<GeometricGraph> {
    if rotation.d() != graph.d() {
        return Err(Error::DimensionMismatch {
            expected: graph.d(),
            got: rotation.d(),
        });
    }
    let mut out = graph.clone();
    out.coords = rotation.apply_rows(&graph.coords);
    let (n, f, d) = graph.vector_signals.dim();
    let mut field = Array3::zeros((n, f, d));
    for i in 0..n {
        let rotated = rotation.apply_rows(&graph.vector_signals.index_axis(Axis(0), i).to_owned());
        field.index_axis_mut(Axis(0), i).assign(&rotated);
    }
    out.vector_signals = field;
    Ok(out)
}
