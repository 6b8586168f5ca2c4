use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::geometry::{gaussian_kernel, sq_dist, GeometricGraph};
use crate::linalg::jacobi_eigen_desc;

/// Relative gap below which consecutive singular values count as repeated.
pub const SPECTRAL_GAP_TOL: f64 = 1e-6;
/// `sigma_min / sigma_max` below which a frame is rank deficient.
pub const RANK_TOL: f64 = 1e-12;
/// Third moments this small relative to their scale leave the sign untouched.
pub const SIGN_TOL: f64 = 1e-9;

/// How the sign of a frame column was fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SignProvenance {
    /// Weighted third moment was positive after (possibly) flipping.
    Skewness,
    /// Third moment was numerically zero; raw solver sign kept.
    FallbackFlagged,
    /// Canonicalization has not been run.
    Raw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalFrame {
    /// `d x d`, orthonormal columns `u_{i,k}`.
    pub basis: Array2<f64>,
    /// Non-increasing singular values of `B_i`.
    pub singular_values: Array1<f64>,
    pub signs: Vec<SignProvenance>,
    /// Some pair of consecutive singular values is (nearly) repeated.
    pub spectral_gap_flag: bool,
}

impl LocalFrame {
    /// True when the frame is not uniquely determined by the geometry.
    pub fn is_flagged(&self) -> bool {
        self.spectral_gap_flag || self.signs.contains(&SignProvenance::FallbackFlagged)
    }
}

/// Per-node orthonormal frames.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFrameSet {
    d: usize,
    frames: Vec<LocalFrame>,
}

impl LocalFrameSet {
    pub fn new(d: usize, frames: Vec<LocalFrame>) -> Self {
        Self { d, frames }
    }

    /// Every node gets the standard basis; reduces `Q` to `P (x) I`.
    pub fn identity(n: usize, d: usize) -> Self {
        let frame = LocalFrame {
            basis: Array2::eye(d),
            singular_values: Array1::ones(d),
            signs: vec![SignProvenance::Raw; d],
            spectral_gap_flag: false,
        };
        Self {
            d,
            frames: vec![frame; n],
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, i: usize) -> &LocalFrame {
        &self.frames[i]
    }

    pub fn frames(&self) -> &[LocalFrame] {
        &self.frames
    }

    pub fn frames_mut(&mut self) -> &mut [LocalFrame] {
        &mut self.frames
    }

    pub fn basis(&self, i: usize) -> &Array2<f64> {
        &self.frames[i].basis
    }

    /// `O_{i,j} = U_i U_j^T`.
    pub fn transport(&self, i: usize, j: usize) -> Array2<f64> {
        self.frames[i].basis.dot(&self.frames[j].basis.t())
    }

    pub fn flagged_nodes(&self) -> Vec<usize> {
        (0..self.frames.len())
            .filter(|&i| self.frames[i].is_flagged())
            .collect()
    }

    pub fn any_flagged(&self) -> bool {
        self.frames.iter().any(LocalFrame::is_flagged)
    }
}

/// Offsets `v_j - v_i` to each neighbor (ascending neighbor index) together
/// with their kernel weights `K_eps(v_i, v_j)`.
fn neighborhood(graph: &GeometricGraph, i: usize) -> Vec<(Vec<f64>, f64)> {
    let vi = graph.point(i);
    graph
        .neighbor_indices(i)
        .iter()
        .map(|&j| {
            let vj = graph.point(j);
            let offset: Vec<f64> = vj.iter().zip(vi.iter()).map(|(a, b)| a - b).collect();
            let k = gaussian_kernel(sq_dist(vi, vj), graph.epsilon());
            (offset, k)
        })
        .collect()
}

/// Left singular vectors of `B_i = C_i D_i` at one node, without sign
/// canonicalization.
///
/// Computed as the eigenvectors of the `d x d` matrix `B_i B_i^T`, so the
/// right singular vectors are never formed.
pub fn raw_frame_at(graph: &GeometricGraph, i: usize) -> Result<LocalFrame> {
    let d = graph.d();
    let mut gram = Array2::<f64>::zeros((d, d));
    for (offset, k) in neighborhood(graph, i) {
        for r in 0..d {
            for c in 0..d {
                gram[[r, c]] += k * offset[r] * offset[c];
            }
        }
    }
    let (eigenvalues, basis) = jacobi_eigen_desc(&gram)?;
    let singular_values = eigenvalues.mapv(|l| l.max(0.0).sqrt());
    let top = singular_values[0];
    let ratio = if top > 0.0 {
        singular_values[d - 1] / top
    } else {
        0.0
    };
    if ratio < RANK_TOL {
        return Err(Error::RankDeficientFrame { node: i, ratio });
    }
    let spectral_gap_flag = (1..d)
        .any(|k| singular_values[k - 1] - singular_values[k] < SPECTRAL_GAP_TOL * top);
    Ok(LocalFrame {
        basis,
        singular_values,
        signs: vec![SignProvenance::Raw; d],
        spectral_gap_flag,
    })
}

/// Raw frames at every node.
pub fn build_raw_local_frames(graph: &GeometricGraph) -> Result<LocalFrameSet> {
    let frames = (0..graph.n())
        .map(|i| raw_frame_at(graph, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(LocalFrameSet::new(graph.d(), frames))
}

/// Flips each column `u_{i,k}` of node `i`'s frame so the kernel-weighted
/// third moment `sum_j K(v_i, v_j) <v_j - v_i, u_{i,k}>^3` is non-negative.
///
/// Every quantity involved is an inner product of vectors that co-rotate
/// with the point cloud, so the choice commutes with rotations. Columns
/// whose moment is numerically zero keep their sign and are flagged.
pub fn canonicalize_frame(frame: &mut LocalFrame, graph: &GeometricGraph, i: usize) {
    let d = frame.basis.nrows();
    let hood = neighborhood(graph, i);
    let scale: f64 = hood
        .iter()
        .map(|(offset, k)| k * offset.iter().map(|x| x * x).sum::<f64>().powf(1.5))
        .sum();
    for col in 0..d {
        let moment: f64 = hood
            .iter()
            .map(|(offset, k)| {
                let proj: f64 = (0..d).map(|r| offset[r] * frame.basis[[r, col]]).sum();
                k * proj * proj * proj
            })
            .sum();
        if moment.abs() <= SIGN_TOL * scale {
            frame.signs[col] = SignProvenance::FallbackFlagged;
            continue;
        }
        if moment < 0.0 {
            frame.basis.column_mut(col).mapv_inplace(|v| -v);
        }
        frame.signs[col] = SignProvenance::Skewness;
    }
}

/// Applies [`canonicalize_frame`] at every node.
pub fn canonicalize_signs(mut frames: LocalFrameSet, graph: &GeometricGraph) -> LocalFrameSet {
    for (i, frame) in frames.frames_mut().iter_mut().enumerate() {
        canonicalize_frame(frame, graph, i);
    }
    frames
}

/// Sign-canonicalized local frames.
pub fn build_local_frames(graph: &GeometricGraph) -> Result<LocalFrameSet> {
    Ok(canonicalize_signs(build_raw_local_frames(graph)?, graph))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Center vertex 0 joined to each leaf; only node 0 has a full-rank frame.
    fn star(leaves: &[[f64; 2]], epsilon: f64) -> GeometricGraph {
        let mut rows = vec![[0.0, 0.0]];
        rows.extend_from_slice(leaves);
        let coords = Array2::from_shape_fn((rows.len(), 2), |(i, j)| rows[i][j]);
        let edges: Vec<_> = (1..rows.len()).map(|j| (0, j, 1.0)).collect();
        GeometricGraph::from_edges(coords, &edges, epsilon).unwrap()
    }

    fn center_frame(g: &GeometricGraph) -> LocalFrame {
        let mut f = raw_frame_at(g, 0).unwrap();
        canonicalize_frame(&mut f, g, 0);
        f
    }

    #[test]
    fn symmetric_cross_is_degenerate_identity() {
        let g = star(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]], f64::INFINITY);
        let raw = raw_frame_at(&g, 0).unwrap();
        assert!(raw.spectral_gap_flag);
        assert_eq!(raw.basis, Array2::<f64>::eye(2));
        let f = center_frame(&g);
        assert_eq!(f.signs, vec![SignProvenance::FallbackFlagged; 2]);
        assert_eq!(f.basis, Array2::<f64>::eye(2));
        assert!(f.is_flagged());
    }

    #[test]
    fn skewed_star_picks_positive_axes() {
        // B B^T = diag(5, 1); moments 8 - 1 = 7 along x and 1 along y
        let g = star(&[[2.0, 0.0], [-1.0, 0.0], [0.0, 1.0]], f64::INFINITY);
        let f = center_frame(&g);
        assert!((f.singular_values[0] - 5f64.sqrt()).abs() < 1e-14);
        assert!((f.singular_values[1] - 1.0).abs() < 1e-14);
        assert!((f.basis[[0, 0]] - 1.0).abs() < 1e-14);
        assert!((f.basis[[1, 1]] - 1.0).abs() < 1e-14);
        assert_eq!(f.signs, vec![SignProvenance::Skewness; 2]);
        assert!(!f.is_flagged());
    }

    #[test]
    fn flipped_input_column_is_restored() {
        let g = star(&[[2.0, 0.3], [-1.0, 0.1], [0.2, 1.0]], 3.0);
        let reference = center_frame(&g);
        for flips in [[true, false], [false, true], [true, true]] {
            let mut f = raw_frame_at(&g, 0).unwrap();
            for (col, flip) in flips.iter().enumerate() {
                if *flip {
                    f.basis.column_mut(col).mapv_inplace(|v| -v);
                }
            }
            canonicalize_frame(&mut f, &g, 0);
            assert_eq!(f.basis, reference.basis);
        }
    }

    #[test]
    fn mirrored_neighbors_fall_back() {
        let g = star(&[[2.0, 0.0], [-2.0, 0.0], [0.0, 1.0]], f64::INFINITY);
        let f = center_frame(&g);
        assert_eq!(f.signs[0], SignProvenance::FallbackFlagged);
        assert_eq!(f.signs[1], SignProvenance::Skewness);
    }

    #[test]
    fn one_sided_neighbors_keep_sign() {
        let g = star(&[[1.0, 0.2], [2.0, -0.1], [1.5, 0.05]], f64::INFINITY);
        let f = center_frame(&g);
        // every neighbor has positive x, so u_1 points along +x
        assert!(f.basis[[0, 0]] > 0.0);
    }

    #[test]
    fn collinear_neighborhood_is_rank_deficient() {
        let g = star(&[[1.0, 0.0], [-2.0, 0.0]], f64::INFINITY);
        assert!(matches!(
            raw_frame_at(&g, 0),
            Err(Error::RankDeficientFrame { node: 0, .. })
        ));
        // the leaves have a single neighbor each
        assert!(matches!(
            build_local_frames(&g),
            Err(Error::RankDeficientFrame { node: 0, .. })
        ));
    }

    #[test]
    fn identity_frames_transport_is_identity() {
        let f = LocalFrameSet::identity(3, 3);
        assert_eq!(f.transport(0, 2), Array2::<f64>::eye(3));
        assert!(!f.any_flagged());
    }
}
