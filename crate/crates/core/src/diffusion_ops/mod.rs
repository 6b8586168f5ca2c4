//! Scalar and vector diffusion operators.
//!
//! The scalar operator is the lazy random walk `P = (I + D^-1 A) / 2` stored
//! row-compressed. The vector operator `Q` shares `P`'s sparsity pattern with
//! `d x d` blocks `Q[i,j] = P[i,j] U_i U_j^T`, where `U_i` is the local frame
//! at node `i`.

mod frames;
mod sparse;

pub use frames::{
    build_local_frames, build_raw_local_frames, canonicalize_frame, canonicalize_signs, raw_frame_at,
    LocalFrame, LocalFrameSet,
    SignProvenance, RANK_TOL, SIGN_TOL, SPECTRAL_GAP_TOL,
};
pub use sparse::{
    apply_power, build_lazy_walk, build_vector_diffusion, dense_materialize, BlockSparseOperator,
    DiffusionOperator, SparseOperator, MAX_DENSE_DIM,
};
pub(crate) use sparse::check_len;
