//! Scalar and vector scattering coefficients, scattering moments and
//! rotation-invariant summaries of vector coefficients.
//!
//! Paths are ordered zeroth order first, then first order
//! `Psi_0, ..., Psi_{B-1}, Phi`, then every higher order in lexicographic
//! order of its band-pass index sequence. Higher orders only cascade
//! band-pass outputs and only keep non-decreasing index sequences.

use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::diffusion_ops::{check_len, BlockSparseOperator, DiffusionOperator, SparseOperator};
use crate::error::{Error, Result};
use crate::wavelets::{wavelet_transform, WaveletBank};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScatteringPath {
    pub order: usize,
    /// Band-pass indices (first order low-pass: the low-pass index `B`).
    pub indices: Vec<usize>,
    pub low_pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Track {
    Scalar,
    Vector,
    /// Rotation-invariant features derived from vector coefficients.
    Invariant,
}

/// Entrywise activation for the scalar track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarActivation {
    #[default]
    Identity,
    Abs,
    Relu,
    Tanh,
}

impl ScalarActivation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ScalarActivation::Identity => x,
            ScalarActivation::Abs => x.abs(),
            ScalarActivation::Relu => x.max(0.0),
            ScalarActivation::Tanh => x.tanh(),
        }
    }
}

/// Radial profile `f` of a vector activation `w -> f(|w|) w / |w|`.
#[derive(Debug, Clone, Copy, Default)]
pub enum RadialActivation {
    #[default]
    Identity,
    Tanh,
    Custom(fn(f64) -> f64),
}

impl RadialActivation {
    pub fn profile(self, r: f64) -> f64 {
        match self {
            RadialActivation::Identity => r,
            RadialActivation::Tanh => r.tanh(),
            RadialActivation::Custom(f) => f(r),
        }
    }

    fn is_identity(self) -> bool {
        matches!(self, RadialActivation::Identity)
    }
}

/// `f(|w|) w / |w|` for `w != 0`, otherwise zero.
pub fn radial_activation(w: &[f64], f: RadialActivation) -> Vec<f64> {
    let mut out = w.to_vec();
    apply_radial_in_place(&mut out, f);
    out
}

fn apply_radial_in_place(w: &mut [f64], f: RadialActivation) {
    let r = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r == 0.0 {
        w.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let scale = f.profile(r) / r;
    w.iter_mut().for_each(|v| *v *= scale);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScatteringConfig {
    /// Highest path order; 2 by default. Orders above 2 grow quickly.
    pub max_order: usize,
    /// Keep paths with repeated band indices (`j = j'`).
    pub include_diagonal: bool,
}

impl Default for ScatteringConfig {
    fn default() -> Self {
        Self {
            max_order: 2,
            include_diagonal: true,
        }
    }
}

/// Every path produced by `bank` under `config`, in storage order.
pub fn scattering_paths(bank: &WaveletBank, config: &ScatteringConfig) -> Vec<ScatteringPath> {
    let bands = bank.band_pass_count();
    let mut paths = vec![ScatteringPath {
        order: 0,
        indices: vec![],
        low_pass: false,
    }];
    if config.max_order == 0 {
        return paths;
    }
    for j in 0..bands {
        paths.push(ScatteringPath {
            order: 1,
            indices: vec![j],
            low_pass: false,
        });
    }
    paths.push(ScatteringPath {
        order: 1,
        indices: vec![bands],
        low_pass: true,
    });
    let mut level: Vec<Vec<usize>> = (0..bands).map(|j| vec![j]).collect();
    for order in 2..=config.max_order {
        let mut next = Vec::new();
        for prefix in &level {
            let last = *prefix.last().expect("non-empty prefix");
            let start = if config.include_diagonal { last } else { last + 1 };
            for j in start..bands {
                let mut idx = prefix.clone();
                idx.push(j);
                paths.push(ScatteringPath {
                    order,
                    indices: idx.clone(),
                    low_pass: false,
                });
                next.push(idx);
            }
        }
        level = next;
    }
    paths
}

/// Number of paths; `1 + (J+2) + (J+1)(J+2)/2` for a second-order
/// configuration on a bank with `J + 1` band-pass filters.
pub fn path_count(bank: &WaveletBank, config: &ScatteringConfig) -> usize {
    scattering_paths(bank, config).len()
}

/// Scattering coefficients of a single flattened signal, one vector per path.
fn scatter_signal<O, F>(
    op: &O,
    bank: &WaveletBank,
    signal: &[f64],
    config: &ScatteringConfig,
    activate: &F,
) -> Result<Vec<Vec<f64>>>
where
    O: DiffusionOperator + ?Sized,
    F: Fn(&mut [f64]),
{
    let bands = bank.band_pass_count();
    let mut out = vec![signal.to_vec()];
    if config.max_order == 0 {
        return Ok(out);
    }
    let first = wavelet_transform(op, bank, signal)?;
    let mut level: Vec<Vec<f64>> = Vec::with_capacity(bands);
    for (j, mut coeff) in first.into_iter().enumerate() {
        activate(&mut coeff);
        if j < bands {
            level.push(coeff.clone());
        }
        out.push(coeff);
    }
    let mut level_idx: Vec<usize> = (0..bands).collect();
    for _order in 2..=config.max_order {
        let mut next = Vec::new();
        let mut next_idx = Vec::new();
        for (coeff, &last) in level.iter().zip(&level_idx) {
            let children = wavelet_transform(op, bank, coeff)?;
            let start = if config.include_diagonal { last } else { last + 1 };
            for (j, mut child) in children.into_iter().enumerate().take(bands).skip(start) {
                activate(&mut child);
                out.push(child.clone());
                next.push(child);
                next_idx.push(j);
            }
        }
        level = next;
        level_idx = next_idx;
    }
    Ok(out)
}

/// Node x channel x path coefficients plus path metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringTensor {
    values: Array3<f64>,
    paths: Vec<ScatteringPath>,
    track: Track,
}

impl ScatteringTensor {
    pub fn new(values: Array3<f64>, paths: Vec<ScatteringPath>, track: Track) -> Result<Self> {
        if values.dim().2 != paths.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} paths for a slab with {} path columns",
                paths.len(),
                values.dim().2
            )));
        }
        Ok(Self {
            values,
            paths,
            track,
        })
    }

    /// Wraps plain feature slabs (e.g. vector invariants) as a tensor whose
    /// "paths" are just feature columns.
    pub fn from_invariants(values: Array3<f64>) -> Self {
        let paths = (0..values.dim().2)
            .map(|k| ScatteringPath {
                order: 0,
                indices: vec![k],
                low_pass: false,
            })
            .collect();
        Self {
            values,
            paths,
            track: Track::Invariant,
        }
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array3<f64> {
        self.values
    }

    pub fn paths(&self) -> &[ScatteringPath] {
        &self.paths
    }

    pub fn track(&self) -> Track {
        self.track
    }

    pub fn path_count(&self) -> usize {
        self.paths.len()
    }
}

/// Scattering of every column of `x` (`n x F`) over the scalar operator.
pub fn scalar_scattering(
    p: &SparseOperator,
    bank: &WaveletBank,
    x: &Array2<f64>,
    config: &ScatteringConfig,
    activation: ScalarActivation,
) -> Result<ScatteringTensor> {
    scalar_scattering_with(p, bank, x, config, activation)
}

/// Same as [`scalar_scattering`] over any operator with one value per node.
pub fn scalar_scattering_with<O: DiffusionOperator + ?Sized>(
    op: &O,
    bank: &WaveletBank,
    x: &Array2<f64>,
    config: &ScatteringConfig,
    activation: ScalarActivation,
) -> Result<ScatteringTensor> {
    let (n, f) = x.dim();
    check_len(op.signal_len(), n)?;
    let paths = scattering_paths(bank, config);
    let mut values = Array3::zeros((n, f, paths.len()));
    let act = |v: &mut [f64]| {
        if activation != ScalarActivation::Identity {
            v.iter_mut().for_each(|e| *e = activation.apply(*e));
        }
    };
    for c in 0..f {
        let column = x.column(c).to_vec();
        let coeffs = scatter_signal(op, bank, &column, config, &act)?;
        for (s, coeff) in coeffs.iter().enumerate() {
            for i in 0..n {
                values[[i, c, s]] = coeff[i];
            }
        }
    }
    ScatteringTensor::new(values, paths, Track::Scalar)
}

/// Scattering of one vector field `w` (`n x d`) over the vector operator
/// with a node-wise radial activation.
pub fn vector_scattering(
    q: &BlockSparseOperator,
    bank: &WaveletBank,
    w: &Array2<f64>,
    config: &ScatteringConfig,
    radial: RadialActivation,
) -> Result<ScatteringTensor> {
    let (n, d) = w.dim();
    if d != q.d() {
        return Err(Error::DimensionMismatch {
            expected: q.d(),
            got: d,
        });
    }
    check_len(q.signal_len(), n * d)?;
    let paths = scattering_paths(bank, config);
    let flat: Vec<f64> = w.iter().copied().collect();
    let act = |v: &mut [f64]| {
        if !radial.is_identity() {
            v.chunks_exact_mut(d)
                .for_each(|node| apply_radial_in_place(node, radial));
        }
    };
    let coeffs = scatter_signal(q, bank, &flat, config, &act)?;
    let mut values = Array3::zeros((n, d, paths.len()));
    for (s, coeff) in coeffs.iter().enumerate() {
        for i in 0..n {
            for c in 0..d {
                values[[i, c, s]] = coeff[i * d + c];
            }
        }
    }
    ScatteringTensor::new(values, paths, Track::Vector)
}

/// `sum_i |coefficient(v_i)|^q` for every channel, path and exponent, laid
/// out channel-major, then path, then `q`.
pub fn scattering_moments(tensor: &ScatteringTensor, qs: &[f64]) -> Result<Vec<f64>> {
    if tensor.track() == Track::Vector {
        return Err(Error::InvalidArgument(
            "moments need scalar or invariant coefficients".into(),
        ));
    }
    if let Some(&q) = qs.iter().find(|&&q| !(q > 0.0)) {
        return Err(Error::NonpositiveQ(q));
    }
    let (_, channels, paths) = tensor.values().dim();
    let mut out = Vec::with_capacity(channels * paths * qs.len());
    for c in 0..channels {
        for s in 0..paths {
            let column = tensor.values().index_axis(Axis(1), c);
            let column = column.index_axis(Axis(1), s);
            for &q in qs {
                out.push(column.iter().map(|v| v.abs().powf(q)).sum());
            }
        }
    }
    Ok(out)
}

/// `cos` of the angle between two vectors, 0 when either is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

/// Per node and channel: vector norm, mean and max cosine similarity with
/// the neighbors' vectors in the same channel.
///
/// `w` is `n x d x K`; the result is `n x 3 x K`. Adjacency is given as
/// row-compressed `(offsets, neighbors)`.
pub fn vector_invariants(w: &Array3<f64>, offsets: &[usize], neighbors: &[usize]) -> Result<Array3<f64>> {
    let (n, d, k) = w.dim();
    check_len(n + 1, offsets.len())?;
    let mut out = Array3::zeros((n, 3, k));
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    for ch in 0..k {
        for i in 0..n {
            for c in 0..d {
                a[c] = w[[i, c, ch]];
            }
            out[[i, 0, ch]] = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nbrs = &neighbors[offsets[i]..offsets[i + 1]];
            if nbrs.is_empty() {
                continue;
            }
            let mut sum = 0.0;
            let mut max = f64::NEG_INFINITY;
            for &j in nbrs {
                for c in 0..d {
                    b[c] = w[[j, c, ch]];
                }
                let cs = cosine(&a, &b);
                sum += cs;
                max = max.max(cs);
            }
            out[[i, 1, ch]] = sum / nbrs.len() as f64;
            out[[i, 2, ch]] = max;
        }
    }
    Ok(out)
}
