//! Dense layers with exact gradients and the ESc-GNN model: scalar and
//! vector scattering mixing, rotation-invariant feature extraction, and
//! invariant (scalar) or equivariant (vector) prediction heads.

mod dense;
mod optim;

pub use dense::{sigmoid, Activation, DenseLayer, Mlp, MlpCache, ParamSpec};
pub use optim::{AdamW, AdamWConfig};

use ndarray::{s, Array1, Array2, Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scattering::{cosine, vector_invariants};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelMode {
    /// Vector track with frame-transported diffusion; rotation equivariant.
    Equivariant,
    /// Coordinates fed as extra scalar channels; no vector track.
    Ablated,
}

impl std::str::FromStr for ModelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equivariant" => Ok(ModelMode::Equivariant),
            "ablated" => Ok(ModelMode::Ablated),
            other => Err(Error::InvalidArgument(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// One scalar per graph.
    GraphScalar,
    /// One scalar per node.
    NodeScalar,
    /// One `d`-vector per node.
    NodeVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub mode: ModelMode,
    pub target: TargetKind,
    pub d: usize,
    /// Scalar input channels `F_s` (2 Diracs, plus `d` coordinates when
    /// ablated).
    pub scalar_channels: usize,
    pub scalar_paths: usize,
    /// Zero in ablated mode.
    pub vector_paths: usize,
    pub k_scalar: usize,
    pub k_vector: usize,
    pub scalar_hidden: Vec<usize>,
    pub vector_hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
    pub gate_hidden: Vec<usize>,
    /// Drop probability between graph-head layers during training.
    pub dropout: f64,
    /// Scalar targets are fit as `(y - mean) / std`.
    pub target_mean: f64,
    pub target_std: f64,
}

pub const DIRAC_CHANNELS: usize = 2;

impl ModelConfig {
    /// Layer widths used for the ellipsoid benchmarks.
    pub fn standard(
        mode: ModelMode,
        target: TargetKind,
        d: usize,
        scalar_paths: usize,
        vector_paths: usize,
    ) -> Self {
        let (scalar_channels, vector_paths) = match mode {
            ModelMode::Equivariant => (DIRAC_CHANNELS, vector_paths),
            ModelMode::Ablated => (DIRAC_CHANNELS + d, 0),
        };
        Self {
            mode,
            target,
            d,
            scalar_channels,
            scalar_paths,
            vector_paths,
            k_scalar: 16,
            k_vector: 32,
            scalar_hidden: vec![64, 64],
            vector_hidden: vec![128, 128],
            head_hidden: vec![128, 64, 32, 16],
            gate_hidden: vec![128, 128],
            dropout: 0.7,
            target_mean: 0.0,
            target_std: 1.0,
        }
    }

    pub fn has_vector_track(&self) -> bool {
        self.mode == ModelMode::Equivariant
    }

    /// Length of the per-node invariant vector `t_i`.
    pub fn invariant_width(&self) -> usize {
        let scalar = self.scalar_channels * self.k_scalar;
        if self.has_vector_track() {
            scalar + 3 * self.k_vector
        } else {
            scalar
        }
    }

    pub fn output_width(&self) -> usize {
        match self.target {
            TargetKind::NodeVector => self.d,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scalar_paths == 0 || self.scalar_channels == 0 {
            return Err(Error::ConfigMismatch("empty scalar track".into()));
        }
        if self.has_vector_track() && self.vector_paths == 0 {
            return Err(Error::ConfigMismatch(
                "equivariant mode needs vector scattering paths".into(),
            ));
        }
        if !self.has_vector_track() && self.vector_paths != 0 {
            return Err(Error::ConfigMismatch(
                "ablated mode takes no vector scattering input".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::ConfigMismatch(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if !(self.target_std > 0.0) {
            return Err(Error::ConfigMismatch("target_std must be positive".into()));
        }
        Ok(())
    }

    pub fn standardize(&self, y: f64) -> f64 {
        match self.target {
            TargetKind::NodeVector => y,
            _ => (y - self.target_mean) / self.target_std,
        }
    }

    pub fn destandardize(&self, y: f64) -> f64 {
        match self.target {
            TargetKind::NodeVector => y,
            _ => y * self.target_std + self.target_mean,
        }
    }
}

/// Precomputed scattering inputs of one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphFeatures {
    /// `n x F_s x S_s`.
    pub scalar: Array3<f64>,
    /// `n x d x S_v`, absent in ablated mode.
    pub vector: Option<Array3<f64>>,
    pub offsets: Vec<usize>,
    pub neighbors: Vec<usize>,
}

impl GraphFeatures {
    pub fn n(&self) -> usize {
        self.scalar.dim().0
    }
}

/// Intermediates of one graph's forward pass.
pub struct ForwardCache {
    scalar_mix: MlpCache,
    vector: Option<VectorCache>,
    head: HeadCache,
}

struct VectorCache {
    mix: MlpCache,
    /// Ungated mixed vectors, `n x d x K_v`.
    linear: Array3<f64>,
    /// Gated mixed vectors `W'`.
    gated: Array3<f64>,
}

enum HeadCache {
    Graph { mlp: MlpCache, argmax: Vec<usize> },
    Node { mlp: MlpCache },
    Vector { mlp: MlpCache, beta: Array2<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EscGnn {
    pub config: ModelConfig,
    pub scalar_mix: Mlp,
    pub vector_mix: Option<Mlp>,
    /// Per-channel gate logits `alpha`.
    pub gates: Option<Array1<f64>>,
    pub head: Mlp,
}

impl EscGnn {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![config.scalar_paths];
        dims.extend(&config.scalar_hidden);
        dims.push(config.k_scalar);
        let scalar_mix = Mlp::glorot(&dims, true, Activation::Silu, Activation::Identity, &mut rng);
        let (vector_mix, gates) = if config.has_vector_track() {
            let mut dims = vec![config.vector_paths];
            dims.extend(&config.vector_hidden);
            dims.push(config.k_vector);
            let mix = Mlp::glorot(
                &dims,
                false,
                Activation::Identity,
                Activation::Identity,
                &mut rng,
            );
            (Some(mix), Some(Array1::zeros(config.k_vector)))
        } else {
            (None, None)
        };
        let width = config.invariant_width();
        let head_dims = match (config.target, config.mode) {
            (TargetKind::GraphScalar, _) => chain(2 * width, &config.head_hidden, 1),
            (TargetKind::NodeScalar, _) => chain(width, &config.head_hidden, 1),
            (TargetKind::NodeVector, ModelMode::Equivariant) => {
                chain(width, &config.gate_hidden, config.k_vector)
            }
            (TargetKind::NodeVector, ModelMode::Ablated) => {
                chain(width, &config.head_hidden, config.d)
            }
        };
        let head = Mlp::glorot(&head_dims, true, Activation::Silu, Activation::Identity, &mut rng);
        Ok(Self {
            config,
            scalar_mix,
            vector_mix,
            gates,
            head,
        })
    }

    /// Same architecture with every parameter zero; used as a gradient
    /// accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            scalar_mix: self.scalar_mix.zeros_like(),
            vector_mix: self.vector_mix.as_ref().map(Mlp::zeros_like),
            gates: self.gates.as_ref().map(|g| Array1::zeros(g.len())),
            head: self.head.zeros_like(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.scalar_mix.param_count()
            + self.vector_mix.as_ref().map_or(0, Mlp::param_count)
            + self.gates.as_ref().map_or(0, |g| g.len())
            + self.head.param_count()
    }

    /// Parameter blocks in serialization order.
    pub fn manifest(&self) -> Vec<ParamSpec> {
        let mut out = Vec::new();
        self.scalar_mix.manifest("scalar_mix", &mut out);
        if let Some(m) = &self.vector_mix {
            m.manifest("vector_mix", &mut out);
        }
        if let Some(g) = &self.gates {
            out.push(ParamSpec {
                name: "vector_gates".into(),
                shape: vec![g.len()],
            });
        }
        self.head.manifest("head", &mut out);
        out
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        self.scalar_mix.push_params(&mut out);
        if let Some(m) = &self.vector_mix {
            m.push_params(&mut out);
        }
        if let Some(g) = &self.gates {
            out.extend(g.iter());
        }
        self.head.push_params(&mut out);
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                flat.len()
            )));
        }
        let mut src = flat;
        self.scalar_mix.load_params(&mut src)?;
        if let Some(m) = self.vector_mix.as_mut() {
            m.load_params(&mut src)?;
        }
        if let Some(g) = self.gates.as_mut() {
            dense::take_into(g.iter_mut(), &mut src)?;
        }
        self.head.load_params(&mut src)?;
        Ok(())
    }

    fn check_features(&self, f: &GraphFeatures) -> Result<()> {
        let c = &self.config;
        let (n, ch, paths) = f.scalar.dim();
        if ch != c.scalar_channels || paths != c.scalar_paths {
            return Err(Error::ShapeMismatch(format!(
                "scalar features {ch}x{paths}, model expects {}x{}",
                c.scalar_channels, c.scalar_paths
            )));
        }
        if f.offsets.len() != n + 1 {
            return Err(Error::ShapeMismatch("adjacency does not match node count".into()));
        }
        match (&f.vector, c.has_vector_track()) {
            (Some(v), true) => {
                if v.dim() != (n, c.d, c.vector_paths) {
                    return Err(Error::ShapeMismatch(format!(
                        "vector features {:?}, model expects ({n}, {}, {})",
                        v.dim(),
                        c.d,
                        c.vector_paths
                    )));
                }
            }
            (None, true) => {
                return Err(Error::ConfigMismatch(
                    "equivariant model needs vector features".into(),
                ))
            }
            _ => {}
        }
        Ok(())
    }

    /// Scalar-track mixing: the shared perceptron applied along the path axis
    /// of every (node, channel) row. Returns `n x F_s x K_s`.
    pub fn scalar_mixing_forward(&self, scalar: &Array3<f64>) -> Array3<f64> {
        let (n, f, s) = scalar.dim();
        let rows = scalar.to_shape((n * f, s)).expect("reshape").to_owned();
        let out = self.scalar_mix.forward(&rows);
        out.into_shape_with_order((n, f, self.config.k_scalar))
            .expect("reshape")
    }

    /// Vector-track mixing `W'[i, c, k] = sigmoid(alpha_k) sum_s theta_{k,s} W[i, c, s]`.
    pub fn vector_mixing_forward(&self, vector: &Array3<f64>) -> Result<Array3<f64>> {
        let (mix, gates) = match (&self.vector_mix, &self.gates) {
            (Some(m), Some(g)) => (m, g),
            _ => return Err(Error::ConfigMismatch("model has no vector track".into())),
        };
        let (n, d, s) = vector.dim();
        let rows = vector.to_shape((n * d, s)).expect("reshape").to_owned();
        let mut out = mix.forward(&rows);
        for (k, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let g = sigmoid(gates[k]);
            col.mapv_inplace(|v| v * g);
        }
        Ok(out
            .into_shape_with_order((n, d, self.config.k_vector))
            .expect("reshape"))
    }

    /// Forward pass returning model-space outputs (standardized for scalar
    /// targets): `1 x 1` per graph, `n x 1` per node, or `n x d` vectors.
    /// Passing an RNG turns on training-mode dropout in the graph head.
    pub fn forward(
        &self,
        feats: &GraphFeatures,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_features(feats)?;
        let c = &self.config;
        let n = feats.n();
        let (f_s, s_s) = (c.scalar_channels, c.scalar_paths);
        let rows = feats
            .scalar
            .to_shape((n * f_s, s_s))
            .expect("reshape")
            .to_owned();
        let (xmix, scalar_cache) = self.scalar_mix.forward_cached(rows, None);
        let width = c.invariant_width();
        let mut t = Array2::zeros((n, width));
        let xmix = xmix
            .into_shape_with_order((n, f_s * c.k_scalar))
            .expect("reshape");
        t.slice_mut(s![.., ..f_s * c.k_scalar]).assign(&xmix);

        let vector = if let (Some(mix), Some(gates), Some(w)) =
            (&self.vector_mix, &self.gates, &feats.vector)
        {
            let (_, d, s_v) = w.dim();
            let rows = w.to_shape((n * d, s_v)).expect("reshape").to_owned();
            let (lin, mix_cache) = mix.forward_cached(rows, None);
            let linear = lin
                .into_shape_with_order((n, d, c.k_vector))
                .expect("reshape");
            let mut gated = linear.clone();
            for k in 0..c.k_vector {
                let g = sigmoid(gates[k]);
                gated.index_axis_mut(Axis(2), k).mapv_inplace(|v| v * g);
            }
            let inv = vector_invariants(&gated, &feats.offsets, &feats.neighbors)?;
            let flat = inv
                .into_shape_with_order((n, 3 * c.k_vector))
                .expect("reshape");
            t.slice_mut(s![.., f_s * c.k_scalar..]).assign(&flat);
            Some(VectorCache {
                mix: mix_cache,
                linear,
                gated,
            })
        } else {
            None
        };

        let (out, head) = match c.target {
            TargetKind::GraphScalar => {
                let mut pooled = Array2::zeros((1, 2 * width));
                let mut argmax = vec![0usize; width];
                for f in 0..width {
                    let col = t.column(f);
                    pooled[[0, f]] = col.sum();
                    let mut best = 0;
                    for i in 1..n {
                        if col[i] > col[best] {
                            best = i;
                        }
                    }
                    argmax[f] = best;
                    pooled[[0, width + f]] = col[best];
                }
                let dropout = rng.map(|r| (c.dropout, r));
                let (y, mlp) = self.head.forward_cached(pooled, dropout);
                (y, HeadCache::Graph { mlp, argmax })
            }
            TargetKind::NodeScalar => {
                let (y, mlp) = self.head.forward_cached(t.clone(), None);
                (y, HeadCache::Node { mlp })
            }
            TargetKind::NodeVector => match &vector {
                Some(vc) => {
                    let (beta, mlp) = self.head.forward_cached(t.clone(), None);
                    let mut y = Array2::zeros((n, c.d));
                    for i in 0..n {
                        for k in 0..c.k_vector {
                            let g = sigmoid(beta[[i, k]]);
                            for dim in 0..c.d {
                                y[[i, dim]] += g * vc.gated[[i, dim, k]];
                            }
                        }
                    }
                    (y, HeadCache::Vector { mlp, beta })
                }
                None => {
                    let (y, mlp) = self.head.forward_cached(t.clone(), None);
                    (y, HeadCache::Node { mlp })
                }
            },
        };
        Ok((
            out,
            ForwardCache {
                scalar_mix: scalar_cache,
                vector,
                head,
            },
        ))
    }

    /// Evaluation-mode prediction in target units.
    pub fn predict(&self, feats: &GraphFeatures) -> Result<Array2<f64>> {
        let (mut y, _) = self.forward(feats, None)?;
        y.mapv_inplace(|v| self.config.destandardize(v));
        Ok(y)
    }

    /// Accumulates `dL/dparams` into `grads` given `dL/d(output)` of the
    /// forward pass that produced `cache`.
    pub fn backward(
        &self,
        feats: &GraphFeatures,
        cache: &ForwardCache,
        dout: Array2<f64>,
        grads: &mut EscGnn,
    ) -> Result<()> {
        let c = &self.config;
        let n = feats.n();
        let width = c.invariant_width();
        let mut dt = Array2::<f64>::zeros((n, width));
        // gradient wrt the gated vectors coming from the vector head
        let mut dgated: Option<Array3<f64>> = None;
        match &cache.head {
            HeadCache::Graph { mlp, argmax } => {
                let dpool = self.head.backward(mlp, dout, &mut grads.head);
                for f in 0..width {
                    let ds = dpool[[0, f]];
                    dt.column_mut(f).mapv_inplace(|v| v + ds);
                    dt[[argmax[f], f]] += dpool[[0, width + f]];
                }
            }
            HeadCache::Node { mlp } => {
                dt = self.head.backward(mlp, dout, &mut grads.head);
            }
            HeadCache::Vector { mlp, beta } => {
                let vc = cache.vector.as_ref().expect("vector cache");
                let mut dbeta = Array2::zeros(beta.dim());
                let mut dw = Array3::zeros(vc.gated.dim());
                for i in 0..n {
                    for k in 0..c.k_vector {
                        let g = sigmoid(beta[[i, k]]);
                        let mut acc = 0.0;
                        for dim in 0..c.d {
                            acc += dout[[i, dim]] * vc.gated[[i, dim, k]];
                            dw[[i, dim, k]] += g * dout[[i, dim]];
                        }
                        dbeta[[i, k]] = acc * g * (1.0 - g);
                    }
                }
                dt = self.head.backward(mlp, dbeta, &mut grads.head);
                dgated = Some(dw);
            }
        }

        let split = c.scalar_channels * c.k_scalar;
        let dx = dt
            .slice(s![.., ..split])
            .to_owned()
            .into_shape_with_order((n * c.scalar_channels, c.k_scalar))
            .expect("reshape");
        self.scalar_mix
            .backward(&cache.scalar_mix, dx, &mut grads.scalar_mix);

        if let (Some(vc), Some(mix), Some(gates)) = (&cache.vector, &self.vector_mix, &self.gates) {
            let dinv = dt
                .slice(s![.., split..])
                .to_owned()
                .into_shape_with_order((n, 3, c.k_vector))
                .expect("reshape");
            let mut dw = invariants_backward(&vc.gated, &feats.offsets, &feats.neighbors, &dinv);
            if let Some(extra) = dgated {
                dw += &extra;
            }
            let dgates = grads.gates.as_mut().expect("gate grads");
            let mut dlin = Array3::zeros(vc.linear.dim());
            for k in 0..c.k_vector {
                let g = sigmoid(gates[k]);
                let mut acc = 0.0;
                for i in 0..n {
                    for dim in 0..c.d {
                        acc += dw[[i, dim, k]] * vc.linear[[i, dim, k]];
                        dlin[[i, dim, k]] = dw[[i, dim, k]] * g;
                    }
                }
                dgates[k] += acc * g * (1.0 - g);
            }
            let dlin = dlin
                .into_shape_with_order((n * c.d, c.k_vector))
                .expect("reshape");
            let gmix = grads.vector_mix.as_mut().expect("mix grads");
            mix.backward(&vc.mix, dlin, gmix);
        }
        Ok(())
    }

    /// Mean squared error over all output components of a batch (model
    /// space) and its gradient.
    pub fn loss_and_grad(
        &self,
        batch: &[(&GraphFeatures, &Array2<f64>)],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, EscGnn)> {
        let mut grads = self.zeros_like();
        let total: usize = batch.iter().map(|(_, y)| y.len()).sum();
        if total == 0 {
            return Ok((0.0, grads));
        }
        let mut loss = 0.0;
        for (feats, target) in batch {
            let (pred, cache) = self.forward(feats, rng.as_deref_mut())?;
            if pred.dim() != target.dim() {
                return Err(Error::ShapeMismatch(format!(
                    "prediction {:?} vs target {:?}",
                    pred.dim(),
                    target.dim()
                )));
            }
            let diff = &pred - *target;
            loss += diff.iter().map(|v| v * v).sum::<f64>();
            let dout = diff.mapv(|v| 2.0 * v / total as f64);
            self.backward(feats, &cache, dout, &mut grads)?;
        }
        Ok((loss / total as f64, grads))
    }
}

fn chain(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut dims = vec![input];
    dims.extend(hidden);
    dims.push(output);
    dims
}

/// Gradient of [`vector_invariants`] wrt its `n x d x K` input given the
/// gradient `dinv` of its `n x 3 x K` output. The max over neighbors routes
/// its gradient to the first maximizing neighbor.
pub fn invariants_backward(
    w: &Array3<f64>,
    offsets: &[usize],
    neighbors: &[usize],
    dinv: &Array3<f64>,
) -> Array3<f64> {
    let (n, d, k) = w.dim();
    let mut dw = Array3::zeros((n, d, k));
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    for ch in 0..k {
        for i in 0..n {
            for c in 0..d {
                a[c] = w[[i, c, ch]];
            }
            let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            if na > 0.0 {
                let g = dinv[[i, 0, ch]];
                for c in 0..d {
                    dw[[i, c, ch]] += g * a[c] / na;
                }
            }
            let nbrs = &neighbors[offsets[i]..offsets[i + 1]];
            if nbrs.is_empty() || na == 0.0 {
                continue;
            }
            let gmean = dinv[[i, 1, ch]] / nbrs.len() as f64;
            let gmax = dinv[[i, 2, ch]];
            let mut best: Option<(usize, f64)> = None;
            for &j in nbrs {
                for c in 0..d {
                    b[c] = w[[j, c, ch]];
                }
                let cs = cosine(&a, &b);
                if best.is_none_or(|(_, m)| cs > m) {
                    best = Some((j, cs));
                }
                cosine_grad_into(&a, &b, gmean, &mut dw, i, j, ch);
            }
            if let Some((j, _)) = best {
                for c in 0..d {
                    b[c] = w[[j, c, ch]];
                }
                cosine_grad_into(&a, &b, gmax, &mut dw, i, j, ch);
            }
        }
    }
    dw
}

/// Adds `g * d cos(a, b)` to the rows of nodes `i` (for `a`) and `j` (for `b`).
fn cosine_grad_into(
    a: &[f64],
    b: &[f64],
    g: f64,
    dw: &mut Array3<f64>,
    i: usize,
    j: usize,
    ch: usize,
) {
    if g == 0.0 {
        return;
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return;
    }
    let cs = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
    for c in 0..a.len() {
        dw[[i, c, ch]] += g * (b[c] / (na * nb) - cs * a[c] / (na * na));
        dw[[j, c, ch]] += g * (a[c] / (na * nb) - cs * b[c] / (nb * nb));
    }
}
