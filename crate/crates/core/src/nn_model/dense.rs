use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Silu,
    Sigmoid,
    Identity,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Silu => z * sigmoid(z),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = sigmoid(z);
                s * (1.0 + z * (1.0 - s))
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Name and shape of one parameter block, in serialization order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `a = act(x W^T + b)` on row-stacked inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out x in`.
    pub weights: Array2<f64>,
    pub bias: Option<Array1<f64>>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(input: usize, output: usize, bias: bool, activation: Activation) -> Self {
        Self {
            weights: Array2::zeros((output, input)),
            bias: bias.then(|| Array1::zeros(output)),
            activation,
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        input: usize,
        output: usize,
        bias: bool,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        let mut layer = Self::zeros(input, output, bias, activation);
        layer.weights.mapv_inplace(|_| dist.sample(rng));
        layer
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.as_ref().map_or(0, |b| b.len())
    }

    /// Pre-activations `z = x W^T + b`.
    pub fn linear(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weights.t());
        if let Some(b) = &self.bias {
            z += b;
        }
        z
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`,
    /// given `dL/da` for the layer output.
    pub fn backward(
        &self,
        x: &Array2<f64>,
        z: &Array2<f64>,
        mut da: Array2<f64>,
        grad: &mut DenseLayer,
    ) -> Array2<f64> {
        if self.activation != Activation::Identity {
            da.zip_mut_with(z, |g, &zv| *g *= self.activation.derivative(zv));
        }
        grad.weights += &da.t().dot(x);
        if let Some(b) = grad.bias.as_mut() {
            *b += &da.sum_axis(Axis(0));
        }
        da.dot(&self.weights)
    }
}

/// Cached intermediates of one [`Mlp::forward_cached`] call.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
}

/// Stack of dense layers; hidden layers share one activation, the output
/// layer has its own.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

impl Mlp {
    /// `dims = [in, h_1, ..., out]`.
    pub fn glorot<R: Rng + ?Sized>(
        dims: &[usize],
        bias: bool,
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Self {
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let act = if l == last { output } else { hidden };
                DenseLayer::glorot(w[0], w[1], bias, act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| {
                    DenseLayer::zeros(l.input_dim(), l.output_dim(), l.bias.is_some(), l.activation)
                })
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut a = x.clone();
        for layer in &self.layers {
            a = layer.linear(&a);
            if layer.activation != Activation::Identity {
                a.mapv_inplace(|z| layer.activation.apply(z));
            }
        }
        a
    }

    /// Forward pass keeping what [`Mlp::backward`] needs. With `dropout =
    /// Some((p, rng))` every hidden output is zeroed with probability `p`
    /// and survivors are scaled by `1 / (1 - p)`.
    pub fn forward_cached(
        &self,
        x: Array2<f64>,
        mut dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> (Array2<f64>, MlpCache) {
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
            masks: Vec::with_capacity(self.layers.len()),
        };
        let mut a = x;
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.linear(&a);
            let mut out = z.mapv(|v| layer.activation.apply(v));
            let mask = match dropout.as_mut() {
                Some((p, rng)) if l < last && *p > 0.0 => {
                    let keep = 1.0 - *p;
                    let m = out.mapv(|_| {
                        if rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    });
                    out *= &m;
                    Some(m)
                }
                _ => None,
            };
            cache.inputs.push(a);
            cache.pre.push(z);
            cache.masks.push(mask);
            a = out;
        }
        (a, cache)
    }

    /// Accumulates gradients into `grad`; returns `dL/dx`.
    pub fn backward(&self, cache: &MlpCache, dout: Array2<f64>, grad: &mut Mlp) -> Array2<f64> {
        let mut g = dout;
        for l in (0..self.layers.len()).rev() {
            if let Some(mask) = &cache.masks[l] {
                g *= mask;
            }
            g = self.layers[l].backward(&cache.inputs[l], &cache.pre[l], g, &mut grad.layers[l]);
        }
        g
    }

    pub fn manifest(&self, prefix: &str, out: &mut Vec<ParamSpec>) {
        for (l, layer) in self.layers.iter().enumerate() {
            out.push(ParamSpec {
                name: format!("{prefix}.{l}.weight"),
                shape: vec![layer.output_dim(), layer.input_dim()],
            });
            if let Some(b) = &layer.bias {
                out.push(ParamSpec {
                    name: format!("{prefix}.{l}.bias"),
                    shape: vec![b.len()],
                });
            }
        }
    }

    pub fn push_params(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            out.extend(layer.weights.iter());
            if let Some(b) = &layer.bias {
                out.extend(b.iter());
            }
        }
    }

    /// Reads parameters in [`Mlp::push_params`] order, advancing `src`.
    pub fn load_params(&mut self, src: &mut &[f64]) -> Result<()> {
        for layer in &mut self.layers {
            take_into(layer.weights.iter_mut(), src)?;
            if let Some(b) = layer.bias.as_mut() {
                take_into(b.iter_mut(), src)?;
            }
        }
        Ok(())
    }
}

pub(crate) fn take_into<'a>(dst: impl ExactSizeIterator<Item = &'a mut f64>, src: &mut &[f64]) -> Result<()> {
    let len = dst.len();
    if src.len() < len {
        return Err(Error::ShapeMismatch(format!(
            "parameter buffer ended early: need {len}, have {}",
            src.len()
        )));
    }
    for (d, s) in dst.zip(src.iter()) {
        *d = *s;
    }
    *src = &src[len..];
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn bias_free_linear_count() {
        let l = DenseLayer::zeros(4, 3, false, Activation::Identity);
        assert_eq!(l.param_count(), 12);
    }

    #[test]
    fn zero_mlp_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = Mlp::glorot(&[5, 7, 3], true, Activation::Silu, Activation::Identity, &mut rng);
        let z = m.zeros_like();
        let x = Array2::from_elem((4, 5), 1.3);
        assert!(z.forward(&x).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn silu_derivative_matches_difference() {
        for z in [-3.0, -0.4, 0.0, 0.7, 5.0] {
            let h = 1e-6;
            let fd = (Activation::Silu.apply(z + h) - Activation::Silu.apply(z - h)) / (2.0 * h);
            assert!((fd - Activation::Silu.derivative(z)).abs() < 1e-9);
        }
    }

    #[test]
    fn params_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Mlp::glorot(&[3, 4, 2], true, Activation::Silu, Activation::Identity, &mut rng);
        let mut flat = Vec::new();
        m.push_params(&mut flat);
        assert_eq!(flat.len(), m.param_count());
        let mut other = m.zeros_like();
        let mut src = flat.as_slice();
        other.load_params(&mut src).unwrap();
        assert!(src.is_empty());
        assert_eq!(other, m);
    }

    #[test]
    fn eval_forward_matches_cached() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = Mlp::glorot(&[3, 6, 6, 2], true, Activation::Silu, Activation::Identity, &mut rng);
        let x = Array2::from_shape_fn((5, 3), |(i, j)| (i as f64 - 2.0) * 0.3 + j as f64 * 0.1);
        let (y, _) = m.forward_cached(x.clone(), None);
        assert_eq!(y, m.forward(&x));
    }
}
