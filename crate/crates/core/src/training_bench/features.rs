//! Operators, scale selection and scattering features for whole datasets.

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion_ops::{
    build_lazy_walk, build_local_frames, build_vector_diffusion, BlockSparseOperator,
    SparseOperator,
};
use crate::error::{Error, Result};
use crate::geometry::{place_dirac_signals, GeometricGraph};
use crate::nn_model::{GraphFeatures, ModelMode};
use crate::scattering::{
    path_count, scalar_scattering, vector_scattering, RadialActivation, ScalarActivation,
    ScatteringConfig,
};
use crate::wavelets::{collect_quantile_scales, merge_quantile_scales, WaveletBank};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScaleSelection {
    Dyadic { j: usize },
    Infogain { t_max: usize, quantiles: Vec<f64> },
}

impl Default for ScaleSelection {
    fn default() -> Self {
        ScaleSelection::Infogain {
            t_max: 16,
            quantiles: vec![0.25, 0.5, 0.75],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: ModelMode,
    pub scales: ScaleSelection,
    pub scattering: ScatteringConfig,
    /// Kernel-weighted `P` (otherwise 0/1 adjacency).
    pub weighted: bool,
}

impl PipelineConfig {
    pub fn new(mode: ModelMode) -> Self {
        Self {
            mode,
            scales: ScaleSelection::default(),
            scattering: ScatteringConfig::default(),
            weighted: true,
        }
    }
}

/// Wavelet banks of the two tracks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Banks {
    pub scalar: WaveletBank,
    pub vector: Option<WaveletBank>,
}

impl Banks {
    pub fn scalar_paths(&self, config: &ScatteringConfig) -> usize {
        path_count(&self.scalar, config)
    }

    pub fn vector_paths(&self, config: &ScatteringConfig) -> usize {
        self.vector.as_ref().map_or(0, |b| path_count(b, config))
    }
}

pub struct GraphOperators {
    pub p: SparseOperator,
    pub q: Option<BlockSparseOperator>,
    /// Nodes whose frame is not uniquely determined by the geometry.
    pub flagged_nodes: usize,
}

pub fn build_operators(graph: &GeometricGraph, weighted: bool, vector: bool) -> Result<GraphOperators> {
    let p = build_lazy_walk(graph, weighted)?;
    let (q, flagged_nodes) = if vector {
        let frames = build_local_frames(graph)?;
        let flagged = frames.flagged_nodes().len();
        (Some(build_vector_diffusion(&p, &frames)?), flagged)
    } else {
        (None, 0)
    };
    Ok(GraphOperators {
        p,
        q,
        flagged_nodes,
    })
}

/// Scalar model inputs: the two Diracs, followed by the coordinates as `d`
/// extra channels in ablated mode.
pub fn scalar_inputs(graph: &GeometricGraph, mode: ModelMode) -> Result<Array2<f64>> {
    let diracs = if graph.scalar_signals().ncols() == 2 {
        graph.scalar_signals().clone()
    } else {
        place_dirac_signals(graph)?
    };
    match mode {
        ModelMode::Equivariant => Ok(diracs),
        ModelMode::Ablated => {
            ndarray::concatenate(Axis(1), &[diracs.view(), graph.coords().view()])
                .map_err(|e| Error::ShapeMismatch(e.to_string()))
        }
    }
}

/// The vector input field (`n x d`): the first vector signal, or the
/// coordinates when the graph carries none.
pub fn vector_input(graph: &GeometricGraph) -> Array2<f64> {
    let v = graph.vector_signals();
    if v.dim().1 == 0 {
        graph.coords().clone()
    } else {
        v.index_axis(Axis(1), 0).to_owned()
    }
}

fn columns(x: &Array2<f64>) -> Vec<Vec<f64>> {
    x.columns().into_iter().map(|c| c.to_vec()).collect()
}

/// Chooses both banks for a collection of graphs. InfoGain pools the
/// per-signal quantile scales of every input signal of every graph before
/// taking medians.
pub fn select_banks(graphs: &[GeometricGraph], config: &PipelineConfig) -> Result<Banks> {
    let vector = config.mode == ModelMode::Equivariant;
    match &config.scales {
        ScaleSelection::Dyadic { j } => Ok(Banks {
            scalar: WaveletBank::dyadic(*j),
            vector: vector.then(|| WaveletBank::dyadic(*j)),
        }),
        ScaleSelection::Infogain { t_max, quantiles } => {
            let per_graph: Vec<(Vec<Vec<usize>>, Vec<Vec<usize>>)> = graphs
                .par_iter()
                .map(|g| {
                    let ops = build_operators(g, config.weighted, vector)?;
                    let xs = columns(&scalar_inputs(g, config.mode)?);
                    let s = collect_quantile_scales(&ops.p, &xs, *t_max, quantiles)?;
                    let v = match &ops.q {
                        Some(q) => {
                            let w: Vec<f64> = vector_input(g).iter().copied().collect();
                            collect_quantile_scales(q, &[w], *t_max, quantiles)?
                        }
                        None => Vec::new(),
                    };
                    Ok((s, v))
                })
                .collect::<Result<_>>()?;
            let (s, v): (Vec<_>, Vec<_>) = per_graph.into_iter().unzip();
            let s: Vec<Vec<usize>> = s.into_iter().flatten().collect();
            let v: Vec<Vec<usize>> = v.into_iter().flatten().collect();
            Ok(Banks {
                scalar: merge_quantile_scales(&s, *t_max)?,
                vector: if vector {
                    Some(merge_quantile_scales(&v, *t_max)?)
                } else {
                    None
                },
            })
        }
    }
}

/// Scattering features of one graph under fixed banks (identity activation,
/// nonlinearity is left to the trainable layers).
pub fn graph_features(graph: &GeometricGraph, banks: &Banks, config: &PipelineConfig) -> Result<GraphFeatures> {
    let ops = build_operators(graph, config.weighted, config.mode == ModelMode::Equivariant)?;
    graph_features_with(graph, &ops, banks, config)
}

/// [`graph_features`] over operators built beforehand.
pub fn graph_features_with(
    graph: &GeometricGraph,
    ops: &GraphOperators,
    banks: &Banks,
    config: &PipelineConfig,
) -> Result<GraphFeatures> {
    let x = scalar_inputs(graph, config.mode)?;
    let scalar = scalar_scattering(
        &ops.p,
        &banks.scalar,
        &x,
        &config.scattering,
        ScalarActivation::Identity,
    )?
    .into_values();
    let vector = match (&ops.q, &banks.vector) {
        (Some(q), Some(bank)) => Some(
            vector_scattering(
                q,
                bank,
                &vector_input(graph),
                &config.scattering,
                RadialActivation::Identity,
            )?
            .into_values(),
        ),
        (None, None) => None,
        _ => {
            return Err(Error::ConfigMismatch(
                "vector bank and vector operator must both be present".into(),
            ))
        }
    };
    let (offsets, neighbors) = graph.adjacency();
    Ok(GraphFeatures {
        scalar,
        vector,
        offsets: offsets.to_vec(),
        neighbors: neighbors.to_vec(),
    })
}

/// Features for many graphs, computed in parallel.
pub fn precompute_features(
    graphs: &[GeometricGraph],
    banks: &Banks,
    config: &PipelineConfig,
) -> Result<Vec<GraphFeatures>> {
    graphs
        .par_iter()
        .map(|g| graph_features(g, banks, config))
        .collect()
}
