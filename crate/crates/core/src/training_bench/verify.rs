//! Property checks with measured extremal errors, runnable as one report.

use std::time::Instant;

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion_ops::{
    build_lazy_walk, build_local_frames, build_raw_local_frames, build_vector_diffusion,
    dense_materialize, BlockSparseOperator, DiffusionOperator, LocalFrameSet, SparseOperator,
};
use crate::error::{Error, Result};
use crate::geometry::{
    build_knn_graph, kernel_weights, random_rotation_with, EpsilonMode, GeometricGraph, Rotation,
};
use crate::nn_model::{EscGnn, GraphFeatures, ModelConfig, ModelMode, TargetKind};
use crate::scattering::{
    scalar_scattering, vector_scattering, RadialActivation, ScalarActivation, ScatteringConfig,
};
use crate::synthetic_data::{draw_ellipsoid_specs, sample_ellipsoid_cloud, EllipsoidSpec};
use crate::wavelets::{infogain_scales, verify_frame_bounds, wavelet_transform, WaveletBank};

use super::features::{graph_features, PipelineConfig, ScaleSelection};

/// Whether a check passes below or above its threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expect {
    AtMost,
    /// Negative control: the measured error must exceed the threshold.
    Exceeds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub expect: Expect,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CheckResult {
    fn new(name: &str, measured: f64, threshold: f64, expect: Expect, detail: String) -> Self {
        let passed = match expect {
            Expect::AtMost => measured <= threshold,
            Expect::Exceeds => measured > threshold,
        };
        Self {
            name: name.into(),
            measured,
            threshold,
            expect,
            passed,
            detail,
            seconds: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub all_passed: bool,
    pub checks: Vec<CheckResult>,
}

/// `|a - b|_2 / |b|_2`, with the denominator floored at `1e-300`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

/// A kNN graph on an ellipsoid cloud together with its kernel scale.
#[derive(Debug, Clone)]
pub struct TestGraph {
    pub points: Array2<f64>,
    pub k: usize,
    pub epsilon: f64,
    pub graph: GeometricGraph,
}

impl TestGraph {
    /// Rebuilds the graph from the rotated raw points with the same kernel
    /// scale.
    pub fn rotated(&self, rotation: &Rotation) -> Result<GeometricGraph> {
        let pts = rotation.apply_rows(&self.points);
        let g = build_knn_graph(&pts, self.k)?;
        kernel_weights(&g, EpsilonMode::Explicit(self.epsilon))
    }
}

/// `count` connected ellipsoid kNN graphs in R^3 (disconnected draws are
/// redrawn with the next sub-seed).
pub fn ellipsoid_population(count: usize, n: usize, k: usize, seed: u64) -> Result<Vec<TestGraph>> {
    draw_ellipsoid_specs(count, seed)
        .par_iter()
        .map(|spec| {
            let mut last = None;
            for attempt in 0..64u64 {
                let s = EllipsoidSpec {
                    seed: spec.seed.wrapping_add(attempt),
                    ..*spec
                };
                let points = sample_ellipsoid_cloud(&s, n);
                match build_knn_graph(&points, k) {
                    Ok(g) => {
                        let graph = kernel_weights(&g, EpsilonMode::MeanNeighborSq)?;
                        return Ok(TestGraph {
                            points,
                            k,
                            epsilon: graph.epsilon(),
                            graph,
                        });
                    }
                    Err(e @ Error::DisconnectedGraph { .. }) => last = Some(e),
                    Err(e) => return Err(e),
                }
            }
            Err(last.expect("at least one attempt"))
        })
        .collect()
}

fn random_field(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.sample(StandardNormal))
}

fn flat(a: &Array2<f64>) -> Vec<f64> {
    a.iter().copied().collect()
}

/// Vector operator and whether any frame is flagged.
fn vector_operator(graph: &GeometricGraph, canonical: bool) -> Result<(BlockSparseOperator, bool)> {
    let p = build_lazy_walk(graph, true)?;
    let frames = if canonical {
        build_local_frames(graph)?
    } else {
        build_raw_local_frames(graph)?
    };
    Ok((build_vector_diffusion(&p, &frames)?, frames.any_flagged()))
}

/// Worst relative error and the number of graphs excluded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivarianceMeasurement {
    pub max_relative_error: f64,
    pub graphs_used: usize,
    pub graphs_excluded: usize,
}

impl EquivarianceMeasurement {
    pub fn exclusion_rate(&self) -> f64 {
        self.graphs_excluded as f64 / (self.graphs_used + self.graphs_excluded).max(1) as f64
    }
}

/// Per graph: the rotated system is rebuilt from raw points and a random
/// field `w` is compared as `Qbar^m (R w)` against `R (Q^m w)`.
/// Graphs whose kNN structure changes under rotation or whose frames are
/// flagged in either orientation are excluded.
pub fn operator_power_equivariance(
    population: &[TestGraph],
    rotations: usize,
    powers: &[usize],
    canonical: bool,
    seed: u64,
) -> Result<EquivarianceMeasurement> {
    per_graph_equivariance(population, rotations, canonical, seed, |q, qr, w, rot| {
        let mut worst = 0.0f64;
        let rw = rot.apply_flat(&flat(w));
        for &m in powers {
            let lhs = crate::diffusion_ops::apply_power(qr, &rw, m)?;
            let rhs = rot.apply_flat(&crate::diffusion_ops::apply_power(q, &flat(w), m)?);
            worst = worst.max(relative_error(&lhs, &rhs));
        }
        Ok(worst)
    })
}

/// Every scattering path of a random vector field, for identity and
/// radial-tanh activations, on a dyadic bank.
pub fn scattering_equivariance(
    population: &[TestGraph],
    rotations: usize,
    bank: &WaveletBank,
    seed: u64,
) -> Result<EquivarianceMeasurement> {
    let cfg = ScatteringConfig::default();
    per_graph_equivariance(population, rotations, true, seed, |q, qr, w, rot| {
        let mut worst = 0.0f64;
        for act in [RadialActivation::Identity, RadialActivation::Tanh] {
            let base = vector_scattering(q, bank, w, &cfg, act)?.into_values();
            let rw = rot.apply_rows(w);
            let moved = vector_scattering(qr, bank, &rw, &cfg, act)?.into_values();
            for s in 0..base.dim().2 {
                let expected = rot.apply_rows(&base.index_axis(ndarray::Axis(2), s).to_owned());
                let got = moved.index_axis(ndarray::Axis(2), s).to_owned();
                worst = worst.max(relative_error(&flat(&got), &flat(&expected)));
            }
        }
        Ok(worst)
    })
}

fn same_structure(a: &GeometricGraph, b: &GeometricGraph) -> bool {
    a.adjacency() == b.adjacency()
}

fn per_graph_equivariance(
    population: &[TestGraph],
    rotations: usize,
    canonical: bool,
    seed: u64,
    measure: impl Fn(&BlockSparseOperator, &BlockSparseOperator, &Array2<f64>, &Rotation) -> Result<f64>
        + Sync,
) -> Result<EquivarianceMeasurement> {
    let results: Vec<Option<f64>> = population
        .par_iter()
        .enumerate()
        .map(|(gi, tg)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(gi as u64));
            let d = tg.graph.d();
            let (q, flagged) = vector_operator(&tg.graph, canonical)?;
            if flagged && canonical {
                return Ok(None);
            }
            let mut worst = 0.0f64;
            for _ in 0..rotations {
                let rot = random_rotation_with(&mut rng, d)?;
                let rg = tg.rotated(&rot)?;
                if !same_structure(&tg.graph, &rg) {
                    return Ok(None);
                }
                let (qr, flagged_r) = vector_operator(&rg, canonical)?;
                if flagged_r && canonical {
                    return Ok(None);
                }
                let w = random_field(&mut rng, tg.graph.n(), d);
                worst = worst.max(measure(&q, &qr, &w, &rot)?);
            }
            Ok(Some(worst))
        })
        .collect::<Result<_>>()?;
    let used: Vec<f64> = results.iter().flatten().copied().collect();
    Ok(EquivarianceMeasurement {
        max_relative_error: used.iter().copied().fold(0.0, f64::max),
        graphs_used: used.len(),
        graphs_excluded: results.len() - used.len(),
    })
}

/// Worst excess of the wavelet energy over `d_max / d_min`, and the
/// smallest frame-operator eigenvalue, over graphs and unit trial signals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameBoundMeasurement {
    pub max_excess: f64,
    pub min_frame_eigenvalue: f64,
}

pub fn frame_bound_check(
    population: &[TestGraph],
    bank: &WaveletBank,
    trials: usize,
    seed: u64,
) -> Result<FrameBoundMeasurement> {
    let reports: Vec<(f64, f64)> = population
        .par_iter()
        .enumerate()
        .map(|(gi, tg)| {
            let g = &tg.graph;
            let degrees: Vec<f64> = (0..g.n()).map(|i| g.weighted_degree(i)).collect();
            let (q, _) = vector_operator(g, true)?;
            let p = build_lazy_walk(g, true)?;
            let s = seed.wrapping_add(gi as u64);
            let rq = verify_frame_bounds(&q, bank, &degrees, trials, s)?;
            let rp = verify_frame_bounds(&p, bank, &degrees, trials, s ^ 0x5555)?;
            Ok((
                (rq.max_ratio - rq.upper_bound).max(rp.max_ratio - rp.upper_bound),
                rq.frame_operator_min_eig.min(rp.frame_operator_min_eig),
            ))
        })
        .collect::<Result<_>>()?;
    Ok(FrameBoundMeasurement {
        max_excess: reports.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max),
        min_frame_eigenvalue: reports.iter().map(|r| r.1).fold(f64::INFINITY, f64::min),
    })
}

/// Max over blocks and powers of `|dense(Q)^m[i,j] - P^m[i,j] U_i U_j^T|`.
pub fn q_power_block_error(graph: &GeometricGraph, max_power: usize) -> Result<f64> {
    let p = build_lazy_walk(graph, true)?;
    let frames = build_local_frames(graph)?;
    let q = build_vector_diffusion(&p, &frames)?;
    let dp = dense_materialize(&p)?;
    let dq = dense_materialize(&q)?;
    let (n, d) = (graph.n(), graph.d());
    let mut pm = Array2::<f64>::eye(n);
    let mut qm = Array2::<f64>::eye(n * d);
    let mut worst = 0.0f64;
    for _ in 0..max_power {
        pm = pm.dot(&dp);
        qm = qm.dot(&dq);
        for i in 0..n {
            for j in 0..n {
                let o = frames.transport(i, j);
                for r in 0..d {
                    for c in 0..d {
                        let e = qm[[i * d + r, j * d + c]] - pm[[i, j]] * o[[r, c]];
                        worst = worst.max(e.abs());
                    }
                }
            }
        }
    }
    Ok(worst)
}

/// Identity frames: the vector pipeline against per-coordinate scalar
/// scattering; returns the max absolute difference over all coefficients.
pub fn kronecker_reduction_error(graph: &GeometricGraph, bank: &WaveletBank, seed: u64) -> Result<f64> {
    let p = build_lazy_walk(graph, true)?;
    let q = build_vector_diffusion(&p, &LocalFrameSet::identity(graph.n(), graph.d()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random_field(&mut rng, graph.n(), graph.d());
    let cfg = ScatteringConfig::default();
    let v = vector_scattering(&q, bank, &w, &cfg, RadialActivation::Identity)?.into_values();
    let s = scalar_scattering(&p, bank, &w, &cfg, ScalarActivation::Identity)?.into_values();
    Ok(v.iter()
        .zip(s.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// `|sum_j Psi_j x + Phi x - x|_inf` for a signal under any operator.
pub fn telescoping_error<O: DiffusionOperator + ?Sized>(op: &O, bank: &WaveletBank, signal: &[f64]) -> Result<f64> {
    let coeffs = wavelet_transform(op, bank, signal)?;
    Ok((0..signal.len())
        .map(|i| (coeffs.iter().map(|c| c[i]).sum::<f64>() - signal[i]).abs())
        .fold(0.0, f64::max))
}

/// Telescoping over scalar and vector operators with a dyadic and an
/// InfoGain bank, several random signals per graph.
pub fn telescoping_check(population: &[TestGraph], signals: usize, seed: u64) -> Result<f64> {
    let worst: Vec<f64> = population
        .par_iter()
        .enumerate()
        .map(|(gi, tg)| {
            let g = &tg.graph;
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(gi as u64));
            let p = build_lazy_walk(g, true)?;
            let (q, _) = vector_operator(g, true)?;
            let xs: Vec<Vec<f64>> = (0..signals)
                .map(|_| (0..g.n()).map(|_| rng.sample(StandardNormal)).collect())
                .collect();
            let ws: Vec<Vec<f64>> = (0..signals)
                .map(|_| flat(&random_field(&mut rng, g.n(), g.d())))
                .collect();
            let banks = [
                (WaveletBank::dyadic(4), WaveletBank::dyadic(4)),
                (
                    infogain_scales(&p, &xs, 16, &[0.25, 0.5, 0.75])?,
                    infogain_scales(&q, &ws, 16, &[0.25, 0.5, 0.75])?,
                ),
            ];
            let mut worst = 0.0f64;
            for (sb, vb) in &banks {
                for x in &xs {
                    worst = worst.max(telescoping_error(&p, sb, x)?);
                }
                for w in &ws {
                    worst = worst.max(telescoping_error(&q, vb, w)?);
                }
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    Ok(worst.into_iter().fold(0.0, f64::max))
}

/// Relative change of a freshly initialized model's output when its input
/// graph is rotated and rebuilt. Graph-scalar outputs are compared
/// directly, node-vector outputs against the rotated prediction.
pub fn model_rotation_error(
    tg: &TestGraph,
    mode: ModelMode,
    target: TargetKind,
    rotation: &Rotation,
    seed: u64,
) -> Result<f64> {
    let pipeline = PipelineConfig {
        scales: ScaleSelection::Dyadic { j: 3 },
        ..PipelineConfig::new(mode)
    };
    let banks = super::features::select_banks(std::slice::from_ref(&tg.graph), &pipeline)?;
    let prepare = |g: &GeometricGraph| -> Result<GraphFeatures> {
        let mut g = g.clone();
        g.set_scalar_signals(crate::geometry::place_dirac_signals(&g)?)?;
        graph_features(&g.with_coordinate_field(), &banks, &pipeline)
    };
    let base = prepare(&tg.graph)?;
    let moved = prepare(&tg.rotated(rotation)?)?;
    let mut config = ModelConfig::standard(
        mode,
        target,
        tg.graph.d(),
        banks.scalar_paths(&pipeline.scattering),
        banks.vector_paths(&pipeline.scattering),
    );
    config.dropout = 0.0;
    let mut model = EscGnn::new(config, seed)?;
    if let Some(g) = model.gates.as_mut() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        g.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    }
    let a = model.predict(&base)?;
    let b = model.predict(&moved)?;
    let expected = match target {
        TargetKind::NodeVector => rotation.apply_rows(&a),
        _ => a,
    };
    Ok(relative_error(&flat(&b), &flat(&expected)))
}

/// Worst central-difference disagreement of analytic gradients over small
/// random models; relative error floors the denominator at `1e-6`.
pub fn gradient_check(cases: usize, seed: u64) -> Result<f64> {
    let mut worst = 0.0f64;
    for case in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(case as u64));
        let (mode, target) = match case % 4 {
            0 => (ModelMode::Equivariant, TargetKind::GraphScalar),
            1 => (ModelMode::Equivariant, TargetKind::NodeVector),
            2 => (ModelMode::Ablated, TargetKind::GraphScalar),
            _ => (ModelMode::Equivariant, TargetKind::NodeScalar),
        };
        let mut c = ModelConfig::standard(mode, target, 3, 4, 3);
        c.k_scalar = 3;
        c.k_vector = 2;
        c.scalar_hidden = vec![5];
        c.vector_hidden = vec![4];
        c.head_hidden = vec![6, 4];
        c.gate_hidden = vec![5];
        let mut model = EscGnn::new(c.clone(), seed.wrapping_add(case as u64))?;
        if let Some(g) = model.gates.as_mut() {
            g.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        }
        let n = 6;
        let (offsets, neighbors) = ring(n);
        let feats = GraphFeatures {
            scalar: Array3::from_shape_fn((n, c.scalar_channels, c.scalar_paths), |_| {
                rng.random_range(-1.0..1.0)
            }),
            vector: (c.vector_paths > 0).then(|| {
                Array3::from_shape_fn((n, c.d, c.vector_paths), |_| rng.random_range(-1.0..1.0))
            }),
            offsets,
            neighbors,
        };
        let y = Array2::from_shape_fn(
            match target {
                TargetKind::GraphScalar => (1, 1),
                TargetKind::NodeScalar => (n, 1),
                TargetKind::NodeVector => (n, 3),
            },
            |_| rng.random_range(-1.0..1.0),
        );
        let (_, grads) = model.loss_and_grad(&[(&feats, &y)], None)?;
        let analytic = grads.params_flat();
        let base = model.params_flat();
        let mut probe = model.clone();
        let loss = |m: &EscGnn| -> Result<f64> {
            let (p, _) = m.forward(&feats, None)?;
            Ok((&p - &y).iter().map(|v| v * v).sum::<f64>() / y.len() as f64)
        };
        let h = 1e-5;
        for (idx, &a) in analytic.iter().enumerate() {
            let mut p = base.clone();
            p[idx] = base[idx] + h;
            probe.set_params_flat(&p)?;
            let up = loss(&probe)?;
            p[idx] = base[idx] - h;
            probe.set_params_flat(&p)?;
            let down = loss(&probe)?;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
        }
    }
    Ok(worst)
}

fn ring(n: usize) -> (Vec<usize>, Vec<usize>) {
    let mut offsets = vec![0];
    let mut neighbors = Vec::new();
    for i in 0..n {
        let mut nb = vec![(i + n - 1) % n, (i + 1) % n];
        nb.sort();
        neighbors.extend(nb);
        offsets.push(neighbors.len());
    }
    (offsets, neighbors)
}

/// Largest `|row sum - 1|` of `P` and largest `|U^T U - I|` entry.
fn operator_sanity(population: &[TestGraph]) -> Result<(f64, f64)> {
    let mut rows = 0.0f64;
    let mut ortho = 0.0f64;
    for tg in population {
        let p: SparseOperator = build_lazy_walk(&tg.graph, true)?;
        for i in 0..p.n() {
            let s: f64 = p.row(i).map(|(_, v)| v).sum();
            rows = rows.max((s - 1.0).abs());
        }
        let frames = build_local_frames(&tg.graph)?;
        let d = tg.graph.d();
        for i in 0..frames.len() {
            let u = frames.basis(i);
            let g = u.t().dot(u) - Array2::<f64>::eye(d);
            ortho = ortho.max(g.iter().fold(0.0, |m, v| m.max(v.abs())));
        }
    }
    Ok((rows, ortho))
}

fn timed(f: impl FnOnce() -> Result<Vec<CheckResult>>) -> Result<Vec<CheckResult>> {
    let start = Instant::now();
    let mut out = f()?;
    let secs = start.elapsed().as_secs_f64();
    let each = secs / out.len().max(1) as f64;
    for c in &mut out {
        c.seconds = each;
    }
    Ok(out)
}

/// Runs every check at its default size. Failures become report entries;
/// only errors in the machinery itself are returned as `Err`.
pub fn verify_suite(seed: u64) -> Result<VerifyReport> {
    use Expect::{AtMost, Exceeds};
    let population = ellipsoid_population(20, 64, 5, seed)?;
    let small = ellipsoid_population(10, 32, 5, seed.wrapping_add(1))?;
    let tiny = ellipsoid_population(3, 16, 5, seed.wrapping_add(2))?;
    let dyadic3 = WaveletBank::dyadic(3);
    let mut checks = Vec::new();

    checks.extend(timed(|| {
        let (rows, ortho) = operator_sanity(&population)?;
        Ok(vec![
            CheckResult::new("walk_row_stochastic", rows, 1e-12, AtMost, String::new()),
            CheckResult::new("frames_orthonormal", ortho, 1e-12, AtMost, String::new()),
        ])
    })?);
    checks.extend(timed(|| {
        let m = operator_power_equivariance(&population, 5, &[1, 2, 4, 8], true, seed)?;
        Ok(vec![
            CheckResult::new(
                "operator_power_equivariance",
                m.max_relative_error,
                1e-9,
                AtMost,
                format!("{} graphs used, {} excluded", m.graphs_used, m.graphs_excluded),
            ),
            CheckResult::new("flagged_exclusion_rate", m.exclusion_rate(), 0.05, AtMost, String::new()),
        ])
    })?);
    checks.extend(timed(|| {
        let m = scattering_equivariance(&population, 5, &dyadic3, seed)?;
        Ok(vec![CheckResult::new(
            "scattering_equivariance",
            m.max_relative_error,
            1e-9,
            AtMost,
            format!("dyadic J=3, identity and radial tanh, {} graphs", m.graphs_used),
        )])
    })?);
    checks.extend(timed(|| {
        let m = frame_bound_check(&small, &dyadic3, 1000, seed)?;
        Ok(vec![
            CheckResult::new("frame_upper_bound_excess", m.max_excess, 1e-9, AtMost, String::new()),
            CheckResult::new(
                "frame_operator_min_eigenvalue",
                m.min_frame_eigenvalue,
                0.0,
                Exceeds,
                String::new(),
            ),
        ])
    })?);
    checks.extend(timed(|| {
        let worst = tiny
            .iter()
            .map(|tg| q_power_block_error(&tg.graph, 8))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        Ok(vec![CheckResult::new("q_power_blocks", worst, 1e-11, AtMost, String::new())])
    })?);
    checks.extend(timed(|| {
        let worst = tiny
            .iter()
            .enumerate()
            .map(|(i, tg)| kronecker_reduction_error(&tg.graph, &dyadic3, seed.wrapping_add(i as u64)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        Ok(vec![CheckResult::new("kronecker_reduction", worst, 1e-13, AtMost, String::new())])
    })?);
    checks.extend(timed(|| {
        let worst = telescoping_check(&small, 4, seed)?;
        Ok(vec![CheckResult::new("telescoping", worst, 1e-12, AtMost, String::new())])
    })?);
    checks.extend(timed(|| {
        let worst = gradient_check(4, seed)?;
        Ok(vec![CheckResult::new("gradients", worst, 1e-4, AtMost, String::new())])
    })?);
    checks.extend(timed(|| {
        let rot = crate::geometry::random_rotation(seed ^ 0xA5A5, 3)?;
        let g = &population[0];
        let eq = model_rotation_error(g, ModelMode::Equivariant, TargetKind::GraphScalar, &rot, seed)?;
        let eqv = model_rotation_error(g, ModelMode::Equivariant, TargetKind::NodeVector, &rot, seed)?;
        let ab = model_rotation_error(g, ModelMode::Ablated, TargetKind::GraphScalar, &rot, seed)?;
        Ok(vec![
            CheckResult::new("model_scalar_invariance", eq, 1e-9, AtMost, String::new()),
            CheckResult::new("model_vector_equivariance", eqv, 1e-9, AtMost, String::new()),
            CheckResult::new(
                "control_ablated_not_invariant",
                ab,
                1e-3,
                Exceeds,
                "ablated mode must change under rotation".into(),
            ),
        ])
    })?);
    checks.extend(timed(|| {
        let m = operator_power_equivariance(&population, 5, &[1, 2, 4, 8], false, seed)?;
        Ok(vec![CheckResult::new(
            "control_raw_frames_not_equivariant",
            m.max_relative_error,
            1e-9,
            Exceeds,
            "sign canonicalization disabled".into(),
        )])
    })?);

    let all_passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport {
        seed,
        all_passed,
        checks,
    })
}
