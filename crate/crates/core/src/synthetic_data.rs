//! Synthetic ellipsoid benchmarks: graph-level diameter regression and a
//! node-level vector field built from outward normals and smooth Laplacian
//! eigenvector magnitudes.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    build_knn_graph, dataset_epsilon, kernel_weights, place_dirac_signals, rotate_graph,
    EpsilonMode, GeometricGraph, Rotation,
};
use crate::linalg::symmetric_eigen_asc;

/// Semi-axes of an ellipsoid plus the seed of its point sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidSpec {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub seed: u64,
}

impl EllipsoidSpec {
    pub fn new(a: f64, b: f64, c: f64, seed: u64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && c > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "semi-axes must be positive, got ({a}, {b}, {c})"
            )));
        }
        Ok(Self { a, b, c, seed })
    }

    /// `x^2/a^2 + y^2/b^2 + z^2/c^2` at `p`.
    pub fn level(&self, p: [f64; 3]) -> f64 {
        (p[0] / self.a).powi(2) + (p[1] / self.b).powi(2) + (p[2] / self.c).powi(2)
    }

    /// Unit outward normal `grad f / |grad f|` at a surface point.
    pub fn unit_normal(&self, p: [f64; 3]) -> [f64; 3] {
        let g = [
            2.0 * p[0] / (self.a * self.a),
            2.0 * p[1] / (self.b * self.b),
            2.0 * p[2] / (self.c * self.c),
        ];
        let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        [g[0] / norm, g[1] / norm, g[2] / norm]
    }
}

/// `n` points on the ellipsoid surface: standard Gaussian draws projected to
/// the unit sphere and stretched by `(a, b, c)`. Not area-uniform.
pub fn sample_ellipsoid_cloud(spec: &EllipsoidSpec, n: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Array2::zeros((n, 3));
    for i in 0..n {
        let p = loop {
            let g: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            let r = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
            if r > 1e-12 {
                break [g[0] / r, g[1] / r, g[2] / r];
            }
        };
        out[[i, 0]] = spec.a * p[0];
        out[[i, 1]] = spec.b * p[1];
        out[[i, 2]] = spec.c * p[2];
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    #[default]
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Diameter,
    VectorField,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diameter" => Ok(Task::Diameter),
            "vectorfield" => Ok(Task::VectorField),
            other => Err(Error::InvalidArgument(format!("unknown task '{other}'"))),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Diameter => "diameter",
            Task::VectorField => "vectorfield",
        })
    }
}

/// One graph with its target and where it came from.
///
/// The graph carries the two Dirac signals as scalar signals and its own
/// coordinates as the single vector signal.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub graph: GeometricGraph,
    pub graph_target: Option<f64>,
    /// `n x d` target vectors for the node-level task.
    pub node_targets: Option<Array2<f64>>,
    pub provenance: EllipsoidSpec,
    pub split: SplitTag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub task: Task,
    /// Dataset-level Gaussian kernel scale.
    pub epsilon: f64,
    pub k: usize,
    pub seed: u64,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiameterConfig {
    pub n_graphs: usize,
    pub n_points: usize,
    pub k: usize,
    pub seed: u64,
}

impl Default for DiameterConfig {
    fn default() -> Self {
        Self {
            n_graphs: 512,
            n_points: 128,
            k: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VectorFieldConfig {
    pub n_graphs: usize,
    pub n_small: usize,
    pub n_large: usize,
    pub k_small: usize,
    pub k_large: usize,
    /// Number of nontrivial Laplacian eigenvectors in the magnitude signal.
    pub n_eigs: usize,
    pub a_mag: f64,
    pub seed: u64,
}

impl Default for VectorFieldConfig {
    fn default() -> Self {
        Self {
            n_graphs: 512,
            n_small: 128,
            n_large: 1024,
            k_small: 5,
            k_large: 10,
            n_eigs: 16,
            a_mag: 0.5,
            seed: 0,
        }
    }
}

fn positive_draw<R: Rng + ?Sized>(rng: &mut R, dist: &Normal<f64>) -> f64 {
    loop {
        let v = dist.sample(rng);
        if v > 0.0 {
            return v;
        }
    }
}

/// Semi-axes `a ~ N(3, 0.5)`, `b, c ~ N(1, 0.2)` (non-positive draws are
/// redrawn) and a point-sample seed for each of `count` ellipsoids.
pub fn draw_ellipsoid_specs(count: usize, seed: u64) -> Vec<EllipsoidSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let long = Normal::new(3.0, 0.5).expect("valid normal");
    let short = Normal::new(1.0, 0.2).expect("valid normal");
    (0..count)
        .map(|_| {
            let a = positive_draw(&mut rng, &long);
            let b = positive_draw(&mut rng, &short);
            let c = positive_draw(&mut rng, &short);
            EllipsoidSpec {
                a,
                b,
                c,
                seed: rng.random(),
            }
        })
        .collect()
}

const MAX_REGENERATIONS: u64 = 64;

/// Sub-seed for the `attempt`-th regeneration of a disconnected sample.
fn regenerated(spec: &EllipsoidSpec, attempt: u64) -> EllipsoidSpec {
    EllipsoidSpec {
        seed: spec.seed.wrapping_add(attempt),
        ..*spec
    }
}

/// Retries `build` with incremented sub-seeds while it reports a
/// disconnected graph.
fn with_regeneration<T>(
    index: usize,
    spec: &EllipsoidSpec,
    build: impl Fn(&EllipsoidSpec) -> Result<T>,
) -> Result<(EllipsoidSpec, T)> {
    let mut last = None;
    for attempt in 0..MAX_REGENERATIONS {
        let s = regenerated(spec, attempt);
        match build(&s) {
            Ok(v) => return Ok((s, v)),
            Err(e @ Error::DisconnectedGraph { .. }) => {
                log::warn!(
                    "record {index}: {e} with sub-seed {}, regenerating",
                    s.seed
                );
                last = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Kernel-weights every graph with one dataset-level epsilon and attaches
/// the Dirac and coordinate signals.
fn finalize_graphs(graphs: Vec<GeometricGraph>) -> Result<(f64, Vec<GeometricGraph>)> {
    let epsilon = dataset_epsilon(graphs.iter());
    let out = graphs
        .into_iter()
        .map(|g| {
            let mut w = kernel_weights(&g, EpsilonMode::Explicit(epsilon))?;
            let diracs = place_dirac_signals(&w)?;
            w.set_scalar_signals(diracs)?;
            Ok(w.with_coordinate_field())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((epsilon, out))
}

/// Ellipsoid point clouds whose target is their Euclidean diameter.
pub fn make_diameter_dataset(config: &DiameterConfig) -> Result<Dataset> {
    if config.n_graphs == 0 {
        return Err(Error::InvalidArgument("need at least one graph".into()));
    }
    let specs = draw_ellipsoid_specs(config.n_graphs, config.seed);
    let built: Vec<(EllipsoidSpec, GeometricGraph)> = specs
        .par_iter()
        .enumerate()
        .map(|(idx, spec)| {
            with_regeneration(idx, spec, |s| {
                build_knn_graph(&sample_ellipsoid_cloud(s, config.n_points), config.k)
            })
        })
        .collect::<Result<_>>()?;
    let (specs, graphs): (Vec<_>, Vec<_>) = built.into_iter().unzip();
    let (epsilon, graphs) = finalize_graphs(graphs)?;
    let records = graphs
        .into_iter()
        .zip(specs)
        .map(|(graph, provenance)| DatasetRecord {
            graph_target: Some(graph.diameter()),
            graph,
            node_targets: None,
            provenance,
            split: SplitTag::Train,
        })
        .collect();
    Ok(Dataset {
        task: Task::Diameter,
        epsilon,
        k: config.k,
        seed: config.seed,
        records,
    })
}

/// Lowest `count + 1` eigenpairs of `L_sym = I - D^{-1/2} A D^{-1/2}` built
/// from the 0/1 adjacency, eigenvalues ascending, eigenvectors as columns.
///
/// Each eigenvector is signed so its largest-magnitude entry (lowest index on
/// ties) is positive.
pub fn sym_laplacian_eigs(graph: &GeometricGraph, count: usize) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = graph.n();
    if count + 1 > n {
        return Err(Error::InvalidArgument(format!(
            "{} eigenpairs requested from a {n}-vertex graph",
            count + 1
        )));
    }
    let components = graph.component_count();
    if components != 1 {
        return Err(Error::DisconnectedGraph { components });
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| match graph.degree(i) {
            0 => Err(Error::ZeroDegree(i)),
            deg => Ok(1.0 / (deg as f64).sqrt()),
        })
        .collect::<Result<_>>()?;
    let mut l = Array2::<f64>::eye(n);
    for i in 0..n {
        for &j in graph.neighbor_indices(i) {
            l[[i, j]] -= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    let (values, vectors) = symmetric_eigen_asc(&l)?;
    let keep = count + 1;
    let values = values.slice(ndarray::s![..keep]).to_owned();
    let mut vectors = vectors.slice(ndarray::s![.., ..keep]).to_owned();
    for mut col in vectors.axis_iter_mut(Axis(1)) {
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
    Ok((values, vectors))
}

/// Smooth magnitude perturbation `a_mag * g / |g|_inf` with
/// `g = sum_j c_j phi_j` over the nontrivial eigenvectors (columns 1..).
pub fn bandlimited_magnitude(eigvecs: &Array2<f64>, coeffs: &[f64], a_mag: f64) -> Array1<f64> {
    let n = eigvecs.nrows();
    let mut g = Array1::<f64>::zeros(n);
    for (j, &c) in coeffs.iter().enumerate() {
        g.scaled_add(c, &eigvecs.column(j + 1));
    }
    let inf = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if inf == 0.0 {
        return g;
    }
    g.mapv(|v| a_mag * v / inf)
}

/// Vector field targets on the small evaluation graph built from one sample
/// of `n_large` points. Returns the unweighted small graph and the targets.
fn vector_record(
    spec: &EllipsoidSpec,
    config: &VectorFieldConfig,
) -> Result<(GeometricGraph, Array2<f64>)> {
    let cloud = sample_ellipsoid_cloud(spec, config.n_large);
    let large = build_knn_graph(&cloud, config.k_large)?;
    let small_pts = cloud.slice(ndarray::s![..config.n_small, ..]).to_owned();
    let small = build_knn_graph(&small_pts, config.k_small)?;
    let (_, vecs) = sym_laplacian_eigs(&large, config.n_eigs)?;
    // coefficient stream independent of the point stream
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    let coeffs: Vec<f64> = (0..config.n_eigs)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let g = bandlimited_magnitude(&vecs, &coeffs, config.a_mag);
    let mut targets = Array2::zeros((config.n_small, 3));
    for i in 0..config.n_small {
        let p = [small_pts[[i, 0]], small_pts[[i, 1]], small_pts[[i, 2]]];
        let u = spec.unit_normal(p);
        for c in 0..3 {
            targets[[i, c]] = (1.0 + g[i]) * u[c];
        }
    }
    Ok((small, targets))
}

/// Node-level task: outward unit normals scaled by `1 + g~` where `g~` is a
/// random combination of smooth Laplacian eigenvectors of a denser sample.
pub fn make_vector_target_dataset(config: &VectorFieldConfig) -> Result<Dataset> {
    if config.n_graphs == 0 {
        return Err(Error::InvalidArgument("need at least one graph".into()));
    }
    if config.n_small > config.n_large {
        return Err(Error::InvalidArgument(format!(
            "n_small = {} exceeds n_large = {}",
            config.n_small, config.n_large
        )));
    }
    if !(config.a_mag > 0.0 && config.a_mag < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "a_mag must lie in (0, 1), got {}",
            config.a_mag
        )));
    }
    let specs = draw_ellipsoid_specs(config.n_graphs, config.seed);
    let built: Vec<(EllipsoidSpec, (GeometricGraph, Array2<f64>))> = specs
        .par_iter()
        .enumerate()
        .map(|(idx, spec)| with_regeneration(idx, spec, |s| vector_record(s, config)))
        .collect::<Result<_>>()?;
    let mut specs = Vec::with_capacity(built.len());
    let mut graphs = Vec::with_capacity(built.len());
    let mut targets = Vec::with_capacity(built.len());
    for (s, (g, t)) in built {
        specs.push(s);
        graphs.push(g);
        targets.push(t);
    }
    let (epsilon, graphs) = finalize_graphs(graphs)?;
    let records = graphs
        .into_iter()
        .zip(specs)
        .zip(targets)
        .map(|((graph, provenance), t)| DatasetRecord {
            graph,
            graph_target: None,
            node_targets: Some(t),
            provenance,
            split: SplitTag::Train,
        })
        .collect();
    Ok(Dataset {
        task: Task::VectorField,
        epsilon,
        k: config.k_small,
        seed: config.seed,
        records,
    })
}

/// Rotates every test-tagged record (coordinates, vector signals and vector
/// targets). Diameters are unchanged by construction.
pub fn rotate_test_fold(records: &mut [DatasetRecord], rotation: &Rotation) -> Result<()> {
    for rec in records.iter_mut().filter(|r| r.split == SplitTag::Test) {
        rotate_record(rec, rotation)?;
    }
    Ok(())
}

pub fn rotate_record(rec: &mut DatasetRecord, rotation: &Rotation) -> Result<()> {
    rec.graph = rotate_graph(&rec.graph, rotation)?;
    if let Some(t) = rec.node_targets.as_mut() {
        *t = rotation.apply_rows(t);
    }
    Ok(())
}
