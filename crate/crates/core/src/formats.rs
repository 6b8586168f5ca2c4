//! On-disk formats.
//!
//! Every array is stored as
//!
//! ```text
//! magic    8 bytes   b"GSCATF64" (f64 data) or b"GSCATI32" (i32 data)
//! version  u32 LE    currently 1
//! ndim     u32 LE
//! shape    ndim x u64 LE
//! data     prod(shape) little-endian values, row-major
//! ```
//!
//! A record file is a sequence of such arrays: coordinates (`n x d` f64),
//! edges (`m x 2` i32, `i < j`), edge weights (`m` f64), scalar signals
//! (`n x F` f64), vector signals (`n x F_vec x d` f64) and the target
//! (`1` f64 for a graph target, `n x d` f64 for node targets). The dataset
//! manifest (`manifest.json`) lists each record file with its SHA-256.
//!
//! A model file is `b"GSCATMDL"`, version u32, a u64 byte length and that
//! many bytes of JSON header, then a u64 parameter count and the parameters
//! as f64 in manifest order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion_ops::{BlockSparseOperator, SparseOperator};
use crate::error::{Error, Result};
use crate::geometry::GeometricGraph;
use crate::nn_model::{EscGnn, GraphFeatures, ModelConfig, ParamSpec};
use crate::synthetic_data::{Dataset, DatasetRecord, EllipsoidSpec, SplitTag, Task};
use crate::training_bench::{Banks, PipelineConfig};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC_F64: &[u8; 8] = b"GSCATF64";
const MAGIC_I32: &[u8; 8] = b"GSCATI32";
const MAGIC_MODEL: &[u8; 8] = b"GSCATMDL";
const MAGIC_CACHE: &[u8; 8] = b"GSCATOPS";

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact::<4>(r)?))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_exact::<8>(r)?))
}

fn write_header(w: &mut impl Write, magic: &[u8; 8], shape: &[usize]) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(shape.len() as u32).to_le_bytes())?;
    for &s in shape {
        w.write_all(&(s as u64).to_le_bytes())?;
    }
    Ok(())
}

fn read_header(r: &mut impl Read, magic: &[u8; 8]) -> Result<Vec<usize>> {
    let found = read_exact::<8>(r)?;
    if &found != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&found),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let ndim = read_u32(r)? as usize;
    if ndim > 8 {
        return Err(Error::Format(format!("implausible rank {ndim}")));
    }
    (0..ndim).map(|_| Ok(read_u64(r)? as usize)).collect()
}

pub fn write_f64_array(w: &mut impl Write, shape: &[usize], data: &[f64]) -> Result<()> {
    if shape.iter().product::<usize>() != data.len() {
        return Err(Error::ShapeMismatch(format!(
            "shape {shape:?} does not hold {} values",
            data.len()
        )));
    }
    write_header(w, MAGIC_F64, shape)?;
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_f64_array(r: &mut impl Read) -> Result<(Vec<usize>, Vec<f64>)> {
    let shape = read_header(r, MAGIC_F64)?;
    let len: usize = shape.iter().product();
    let mut bytes = vec![0u8; len * 8];
    r.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((shape, data))
}

pub fn write_i32_array(w: &mut impl Write, shape: &[usize], data: &[i32]) -> Result<()> {
    if shape.iter().product::<usize>() != data.len() {
        return Err(Error::ShapeMismatch(format!(
            "shape {shape:?} does not hold {} values",
            data.len()
        )));
    }
    write_header(w, MAGIC_I32, shape)?;
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_i32_array(r: &mut impl Read) -> Result<(Vec<usize>, Vec<i32>)> {
    let shape = read_header(r, MAGIC_I32)?;
    let len: usize = shape.iter().product();
    let mut bytes = vec![0u8; len * 4];
    r.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok((shape, data))
}

fn to_i32(v: usize) -> Result<i32> {
    i32::try_from(v).map_err(|_| Error::Format(format!("index {v} exceeds i32")))
}

fn write_nd(w: &mut impl Write, a: &ArrayD<f64>) -> Result<()> {
    let data: Vec<f64> = a.iter().copied().collect();
    write_f64_array(w, a.shape(), &data)
}

fn read_nd(r: &mut impl Read, rank: usize) -> Result<ArrayD<f64>> {
    let (shape, data) = read_f64_array(r)?;
    if shape.len() != rank {
        return Err(Error::Format(format!("expected rank {rank}, got {shape:?}")));
    }
    ArrayD::from_shape_vec(IxDyn(&shape), data).map_err(|e| Error::Format(e.to_string()))
}

fn read_array2(r: &mut impl Read) -> Result<Array2<f64>> {
    read_nd(r, 2)?
        .into_dimensionality()
        .map_err(|e| Error::Format(e.to_string()))
}

fn read_array3(r: &mut impl Read) -> Result<Array3<f64>> {
    read_nd(r, 3)?
        .into_dimensionality()
        .map_err(|e| Error::Format(e.to_string()))
}

/// Serializes a graph and its target to `w`.
pub fn write_record(w: &mut impl Write, rec: &DatasetRecord) -> Result<()> {
    let g = &rec.graph;
    write_nd(w, &g.coords().clone().into_dyn())?;
    let edges = g.edges();
    let mut pairs = Vec::with_capacity(2 * edges.len());
    let mut weights = Vec::with_capacity(edges.len());
    for (i, j, wt) in edges {
        pairs.push(to_i32(i)?);
        pairs.push(to_i32(j)?);
        weights.push(wt);
    }
    write_i32_array(w, &[weights.len(), 2], &pairs)?;
    write_f64_array(w, &[weights.len()], &weights)?;
    write_nd(w, &g.scalar_signals().clone().into_dyn())?;
    write_nd(w, &g.vector_signals().clone().into_dyn())?;
    match (&rec.graph_target, &rec.node_targets) {
        (Some(y), None) => write_f64_array(w, &[1], &[*y]),
        (None, Some(t)) => write_nd(w, &t.clone().into_dyn()),
        _ => Err(Error::Format(
            "record must carry exactly one of graph or node targets".into(),
        )),
    }
}

/// Inverse of [`write_record`]; kernel scale, provenance and split come from
/// the manifest.
pub fn read_record(
    r: &mut impl Read,
    epsilon: f64,
    provenance: EllipsoidSpec,
    split: SplitTag,
) -> Result<DatasetRecord> {
    let coords = read_array2(r)?;
    let (eshape, pairs) = read_i32_array(r)?;
    let (wshape, weights) = read_f64_array(r)?;
    if eshape.len() != 2 || eshape[1] != 2 || wshape != [eshape[0]] {
        return Err(Error::Format("edge arrays disagree".into()));
    }
    let edges: Vec<(usize, usize, f64)> = pairs
        .chunks_exact(2)
        .zip(&weights)
        .map(|(p, &w)| {
            if p[0] < 0 || p[1] < 0 {
                return Err(Error::Format("negative vertex index".into()));
            }
            Ok((p[0] as usize, p[1] as usize, w))
        })
        .collect::<Result<_>>()?;
    let mut graph = GeometricGraph::from_edges(coords, &edges, epsilon)?;
    graph.set_scalar_signals(read_array2(r)?)?;
    graph.set_vector_signals(read_array3(r)?)?;
    let (shape, data) = read_f64_array(r)?;
    let (graph_target, node_targets) = match shape.as_slice() {
        [1] => (Some(data[0]), None),
        [n, d] if *n == graph.n() && *d == graph.d() => (
            None,
            Some(Array2::from_shape_vec((*n, *d), data).map_err(|e| Error::Format(e.to_string()))?),
        ),
        other => return Err(Error::Format(format!("unexpected target shape {other:?}"))),
    };
    Ok(DatasetRecord {
        graph,
        graph_target,
        node_targets,
        provenance,
        split,
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn record_bytes(rec: &DatasetRecord) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_record(&mut buf, rec)?;
    Ok(buf)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    pub n_points: usize,
    pub provenance: EllipsoidSpec,
    pub split: SplitTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub task: Task,
    pub d: usize,
    pub n_graphs: usize,
    pub k: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub records: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes one binary file per record plus `manifest.json` into `dir`.
pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir)?;
    let d = dataset.records.first().map_or(3, |r| r.graph.d());
    let mut records = Vec::with_capacity(dataset.len());
    for (i, rec) in dataset.records.iter().enumerate() {
        let bytes = record_bytes(rec)?;
        let file = format!("record_{i:05}.bin");
        std::fs::write(dir.join(&file), &bytes)?;
        records.push(ManifestEntry {
            file,
            sha256: sha256_hex(&bytes),
            n_points: rec.graph.n(),
            provenance: rec.provenance,
            split: rec.split,
        });
    }
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        task: dataset.task,
        d,
        n_graphs: dataset.len(),
        k: dataset.k,
        epsilon: dataset.epsilon,
        seed: dataset.seed,
        records,
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    std::fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let manifest: DatasetManifest =
        serde_json::from_slice(&std::fs::read(dir.join(MANIFEST_FILE))?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset version {}",
            manifest.format_version
        )));
    }
    if manifest.records.len() != manifest.n_graphs {
        return Err(Error::Format(format!(
            "manifest lists {} records but declares {}",
            manifest.records.len(),
            manifest.n_graphs
        )));
    }
    Ok(manifest)
}

/// Loads a dataset directory, verifying every record checksum.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    let mut records = Vec::with_capacity(manifest.n_graphs);
    for entry in &manifest.records {
        let bytes = std::fs::read(dir.join(&entry.file))?;
        let found = sha256_hex(&bytes);
        if found != entry.sha256 {
            return Err(Error::Format(format!(
                "checksum mismatch for {}: manifest {}, file {found}",
                entry.file, entry.sha256
            )));
        }
        let mut r = bytes.as_slice();
        let rec = read_record(&mut r, manifest.epsilon, entry.provenance, entry.split)?;
        if !r.is_empty() {
            return Err(Error::Format(format!("trailing bytes in {}", entry.file)));
        }
        if rec.graph.n() != entry.n_points || rec.graph.d() != manifest.d {
            return Err(Error::Format(format!("{} disagrees with the manifest", entry.file)));
        }
        records.push(rec);
    }
    Ok(Dataset {
        task: manifest.task,
        epsilon: manifest.epsilon,
        k: manifest.k,
        seed: manifest.seed,
        records,
    })
}

fn usize_to_i32s(v: &[usize]) -> Result<Vec<i32>> {
    v.iter().map(|&x| to_i32(x)).collect()
}

fn i32s_to_usize(v: &[i32]) -> Result<Vec<usize>> {
    v.iter()
        .map(|&x| usize::try_from(x).map_err(|_| Error::Format(format!("negative index {x}"))))
        .collect()
}

fn read_index_vec(r: &mut impl Read) -> Result<Vec<usize>> {
    let (shape, data) = read_i32_array(r)?;
    if shape.len() != 1 {
        return Err(Error::Format(format!("expected index vector, got {shape:?}")));
    }
    i32s_to_usize(&data)
}

pub fn write_sparse_operator(w: &mut impl Write, p: &SparseOperator) -> Result<()> {
    let indptr = usize_to_i32s(p.indptr())?;
    let indices = usize_to_i32s(p.indices())?;
    write_i32_array(w, &[indptr.len()], &indptr)?;
    write_i32_array(w, &[indices.len()], &indices)?;
    write_f64_array(w, &[p.values().len()], p.values())?;
    write_i32_array(w, &[1], &[i32::from(p.is_row_stochastic())])
}

pub fn read_sparse_operator(r: &mut impl Read) -> Result<SparseOperator> {
    let indptr = read_index_vec(r)?;
    let indices = read_index_vec(r)?;
    let (_, values) = read_f64_array(r)?;
    let (_, flag) = read_i32_array(r)?;
    let n = indptr.len().saturating_sub(1);
    SparseOperator::from_parts(n, indptr, indices, values, flag.first() == Some(&1))
}

pub fn write_block_operator(w: &mut impl Write, q: &BlockSparseOperator) -> Result<()> {
    let indptr = usize_to_i32s(q.indptr())?;
    let indices = usize_to_i32s(q.indices())?;
    write_i32_array(w, &[indptr.len()], &indptr)?;
    write_i32_array(w, &[indices.len()], &indices)?;
    write_f64_array(w, &[indices.len(), q.d(), q.d()], q.raw_blocks())
}

pub fn read_block_operator(r: &mut impl Read) -> Result<BlockSparseOperator> {
    let indptr = read_index_vec(r)?;
    let indices = read_index_vec(r)?;
    let (shape, blocks) = read_f64_array(r)?;
    if shape.len() != 3 || shape[1] != shape[2] {
        return Err(Error::Format(format!("bad block shape {shape:?}")));
    }
    let n = indptr.len().saturating_sub(1);
    BlockSparseOperator::from_parts(n, shape[1], indptr, indices, blocks)
}

pub fn write_features(w: &mut impl Write, f: &GraphFeatures) -> Result<()> {
    write_nd(w, &f.scalar.clone().into_dyn())?;
    match &f.vector {
        Some(v) => {
            write_i32_array(w, &[1], &[1])?;
            write_nd(w, &v.clone().into_dyn())?;
        }
        None => write_i32_array(w, &[1], &[0])?,
    }
    let offsets = usize_to_i32s(&f.offsets)?;
    let neighbors = usize_to_i32s(&f.neighbors)?;
    write_i32_array(w, &[offsets.len()], &offsets)?;
    write_i32_array(w, &[neighbors.len()], &neighbors)
}

pub fn read_features(r: &mut impl Read) -> Result<GraphFeatures> {
    let scalar = read_array3(r)?;
    let (_, flag) = read_i32_array(r)?;
    let vector = match flag.as_slice() {
        [1] => Some(read_array3(r)?),
        [0] => None,
        other => return Err(Error::Format(format!("bad vector flag {other:?}"))),
    };
    let offsets = read_index_vec(r)?;
    let neighbors = read_index_vec(r)?;
    Ok(GraphFeatures {
        scalar,
        vector,
        offsets,
        neighbors,
    })
}

/// Operators and features of one graph under one pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct CachedGraph {
    pub p: SparseOperator,
    pub q: Option<BlockSparseOperator>,
    pub features: GraphFeatures,
}

/// Content hash of a record together with the pipeline and banks used to
/// featurize it.
pub fn cache_key(rec: &DatasetRecord, pipeline: &PipelineConfig, banks: &Banks) -> Result<String> {
    let mut h = Sha256::new();
    h.update(record_bytes(rec)?);
    h.update(serde_json::to_vec(pipeline)?);
    h.update(serde_json::to_vec(banks)?);
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

pub fn write_cache(w: &mut impl Write, c: &CachedGraph) -> Result<()> {
    w.write_all(MAGIC_CACHE)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    write_sparse_operator(w, &c.p)?;
    match &c.q {
        Some(q) => {
            write_i32_array(w, &[1], &[1])?;
            write_block_operator(w, q)?;
        }
        None => write_i32_array(w, &[1], &[0])?,
    }
    write_features(w, &c.features)
}

pub fn read_cache(r: &mut impl Read) -> Result<CachedGraph> {
    if &read_exact::<8>(r)? != MAGIC_CACHE {
        return Err(Error::Format("not an operator cache".into()));
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported cache version {version}")));
    }
    let p = read_sparse_operator(r)?;
    let (_, flag) = read_i32_array(r)?;
    let q = match flag.as_slice() {
        [1] => Some(read_block_operator(r)?),
        [0] => None,
        other => return Err(Error::Format(format!("bad operator flag {other:?}"))),
    };
    Ok(CachedGraph {
        p,
        q,
        features: read_features(r)?,
    })
}

pub fn cache_path(data_dir: &Path, key: &str) -> PathBuf {
    data_dir.join("cache").join(format!("{key}.bin"))
}

/// Cross-validation placement of a trained model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvInfo {
    pub folds: usize,
    pub seed: u64,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub task: Task,
    pub config: ModelConfig,
    pub pipeline: PipelineConfig,
    pub banks: Banks,
    pub cv: CvInfo,
    pub manifest: Vec<ParamSpec>,
}

pub fn write_model(w: &mut impl Write, header: &ModelHeader, model: &EscGnn) -> Result<()> {
    if header.manifest != model.manifest() || header.config != model.config {
        return Err(Error::ConfigMismatch("header does not describe the model".into()));
    }
    let json = serde_json::to_vec(header)?;
    w.write_all(MAGIC_MODEL)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    let params = model.params_flat();
    w.write_all(&(params.len() as u64).to_le_bytes())?;
    for v in params {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_model(r: &mut impl Read) -> Result<(ModelHeader, EscGnn)> {
    if &read_exact::<8>(r)? != MAGIC_MODEL {
        return Err(Error::Format("not a model file".into()));
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let len = read_u64(r)? as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: ModelHeader = serde_json::from_slice(&json)?;
    let count = read_u64(r)? as usize;
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    let params: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut model = EscGnn::new(header.config.clone(), 0)?;
    if model.manifest() != header.manifest {
        return Err(Error::Format("parameter manifest does not match the configuration".into()));
    }
    model.set_params_flat(&params)?;
    Ok((header, model))
}

pub fn save_model(path: &Path, header: &ModelHeader, model: &EscGnn) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(&mut w, header, model)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(ModelHeader, EscGnn)> {
    read_model(&mut BufReader::new(File::open(path)?))
}

/// Writes rows under the header `fold,epoch,split,mse,lr,wall_seconds,is_best`.
pub fn write_metrics_csv<'a>(
    path: &Path,
    rows: impl IntoIterator<Item = &'a crate::training_bench::MetricsRow>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
