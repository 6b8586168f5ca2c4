use std::io::Cursor;

use geoscatter::formats::{
    cache_key, load_dataset, load_model, read_cache, read_f64_array, read_i32_array, read_manifest, save_dataset,
    save_model, write_cache, write_f64_array, write_i32_array, CachedGraph, CvInfo, ModelHeader, MANIFEST_FILE,
};
use geoscatter::nn_model::{EscGnn, ModelMode};
use geoscatter::synthetic_data::{make_diameter_dataset, make_vector_target_dataset, DiameterConfig, VectorFieldConfig};
use geoscatter::training_bench::{build_operators, graph_features_with, model_config, select_banks, ModelShape, PipelineConfig};
use geoscatter::Error;

#[test]
fn array_header_layout_is_fixed() {
    let mut buf = Vec::new();
    write_f64_array(&mut buf, &[2, 3], &[0.0, 1.0, 2.0, 3.0, 4.0, 5.5]).unwrap();
    assert_eq!(&buf[..8], b"GSCATF64");
    assert_eq!(&buf[8..12], &1u32.to_le_bytes());
    assert_eq!(&buf[12..16], &2u32.to_le_bytes());
    assert_eq!(&buf[16..24], &2u64.to_le_bytes());
    assert_eq!(&buf[24..32], &3u64.to_le_bytes());
    assert_eq!(&buf[72..80], &5.5f64.to_le_bytes());
    assert_eq!(buf.len(), 32 + 6 * 8);
    let (shape, data) = read_f64_array(&mut Cursor::new(&buf)).unwrap();
    assert_eq!(shape, vec![2, 3]);
    assert_eq!(data[5], 5.5);

    let mut ibuf = Vec::new();
    write_i32_array(&mut ibuf, &[3], &[-1, 0, 7]).unwrap();
    assert_eq!(&ibuf[..8], b"GSCATI32");
    assert_eq!(read_i32_array(&mut Cursor::new(&ibuf)).unwrap(), (vec![3], vec![-1, 0, 7]));
    // wrong element type is refused
    assert!(matches!(read_f64_array(&mut Cursor::new(&ibuf)), Err(Error::Format(_))));
    // truncated data is refused
    assert!(read_f64_array(&mut Cursor::new(&buf[..buf.len() - 1])).is_err());
}

#[test]
fn datasets_roundtrip_exactly_and_detect_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let diam = make_diameter_dataset(&DiameterConfig { n_graphs: 4, n_points: 32, k: 5, seed: 3 }).unwrap();
    let manifest = save_dataset(dir.path(), &diam).unwrap();
    assert_eq!(manifest.n_graphs, 4);
    assert_eq!(read_manifest(dir.path()).unwrap(), manifest);
    assert!(dir.path().join(MANIFEST_FILE).exists());
    assert_eq!(load_dataset(dir.path()).unwrap(), diam);

    let first = dir.path().join(&manifest.records[0].file);
    let mut bytes = std::fs::read(&first).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&first, &bytes).unwrap();
    assert!(load_dataset(dir.path()).is_err());

    let vdir = tempfile::tempdir().unwrap();
    let cfg = VectorFieldConfig { n_graphs: 2, n_small: 40, n_large: 80, seed: 1, ..Default::default() };
    let vf = make_vector_target_dataset(&cfg).unwrap();
    save_dataset(vdir.path(), &vf).unwrap();
    assert_eq!(load_dataset(vdir.path()).unwrap(), vf);
}

#[test]
fn cache_and_model_roundtrip_exactly() {
    let data = make_diameter_dataset(&DiameterConfig { n_graphs: 3, n_points: 32, k: 5, seed: 5 }).unwrap();
    let pipeline = PipelineConfig::new(ModelMode::Equivariant);
    let graphs: Vec<_> = data.records.iter().map(|r| r.graph.clone()).collect();
    let banks = select_banks(&graphs, &pipeline).unwrap();

    let g = &data.records[0].graph;
    let ops = build_operators(g, pipeline.weighted, true).unwrap();
    let features = graph_features_with(g, &ops, &banks, &pipeline).unwrap();
    let cached = CachedGraph { p: ops.p.clone(), q: ops.q.clone(), features: features.clone() };
    let mut buf = Vec::new();
    write_cache(&mut buf, &cached).unwrap();
    assert_eq!(read_cache(&mut Cursor::new(&buf)).unwrap(), cached);

    let k0 = cache_key(&data.records[0], &pipeline, &banks).unwrap();
    assert_eq!(k0.len(), 64);
    assert_eq!(k0, cache_key(&data.records[0], &pipeline, &banks).unwrap());
    assert_ne!(k0, cache_key(&data.records[1], &pipeline, &banks).unwrap());
    let mut other = pipeline.clone();
    other.weighted = false;
    assert_ne!(k0, cache_key(&data.records[0], &other, &banks).unwrap());

    let config = model_config(data.task, 3, &pipeline, &banks, &ModelShape::default());
    let model = EscGnn::new(config.clone(), 11).unwrap();
    let header = ModelHeader {
        task: data.task,
        config,
        pipeline,
        banks,
        cv: CvInfo { folds: 5, seed: 0, step: 2 },
        manifest: model.manifest(),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    save_model(&path, &header, &model).unwrap();
    let (h2, m2) = load_model(&path).unwrap();
    assert_eq!(h2, header);
    let a: Vec<u64> = model.params_flat().iter().map(|v| v.to_bits()).collect();
    let b: Vec<u64> = m2.params_flat().iter().map(|v| v.to_bits()).collect();
    assert_eq!(a, b);
    assert_eq!(model.predict(&features).unwrap(), m2.predict(&features).unwrap());
}
