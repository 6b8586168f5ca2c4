//! Acceptance criteria 1-11. Every test prints exactly one line
//!
//! `criterion <n> <name>: PASS|FAIL <measurements> [<seconds>s / budget <seconds>s]`
//!
//! and then asserts the same condition. Criterion 11 is ignored by default.
//! The line goes straight to stderr so it shows up without `--nocapture`.

use std::io::Write;
use std::time::Instant;

use geoscatter::geometry::random_rotation;
use geoscatter::nn_model::{ModelMode, TargetKind};
use geoscatter::synthetic_data::{
    make_diameter_dataset, make_vector_target_dataset, Dataset, DiameterConfig, VectorFieldConfig,
};
use geoscatter::training_bench::{
    ellipsoid_population, frame_bound_check, gradient_check, kronecker_reduction_error, model_rotation_error,
    operator_power_equivariance, q_power_block_error, run_cv, scattering_equivariance, telescoping_check, CvConfig,
    FoldSummary, TestGraph,
};
use geoscatter::wavelets::WaveletBank;

const SEED: u64 = 7;

fn report(n: usize, name: &str, passed: bool, detail: String, started: Instant, budget: f64) {
    let secs = started.elapsed().as_secs_f64();
    let ok = passed && secs <= budget;
    let line = format!(
        "\ncriterion {n} {name}: {} {detail} [{secs:.1}s / budget {budget:.0}s]\n",
        if ok { "PASS" } else { "FAIL" }
    );
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    assert!(passed, "criterion {n} failed: {detail}");
    assert!(secs <= budget, "criterion {n} over its time budget");
}

fn population() -> Vec<TestGraph> {
    ellipsoid_population(20, 64, 5, SEED).unwrap()
}

#[test]
fn criterion_01_operator_power_equivariance() {
    let t = Instant::now();
    let m = operator_power_equivariance(&population(), 5, &[1, 2, 4, 8], true, SEED).unwrap();
    let pass = m.max_relative_error <= 1e-9 && m.exclusion_rate() < 0.05;
    let detail = format!(
        "max_rel_err={:.3e} (<= 1e-9) excluded={}/{} rate={:.3} (< 0.05)",
        m.max_relative_error,
        m.graphs_excluded,
        m.graphs_used + m.graphs_excluded,
        m.exclusion_rate()
    );
    report(1, "operator_power_equivariance", pass, detail, t, 60.0);
}

#[test]
fn criterion_02_scattering_equivariance() {
    let t = Instant::now();
    let m = scattering_equivariance(&population(), 5, &WaveletBank::dyadic(3), SEED).unwrap();
    let detail = format!(
        "max_rel_err={:.3e} (<= 1e-9) over {} graphs, identity and radial tanh",
        m.max_relative_error, m.graphs_used
    );
    report(2, "scattering_equivariance", m.max_relative_error <= 1e-9, detail, t, 120.0);
}

#[test]
fn criterion_03_frame_bounds() {
    let t = Instant::now();
    let pop = ellipsoid_population(10, 32, 5, SEED + 1).unwrap();
    let m = frame_bound_check(&pop, &WaveletBank::dyadic(3), 1000, SEED).unwrap();
    let pass = m.max_excess <= 1e-9 && m.min_frame_eigenvalue > 0.0;
    let detail = format!(
        "max_excess_over_dmax_dmin={:.3e} (<= 1e-9) min_frame_eig={:.3e} (> 0)",
        m.max_excess, m.min_frame_eigenvalue
    );
    report(3, "frame_bounds", pass, detail, t, 60.0);
}

#[test]
fn criterion_04_q_power_blocks() {
    let t = Instant::now();
    let pop = ellipsoid_population(3, 16, 5, SEED + 2).unwrap();
    let worst = pop.iter().map(|g| q_power_block_error(&g.graph, 8).unwrap()).fold(0.0, f64::max);
    report(4, "q_power_blocks", worst <= 1e-11, format!("max_abs_err={worst:.3e} (<= 1e-11)"), t, 30.0);
}

#[test]
fn criterion_05_kronecker_reduction() {
    let t = Instant::now();
    let pop = ellipsoid_population(3, 16, 5, SEED + 2).unwrap();
    let worst = pop
        .iter()
        .enumerate()
        .map(|(i, g)| kronecker_reduction_error(&g.graph, &WaveletBank::dyadic(3), SEED + i as u64).unwrap())
        .fold(0.0, f64::max);
    report(5, "kronecker_reduction", worst <= 1e-13, format!("max_abs_err={worst:.3e} (<= 1e-13)"), t, 30.0);
}

#[test]
fn criterion_06_telescoping() {
    let t = Instant::now();
    let pop = ellipsoid_population(10, 32, 5, SEED + 1).unwrap();
    let worst = telescoping_check(&pop, 4, SEED).unwrap();
    let detail = format!("max_abs_err={worst:.3e} (<= 1e-12) scalar+vector, dyadic+infogain");
    report(6, "telescoping", worst <= 1e-12, detail, t, 30.0);
}

#[test]
fn criterion_07_gradients() {
    let t = Instant::now();
    let worst = gradient_check(20, SEED).unwrap();
    report(7, "gradients", worst <= 1e-4, format!("max_rel_err={worst:.3e} (<= 1e-4) over 20 configurations"), t, 120.0);
}

fn desk_run(data: &Dataset, mode: ModelMode, epochs: usize) -> FoldSummary {
    let mut cfg = CvConfig::new(mode, 0);
    cfg.steps = vec![0];
    cfg.schedule.epochs_max = epochs;
    run_cv(data, &cfg).unwrap().summary.folds.remove(0)
}

#[test]
fn criterion_08_desk_rotated_generalization() {
    let t = Instant::now();
    let data = make_diameter_dataset(&DiameterConfig { n_graphs: 128, n_points: 64, k: 5, seed: 0 }).unwrap();
    let eq = desk_run(&data, ModelMode::Equivariant, 150);
    let ab = desk_run(&data, ModelMode::Ablated, 150);
    let (re, ra) = (eq.test_mse_rotated / eq.best_val_mse, ab.test_mse_rotated / ab.best_val_mse);
    let pass = re <= 1.5 && ra >= 2.0 && eq.test_mse_rotated < ab.test_mse_rotated;
    let detail = format!(
        "equivariant val={:.4} test_rot={:.4} ratio={re:.2} (<= 1.5); ablated val={:.4} test_rot={:.4} ratio={ra:.2} (>= 2); eq_test < abl_test: {}",
        eq.best_val_mse,
        eq.test_mse_rotated,
        ab.best_val_mse,
        ab.test_mse_rotated,
        eq.test_mse_rotated < ab.test_mse_rotated
    );
    report(8, "desk_rotated_generalization", pass, detail, t, 1800.0);
}

#[test]
fn criterion_09_desk_vector_field() {
    let t = Instant::now();
    let data = make_vector_target_dataset(&VectorFieldConfig { n_graphs: 64, seed: 0, ..Default::default() }).unwrap();
    let eq = desk_run(&data, ModelMode::Equivariant, 150);
    let ratio = eq.test_mse_rotated / eq.best_val_mse;
    let detail = format!(
        "equivariant val={:.4} test_rot={:.4} ratio={ratio:.2} (<= 1.5)",
        eq.best_val_mse, eq.test_mse_rotated
    );
    report(9, "desk_vector_field", ratio <= 1.5, detail, t, 2700.0);
}

#[test]
fn criterion_10_negative_controls() {
    let t = Instant::now();
    let pop = population();
    let raw = operator_power_equivariance(&pop, 5, &[1, 2, 4, 8], false, SEED).unwrap();
    let rot = random_rotation(SEED ^ 0xA5A5, 3).unwrap();
    let ablated = model_rotation_error(&pop[0], ModelMode::Ablated, TargetKind::GraphScalar, &rot, SEED).unwrap();
    let pass = raw.max_relative_error > 1e-9 && ablated > 1e-3;
    let detail = format!(
        "raw_frames_max_rel_err={:.3e} (> 1e-9) ablated_output_change={:.3e} (> 1e-3)",
        raw.max_relative_error, ablated
    );
    report(10, "negative_controls", pass, detail, t, 120.0);
}

#[test]
#[ignore = "full-scale run, hours on one core"]
fn criterion_11_full_reproduction() {
    let t = Instant::now();
    let data = make_diameter_dataset(&DiameterConfig::default()).unwrap();
    let run = run_cv(&data, &CvConfig::new(ModelMode::Equivariant, 0)).unwrap().summary;
    let same_order = |ours: f64, reference: f64| (ours / reference).log10().abs() <= 1.0;
    let pass = same_order(run.val_mse_mean, 0.0035) && same_order(run.test_mse_mean, 0.0037);
    let detail = format!(
        "val={:.4}+-{:.4} (reference 0.0035) test_rot={:.4}+-{:.4} (reference 0.0037), within 10x",
        run.val_mse_mean, run.val_mse_std, run.test_mse_mean, run.test_mse_std
    );
    report(11, "full_reproduction", pass, detail, t, f64::INFINITY);
}
