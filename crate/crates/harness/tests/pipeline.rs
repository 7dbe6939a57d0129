use approx::assert_abs_diff_eq;
use dcatalyst_harness::config::ExperimentConfig;
use dcatalyst_harness::data::{self, Dataset};
use dcatalyst_harness::experiment::{
    build_problem, csv_bytes, read_trace, run_experiment, verify, write_outputs, RunOptions,
};
use dcatalyst_harness::synth::{similarity_sweep, SimilarityParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/sample600.libsvm")
}

fn quadratic_config(outer: usize) -> ExperimentConfig {
    ExperimentConfig::from_toml(&format!(
        r#"
name = "quadratic"
seed = 9
[problem]
l1 = 0.01
data = {{ source = "quadratic", dim = 6 }}
[topology]
m = 6
graph = "ring"
[algorithm]
inner = "sonata-l"
budget = {{ kind = "log-ratio", ratio = 20.0 }}
outer_iterations = {outer}
"#
    ))
    .unwrap()
}

#[test]
fn libsvm_examples() {
    let d = data::parse_libsvm_str("1 1:0.5 3:2\n0 \n").unwrap();
    assert_eq!(d.labels, vec![1.0, -1.0]);
    assert_eq!(d.rows[0], vec![(0, 0.5), (2, 2.0)]);
    assert!(d.rows[1].is_empty());
    assert_eq!(d.dim, 3);
}

#[test]
fn libsvm_round_trip() {
    let mut r = ChaCha8Rng::seed_from_u64(77);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..100 {
        let mut row = Vec::new();
        for j in 0..12 {
            if r.random::<f64>() < 0.5 {
                row.push((j, r.random_range(-1e3..1e3) * r.random::<f64>().powi(4)));
            }
        }
        rows.push(row);
        labels.push(if r.random::<bool>() { 1.0 } else { -1.0 });
    }
    let d = Dataset { rows, labels, dim: 12 };
    let back = data::parse_libsvm_str(&data::to_libsvm_string(&d)).unwrap();
    assert_eq!(back.labels, d.labels);
    assert_eq!(back.rows.len(), 100);
    for (a, b) in d.rows.iter().zip(&back.rows) {
        assert_eq!(a.len(), b.len());
        for ((ja, va), (jb, vb)) in a.iter().zip(b) {
            assert_eq!(ja, jb);
            assert!((va - vb).abs() <= 1e-15 * va.abs().max(1.0));
        }
    }
}

#[test]
fn fixture_has_600_binary_rows() {
    let d = data::parse_libsvm(&fixture()).unwrap();
    assert_eq!(d.len(), 600);
    assert_eq!(d.dim, 20);
    assert!(d.labels.iter().all(|l| *l == 1.0 || *l == -1.0));
    let shards = data::partition(d.len(), 7, 1).unwrap();
    assert_eq!(shards.iter().map(Vec::len).collect::<Vec<_>>(), vec![86, 86, 86, 86, 86, 85, 85]);
}

#[test]
fn zero_outer_loops_writes_header_and_one_row() {
    let cfg = quadratic_config(0);
    let out = run_experiment(&cfg, RunOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = write_outputs(&cfg, dir.path(), &out).unwrap();
    let text = std::fs::read_to_string(&files.trace).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(
        lines[0],
        "outer_k,inner_t,comm_rounds_cum,grad_components_cum,prox_cum,gap,consensus_err,merit,wallclock_ms"
    );
    let back = read_trace(&files.trace).unwrap();
    assert_eq!(back.len(), 1);
    assert_eq!(back[0].gap, out.rows[0].gap);
    assert!(back[0].merit.is_nan());
}

#[test]
fn strongly_convex_gap_decreases() {
    let out = run_experiment(&quadratic_config(25), RunOptions::default()).unwrap();
    assert_eq!(out.rows.len(), 26);
    for w in out.rows[2..].windows(2) {
        assert!(w[1].gap < w[0].gap, "k={} {} -> {}", w[1].outer_k, w[0].gap, w[1].gap);
    }
    for w in out.rows.windows(2) {
        assert!(w[1].comm_rounds_cum >= w[0].comm_rounds_cum);
        assert!(w[1].grad_components_cum >= w[0].grad_components_cum);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = quadratic_config(10);
    let a = run_experiment(&cfg, RunOptions::default()).unwrap();
    let b = run_experiment(&cfg, RunOptions::default()).unwrap();
    assert_eq!(csv_bytes(&a.rows).unwrap(), csv_bytes(&b.rows).unwrap());
}

#[test]
fn fixture_config_runs_and_verifies() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/libsvm_sample600.toml");
    let cfg = ExperimentConfig::load(&path).unwrap();
    assert_eq!(build_problem(&cfg).unwrap().m(), 6);
    let out = run_experiment(&cfg, RunOptions::default()).unwrap();
    assert!(out.summary.final_gap <= 1e-10);
    assert_abs_diff_eq!(out.summary.kappa_g.unwrap(), 20.0, epsilon = 1e-6);
    let dir = tempfile::tempdir().unwrap();
    let files = write_outputs(&cfg, dir.path(), &out).unwrap();
    let report = verify(&files.trace, &cfg, RunOptions::default()).unwrap();
    assert!(report.passed());
    let mut other = cfg.clone();
    other.seed += 1;
    assert!(!verify(&files.trace, &other, RunOptions::default()).unwrap().passed());
}

#[test]
fn similarity_sweep_is_deterministic_with_fixed_kappa() {
    let p = SimilarityParams::new(6, 10, 50.0, 4);
    let a = similarity_sweep(&p, 8.0, &[16.0, 4.0, 1.0]).unwrap();
    let b = similarity_sweep(&p, 8.0, &[16.0, 4.0, 1.0]).unwrap();
    for ((x, y), want) in a.iter().zip(&b).zip([2.0, 4.0, 8.0]) {
        let (cx, cy) = (x.base_constants(), y.base_constants());
        assert_eq!(cx.beta, cy.beta);
        assert_abs_diff_eq!(cx.beta, want, epsilon = 1e-9);
        assert_abs_diff_eq!(cx.kappa_g().unwrap(), 50.0, epsilon = 1e-9);
    }
}
