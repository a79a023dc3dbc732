//! End-to-end tests of the `setid-dml` binary: exit codes, output
//! determinism and schema conformance.

use std::path::{Path, PathBuf};
use std::process::Command;

use setid_dml::dataset::{generate_plp, DgpSpec, ModelKind};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_setid-dml")
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("setid-dml-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn plp_csv(dir: &Path, n: usize, width: f64, seed: u64) -> PathBuf {
    let spec = DgpSpec {
        model: ModelKind::Plp,
        n,
        p: 4,
        sparsity: 2,
        beta0: vec![1.0],
        interval_width: width,
        noise_sd: 1.0,
        residual_sd: 1.0,
        seed,
    };
    let (data, _) = generate_plp(&spec).unwrap();
    let path = dir.join("data.csv");
    data.write_csv_path(&path).unwrap();
    path
}

fn estimate_config(data: &Path, out: &Path) -> String {
    format!(
        r#"model = "plp"
data_path = "{}"
b = 150
seed = 4
output_dir = "{}"

[learners.eta]
penalty = {{ fixed = 0.05 }}

[learners.reduced_form]
penalty = {{ fixed = 0.05 }}
"#,
        data.display(),
        out.display()
    )
}

#[test]
fn estimate_point_identified_bounds_coincide_and_rerun_is_byte_identical() {
    let dir = workdir("estimate");
    let data = plp_csv(&dir, 150, 0.0, 3);
    let out = dir.join("out");
    let cfg = dir.join("run.toml");
    write(&cfg, &estimate_config(&data, &out));

    let status = Command::new(bin())
        .args(["estimate", "--config"])
        .arg(&cfg)
        .status()
        .unwrap();
    assert!(status.success());

    let results: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("results.json")).unwrap()).unwrap();
    let lower = results["bounds"]["lower"].as_f64().unwrap();
    let upper = results["bounds"]["upper"].as_f64().unwrap();
    assert!((lower - upper).abs() < 1e-10, "point-identified data must collapse the bounds");
    assert_eq!(results["n"].as_u64().unwrap(), 150);
    assert_eq!(results["K"].as_u64().unwrap(), 2);

    // Outputs validate against the shipped schemas.
    let schema_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas");
    for (file, schema) in [("results.json", "results.schema.json"), ("region.json", "region.schema.json")] {
        let doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join(file)).unwrap()).unwrap();
        let schema_text = std::fs::read_to_string(schema_dir.join(schema)).unwrap();
        setid_dml::schema::validate_str(&schema_text, &doc)
            .unwrap_or_else(|e| panic!("{file} violates {schema}: {e}"));
    }

    // Byte-identical rerun: there are no timestamps in the outputs.
    let first_results = std::fs::read(out.join("results.json")).unwrap();
    let first_region = std::fs::read(out.join("region.json")).unwrap();
    let status = Command::new(bin())
        .args(["estimate", "--config"])
        .arg(&cfg)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(first_results, std::fs::read(out.join("results.json")).unwrap());
    assert_eq!(first_region, std::fs::read(out.join("region.json")).unwrap());
}

#[test]
fn estimate_missing_interval_column_exits_two() {
    let dir = workdir("schema-violation");
    // Drop the y_upper column from a valid file.
    let data = plp_csv(&dir, 20, 1.0, 5);
    let text = std::fs::read_to_string(&data).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    let idx = header.split(',').position(|c| c == "y_upper").unwrap();
    let strip = |line: &str| {
        line.split(',')
            .enumerate()
            .filter(|(i, _)| *i != idx)
            .map(|(_, v)| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    let mut out_text = strip(header);
    for line in lines {
        out_text.push('\n');
        out_text.push_str(&strip(line));
    }
    let broken = dir.join("broken.csv");
    write(&broken, &out_text);

    let out = dir.join("out");
    let cfg = dir.join("run.toml");
    write(&cfg, &estimate_config(&broken, &out));
    let status = Command::new(bin())
        .args(["estimate", "--config"])
        .arg(&cfg)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn estimate_degenerate_design_exits_three() {
    let dir = workdir("degenerate");
    // Constant treatment: the residual scale matrix is singular.
    let n = 30;
    let d = ndarray::Array2::from_elem((n, 1), 1.0);
    let x = ndarray::Array2::zeros((n, 2));
    let data = setid_dml::dataset::Dataset::new(
        d,
        x,
        None,
        vec![None; n],
        vec![Some(0.0); n],
        vec![Some(1.0); n],
    )
    .unwrap();
    let path = dir.join("flat.csv");
    data.write_csv_path(&path).unwrap();
    let out = dir.join("out");
    let cfg = dir.join("run.toml");
    write(&cfg, &estimate_config(&path, &out));
    let status = Command::new(bin())
        .args(["estimate", "--config"])
        .arg(&cfg)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

fn simulate_config(out: &Path, m: usize) -> String {
    format!(
        r#"model = "plp"
m = {m}
b = 120
seed = 9
output_dir = "{}"
estimator_variants = ["orthogonal_crossfit", "naive"]

[dgp]
model = "plp"
n = 120
p = 4
sparsity = 2
beta0 = [1.0]
interval_width = 1.0
noise_sd = 1.0
residual_sd = 1.0
seed = 1

[learners.eta]
penalty = {{ fixed = 0.05 }}

[learners.reduced_form]
penalty = {{ fixed = 0.05 }}
"#,
        out.display()
    )
}

#[test]
fn simulate_outputs_have_expected_shape_and_thread_invariance() {
    let dir = workdir("simulate");
    let out = dir.join("out");
    let cfg = dir.join("run.toml");
    write(&cfg, &simulate_config(&out, 6));
    let status = Command::new(bin())
        .args(["simulate", "--config"])
        .arg(&cfg)
        .status()
        .unwrap();
    assert!(status.success());

    let sim = std::fs::read_to_string(out.join("sim.csv")).unwrap();
    // Header + M x variants x 2 bounds.
    assert_eq!(sim.lines().count(), 1 + 6 * 2 * 2);
    assert!(out.join("hist.csv").exists());

    let schema_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas");
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let schema_text = std::fs::read_to_string(schema_dir.join("summary.schema.json")).unwrap();
    setid_dml::schema::validate_str(&schema_text, &doc).unwrap();

    // A single-threaded rerun produces identical bytes.
    let baseline = std::fs::read(out.join("sim.csv")).unwrap();
    let status = Command::new(bin())
        .args(["simulate", "--config"])
        .arg(&cfg)
        .env("SETID_DML_THREADS", "1")
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(baseline, std::fs::read(out.join("sim.csv")).unwrap());
}

#[test]
fn coverage_runs_and_flag_overrides_take_precedence() {
    let dir = workdir("coverage");
    let out = dir.join("out");
    let cfg = dir.join("run.toml");
    // Config says m = 10 (invalid for coverage); the flag raises it.
    write(&cfg, &simulate_config(&out, 10));
    let status = Command::new(bin())
        .args(["coverage", "--config"])
        .arg(&cfg)
        .args(["--m", "50", "--b", "100", "--estimator-variants", "orthogonal_crossfit"])
        .status()
        .unwrap();
    assert!(status.success(), "coverage run failed");

    let schema_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas");
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("coverage.json")).unwrap()).unwrap();
    let schema_text = std::fs::read_to_string(schema_dir.join("coverage.schema.json")).unwrap();
    setid_dml::schema::validate_str(&schema_text, &doc).unwrap();
    let entries = doc["entries"].as_array().unwrap();
    assert_eq!(entries[0]["kind"], "pointwise_set");
    let c = entries[0]["coverage"].as_f64().unwrap();
    let se = entries[0]["mc_se"].as_f64().unwrap();
    assert!((se - (c * (1.0 - c) / 50.0).sqrt()).abs() < 1e-12, "binomial mc se formula");
}

#[test]
fn bad_config_exits_two() {
    let dir = workdir("badcfg");
    let cfg = dir.join("run.toml");
    write(&cfg, "model = \"plp\"\nnot_a_field = 1\n");
    let status = Command::new(bin())
        .args(["estimate", "--config"])
        .arg(&cfg)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn nested_alpha_regions_are_monotone() {
    // Larger alpha gives a smaller region on identical data and seeds.
    let dir = workdir("alpha");
    let data = plp_csv(&dir, 200, 1.0, 12);
    let out5 = dir.join("out5");
    let out50 = dir.join("out50");
    let cfg = dir.join("run.toml");
    write(&cfg, &estimate_config(&data, &out5));
    assert!(Command::new(bin())
        .args(["estimate", "--config"])
        .arg(&cfg)
        .status()
        .unwrap()
        .success());
    assert!(Command::new(bin())
        .args(["estimate", "--config"])
        .arg(&cfg)
        .args(["--alpha", "0.5", "--output-dir"])
        .arg(&out50)
        .status()
        .unwrap()
        .success());
    let read = |dir: &Path| -> (f64, f64) {
        let doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("region.json")).unwrap())
                .unwrap();
        (
            doc["pointwise"]["lower"].as_f64().unwrap(),
            doc["pointwise"]["upper"].as_f64().unwrap(),
        )
    };
    let (l5, u5) = read(&out5);
    let (l50, u50) = read(&out50);
    assert!(l5 < l50 && u5 > u50, "alpha=0.05 region must contain alpha=0.5 region");
}
