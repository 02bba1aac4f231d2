use std::path::Path;
use std::process::{Command, Output};

fn hetgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetgraph"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn synth(dir: &Path) {
    let out = hetgraph(&[
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--tracts",
        "6",
        "--steps",
        "300",
        "--process",
        "clustered",
        "--seed",
        "4",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let paths: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(paths["counts"].is_string());
}

fn write_config(dir: &Path, columns: &str, weather: bool) -> String {
    let mut text = format!(
        "name = \"cli\"
output_dir = \"run\"
columns = [{columns}]
[data]
tracts = \"tracts.geojson\"
features = \"features.csv\"
feature_categories = \"feature_categories.json\"
counts = \"counts.csv\"
"
    );
    if weather {
        text.push_str("weather = \"weather.csv\"\n");
    }
    text.push_str(
        "[stgcn]
block_channels = [[4, 2, 4]]
[stgcn.train]
max_epochs = 3
learning_rate = 0.01
",
    );
    let path = dir.join("experiment.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn synth_then_run_writes_column_outputs() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    for f in ["tracts.geojson", "features.csv", "feature_categories.json", "counts.csv", "weather.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let cfg = write_config(dir.path(), "\"ha\", \"stgcn-3d\"", false);
    let out = hetgraph(&["run", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("run");
    for f in ["manifest.json", "config.toml", "HA/metrics.json", "HA/predictions.csv", "STGCN-3d/train.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    assert!(run.join("graph").is_dir());

    let report = hetgraph(&["report", run.to_str().unwrap()]);
    assert!(report.status.success());
    assert!(String::from_utf8_lossy(&report.stdout).contains("HA"));
}

#[test]
fn staged_commands_match_run() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let cfg = write_config(dir.path(), "\"ha\"", false);
    for stage in ["prepare", "train", "evaluate"] {
        let out = hetgraph(&[stage, "--config", &cfg, "--output-dir", dir.path().join("staged").to_str().unwrap()]);
        assert!(out.status.success(), "{stage}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = hetgraph(&["run", "--config", &cfg]);
    assert!(out.status.success());
    let a = std::fs::read(dir.path().join("staged/HA/metrics.json")).unwrap();
    let b = std::fs::read(dir.path().join("run/HA/metrics.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn weather_variant_without_weather_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let cfg = write_config(dir.path(), "\"stzinb-3d2d1d\"", false);
    let out = hetgraph(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("weather"));
}

#[test]
fn missing_input_file_exits_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "\"ha\"", false);
    let out = hetgraph(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn build_graph_from_flags() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let d = |f: &str| dir.path().join(f).to_str().unwrap().to_string();
    let out = hetgraph(&[
        "build-graph",
        "--tracts",
        &d("tracts.geojson"),
        "--features",
        &d("features.csv"),
        "--feature-categories",
        &d("feature_categories.json"),
        "--output-dir",
        &d("graph"),
        "--groups",
        "demography,land",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_dir(dir.path().join("graph")).unwrap().count() > 0);
}

#[test]
fn compare_a_run_with_itself() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let cfg = write_config(dir.path(), "\"ha\"", false);
    assert!(hetgraph(&["run", "--config", &cfg]).status.success());
    let ha = dir.path().join("run/HA");
    let cmp = dir.path().join("cmp");
    let out = hetgraph(&[
        "compare",
        "--a",
        ha.to_str().unwrap(),
        "--b",
        ha.to_str().unwrap(),
        "--out",
        cmp.to_str().unwrap(),
        "--tracts",
        dir.path().join("tracts.geojson").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(cmp.join("compare.json")).unwrap()).unwrap();
    assert_eq!(summary["improved_percent"], 0.0);
    assert!(cmp.join("mape_diff.geojson").exists());
}
