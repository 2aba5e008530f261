use std::path::Path;
use std::process::{Command, Output};

fn gapseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gapseg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = gapseg(&args);
    assert!(o.status.success(), "{}", stderr(&o));
}

fn two_cell(dir: &Path) {
    synth(dir, &["--width", "40", "--height", "40", "--cells", "2", "--seed", "3"]);
}

#[test]
fn synth_writes_scene_files() {
    let d = tempfile::tempdir().unwrap();
    two_cell(d.path());
    for f in ["map.png", "clean.png", "truth.png", "scene.toml"] {
        assert!(d.path().join(f).is_file(), "{f}");
    }
    let spec = std::fs::read_to_string(d.path().join("scene.toml")).unwrap();
    assert!(spec.contains("num_cells = 2"));
}

#[test]
fn segment_clean_scene_recovers_the_cells() {
    let d = tempfile::tempdir().unwrap();
    two_cell(d.path());
    let out = d.path().join("seg");
    let o = gapseg(&[
        "segment",
        d.path().join("clean.png").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--set",
        "filters.sigma_perp=0.7",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("status=ProvenOptimal"));
    assert!(out.join("membrane.png").is_file());

    let pred = d.path().join("pred");
    let truth = d.path().join("truth");
    std::fs::create_dir_all(&pred).unwrap();
    std::fs::create_dir_all(&truth).unwrap();
    std::fs::copy(out.join("labels.png"), pred.join("a.png")).unwrap();
    std::fs::copy(d.path().join("truth.png"), truth.join("a.png")).unwrap();
    let o = gapseg(&["eval", pred.to_str().unwrap(), truth.to_str().unwrap(), "--tolerances", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = stdout(&o);
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    for col in ["false_splits", "false_merges", "false_positives", "false_negatives"] {
        let i = header.iter().position(|h| *h == col).unwrap();
        assert_eq!(row[i], "0", "{col}: {csv}");
    }
}

#[test]
fn dumps_are_written() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), &["--cells", "1", "--width", "24", "--height", "24"]);
    let out = d.path().join("seg");
    let o = gapseg(&[
        "segment",
        d.path().join("map.png").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--dump-watershed",
        "--dump-graph",
        "--dump-lp",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("watershed.png").is_file());
    let g = std::fs::read_to_string(out.join("graph.json")).unwrap();
    assert!(g.starts_with('{'));
    let lp = std::fs::read_to_string(out.join("model.lp")).unwrap();
    assert!(lp.contains("Minimize"), "{}", &lp[..lp.len().min(200)]);
}

#[test]
fn missing_input_exits_1_naming_the_path() {
    let d = tempfile::tempdir().unwrap();
    let missing = d.path().join("nope.png");
    let o = gapseg(&["segment", missing.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("nope.png"), "{e}");
    assert!(e.contains("[load]"), "{e}");
}

#[test]
fn tiny_time_limit_exits_2_with_labels() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), &["--noise", "0.1", "--seed", "4"]);
    let out = d.path().join("seg");
    let o = gapseg(&[
        "segment",
        d.path().join("map.png").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--time-limit",
        "0.001",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(out.join("labels.png").is_file());
}

#[test]
fn bad_override_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), &["--cells", "1", "--width", "24", "--height", "24"]);
    let o = gapseg(&[
        "segment",
        d.path().join("map.png").to_str().unwrap(),
        "--out",
        d.path().to_str().unwrap(),
        "--set",
        "filters.bogus=3",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("[config]"), "{}", stderr(&o));
}

#[test]
fn eval_identical_dirs_is_perfect_and_sweep_is_monotone() {
    let d = tempfile::tempdir().unwrap();
    let a = d.path().join("a");
    synth(&a, &["--seed", "8"]);
    let p = d.path().join("p");
    std::fs::create_dir_all(&p).unwrap();
    std::fs::copy(a.join("truth.png"), p.join("truth.png")).unwrap();
    let o = gapseg(&["eval", p.to_str().unwrap(), p.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = stdout(&o);
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 10, "five tolerances plus their means: {csv}");
    for r in &rows {
        assert_eq!(r[col("rand_index")].parse::<f64>().unwrap(), 1.0);
        assert_eq!(r[col("voi")].parse::<f64>().unwrap(), 0.0);
        assert_eq!(r[col("false_merges")].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn eval_empty_dir_names_it() {
    let d = tempfile::tempdir().unwrap();
    let e = d.path().join("empty");
    std::fs::create_dir_all(&e).unwrap();
    let o = gapseg(&["eval", e.to_str().unwrap(), e.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("empty"), "{}", stderr(&o));
}

#[test]
fn learn_single_point_grid_writes_a_usable_config() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), &["--cells", "1", "--width", "24", "--height", "24"]);
    let cfg = d.path().join("w.toml");
    let o = gapseg(&[
        "learn",
        "--map",
        d.path().join("map.png").to_str().unwrap(),
        "--truth",
        d.path().join("truth.png").to_str().unwrap(),
        "--grid",
        "-1",
        "--out",
        cfg.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("evaluations=1"), "{}", stdout(&o));
    let text = std::fs::read_to_string(&cfg).unwrap();
    assert!(text.contains("[weights]"));
    let o = gapseg(&[
        "segment",
        d.path().join("map.png").to_str().unwrap(),
        "--out",
        d.path().join("seg").to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn learn_budget_warning() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), &["--cells", "1", "--width", "24", "--height", "24"]);
    let o = gapseg(&[
        "learn",
        "--map",
        d.path().join("map.png").to_str().unwrap(),
        "--truth",
        d.path().join("truth.png").to_str().unwrap(),
        "--budget",
        "2",
        "--out",
        d.path().join("w.toml").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"), "{}", stderr(&o));
    assert!(stdout(&o).contains("IncompleteSweep"));
}

#[test]
fn segment_is_byte_reproducible() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), &["--noise", "0.1", "--seed", "2", "--cells", "2", "--width", "40", "--height", "40"]);
    let run = |name: &str| {
        let out = d.path().join(name);
        let o = gapseg(&["segment", d.path().join("map.png").to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.code() != Some(1), "{}", stderr(&o));
        std::fs::read(out.join("labels.png")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}
