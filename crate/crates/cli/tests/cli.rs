use std::path::Path;
use std::process::{Command, Output};

use mspcg_core::geom::{load_cloud, save_cloud};
use mspcg_core::graph::{load_graph, total_capacity};
use mspcg_core::train::{synth_random_shape, ShapeFamily};

fn mspcg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mspcg"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_shape(dir: &Path) -> std::path::PathBuf {
    let cloud = synth_random_shape(ShapeFamily::Lamp, 512, 3).unwrap().cloud;
    let path = dir.join("cloud.xyz");
    save_cloud(&cloud, &path).unwrap();
    path
}

#[test]
fn help_exits_zero_for_every_subcommand() {
    assert_eq!(code(&mspcg(&["--help"])), 0);
    for sub in [
        "synth",
        "extract",
        "generate",
        "train",
        "eval",
        "edit",
        "gradcheck",
        "serve",
    ] {
        let o = mspcg(&[sub, "--help"]);
        assert_eq!(code(&o), 0, "{sub}");
        assert!(
            String::from_utf8_lossy(&o.stdout).contains("Usage"),
            "{sub}"
        );
    }
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        &["frobnicate"][..],
        &["extract", "--bogus"],
        &["extract"],
        &[
            "generate", "--graph", "g.json", "--method", "spline", "--out", "x",
        ],
        &["extract", "--in", "c.xyz", "--pick", "9,3"],
        &["serve", "--port", "seventy"],
    ] {
        let o = mspcg(args);
        assert_eq!(code(&o), 2, "{args:?}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn runtime_errors_exit_one() {
    let o = mspcg(&["extract", "--in", "/nonexistent/cloud.xyz"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    let dir = tempfile::tempdir().unwrap();
    let tiny = dir.path().join("tiny.xyz");
    std::fs::write(&tiny, "0 0 0\n1 0 0\n").unwrap();
    assert_eq!(code(&mspcg(&["extract", "--in", p(&tiny)])), 1);
}

#[test]
fn extract_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = write_shape(dir.path());
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for out in [&a, &b] {
        let o = mspcg(&["extract", "--in", p(&cloud), "--seed", "7", "--out", p(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let g = load_graph(&a).unwrap();
    assert_eq!(total_capacity(&g), 512);
    assert!((12..=32).contains(&g.len()));
}

#[test]
fn generate_writes_one_line_per_capacity_unit() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = write_shape(dir.path());
    let g = dir.path().join("g.json");
    assert_eq!(
        code(&mspcg(&["extract", "--in", p(&cloud), "--out", p(&g)])),
        0
    );
    for method in ["interp", "gaussian"] {
        let out = dir.path().join(format!("{method}.xyz"));
        let labels = dir.path().join(format!("{method}.labels"));
        let o = mspcg(&[
            "generate",
            "--graph",
            p(&g),
            "--method",
            method,
            "--seed",
            "3",
            "--out",
            p(&out),
            "--labels",
            p(&labels),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let text = std::fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().count(), 512);
        assert_eq!(
            std::fs::read_to_string(&labels).unwrap().lines().count(),
            512
        );
    }
    let o = mspcg(&[
        "generate",
        "--graph",
        p(&g),
        "--out",
        p(&dir.path().join("x.xyz")),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn edit_applies_a_list() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = write_shape(dir.path());
    let g = dir.path().join("g.json");
    assert_eq!(
        code(&mspcg(&["extract", "--in", p(&cloud), "--out", p(&g)])),
        0
    );
    let before = load_graph(&g).unwrap();
    let victim = before.vertices[0].clone();
    let edits = dir.path().join("edits.json");
    std::fs::write(
        &edits,
        format!(
            r#"[{{"kind":"remove_vertex","id":{}}},{{"kind":"add_vertex","id":900,"location":[0,0,0],"capacity":5}}]"#,
            victim.id
        ),
    )
    .unwrap();
    let out = dir.path().join("edited.json");
    let o = mspcg(&[
        "edit",
        "--graph",
        p(&g),
        "--edits",
        p(&edits),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let after = load_graph(&out).unwrap();
    assert_eq!(total_capacity(&after), 512 - victim.capacity as u64 + 5);
    std::fs::write(&edits, r#"[{"kind":"remove_vertex","id":12345}]"#).unwrap();
    assert_eq!(
        code(&mspcg(&[
            "edit",
            "--graph",
            p(&g),
            "--edits",
            p(&edits),
            "--out",
            p(&out)
        ])),
        1
    );
}

#[test]
fn synth_train_eval_generate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let train_dir = d.join("train");
    let test_dir = d.join("test");
    let o = mspcg(&[
        "synth",
        "--out",
        p(&train_dir),
        "--per-family",
        "1",
        "--families",
        "box,sphere",
        "--msgs",
        "2",
        "--seed",
        "1",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = mspcg(&[
        "synth",
        "--out",
        p(&test_dir),
        "--per-family",
        "1",
        "--families",
        "table",
        "--eval-k",
        "16,64",
        "--seed",
        "2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let ck = d.join("ck.json");
    let csv = d.join("loss.csv");
    let o = mspcg(&[
        "train",
        "--manifest",
        p(&train_dir.join("manifest.json")),
        "--epochs",
        "2",
        "--batch",
        "2",
        "--channels",
        "8",
        "--seed",
        "5",
        "--out",
        p(&ck),
        "--loss-csv",
        p(&csv),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv_text = std::fs::read_to_string(&csv).unwrap();
    assert!(csv_text.starts_with("epoch,mean_wCD\n1,"));
    assert_eq!(csv_text.lines().count(), 3);

    let report = d.join("report.json");
    let test_manifest = test_dir.join("manifest.json");
    let o = mspcg(&[
        "eval",
        "--manifest",
        p(&test_manifest),
        "--checkpoint",
        p(&ck),
        "--rotate",
        "--out",
        p(&report),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["variant"], serde_json::json!(["rotate"]));
    assert!(r["mean_cd_x1e4"].as_f64().unwrap() > 0.0);

    let o = mspcg(&[
        "eval",
        "--manifest",
        p(&test_manifest),
        "--method",
        "interp",
    ]);
    assert_eq!(code(&o), 0);
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["per_shape"].as_array().unwrap().len(), 1);

    let graph = test_dir.join("table_0000_g0.json");
    let out = d.join("gen.xyz");
    let o = mspcg(&[
        "generate",
        "--graph",
        p(&graph),
        "--checkpoint",
        p(&ck),
        "--seed",
        "1",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(load_cloud(&out).unwrap().len(), 512);
}

#[test]
fn gradcheck_passes_and_prints_the_maximum() {
    let o = mspcg(&["gradcheck"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{stdout}");
    assert!(stdout.contains("max relative error"));
    assert!(stdout.contains("full model"));
}
