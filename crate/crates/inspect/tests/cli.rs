use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use scaffold_core::PointCloud;
use scaffold_inspect::{load_cloud, CloudFormat};
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_scaffold-inspect"));
    c.env("SOURCE_DATE_EPOCH", "0");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A reference scene and a campaign copy with the given synth TOML appended.
fn scenes(dir: &Path, extra: &str) -> PathBuf {
    let spec = dir.join("spec.toml");
    fs::write(&spec, format!("[scaffold]\nbays_x = 2\nbays_y = 1\nlifts = 2\nseed = 3\n{extra}")).unwrap();
    let out = dir.join("scene");
    ok(&["synth", s(&spec), "-o", s(&out)]);
    out
}

#[test]
fn synth_is_deterministic_and_counts_the_lattice() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("one.toml");
    fs::write(&spec, "[scaffold]\nbays_x = 1\nbays_y = 1\nlifts = 1\n").unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["synth", s(&spec), "-o", s(&a)]);
    ok(&["synth", s(&spec), "-o", s(&b)]);
    for f in ["reference.ply", "reference.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert!(!a.join("current.ply").exists());
    let side = json(&a.join("reference.json"));
    assert_eq!(side["graph"]["nodes"].as_array().unwrap().len(), 8);
    assert_eq!(side["graph"]["edges"].as_array().unwrap().len(), 12);
    let cloud = load_cloud(&a.join("reference.ply"), CloudFormat::Auto).unwrap();
    assert_eq!(side["labels"].as_array().unwrap().len(), cloud.len());

    let c = dir.path().join("c");
    ok(&["synth", s(&spec), "-o", s(&c), "--seed", "9"]);
    assert_ne!(fs::read(a.join("reference.ply")).unwrap(), fs::read(c.join("reference.ply")).unwrap());
}

fn bit_key(p: &scaffold_core::Point3) -> [u64; 3] {
    [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]
}

#[test]
fn preprocess_keeps_the_scaffold_and_drops_the_planes() {
    let dir = tempfile::tempdir().unwrap();
    let scene = scenes(dir.path(), "");
    let out = dir.path().join("pre");
    ok(&[
        "preprocess",
        s(&scene.join("reference.ply")),
        "-o",
        s(&out),
        "--set",
        "preprocess.downsample=false",
    ]);
    let input = load_cloud(&scene.join("reference.ply"), CloudFormat::Auto).unwrap();
    let labels = json(&scene.join("reference.json"))["labels"].as_array().unwrap().clone();
    let source: HashMap<[u64; 3], String> = input
        .points()
        .iter()
        .zip(&labels)
        .map(|(p, l)| (bit_key(p), l["source"].as_str().unwrap().to_owned()))
        .collect();
    let clean = load_cloud(&out.join("reference.clean.ply"), CloudFormat::Auto).unwrap();
    let count = |c: &[String], what: &str| c.iter().filter(|s| *s == what).count();
    let kept: Vec<String> = clean.points().iter().map(|p| source[&bit_key(p)].clone()).collect();
    let all: Vec<String> = labels.iter().map(|l| l["source"].as_str().unwrap().to_owned()).collect();
    let members = count(&all, "member");
    let planes = count(&all, "ground") + count(&all, "wall");
    let kept_members = count(&kept, "member");
    let kept_planes = count(&kept, "ground") + count(&kept, "wall");
    assert!(kept_members * 100 >= members * 99, "{kept_members}/{members}");
    assert!(kept_planes * 100 <= planes, "{kept_planes}/{planes}");
    // the output is scaffold, at most 1% plane points
    assert!(kept_planes * 100 <= kept.len());

    let summary = json(&out.join("preprocess.json"));
    assert_eq!(summary["after_crop"].as_u64().unwrap() as usize, clean.len());
    let roles: Vec<&str> = summary["planes"].as_array().unwrap().iter().map(|p| p["role"].as_str().unwrap()).collect();
    assert!(roles.contains(&"ground") && roles.contains(&"wall"), "{roles:?}");
}

#[test]
fn preprocess_with_every_step_disabled_passes_through() {
    let dir = tempfile::tempdir().unwrap();
    let scene = scenes(dir.path(), "");
    let out = dir.path().join("pre");
    ok(&[
        "preprocess",
        s(&scene.join("reference.ply")),
        "-o",
        s(&out),
        "--set",
        "preprocess.downsample=false",
        "--set",
        "preprocess.remove_outliers=false",
        "--set",
        "preprocess.remove_planes=false",
    ]);
    let a = load_cloud(&scene.join("reference.ply"), CloudFormat::Auto).unwrap();
    let b = load_cloud(&out.join("reference.clean.ply"), CloudFormat::Auto).unwrap();
    assert_eq!(a, b);
}

#[test]
fn failures_exit_nonzero_and_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["preprocess", "/no/such/scan.ply", "-o", s(dir.path())]);
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/no/such/scan.ply") && err.contains("load"), "{err}");

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[icp]\nmax_iters = 3\n").unwrap();
    let target = dir.path().join("never");
    let out = run(&["inspect", "a.ply", "b.ply", "--config", s(&bad), "-o", s(&target)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("max_iters"));
    assert!(!target.exists(), "nothing may run before the config is valid");

    let out = run(&["graph", "x.ply", "--set", "structure.dbscan_eps=-1", "-o", s(&target)]);
    assert_eq!(out.status.code(), Some(3));
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn self_inspection_raises_no_alert() {
    let dir = tempfile::tempdir().unwrap();
    let scene = scenes(dir.path(), "");
    let r = scene.join("reference.ply");
    let out = dir.path().join("self");
    let stdout = ok(&["inspect", s(&r), s(&r), "-o", s(&out)]).stdout;
    assert!(String::from_utf8_lossy(&stdout).contains("alert: false"));
    let report = json(&out.join("report.json"));
    assert_eq!(report["alert"]["raised"], Value::Bool(false));
    assert_eq!(report["diff"]["missing_edges"], 0);
    assert_eq!(report["diff"]["added_edges"], 0);
    assert_eq!(report["deviation"]["exceeding_fraction"].as_f64(), Some(0.0));
    assert_eq!(report["registration"]["mse"].as_f64(), Some(0.0));
}

fn colors(path: &Path) -> Vec<[u8; 3]> {
    let c: PointCloud = load_cloud(path, CloudFormat::Auto).unwrap();
    c.colors().unwrap().to_vec()
}

#[test]
fn removed_brace_raises_alert_and_artifacts_agree_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let scene = scenes(
        dir.path(),
        "[[defects]]\nkind = \"remove_brace\"\ntarget = { axis = \"y\", at = [1, 0, 1] }\n\
         [[defects]]\nkind = \"shift_brace\"\ntarget = { axis = \"x\", at = [0, 0, 2] }\ndisplacement = [0.0, 0.08, 0.0]\n",
    );
    let out = dir.path().join("run");
    let stdout = ok(&[
        "inspect",
        s(&scene.join("reference.ply")),
        s(&scene.join("current.ply")),
        "-o",
        s(&out),
        "--emit-effective-config",
        "--set",
        "deviation.characteristic_length=1.0",
    ])
    .stdout;
    assert!(String::from_utf8_lossy(&stdout).contains("alert: true"));
    let report = json(&out.join("report.json"));
    assert_eq!(report["alert"]["raised"], Value::Bool(true));
    assert_eq!(report["diff"]["missing_edges"], 1);
    assert_eq!(report["diff"]["added_edges"], 0);

    // counts in the report against the exported files
    let dev = colors(&out.join("deviation.ply"));
    let red = dev.iter().filter(|c| **c == [255, 0, 0]).count();
    let green = dev.iter().filter(|c| **c == [0, 255, 0]).count();
    assert_eq!(red as u64, report["deviation"]["exceeding"].as_u64().unwrap());
    assert_eq!(green as u64, report["deviation"]["within"].as_u64().unwrap());
    assert!(red > 0, "the shifted brace exceeds the threshold");
    let change = colors(&out.join("change_map.ply"));
    let yellow = change.iter().filter(|c| **c == [255, 255, 0]).count();
    assert_eq!(yellow as u64, report["deviation"]["modified"].as_u64().unwrap());
    for (file, key) in [("reference_graph.json", "reference"), ("current_graph.json", "current")] {
        let g = json(&out.join(file));
        assert_eq!(g["nodes"].as_array().unwrap().len() as u64, report["graphs"][key]["nodes"].as_u64().unwrap());
        assert_eq!(g["edges"].as_array().unwrap().len() as u64, report["graphs"][key]["edges"].as_u64().unwrap());
    }
    let diff = json(&out.join("diff.json"));
    assert_eq!(diff["missing_edges"].as_array().unwrap().len(), 1);
    let tsv = fs::read_to_string(out.join("diff_edges.tsv")).unwrap();
    assert_eq!(tsv.lines().filter(|l| l.starts_with("missing\t")).count(), 1);
    let rows = tsv.lines().count() - 1;
    assert_eq!(rows as u64, report["graphs"]["reference"]["edges"].as_u64().unwrap() + report["diff"]["added_edges"].as_u64().unwrap());
    for f in report["outputs"].as_array().unwrap() {
        assert!(out.join(f.as_str().unwrap()).exists(), "{f}");
    }

    // the dumped configuration reproduces the run
    let again = dir.path().join("again");
    ok(&[
        "inspect",
        s(&scene.join("reference.ply")),
        s(&scene.join("current.ply")),
        "-o",
        s(&again),
        "--config",
        s(&out.join("effective-config.toml")),
    ]);
    // only the file list differs: the first run also wrote the config
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("outputs");
        v
    };
    assert_eq!(strip(json(&out.join("report.json"))), strip(json(&again.join("report.json"))));
    for f in ["deviation.ply", "change_map.ply", "diff.json", "current_graph.json"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn stage_commands_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let scene = scenes(
        dir.path(),
        "[current_motion]\naxis = [0.0, 0.0, 1.0]\nangle_deg = 2.0\ntranslation = [0.1, 0.05, 0.0]\n",
    );
    let r = scene.join("reference.ply");
    let c = scene.join("current.ply");

    let reg = dir.path().join("reg");
    ok(&["register", s(&r), s(&c), "--preprocess", "-o", s(&reg)]);
    let summary = json(&reg.join("registration.json"));
    assert_eq!(summary["summary"]["converged"], Value::Bool(true));
    let history: Vec<f64> = summary["error_history"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    assert!(reg.join("aligned.ply").exists());

    let dev = dir.path().join("dev");
    ok(&["deviate", s(&r), s(&c), "--align", "-o", s(&dev), "--set", "deviation.characteristic_length=1.0"]);
    let d = json(&dev.join("deviation.json"));
    assert_eq!(d["characteristic_length"].as_f64(), Some(1.0));
    assert_eq!(d["characteristic_length_source"], "config");
    assert_eq!(d["threshold"].as_f64(), Some(0.05));

    let g = dir.path().join("graph");
    ok(&["graph", s(&r), "--preprocess", "-o", s(&g)]);
    let graph = json(&g.join("graph.json"));
    // 2×1×2 lattice: 3·2·3 nodes, 12 verticals + 12 x-ledgers + 9 y-ledgers
    assert_eq!(graph["nodes"].as_array().unwrap().len(), 18);
    assert_eq!(graph["edges"].as_array().unwrap().len(), 33);
    let tsv = fs::read_to_string(g.join("edges.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 34);
    let elements = colors(&g.join("elements.ply"));
    assert!(elements.contains(&[0, 255, 0]) && elements.contains(&[255, 0, 0]));
}
