use std::path::Path;
use std::process::{Command, Output};

fn resiren(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resiren"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = resiren(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr_line(out: &Output) -> String {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(text.lines().count(), 1, "{text}");
    text.trim_end().to_string()
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("small.toml");
    std::fs::write(
        &path,
        "[task]\nn_points = 150\nn_occurrences = 300\n\n[train]\nmax_epochs = 1\n\n[probe]\nepochs = 5\nn_inits = 2\n",
    )
    .unwrap();
    path
}

fn small_grid(dir: &Path) -> std::path::PathBuf {
    let g = dir.join("g");
    ok(&[
        "gen",
        "--out",
        p(&g),
        "--seed",
        "5",
        "--width",
        "32",
        "--height",
        "16",
        "--vars",
        "3",
    ]);
    g.join("grid.cgrd")
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["gen", "--out", p(&a), "--seed", "9"]);
    ok(&["gen", "--out", p(&b), "--seed", "9"]);
    assert_eq!(
        std::fs::read(a.join("grid.cgrd")).unwrap(),
        std::fs::read(b.join("grid.cgrd")).unwrap()
    );
    assert!(a.join("manifest.json").exists());
}

#[test]
fn probe_report_lists_ten_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let grid = small_grid(dir.path());
    let out = dir.path().join("probe");
    ok(&[
        "probe",
        "--grid",
        p(&grid),
        "--baseline",
        "fs-ch",
        "--task",
        "traits",
        "--n-inits",
        "10",
        "--out",
        p(&out),
        "--config",
        p(&small_config(dir.path())),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let seeds: Vec<u64> = report["seeds"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s.as_u64().unwrap())
        .collect();
    assert_eq!(seeds, (0..10).collect::<Vec<_>>());
    assert_eq!(report["values"].as_array().unwrap().len(), 10);
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with("provider,task,probe_kind,metric,mean,std,seed_0,"));
}

#[test]
fn manifest_replay_reproduces_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let grid = small_grid(dir.path());
    let first = dir.path().join("first");
    ok(&[
        "pretrain",
        "--grid",
        p(&grid),
        "--out",
        p(&first),
        "--depth",
        "3",
        "--hidden",
        "16",
        "--embedding",
        "8",
        "--epochs",
        "2",
        "--residual",
        "sqrt2",
        "--seed",
        "4",
    ]);
    let manifest = first.join("manifest.json");
    let replay = dir.path().join("replay");
    ok(&[
        "pretrain",
        "--grid",
        p(&grid),
        "--out",
        p(&replay),
        "--config",
        p(&manifest),
    ]);
    assert_eq!(
        std::fs::read(first.join("checkpoint.rsn")).unwrap(),
        std::fs::read(replay.join("checkpoint.rsn")).unwrap()
    );
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["command"], "pretrain");
    assert_eq!(m["config"]["network"]["residual"], "sqrt2");
    assert_eq!(m["config"]["network"]["output_dim"], 3);
    assert!(m["seeds"]["init"].is_u64());
}

#[test]
fn pipeline_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let grid = small_grid(dir.path());
    let pre = dir.path().join("pre");
    ok(&[
        "pretrain",
        "--grid",
        p(&grid),
        "--out",
        p(&pre),
        "--depth",
        "3",
        "--hidden",
        "16",
        "--embedding",
        "8",
        "--epochs",
        "2",
    ]);
    let ckpt = pre.join("checkpoint.rsn");
    let points = dir.path().join("points.csv");
    std::fs::write(&points, "lon_deg,lat_deg,month\n0,0,3\n10,-20,\n").unwrap();
    let emb = dir.path().join("emb");
    ok(&[
        "embed",
        "--checkpoint",
        p(&ckpt),
        "--points",
        p(&points),
        "--months",
        "seasonal",
        "--out",
        p(&emb),
    ]);
    let text = std::fs::read_to_string(emb.join("embeddings.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 3 + 4 * 8);

    let ana = dir.path().join("ana");
    ok(&[
        "analyze",
        "--grid",
        p(&grid),
        "--checkpoint",
        p(&ckpt),
        "--out",
        p(&ana),
        "--n-locations",
        "50",
        "--cells",
        "4x8",
        "--export-task",
        "biomes",
        "--export-size",
        "3x5",
        "--config",
        p(&small_config(dir.path())),
    ]);
    for f in [
        "error_report.json",
        "error_summary.csv",
        "error_cells.csv",
        "prediction_grid.csv",
        "manifest.json",
    ] {
        assert!(ana.join(f).exists(), "{f}");
    }
    assert_eq!(
        std::fs::read_to_string(ana.join("prediction_grid.csv"))
            .unwrap()
            .lines()
            .count(),
        16
    );

    let sc = dir.path().join("scale");
    ok(&[
        "scale",
        "--grid",
        p(&grid),
        "--out",
        p(&sc),
        "--depths",
        "2,3",
        "--seeds",
        "0",
        "--max-steps",
        "3",
        "--ablations",
        "ch-clip,no-hsiren",
        "--config",
        p(&small_config(dir.path())),
    ]);
    let rows = std::fs::read_to_string(sc.join("scaling.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 2);
    let abl = std::fs::read_to_string(sc.join("ablations.csv")).unwrap();
    assert!(abl.contains("ch-clip,out of scope"));
    assert_eq!(abl.lines().count(), 3);
}

#[test]
fn errors_are_single_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = resiren(&["gen", "--out", p(dir.path()), "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).starts_with("error kind=usage msg="));

    let out = resiren(&[
        "probe",
        "--grid",
        "missing.cgrd",
        "--baseline",
        "fs-loc",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_line(&out).starts_with("error kind=io msg="));

    let grid = small_grid(dir.path());
    let pre = dir.path().join("pre");
    ok(&[
        "pretrain",
        "--grid",
        p(&grid),
        "--out",
        p(&pre),
        "--depth",
        "2",
        "--hidden",
        "8",
        "--embedding",
        "4",
        "--epochs",
        "1",
    ]);
    let ckpt = pre.join("checkpoint.rsn");
    let mut bytes = std::fs::read(&ckpt).unwrap();
    bytes[4] = bytes[4].wrapping_add(1);
    let bad = dir.path().join("bad.rsn");
    std::fs::write(&bad, &bytes).unwrap();
    let out = resiren(&[
        "analyze",
        "--grid",
        p(&grid),
        "--checkpoint",
        p(&bad),
        "--out",
        p(&dir.path().join("x")),
    ]);
    assert!(stderr_line(&out).starts_with("error kind=version_mismatch"));

    let mut bytes = std::fs::read(&ckpt).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    std::fs::write(&bad, &bytes).unwrap();
    let out = resiren(&[
        "analyze",
        "--grid",
        p(&grid),
        "--checkpoint",
        p(&bad),
        "--out",
        p(&dir.path().join("y")),
    ]);
    assert!(stderr_line(&out).starts_with("error kind=checksum"));
}
