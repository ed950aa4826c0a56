use std::path::Path;
use std::process::{Command, Output};

use rgbdn::io::{self, Report};

fn rgbdn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rgbdn"))
        .args(args)
        .env_remove("RGBDN_MANIFEST")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout_report(out: &Output) -> Report {
    Report::parse_text(&String::from_utf8(out.stdout.clone()).unwrap()).unwrap()
}

fn number(r: &Report, key: &str) -> f64 {
    r.get(key).and_then(|v| v.as_f64()).unwrap_or_else(|| panic!("missing {key}"))
}

#[test]
fn synth_integrate_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    let out = rgbdn(&["synth", "--scene", "slanted_plane", "--width", "48", "--height", "40", "--out-dir", p(&seq)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = seq.join("manifest.toml");

    let refined = dir.path().join("refined.pfm");
    let cloud = dir.path().join("cloud.ply");
    let out = rgbdn(&[
        "integrate",
        "--depth",
        p(&seq.join("depth_000.pfm")),
        "--normal",
        p(&seq.join("normal_000.pfm")),
        "--intrinsics",
        p(&manifest),
        "--out",
        p(&refined),
        "--ply",
        p(&cloud),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let json = dir.path().join("m.json");
    let out = rgbdn(&[
        "eval",
        "depth",
        "--pred",
        p(&refined),
        "--gt",
        p(&seq.join("gt_depth_000.pfm")),
        "--json",
        p(&json),
    ]);
    assert!(out.status.success());
    let r = stdout_report(&out);
    assert!(number(&r, "absrel") < 1e-6, "{r:?}");
    assert_eq!(number(&r, "delta1"), 1.0);
    let j: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(j["absrel"].as_f64(), Some(number(&r, "absrel")));

    let out = rgbdn(&["eval", "chamfer", "--pred", p(&cloud), "--gt", p(&cloud)]);
    assert!(out.status.success());
    assert_eq!(number(&stdout_report(&out), "chamfer_l1"), 0.0);

    let normals = dir.path().join("n.pfm");
    let out = rgbdn(&["depth2normal", "--depth", p(&seq.join("depth_000.pfm")), "--intrinsics", p(&manifest), "--out", p(&normals)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = rgbdn(&["eval", "normal", "--pred", p(&normals), "--gt", p(&seq.join("gt_normal_000.pfm"))]);
    assert!(out.status.success());
    assert!(number(&stdout_report(&out), "mean_deg") < 1.0);
}

#[test]
fn reconstruct_flow_masks_and_lift() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    let out = rgbdn(&[
        "synth", "--scene", "moving-box", "--frames", "3", "--width", "64", "--height", "64", "--focal", "100", "--noise",
        "0.01", "--out-dir", p(&seq),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let rec = dir.path().join("rec");
    let out = rgbdn(&["reconstruct", "--manifest", p(&seq.join("manifest.toml")), "--out-dir", p(&rec)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for i in 0..3 {
        assert!(io::ply_read(rec.join(format!("cloud_{i:03}.ply"))).unwrap().points.len() == 64 * 64);
        assert!(rec.join(format!("refined_depth_{i:03}.pfm")).exists());
    }
    let record = Report::parse_text(&std::fs::read_to_string(rec.join("record.txt")).unwrap()).unwrap();
    assert!(!record.entries.is_empty());

    let flow = dir.path().join("f.flo");
    let out = rgbdn(&[
        "flow",
        "--rgb",
        p(&seq.join("rgb_001.png")),
        "--prev",
        p(&seq.join("rgb_000.png")),
        "--out",
        p(&flow),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(io::flo_read(&flow).unwrap().size(), (64, 64));

    let masks = dir.path().join("masks");
    let out = rgbdn(&["masks", "--flow", p(&seq.join("flow_001.flo")), "--out-dir", p(&masks)]);
    assert!(out.status.success());
    let dynamic = io::mask_png_read(masks.join("dynamic.png")).unwrap();
    assert!(dynamic.data().iter().any(|&b| b));
    assert!(!dynamic.data().iter().all(|&b| b));

    let track = dir.path().join("track.csv");
    std::fs::write(&track, "frame,u,v\n0,32,32\n2,36,32\n").unwrap();
    let lifted = dir.path().join("lifted.csv");
    let out = rgbdn(&[
        "lift-track",
        "--track",
        p(&track),
        "--refined-dir",
        p(&rec),
        "--intrinsics",
        p(&seq.join("manifest.toml")),
        "--out",
        p(&lifted),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&lifted).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",1")));
}

#[test]
fn exit_codes() {
    let out = rgbdn(&["integrate", "--depth"]);
    assert_eq!(out.status.code(), Some(1));
    let out = rgbdn(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    let out = rgbdn(&["reconstruct", "--out-dir", "/tmp/never"]);
    assert_eq!(out.status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.pfm");
    let out = rgbdn(&["eval", "depth", "--pred", p(&missing), "--gt", p(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.pfm"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[intrinsics]\nfx = 1.0\n").unwrap();
    let out = rgbdn(&["reconstruct", "--manifest", p(&bad), "--out-dir", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));

    assert_eq!(rgbdn(&["--help"]).status.code(), Some(0));
    assert_eq!(rgbdn(&[]).status.code(), Some(1));
}
