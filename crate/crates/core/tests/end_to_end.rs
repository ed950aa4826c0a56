use rgbdn::geometry::CameraIntrinsics;
use rgbdn::io;
use rgbdn::metrics::evaluate_depth;
use rgbdn::pipeline::{lift_track, refine_sequence, TrackPoint};
use rgbdn::synth::{generate, SceneKind, SceneSpec, BOX_DEPTH};

#[test]
fn moving_box_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let k = CameraIntrinsics::centered(100.0, 64, 64).unwrap();
    let spec = SceneSpec::new(SceneKind::MovingBox, 64, 64).frames(4).motion(0.02, 0.0).noise(0.02).seed(9);
    let seq = generate(&spec, &k).unwrap();
    let files = io::write_synthetic(&seq, dir.path()).unwrap();
    let manifest = io::manifest_read(&files.manifest_path).unwrap();
    assert_eq!(manifest, files.manifest);

    let refined = refine_sequence(&manifest).unwrap();
    assert_eq!(refined.len(), 4);

    // static background stays put relative to frame 0
    let obj_any: Vec<bool> = (0..64 * 64)
        .map(|i| seq.frames.iter().any(|f| f.object_mask.as_ref().unwrap().data()[i]))
        .collect();
    let d0 = refined[0].refined_depth.values().data();
    for r in &refined[1..] {
        let d = r.refined_depth.values().data();
        let bg: Vec<f64> = (0..64 * 64).filter(|&i| !obj_any[i]).map(|i| (d[i] - d0[i]).abs() / d0[i]).collect();
        let mean = bg.iter().sum::<f64>() / bg.len() as f64;
        assert!(mean < 0.01, "background drift {mean}");
    }

    // refined depth is close to ground truth after alignment
    for (i, r) in refined.iter().enumerate() {
        let gt = io::read_depth(&files.gt_depth[i], rgbdn::geometry::DepthUnit::Metric).unwrap();
        let (m, _) = evaluate_depth(&r.refined_depth, &gt, None, true).unwrap();
        assert!(m.absrel < 0.02, "frame {i}: {m:?}");
    }

    // the box centre follows the scripted motion
    let centre = |t: usize| {
        let obj = seq.frames[t].object_mask.as_ref().unwrap();
        let (mut su, mut sv, mut n) = (0.0, 0.0, 0.0);
        for v in 0..64 {
            for u in 0..64 {
                if *obj.get(u, v) {
                    su += u as f64;
                    sv += v as f64;
                    n += 1.0;
                }
            }
        }
        TrackPoint { frame: t, u: (su / n).round() as usize, v: (sv / n).round() as usize }
    };
    let track: Vec<TrackPoint> = (0..4).map(centre).collect();
    let pts = lift_track(&track, &refined, &k).unwrap();
    for t in 1..4 {
        let (a, b) = (pts[t - 1].unwrap(), pts[t].unwrap());
        assert!((b[2] - BOX_DEPTH).abs() < 0.02 * BOX_DEPTH);
        let step = b[0] - a[0];
        assert!((step - 0.02).abs() < 0.05 * 0.02, "step {step}");
        assert!((b[1] - a[1]).abs() < 1e-3);
    }
}

#[test]
fn static_scene_matches_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let k = CameraIntrinsics::centered(75.0, 96, 96).unwrap();
    let spec = SceneSpec::new(SceneKind::Sphere, 96, 96).frames(2).noise(0.01).seed(2);
    let seq = generate(&spec, &k).unwrap();
    let files = io::write_synthetic(&seq, dir.path()).unwrap();
    let refined = refine_sequence(&io::manifest_read(&files.manifest_path).unwrap()).unwrap();
    let gt = io::read_depth(&files.gt_depth[1], rgbdn::geometry::DepthUnit::Metric).unwrap();
    let (raw, _) = evaluate_depth(&seq.frames[1].generated_depth, &gt, None, true).unwrap();
    let (m, _) = evaluate_depth(&refined[1].refined_depth, &gt, None, true).unwrap();
    assert!(m.absrel < raw.absrel, "refined {m:?} vs input {raw:?}");
    assert_eq!(refined[1].point_cloud.points.len(), 96 * 96);
}
