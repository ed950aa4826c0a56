//! Depth, normal, and point-cloud metrics against ground truth.

use rgbdn::geometry::{backproject, depth_to_normal, CameraIntrinsics, DepthMap, DepthUnit};
use rgbdn::metrics::{chamfer_l1, evaluate_depth, normal_metrics};
use rgbdn::synth::{generate, SceneKind, SceneSpec};

fn main() -> rgbdn::Result<()> {
    let k = CameraIntrinsics::centered(75.0, 96, 96)?;
    let seq = generate(&SceneSpec::new(SceneKind::Sphere, 96, 96).noise(0.002).seed(4), &k)?;
    let f = &seq.frames[0];

    // an affine copy of the noisy depth, as a relative predictor would produce
    let pred = DepthMap::from_values(f.generated_depth.values().map(|z| 0.4 * z + 0.1), DepthUnit::Metric);
    let (raw, _) = evaluate_depth(&pred, &f.gt_depth, None, false)?;
    let (aligned, (s, t)) = evaluate_depth(&pred, &f.gt_depth, None, true)?;
    print!("unaligned\n{}", raw.to_report().to_text());
    print!("aligned with s = {s:.4}, t = {t:.4}\n{}", aligned.to_report().to_text());

    let n = depth_to_normal(&f.generated_depth, &k)?;
    print!("normals from noisy depth\n{}", normal_metrics(&n, &f.gt_normal, None)?.to_report().to_text());

    let a = backproject(&f.generated_depth, &k, None)?;
    let b = backproject(&f.gt_depth, &k, None)?;
    println!("chamfer_l1={:.5}", chamfer_l1(&a, &b)?);
    Ok(())
}
