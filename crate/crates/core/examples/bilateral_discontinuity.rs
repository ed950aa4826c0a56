//! Bilateral weights keep a depth step sharp; uniform weights smear it.

use rgbdn::geometry::CameraIntrinsics;
use rgbdn::pipeline::{refine_frame, FrameInputs, RefineConfig};
use rgbdn::synth::{generate, SceneKind, SceneSpec};

fn main() -> rgbdn::Result<()> {
    let k = CameraIntrinsics::centered(100.0, 128, 128)?;
    let seq = generate(&SceneSpec::new(SceneKind::TwoPlanes, 128, 128).noise(0.02).seed(5), &k)?;
    let f = &seq.frames[0];
    let inputs = FrameInputs {
        rgb: None,
        generated_depth: f.generated_depth.clone(),
        normal: f.generated_normal.clone(),
        flow_to_prev: None,
    };
    let gt = f.gt_depth.values();

    for stiffness in [2.0, 0.0] {
        let mut cfg = RefineConfig::new(k);
        cfg.solver.k = stiffness;
        let r = refine_frame(&inputs, None, &cfg)?;
        // depth profile across the step on the middle row
        let row: Vec<String> = (58..70)
            .map(|u| format!("{:.3}", r.refined_depth.at(u, 64).unwrap()))
            .collect();
        println!("k = {stiffness}: {}", row.join(" "));
    }
    let row: Vec<String> = (58..70).map(|u| format!("{:.3}", gt.get(u, 64))).collect();
    println!("truth:   {}", row.join(" "));
    Ok(())
}
