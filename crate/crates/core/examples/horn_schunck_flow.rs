//! Estimate backward flow from RGB when none is supplied.

use rgbdn::flow::{horn_schunck, HornSchunckParams};
use rgbdn::geometry::CameraIntrinsics;
use rgbdn::grid::to_gray;
use rgbdn::synth::{generate, SceneKind, SceneSpec};

fn main() -> rgbdn::Result<()> {
    let k = CameraIntrinsics::centered(100.0, 64, 64)?;
    let seq = generate(&SceneSpec::new(SceneKind::MovingBox, 64, 64).frames(2).motion(0.01, 0.0), &k)?;
    let cur = to_gray(&seq.frames[1].rgb);
    let prev = to_gray(&seq.frames[0].rgb);
    let est = horn_schunck(&cur, &prev, HornSchunckParams::default())?;
    let gt = seq.frames[1].gt_flow_to_prev.as_ref().expect("second frame has flow");

    let obj = seq.frames[1].object_mask.as_ref().unwrap();
    let (mut epe, mut n) = (0.0, 0);
    for v in 0..64 {
        for u in 0..64 {
            if let (true, Some(a), Some(b)) = (*obj.get(u, v), est.at(u, v), gt.at(u, v)) {
                epe += ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
                n += 1;
            }
        }
    }
    let c = est.at(32, 32).unwrap();
    println!("flow at box centre: ({:.2}, {:.2}) px, truth {:?}", c.0, c.1, gt.at(32, 32).unwrap());
    println!("mean endpoint error on the box: {:.3} px over {n} pixels", epe / n as f64);
    Ok(())
}
