//! Lift a 2D pixel track into 3D using refined depth.

use rgbdn::geometry::CameraIntrinsics;
use rgbdn::pipeline::{lift_track, refine_frames, FrameInputs, RefineConfig, TrackPoint};
use rgbdn::synth::{generate, SceneKind, SceneSpec};

fn main() -> rgbdn::Result<()> {
    let k = CameraIntrinsics::centered(100.0, 64, 64)?;
    let spec = SceneSpec::new(SceneKind::MovingBox, 64, 64).frames(5).motion(0.02, 0.01).noise(0.01).seed(2);
    let seq = generate(&spec, &k)?;
    let inputs: Vec<FrameInputs> = seq
        .frames
        .iter()
        .map(|f| FrameInputs {
            rgb: Some(f.rgb.clone()),
            generated_depth: f.generated_depth.clone(),
            normal: f.generated_normal.clone(),
            flow_to_prev: f.gt_flow_to_prev.clone(),
        })
        .collect();
    let refined = refine_frames(&inputs, &RefineConfig::new(k))?;

    // the box moves 2 px right and 1 px down per frame from (28, 30)
    let track: Vec<TrackPoint> = (0..5).map(|t| TrackPoint { frame: t, u: 28 + 2 * t, v: 30 + t }).collect();
    for (p, xyz) in track.iter().zip(lift_track(&track, &refined, &k)?) {
        match xyz {
            Some([x, y, z]) => println!("frame {} ({}, {}) -> ({x:+.4}, {y:+.4}, {z:.4})", p.frame, p.u, p.v),
            None => println!("frame {} ({}, {}) -> no depth", p.frame, p.u, p.v),
        }
    }
    Ok(())
}
