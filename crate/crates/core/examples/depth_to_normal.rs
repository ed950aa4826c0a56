//! Normals from depth by cross products of back-projected neighbours.

use rgbdn::geometry::{depth_to_normal, CameraIntrinsics};
use rgbdn::metrics::normal_metrics;
use rgbdn::synth::{generate, SceneKind, SceneSpec};

fn main() -> rgbdn::Result<()> {
    for (kind, n) in [(SceneKind::SlantedPlane, 64), (SceneKind::Sphere, 64), (SceneKind::Sphere, 256)] {
        let k = CameraIntrinsics::centered(100.0 * n as f64 / 128.0, n, n)?;
        let f = generate(&SceneSpec::new(kind, n, n), &k)?.frames.remove(0);
        let est = depth_to_normal(&f.gt_depth, &k)?;
        let m = normal_metrics(&est, &f.gt_normal, f.object_mask.as_ref())?;
        println!(
            "{kind:?} at {n}x{n}: mean {:.3} deg, median {:.3} deg, {:.1}% under 11.25 deg",
            m.mean_deg,
            m.median_deg,
            100.0 * m.pct_11_25
        );
    }
    Ok(())
}
