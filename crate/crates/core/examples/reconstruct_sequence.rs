//! Run the full pipeline from a manifest on disk.
//!
//! ```text
//! cargo run --example reconstruct_sequence -- path/to/manifest.toml
//! ```
//!
//! Without an argument a synthetic sphere sequence is written to a temporary
//! directory first.

use std::path::PathBuf;

use rgbdn::geometry::{CameraIntrinsics, DepthUnit};
use rgbdn::io;
use rgbdn::metrics::evaluate_depth;
use rgbdn::pipeline::{load_frame, refine_sequence};
use rgbdn::synth::{generate, SceneKind, SceneSpec};

fn main() -> rgbdn::Result<()> {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let (manifest, gt) = match std::env::args_os().nth(1) {
        Some(p) => (PathBuf::from(p), None),
        None => {
            let k = CameraIntrinsics::centered(75.0, 96, 96)?;
            let seq = generate(&SceneSpec::new(SceneKind::Sphere, 96, 96).frames(3).noise(0.02).seed(8), &k)?;
            let files = io::write_synthetic(&seq, tmp.path())?;
            (files.manifest_path, Some(files.gt_depth))
        }
    };

    let m = io::manifest_read(&manifest)?;
    let refined = refine_sequence(&m)?;
    for (i, r) in refined.iter().enumerate() {
        let mut line = format!(
            "frame {i}: {} reweighting steps, final energy {:.3e}, {} points",
            r.iters_used,
            r.energy_trace.last().copied().unwrap_or(0.0),
            r.point_cloud.points.len()
        );
        if let Some(gt) = &gt {
            let g = io::read_depth(&gt[i], DepthUnit::Metric)?;
            let (before, _) = evaluate_depth(&load_frame(&m, i)?.generated_depth, &g, None, true)?;
            let (after, _) = evaluate_depth(&r.refined_depth, &g, None, true)?;
            line.push_str(&format!(", AbsRel {:.4} -> {:.4}", before.absrel, after.absrel));
        }
        println!("{line}");
    }
    Ok(())
}
