//! Recover a slanted plane from its normals, starting from a noisy guess.
//!
//! ```text
//! cargo run --example normal_integration
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rgbdn::geometry::CameraIntrinsics;
use rgbdn::integration::assemble_system;
use rgbdn::solver::{irls_refine, SolveConfig};
use rgbdn::synth::{generate, SceneKind, SceneSpec};
use rgbdn::temporal::DiagonalQuadratic;

fn main() -> rgbdn::Result<()> {
    let k = CameraIntrinsics::centered(100.0, 128, 128)?;
    let seq = generate(&SceneSpec::new(SceneKind::SlantedPlane, 128, 128), &k)?;
    let frame = &seq.frames[0];

    let sys = assemble_system(&frame.gt_normal, &k)?;
    println!("{} unknowns, {} constraint rows", sys.num_unknowns(), sys.num_rows());

    let truth = sys.pixel_index().gather(frame.gt_depth.to_log()?.values().data());
    let noise = Normal::new(0.0, 0.05).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let init: Vec<f64> = truth.iter().map(|t| t + noise.sample(&mut rng)).collect();

    let res = irls_refine(&sys, &DiagonalQuadratic::empty(init.len()), &init, &SolveConfig::default())?;
    for (i, e) in res.energy_trace.iter().enumerate() {
        println!("iteration {i}: energy {e:.3e}");
    }

    // integration fixes depth only up to scale, so compare after removing the offset
    let rmse = |x: &[f64]| {
        let off = x.iter().zip(&truth).map(|(a, b)| a - b).sum::<f64>() / x.len() as f64;
        (x.iter().zip(&truth).map(|(a, b)| (a - b - off).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
    };
    println!("log-depth RMSE: init {:.3e}, refined {:.3e}", rmse(&init), rmse(&res.d_log));
    Ok(())
}
