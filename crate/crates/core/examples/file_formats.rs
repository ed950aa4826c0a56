//! Write a synthetic sequence to disk and read every format back.
//!
//! Pass a directory to keep the files; otherwise a temporary one is used.

use std::path::PathBuf;

use rgbdn::geometry::{backproject, CameraIntrinsics, DepthUnit};
use rgbdn::io;
use rgbdn::synth::{generate, SceneKind, SceneSpec};

fn main() -> rgbdn::Result<()> {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let dir = std::env::args_os().nth(1).map(PathBuf::from).unwrap_or_else(|| tmp.path().to_path_buf());

    let k = CameraIntrinsics::centered(50.0, 64, 48)?;
    let seq = generate(&SceneSpec::new(SceneKind::MovingBox, 64, 48).frames(2).motion(0.02, 0.0), &k)?;
    let files = io::write_synthetic(&seq, &dir)?;
    println!("manifest: {}", files.manifest_path.display());
    print!("{}", std::fs::read_to_string(&files.manifest_path).expect("just written"));

    let m = io::manifest_read(&files.manifest_path)?;
    let d = io::read_depth(&m.frames[1].depth, DepthUnit::Relative)?;
    let n = io::read_normal(&m.frames[1].normal)?;
    let flow = io::flo_read(m.frames[1].flow_to_prev.as_ref().unwrap())?;
    let rgb = io::rgb_png_read(m.frames[1].rgb.as_ref().unwrap())?;
    println!(
        "frame 1: depth {:?} ({} valid), normals {:?}, flow {:?}, rgb {:?}",
        d.size(),
        d.valid_count(),
        n.size(),
        flow.size(),
        rgb.size()
    );

    let cloud = backproject(&seq.frames[1].gt_depth, &k, Some(&rgb))?;
    for (mode, name) in [(io::PlyMode::Ascii, "cloud_ascii.ply"), (io::PlyMode::BinaryLittleEndian, "cloud.ply")] {
        let p = dir.join(name);
        io::ply_write(&cloud, &p, mode)?;
        let back = io::ply_read(&p)?;
        println!("{name}: {} points, {} bytes", back.points.len(), std::fs::metadata(&p).map(|m| m.len()).unwrap_or(0));
    }

    let png = dir.join("depth16.png");
    io::depth_png16_write(&png, &seq.generated_relative(0)?)?;
    println!("16-bit depth png: {} valid pixels", io::depth_png16_read(&png)?.valid_count());
    Ok(())
}
