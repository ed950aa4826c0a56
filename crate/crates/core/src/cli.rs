//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::flow::{horn_schunck, HornSchunckParams};
use crate::geometry::{depth_to_normal, relative_to_metric, CameraIntrinsics, DepthMap, DepthUnit};
use crate::grid::{to_gray, Grid, Mask};
use crate::io::{self, PlyMode, Report};
use crate::metrics::{chamfer_l1, evaluate_depth, normal_metrics};
use crate::pipeline::{lift_track, refine_frame, refine_sequence, FrameInputs, RefineConfig, RefinedFrame, TrackPoint};
use crate::synth::{generate, SceneKind, SceneSpec};
use crate::temporal::{region_masks, LambdaSet};

/// Default manifest for `reconstruct` when `--manifest` is not given.
pub const MANIFEST_ENV: &str = "RGBDN_MANIFEST";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "rgbdn", version, about = "Temporally consistent depth refinement for RGB-DN sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Refine a single depth map with its normals.
    Integrate(IntegrateArgs),
    /// Refine every frame of one or more manifests.
    Reconstruct(ReconstructArgs),
    /// Estimate flow from the current frame back to the previous one.
    Flow(FlowArgs),
    /// Split a flow field into static, dynamic and background masks.
    Masks(MasksArgs),
    /// Compare predictions against ground truth.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Write a synthetic scene and its manifest.
    Synth(SynthArgs),
    /// Estimate normals from metric depth.
    Depth2normal(Depth2NormalArgs),
    /// Lift a 2D pixel track into 3D with refined depth.
    LiftTrack(LiftTrackArgs),
}

#[derive(Debug, Args)]
struct CameraArgs {
    /// TOML file with the camera, either top-level fx/fy/cx/cy/width/height
    /// or an [intrinsics] table (a manifest works).
    #[arg(long)]
    intrinsics: PathBuf,
    /// Depth file holds relative depth mapped to NEAR,FAR. Defaults to the
    /// [depth_range] table of the intrinsics file, if any.
    #[arg(long, value_parser = parse_pair, value_name = "NEAR,FAR")]
    depth_range: Option<(f64, f64)>,
}

#[derive(Debug, Args)]
struct IntegrateArgs {
    #[arg(long)]
    depth: PathBuf,
    #[arg(long)]
    normal: PathBuf,
    #[command(flatten)]
    camera: CameraArgs,
    #[arg(long)]
    rgb: Option<PathBuf>,
    /// Refined metric depth (.pfm).
    #[arg(long)]
    out: PathBuf,
    /// Also write the point cloud.
    #[arg(long)]
    ply: Option<PathBuf>,
    /// Bilateral stiffness (0 = uniform weights).
    #[arg(long, default_value_t = 2.0)]
    k: f64,
    /// Strength of the pull toward the input depth.
    #[arg(long, default_value_t = LambdaSet::RT1.rb)]
    lambda: f64,
}

#[derive(Debug, Args)]
struct ReconstructArgs {
    /// Manifest path; repeat to process several sequences. Falls back to $RGBDN_MANIFEST.
    #[arg(long)]
    manifest: Vec<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Sequences processed at once.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, value_enum, default_value_t = PlyFormat::Binary)]
    ply_format: PlyFormat,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PlyFormat {
    Ascii,
    Binary,
}

#[derive(Debug, Args)]
struct FlowArgs {
    /// Current frame (RGB png).
    #[arg(long)]
    rgb: PathBuf,
    /// Previous frame (RGB png).
    #[arg(long)]
    prev: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = HornSchunckParams::default().alpha)]
    alpha: f64,
    #[arg(long, default_value_t = HornSchunckParams::default().iters)]
    iters: usize,
}

#[derive(Debug, Args)]
struct MasksArgs {
    #[arg(long)]
    flow: PathBuf,
    /// Static mask of the previous frame (png); all static if omitted.
    #[arg(long)]
    static_prev: Option<PathBuf>,
    #[arg(long, default_value_t = crate::temporal::DEFAULT_FLOW_THRESHOLD_PX)]
    threshold: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// AbsRel and threshold accuracy.
    Depth(EvalDepthArgs),
    /// Angular normal error.
    Normal(EvalPairArgs),
    /// Symmetric L1 chamfer distance between two PLY clouds.
    Chamfer(EvalPairArgs),
}

#[derive(Debug, Args)]
struct EvalPairArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Restrict to this mask (png).
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Write the record as JSON here.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalDepthArgs {
    #[command(flatten)]
    pair: EvalPairArgs,
    /// Fit scale and shift of the prediction before scoring.
    #[arg(long)]
    align: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    scene: SceneArg,
    #[arg(long, default_value_t = 1)]
    frames: usize,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value_t = 128)]
    height: usize,
    /// Focal length in pixels; defaults to 100 at 128 px width, scaled with width.
    #[arg(long)]
    focal: Option<f64>,
    /// Box translation per frame in metres.
    #[arg(long, value_parser = parse_pair, default_value = "0.02,0", value_name = "DX,DY")]
    motion: (f64, f64),
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0.0)]
    normal_jitter: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Loss weight preset written to the manifest.
    #[arg(long, default_value = "rt1")]
    lambdas: String,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum SceneArg {
    #[value(alias = "fronto-plane")]
    FrontoPlane,
    #[value(alias = "slanted-plane")]
    SlantedPlane,
    Sphere,
    #[value(alias = "two-planes")]
    TwoPlanes,
    #[value(alias = "moving-box")]
    MovingBox,
}

impl From<SceneArg> for SceneKind {
    fn from(s: SceneArg) -> Self {
        match s {
            SceneArg::FrontoPlane => SceneKind::FrontoPlane,
            SceneArg::SlantedPlane => SceneKind::SlantedPlane,
            SceneArg::Sphere => SceneKind::Sphere,
            SceneArg::TwoPlanes => SceneKind::TwoPlanes,
            SceneArg::MovingBox => SceneKind::MovingBox,
        }
    }
}

#[derive(Debug, Args)]
struct Depth2NormalArgs {
    #[arg(long)]
    depth: PathBuf,
    #[command(flatten)]
    camera: CameraArgs,
    /// Normal map (.pfm or .png).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct LiftTrackArgs {
    /// CSV lines `frame,u,v` (a header line is allowed).
    #[arg(long)]
    track: PathBuf,
    /// Directory written by `reconstruct` (refined_depth_NNN.pfm).
    #[arg(long)]
    refined_dir: PathBuf,
    /// TOML file with the camera (a manifest works).
    #[arg(long)]
    intrinsics: PathBuf,
    /// CSV output `frame,u,v,x,y,z,found`.
    #[arg(long)]
    out: PathBuf,
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected A,B, got `{s}`"))?;
    let p = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    Ok((p(a)?, p(b)?))
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Data(e)) => {
            let msg = e.to_string();
            eprintln!("error: {msg}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                let cause = s.to_string();
                if !msg.contains(&cause) {
                    eprintln!("  caused by: {cause}");
                }
                src = s.source();
            }
            EXIT_DATA
        }
    }
}

enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

type CliResult = std::result::Result<(), CliError>;

fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::Integrate(a) => integrate(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Flow(a) => flow(a),
        Command::Masks(a) => masks(a),
        Command::Eval(e) => eval(e),
        Command::Synth(a) => synth(a),
        Command::Depth2normal(a) => depth2normal(a),
        Command::LiftTrack(a) => lift(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Camera and optional depth range from a TOML file.
fn read_camera(path: &Path) -> Result<(CameraIntrinsics, Option<(f64, f64)>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| Error::format(path, None, e.to_string()))?;
    let cam = table.get("intrinsics").cloned().unwrap_or_else(|| toml::Value::Table(table.clone()));
    let k: CameraIntrinsics = cam.try_into().map_err(|e: toml::de::Error| Error::manifest("intrinsics", e.to_string()))?;
    k.validate()?;
    let range = match table.get("depth_range") {
        Some(r) => {
            let get = |key: &str| {
                r.get(key)
                    .and_then(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
                    .ok_or_else(|| Error::manifest(format!("depth_range.{key}"), "missing or not a number"))
            };
            Some((get("near")?, get("far")?))
        }
        None => None,
    };
    Ok((k, range))
}

fn load_depth(path: &Path, range: Option<(f64, f64)>) -> Result<DepthMap> {
    match range {
        Some((near, far)) => relative_to_metric(&io::read_depth(path, DepthUnit::Relative)?, near, far),
        None => io::read_depth(path, DepthUnit::Metric),
    }
}

fn integrate(a: IntegrateArgs) -> CliResult {
    let (k, file_range) = read_camera(&a.camera.intrinsics)?;
    let depth = load_depth(&a.depth, a.camera.depth_range.or(file_range))?;
    let inputs = FrameInputs {
        rgb: a.rgb.as_deref().map(io::rgb_png_read).transpose()?,
        generated_depth: depth,
        normal: io::read_normal(&a.normal)?,
        flow_to_prev: None,
    };
    let mut cfg = RefineConfig::new(k);
    cfg.solver.k = a.k;
    cfg.lambdas.rb = a.lambda;
    let r = refine_frame(&inputs, None, &cfg)?;
    io::write_depth(&a.out, &r.refined_depth)?;
    if let Some(p) = &a.ply {
        io::ply_write(&r.point_cloud, p, PlyMode::BinaryLittleEndian)?;
    }
    eprintln!(
        "integrate: {} pixels, {} reweighting iterations, converged={}",
        r.refined_depth.valid_count(),
        r.iters_used,
        r.converged
    );
    Ok(())
}

fn frame_report(i: usize, r: &RefinedFrame) -> Report {
    let mut rep = Report::new();
    let p = |k: &str| format!("frame{i:03}.{k}");
    rep.push(p("pixels"), r.refined_depth.valid_count())
        .push(p("points"), r.point_cloud.len())
        .push(p("iters"), r.iters_used)
        .push(p("converged"), r.converged)
        .push(p("energy"), r.energy_trace.last().copied().unwrap_or(0.0));
    if let Some(m) = &r.masks {
        let count = |m: &Mask| m.data().iter().filter(|&&b| b).count();
        rep.push(p("static"), count(&m.static_m))
            .push(p("dynamic"), count(&m.dynamic_m))
            .push(p("background"), count(&m.background_m));
    }
    rep
}

fn reconstruct_one(manifest: &Path, out: &Path, ply: PlyMode) -> Result<usize> {
    let m = io::manifest_read(manifest)?;
    create_dir(out)?;
    let frames = refine_sequence(&m)?;
    let mut report = Report::new();
    report.push("manifest", manifest.display().to_string()).push("frames", frames.len());
    for (i, r) in frames.iter().enumerate() {
        io::write_depth(out.join(format!("refined_depth_{i:03}.pfm")), &r.refined_depth).map_err(|e| e.in_frame(i))?;
        io::ply_write(&r.point_cloud, out.join(format!("cloud_{i:03}.ply")), ply).map_err(|e| e.in_frame(i))?;
        report.entries.extend(frame_report(i, r).entries);
        eprintln!("{}: frame {i} done ({} iterations)", manifest.display(), r.iters_used);
    }
    write_text(&out.join("record.txt"), &report.to_text())?;
    write_text(&out.join("record.json"), &report.to_json())?;
    Ok(frames.len())
}

fn reconstruct(a: ReconstructArgs) -> CliResult {
    let mut manifests = a.manifest;
    if manifests.is_empty() {
        match std::env::var_os(MANIFEST_ENV) {
            Some(p) => manifests.push(PathBuf::from(p)),
            None => return Err(CliError::Usage(format!("--manifest is required (or set {MANIFEST_ENV})"))),
        }
    }
    if a.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let ply = match a.ply_format {
        PlyFormat::Ascii => PlyMode::Ascii,
        PlyFormat::Binary => PlyMode::BinaryLittleEndian,
    };
    let outs: Vec<PathBuf> = if manifests.len() == 1 {
        vec![a.out_dir.clone()]
    } else {
        (0..manifests.len()).map(|i| a.out_dir.join(format!("seq_{i:03}"))).collect()
    };
    let jobs: Vec<(&PathBuf, &PathBuf)> = manifests.iter().zip(&outs).collect();
    let mut results: Vec<Result<usize>> = Vec::with_capacity(jobs.len());
    for chunk in jobs.chunks(a.jobs) {
        let part: Vec<Result<usize>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|(m, o)| s.spawn(move || reconstruct_one(m, o, ply))).collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::InvalidInput("worker panicked".into()))))
                .collect()
        });
        results.extend(part);
    }
    let mut first_err = None;
    for (m, r) in manifests.iter().zip(results) {
        match r {
            Ok(n) => eprintln!("{}: {n} frames", m.display()),
            Err(e) => {
                eprintln!("{}: failed", m.display());
                first_err.get_or_insert(e);
            }
        }
    }
    match first_err {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn flow(a: FlowArgs) -> CliResult {
    let cur = to_gray(&io::rgb_png_read(&a.rgb)?);
    let prev = to_gray(&io::rgb_png_read(&a.prev)?);
    let f = horn_schunck(&cur, &prev, HornSchunckParams { alpha: a.alpha, iters: a.iters })?;
    io::flo_write(&a.out, &f)?;
    Ok(())
}

fn masks(a: MasksArgs) -> CliResult {
    let f = io::flo_read(&a.flow)?;
    let prev = match &a.static_prev {
        Some(p) => io::mask_png_read(p)?,
        None => Grid::new(f.width(), f.height(), true),
    };
    let m = region_masks(&f, &prev, a.threshold)?;
    create_dir(&a.out_dir)?;
    io::mask_png_write(a.out_dir.join("static.png"), &m.static_m)?;
    io::mask_png_write(a.out_dir.join("dynamic.png"), &m.dynamic_m)?;
    io::mask_png_write(a.out_dir.join("background.png"), &m.background_m)?;
    let count = |m: &Mask| m.data().iter().filter(|&&b| b).count();
    let mut r = Report::new();
    r.push("static", count(&m.static_m))
        .push("dynamic", count(&m.dynamic_m))
        .push("background", count(&m.background_m));
    print!("{}", r.to_text());
    Ok(())
}

fn emit(report: &Report, json: Option<&Path>) -> Result<()> {
    print!("{}", report.to_text());
    if let Some(p) = json {
        write_text(p, &report.to_json())?;
    }
    Ok(())
}

fn eval(cmd: EvalCommand) -> CliResult {
    match cmd {
        EvalCommand::Depth(a) => {
            let pred = io::read_depth(&a.pair.pred, DepthUnit::Metric)?;
            let gt = io::read_depth(&a.pair.gt, DepthUnit::Metric)?;
            let mask = a.pair.mask.as_deref().map(io::mask_png_read).transpose()?;
            let (m, (s, t)) = evaluate_depth(&pred, &gt, mask.as_ref(), a.align)?;
            let mut r = m.to_report();
            if a.align {
                r.push("scale", s).push("shift", t);
            }
            emit(&r, a.pair.json.as_deref())?;
        }
        EvalCommand::Normal(a) => {
            let pred = io::read_normal(&a.pred)?;
            let gt = io::read_normal(&a.gt)?;
            let mask = a.mask.as_deref().map(io::mask_png_read).transpose()?;
            emit(&normal_metrics(&pred, &gt, mask.as_ref())?.to_report(), a.json.as_deref())?;
        }
        EvalCommand::Chamfer(a) => {
            if a.mask.is_some() {
                return Err(CliError::Usage("--mask does not apply to point clouds".into()));
            }
            let p = io::ply_read(&a.pred)?;
            let q = io::ply_read(&a.gt)?;
            let mut r = Report::new();
            r.push("chamfer_l1", chamfer_l1(&p, &q)?);
            emit(&r, a.json.as_deref())?;
        }
    }
    Ok(())
}

fn synth(a: SynthArgs) -> CliResult {
    let lambdas = LambdaSet::preset(&a.lambdas).ok_or_else(|| CliError::Usage(format!("unknown lambda preset `{}`", a.lambdas)))?;
    let focal = a.focal.unwrap_or(100.0 * a.width as f64 / 128.0);
    let k = CameraIntrinsics::centered(focal, a.width, a.height)?;
    let spec = SceneSpec::new(a.scene.into(), a.width, a.height)
        .frames(a.frames)
        .motion(a.motion.0, a.motion.1)
        .noise(a.noise)
        .normal_jitter(a.normal_jitter)
        .seed(a.seed);
    let seq = generate(&spec, &k)?;
    let mut files = io::write_synthetic(&seq, &a.out_dir)?;
    files.manifest.lambdas = lambdas;
    io::manifest_write(&files.manifest_path, &files.manifest)?;
    eprintln!("wrote {} frames and {}", seq.frames.len(), files.manifest_path.display());
    Ok(())
}

fn depth2normal(a: Depth2NormalArgs) -> CliResult {
    let (k, file_range) = read_camera(&a.camera.intrinsics)?;
    let d = load_depth(&a.depth, a.camera.depth_range.or(file_range))?;
    let n = depth_to_normal(&d, &k)?;
    io::write_normal(&a.out, &n)?;
    Ok(())
}

fn parse_track(path: &Path) -> Result<Vec<TrackPoint>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("frame")) {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || Error::format(path, None, format!("line {}: expected frame,u,v", i + 1));
        if f.len() != 3 {
            return Err(bad());
        }
        let n = |s: &str| s.parse::<usize>().map_err(|_| bad());
        out.push(TrackPoint { frame: n(f[0])?, u: n(f[1])?, v: n(f[2])? });
    }
    Ok(out)
}

fn lift(a: LiftTrackArgs) -> CliResult {
    let (k, _) = read_camera(&a.intrinsics)?;
    let track = parse_track(&a.track)?;
    let last = track.iter().map(|t| t.frame).max().unwrap_or(0);
    let mut frames = Vec::with_capacity(last + 1);
    for i in 0..=last {
        let p = a.refined_dir.join(format!("refined_depth_{i:03}.pfm"));
        let d = io::read_depth(&p, DepthUnit::Metric).map_err(|e| e.in_frame(i))?;
        frames.push(RefinedFrame {
            refined_log: d.to_log()?,
            point_cloud: Default::default(),
            refined_depth: d,
            masks: None,
            flagged: None,
            energy_trace: Vec::new(),
            iters_used: 0,
            converged: true,
        });
    }
    let pts = lift_track(&track, &frames, &k)?;
    let mut csv = String::from("frame,u,v,x,y,z,found\n");
    let mut missing = 0;
    for (t, p) in track.iter().zip(&pts) {
        match p {
            Some([x, y, z]) => csv.push_str(&format!("{},{},{},{x},{y},{z},1\n", t.frame, t.u, t.v)),
            None => {
                missing += 1;
                csv.push_str(&format!("{},{},{},nan,nan,nan,0\n", t.frame, t.u, t.v));
            }
        }
    }
    write_text(&a.out, &csv)?;
    if missing > 0 {
        eprintln!("lift-track: {missing} of {} points had no depth nearby", track.len());
    }
    Ok(())
}
