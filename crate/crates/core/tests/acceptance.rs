//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use rgbdn::flow::{flow_magnitude, horn_schunck, FlowField, HornSchunckParams};
use rgbdn::geometry::{CameraIntrinsics, DepthMap, DepthUnit, NormalMap, PointCloud};
use rgbdn::grid::Grid;
use rgbdn::integration::{assemble_system, SparseConstraintSystem, WeightVector};
use rgbdn::io::{self, PlyMode};
use rgbdn::metrics::{chamfer_l1, depth_metrics, evaluate_depth, normal_metrics};
use rgbdn::pipeline::{refine_frames, FrameInputs, RefineConfig};
use rgbdn::solver::{energy_gradient, irls_refine, solve_fixed_weights, total_energy, SolveConfig};
use rgbdn::synth::{generate, SceneKind, SceneSpec, SyntheticSequence};
use rgbdn::temporal::{warp_previous_depth, DiagonalQuadratic, LambdaSet};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn camera(n: usize) -> CameraIntrinsics {
    CameraIntrinsics::centered(100.0 * n as f64 / 128.0, n, n).unwrap()
}

fn inputs_of(seq: &SyntheticSequence) -> Vec<FrameInputs> {
    seq.frames
        .iter()
        .map(|f| FrameInputs {
            rgb: Some(f.rgb.clone()),
            generated_depth: f.generated_depth.clone(),
            normal: f.generated_normal.clone(),
            flow_to_prev: f.gt_flow_to_prev.clone(),
        })
        .collect()
}

fn rms(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x * x;
        n += 1;
    }
    (s / n as f64).sqrt()
}

fn criterion_1() -> Outcome {
    let k = camera(128);
    let seq = generate(&SceneSpec::new(SceneKind::SlantedPlane, 128, 128), &k).map_err(|e| e.to_string())?;
    let f = &seq.frames[0];
    let sys = assemble_system(&f.gt_normal, &k).map_err(|e| e.to_string())?;
    let index = sys.pixel_index();
    let truth = index.gather(f.gt_depth.to_log().unwrap().values().data());
    let q = DiagonalQuadratic::empty(truth.len());
    let (mut worst_err, mut worst_secs, mut steps) = (0.0f64, 0.0f64, 0);
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let init: Vec<f64> = truth
            .iter()
            .map(|t| t + 0.05 * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        let t0 = Instant::now();
        let res = irls_refine(&sys, &q, &init, &SolveConfig::default()).map_err(|e| e.to_string())?;
        worst_secs = worst_secs.max(t0.elapsed().as_secs_f64());
        let offset = res.d_log.iter().zip(&truth).map(|(a, b)| a - b).sum::<f64>() / truth.len() as f64;
        worst_err = worst_err.max(rms(res.d_log.iter().zip(&truth).map(|(a, b)| a - b - offset)));
        steps = steps.max(res.iters_used);
    }
    check(
        worst_err < 1e-3 && worst_secs < 10.0,
        format!(
            "worst of 5 noise draws: log-depth RMSE {worst_err:.3e} (< 1e-3), {worst_secs:.2} s (< 10 s), {steps} reweighting steps"
        ),
    )
}

fn criterion_2() -> Outcome {
    let k = camera(128);
    let spec = SceneSpec::new(SceneKind::TwoPlanes, 128, 128).noise(0.02).seed(21);
    let seq = generate(&spec, &k).map_err(|e| e.to_string())?;
    let f = &seq.frames[0];
    let obj = f.object_mask.as_ref().unwrap();
    let gt_log = f.gt_depth.to_log().unwrap();
    let run = |bilateral: f64| {
        let mut cfg = RefineConfig::new(k);
        cfg.solver.k = bilateral;
        refine_frames(&inputs_of(&seq), &cfg).map(|mut r| r.remove(0))
    };
    let bil = run(2.0).map_err(|e| e.to_string())?;
    let uni = run(0.0).map_err(|e| e.to_string())?;
    let gap = 64usize;
    let stats = |r: &rgbdn::pipeline::RefinedFrame| {
        let diff = Grid::from_fn(128, 128, |u, v| r.refined_log.at(u, v).unwrap() - gt_log.at(u, v).unwrap());
        let off = diff.data().iter().sum::<f64>() / diff.len() as f64;
        let pick = |pred: &dyn Fn(usize, usize) -> bool| {
            rms((0..128 * 128).filter(|i| pred(i % 128, i / 128)).map(|i| diff.data()[i] - off))
        };
        let left = pick(&|u, v| !*obj.get(u, v));
        let right = pick(&|u, v| *obj.get(u, v));
        let band = pick(&|u, _| u + 4 >= gap && u < gap + 4);
        (left, right, band)
    };
    let (bl, br, bb) = stats(&bil);
    let (ul, ur, ub) = stats(&uni);
    check(
        bl <= ul && br <= ur && ub >= 2.0 * bb,
        format!(
            "RMSE left {bl:.2e} vs {ul:.2e}, right {br:.2e} vs {ur:.2e}, gap band {bb:.2e} vs {ub:.2e} (ratio {:.1})",
            ub / bb
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 1..=4 {
        match moving_box_ablation(seed) {
            Ok(d) => lines.push(format!("seed {seed}: {d}")),
            Err(d) => {
                ok = false;
                lines.push(format!("seed {seed}: {d}"));
            }
        }
    }
    check(ok, lines.join("; "))
}

fn moving_box_ablation(seed: u64) -> Outcome {
    let n = 64;
    let k = CameraIntrinsics::centered(100.0, n, n).unwrap();
    let spec = SceneSpec::new(SceneKind::MovingBox, n, n).frames(5).motion(0.02, 0.0).noise(0.02).seed(seed);
    let seq = generate(&spec, &k).map_err(|e| e.to_string())?;
    let inputs = inputs_of(&seq);
    let with = RefineConfig::new(k);
    let mut without = with;
    without.lambdas = LambdaSet::default().without_consistency();
    let a = refine_frames(&inputs, &with).map_err(|e| e.to_string())?;
    let b = refine_frames(&inputs, &without).map_err(|e| e.to_string())?;

    // pixels that are background in every frame after the first
    let bg: Vec<usize> = (0..n * n)
        .filter(|&i| a[1..].iter().all(|r| r.masks.as_ref().unwrap().background_m.data()[i]))
        .collect();
    let temporal_std = |get: &dyn Fn(usize, usize) -> f64| {
        let s: f64 = bg
            .iter()
            .map(|&i| {
                let xs: Vec<f64> = (0..5).map(|t| get(t, i)).collect();
                let m = xs.iter().sum::<f64>() / 5.0;
                (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 5.0).sqrt()
            })
            .sum();
        s / bg.len() as f64
    };
    let s_with = temporal_std(&|t, i| a[t].refined_depth.values().data()[i]);
    let s_without = temporal_std(&|t, i| b[t].refined_depth.values().data()[i]);
    let s_input = temporal_std(&|t, i| seq.frames[t].generated_depth.values().data()[i]);

    let mut rel = Vec::new();
    for t in 1..5 {
        let obj = seq.frames[t].object_mask.as_ref().unwrap();
        let dynm = &a[t].masks.as_ref().unwrap().dynamic_m;
        for i in 0..n * n {
            if obj.data()[i] && dynm.data()[i] {
                let z = a[t].refined_depth.values().data()[i];
                rel.push((z - rgbdn::synth::BOX_DEPTH).abs() / rgbdn::synth::BOX_DEPTH);
            }
        }
    }
    let dyn_err = rel.iter().sum::<f64>() / rel.len() as f64;
    let reduction = 1.0 - s_with / s_without;
    check(
        !bg.is_empty() && !rel.is_empty() && reduction >= 0.5 && dyn_err < 0.02,
        format!(
            "background std {s_with:.2e} vs {s_without:.2e} ({:.0}% reduction, input {s_input:.2e}), box error {:.2}% over {} px",
            100.0 * reduction,
            100.0 * dyn_err,
            rel.len()
        ),
    )
}

struct Instance {
    sys: SparseConstraintSystem,
    w: WeightVector,
    q: DiagonalQuadratic,
    init: Vec<f64>,
}

fn random_normal(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let x: f64 = rng.random_range(-0.6..0.6);
    let y: f64 = rng.random_range(-0.6..0.6);
    let z: f64 = rng.random_range(-1.0..-0.3);
    let l = (x * x + y * y + z * z).sqrt();
    [x / l, y / l, z / l]
}

/// Connected components over rows, by repeated label propagation.
fn component_labels(sys: &SparseConstraintSystem) -> Vec<usize> {
    let n = sys.num_unknowns();
    let mut label: Vec<usize> = (0..n).collect();
    loop {
        let mut changed = false;
        for r in sys.rows() {
            let m = label[r.pixel].min(label[r.neighbor]);
            for x in [r.pixel, r.neighbor] {
                if label[x] != m {
                    label[x] = m;
                    changed = true;
                }
            }
        }
        if !changed {
            return label;
        }
    }
}

fn random_instance(rng: &mut ChaCha8Rng, full_mask: bool, with_lambda: bool) -> Instance {
    loop {
        let w = rng.random_range(2..=6);
        let h = rng.random_range(2..=6);
        let k = CameraIntrinsics::new(
            rng.random_range(1.5..4.0),
            rng.random_range(1.5..4.0),
            rng.random_range(0.0..w as f64),
            rng.random_range(0.0..h as f64),
            w,
            h,
        )
        .unwrap();
        let mask = Grid::from_fn(w, h, |_, _| full_mask || rng.random_bool(0.85));
        let normals = NormalMap::with_mask(Grid::from_fn(w, h, |_, _| random_normal(rng)), &mask).unwrap();
        let Ok(sys) = assemble_system(&normals, &k) else { continue };
        let n = sys.num_unknowns();
        let labels = component_labels(&sys);
        if !with_lambda && labels.iter().any(|&l| l != 0) {
            continue;
        }
        let weights = WeightVector((0..sys.num_rows()).map(|_| rng.random_range(0.05..1.0)).collect());
        let mut q = DiagonalQuadratic::empty(n);
        if with_lambda {
            for i in 0..n {
                // every component gets at least its root anchored
                if labels[i] == i || rng.random_bool(0.5) {
                    q.add(i, rng.random_range(0.1..10.0), rng.random_range(-1.0..1.0));
                }
            }
        }
        let init = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        return Instance { sys, w: weights, q, init };
    }
}

/// Dense normal equations `K x = r`.
fn dense_system(inst: &Instance) -> (DMatrix<f64>, DVector<f64>) {
    let n = inst.sys.num_unknowns();
    let mut kk = DMatrix::<f64>::zeros(n, n);
    let mut r = DVector::<f64>::zeros(n);
    for (row, &w) in inst.sys.rows().iter().zip(&inst.w.0) {
        let mut a = DVector::<f64>::zeros(n);
        a[row.neighbor] += row.coeff;
        a[row.pixel] -= row.coeff;
        kk += w * &a * a.transpose();
        r += w * row.rhs * &a;
    }
    for i in 0..n {
        if inst.q.active[i] {
            kk[(i, i)] += inst.q.lambda_diag[i];
            r[i] += inst.q.lambda_diag[i] * inst.q.target[i];
        }
    }
    (kk, r)
}

fn tight() -> SolveConfig {
    SolveConfig {
        cg_tol: 1e-14,
        ..SolveConfig::default()
    }
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let inst = random_instance(&mut rng, false, true);
        let (kk, r) = dense_system(&inst);
        let x = kk.lu().solve(&r).ok_or("dense solve failed")?;
        let sol = solve_fixed_weights(&inst.sys, &inst.w, &inst.q, &inst.init, &tight()).map_err(|e| e.to_string())?;
        for i in 0..x.len() {
            worst = worst.max((sol.x[i] - x[i]).abs() / (1.0 + x[i].abs()));
        }
    }
    let mut grad_worst: f64 = 0.0;
    for _ in 0..20 {
        let mut inst;
        loop {
            inst = random_instance(&mut rng, true, true);
            if inst.sys.pixel_index().size() == (4, 4) {
                break;
            }
        }
        let d: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = energy_gradient(&inst.sys, &inst.w, &inst.q, &d).map_err(|e| e.to_string())?;
        let gmax = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let h = 1e-3;
        for i in 0..16 {
            let mut dp = d.clone();
            let mut dm = d.clone();
            dp[i] += h;
            dm[i] -= h;
            let fd = (total_energy(&inst.sys, &inst.w, &inst.q, &dp).unwrap()
                - total_energy(&inst.sys, &inst.w, &inst.q, &dm).unwrap())
                / (2.0 * h);
            grad_worst = grad_worst.max((fd - g[i]).abs() / g[i].abs().max(1e-3 * gmax));
        }
    }
    check(
        worst <= 1e-8 && grad_worst <= 1e-5,
        format!("max deviation from dense solve {worst:.2e} (<= 1e-8), gradient vs finite differences {grad_worst:.2e} (<= 1e-5)"),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut gauge: f64 = 0.0;
    let mut dense_gap: f64 = 0.0;
    for _ in 0..50 {
        let inst = random_instance(&mut rng, true, false);
        let sol = solve_fixed_weights(&inst.sys, &inst.w, &inst.q, &inst.init, &tight()).map_err(|e| e.to_string())?;
        let n = inst.init.len() as f64;
        let m0 = inst.init.iter().sum::<f64>() / n;
        let m1 = sol.x.iter().sum::<f64>() / n;
        gauge = gauge.max((m0 - m1).abs());
        // dense oracle with the mean pinned by a Lagrange multiplier
        let (kk, r) = dense_system(&inst);
        let nn = inst.init.len();
        let mut big = DMatrix::<f64>::zeros(nn + 1, nn + 1);
        big.view_mut((0, 0), (nn, nn)).copy_from(&kk);
        for i in 0..nn {
            big[(i, nn)] = 1.0;
            big[(nn, i)] = 1.0;
        }
        let mut rhs = DVector::<f64>::zeros(nn + 1);
        rhs.rows_mut(0, nn).copy_from(&r);
        rhs[nn] = inst.init.iter().sum::<f64>();
        let x = big.lu().solve(&rhs).ok_or("dense solve failed")?;
        for i in 0..nn {
            dense_gap = dense_gap.max((x[i] - sol.x[i]).abs());
        }
    }

    let d = DepthMap::from_values(Grid::from_fn(9, 7, |u, v| 0.3 + (u * 7 + v) as f64 * 0.137), DepthUnit::Metric);
    let (warped, ok) = warp_previous_depth(&d, &FlowField::zeros(9, 7)).map_err(|e| e.to_string())?;
    let identity = warped == d && ok.data().iter().all(|&b| b);

    let k = camera(64);
    let seq = generate(&SceneSpec::new(SceneKind::FrontoPlane, 64, 64), &k).map_err(|e| e.to_string())?;
    let r = refine_frames(&inputs_of(&seq), &RefineConfig::new(k)).map_err(|e| e.to_string())?;
    let frame0 = (0..64 * 64)
        .map(|i| (r[0].refined_depth.values().data()[i] - seq.frames[0].generated_depth.values().data()[i]).abs())
        .fold(0.0f64, f64::max);
    check(
        gauge <= 1e-10 && dense_gap <= 1e-8 && identity && frame0 <= 1e-6,
        format!(
            "mean shift {gauge:.1e} (<= 1e-10), zero-flow warp identity {identity}, frame-0 fronto max error {frame0:.1e} (<= 1e-6)"
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (w, h) = (24, 20);
    let gt = DepthMap::from_values(Grid::from_fn(w, h, |_, _| rng.random_range(0.5..5.0)), DepthUnit::Metric);
    let pred = Grid::from_fn(w, h, |u, v| gt.values().get(u, v) * rng.random_range(0.7..1.6));
    let mask = Grid::from_fn(w, h, |_, _| rng.random_bool(0.8));
    let m = depth_metrics(&pred, &gt, Some(&mask)).map_err(|e| e.to_string())?;
    let (mut n, mut abs, mut d1, mut d2) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..w * h {
        if mask.data()[i] {
            let (p, g) = (pred.data()[i], gt.values().data()[i]);
            n += 1.0;
            abs += (p - g).abs() / g;
            let r = if p > g { p / g } else { g / p };
            d1 += if r < 1.25 { 1.0 } else { 0.0 };
            d2 += if r < 1.5625 { 1.0 } else { 0.0 };
        }
    }
    let depth_gap = (m.absrel - abs / n).abs().max((m.delta1 - d1 / n).abs()).max((m.delta2 - d2 / n).abs());

    let pn = NormalMap::from_vectors(Grid::from_fn(8, 8, |_, _| random_normal(&mut rng)));
    let gn = NormalMap::from_vectors(Grid::from_fn(8, 8, |_, _| random_normal(&mut rng)));
    let nm = normal_metrics(&pn, &gn, None).map_err(|e| e.to_string())?;
    let mut angles: Vec<f64> = (0..64)
        .map(|i| {
            let (a, b) = (pn.vectors().data()[i], gn.vectors().data()[i]);
            let c = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
            c.clamp(-1.0, 1.0).acos() * 180.0 / std::f64::consts::PI
        })
        .collect();
    let mean = angles.iter().sum::<f64>() / 64.0;
    let pct = angles.iter().filter(|&&a| a < 11.25).count() as f64 / 64.0;
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let normal_gap = (nm.mean_deg - mean).abs().max((nm.median_deg - angles[31]).abs()).max((nm.pct_11_25 - pct).abs());

    let cloud = |rng: &mut ChaCha8Rng| {
        PointCloud::new((0..512).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect(), None).unwrap()
    };
    let (p, q) = (cloud(&mut rng), cloud(&mut rng));
    let directed = |a: &PointCloud, b: &PointCloud| {
        let mut s = 0.0;
        for x in &a.points {
            let mut best = f64::INFINITY;
            for y in &b.points {
                let d = (x[0] - y[0]).abs() + (x[1] - y[1]).abs() + (x[2] - y[2]).abs();
                if d < best {
                    best = d;
                }
            }
            s += best;
        }
        s / a.points.len() as f64
    };
    let brute = 0.5 * (directed(&p, &q) + directed(&q, &p));
    let fast = chamfer_l1(&p, &q).map_err(|e| e.to_string())?;
    let chamfer_exact = fast.to_bits() == brute.to_bits();

    let pm = DepthMap::from_values(Grid::from_fn(w, h, |u, v| 0.2 + 0.5 * gt.values().get(u, v) + 0.1 * rng.random::<f64>() * (u + v) as f64 / 40.0), DepthUnit::Metric);
    let (base, _) = evaluate_depth(&pm, &gt, None, true).map_err(|e| e.to_string())?;
    let mut affine_gap: f64 = 0.0;
    for (a, b) in [(2.0, 3.0), (0.37, -0.05), (11.0, 0.5)] {
        let moved = DepthMap::from_values(pm.values().map(|x| a * x + b), DepthUnit::Metric);
        let (m2, _) = evaluate_depth(&moved, &gt, None, true).map_err(|e| e.to_string())?;
        affine_gap = affine_gap
            .max((m2.absrel - base.absrel).abs())
            .max((m2.delta1 - base.delta1).abs())
            .max((m2.delta2 - base.delta2).abs());
    }
    check(
        depth_gap <= 1e-9 && normal_gap <= 1e-9 && chamfer_exact && affine_gap <= 1e-9,
        format!(
            "depth metrics gap {depth_gap:.1e}, normal metrics gap {normal_gap:.1e}, chamfer bitwise equal {chamfer_exact} ({fast:.6}), affine invariance gap {affine_gap:.1e}"
        ),
    )
}

fn criterion_7() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = Vec::new();

    let img = io::PfmImage::new(7, 5, 3, (0..105).map(|_| f32::from_bits(rng.random())).collect()).unwrap();
    let p = dir.path().join("a.pfm");
    io::pfm_write(&p, &img).map_err(|e| e.to_string())?;
    let back = io::pfm_read(&p).map_err(|e| e.to_string())?;
    if img.data.iter().zip(&back.data).any(|(a, b)| a.to_bits() != b.to_bits()) {
        failures.push("pfm");
    }

    let du = Grid::from_fn(9, 4, |_, _| rng.random_range(-30.0f32..30.0) as f64);
    let dv = Grid::from_fn(9, 4, |_, _| rng.random_range(-30.0f32..30.0) as f64);
    let flow = FlowField::new(du, dv, Grid::new(9, 4, true)).unwrap();
    let p = dir.path().join("a.flo");
    io::flo_write(&p, &flow).map_err(|e| e.to_string())?;
    let fb = io::flo_read(&p).map_err(|e| e.to_string())?;
    let bits = |g: &Grid<f64>| g.data().iter().map(|x| (*x as f32).to_bits()).collect::<Vec<_>>();
    if bits(&fb.du) != bits(&flow.du) || bits(&fb.dv) != bits(&flow.dv) || fb != flow {
        failures.push("flo");
    }

    let pts: Vec<[f64; 3]> = (0..1000).map(|_| std::array::from_fn(|_| rng.random_range(-5.0f32..5.0) as f64)).collect();
    let pc = PointCloud::new(pts, Some((0..1000).map(|_| rng.random()).collect())).unwrap();
    let p = dir.path().join("a.ply");
    io::ply_write(&pc, &p, PlyMode::BinaryLittleEndian).map_err(|e| e.to_string())?;
    if io::ply_read(&p).map_err(|e| e.to_string())? != pc {
        failures.push("ply");
    }

    let rel = DepthMap::from_values(Grid::from_fn(16, 16, |_, _| rng.random_range(0.001..1.0)), DepthUnit::Relative);
    let p = dir.path().join("d.png");
    io::depth_png16_write(&p, &rel).map_err(|e| e.to_string())?;
    let rb = io::depth_png16_read(&p).map_err(|e| e.to_string())?;
    let depth_q = (0..256)
        .map(|i| (rb.values().data()[i] - rel.values().data()[i]).abs())
        .fold(0.0f64, f64::max);
    if depth_q > 0.5 / 65535.0 + 1e-15 {
        failures.push("depth png");
    }

    let nm = NormalMap::from_vectors(Grid::from_fn(16, 16, |_, _| random_normal(&mut rng)));
    let p = dir.path().join("n.png");
    io::normal_png_write(&p, &nm).map_err(|e| e.to_string())?;
    let bytes = io::png::encode_normal8;
    let normal_q = nm
        .vectors()
        .data()
        .iter()
        .flat_map(|n| {
            let d = io::png::decode_normal8(bytes(*n));
            (0..3).map(move |c| (d[c] - n[c]).abs())
        })
        .fold(0.0f64, f64::max);
    let nb = io::normal_png_read(&p).map_err(|e| e.to_string())?;
    let unit = nb.vectors().data().iter().all(|n| ((n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt() - 1.0).abs() < 1e-12);
    if normal_q > 1.0 / 255.0 + 1e-12 || !unit {
        failures.push("normal png");
    }

    let m = io::manifest_parse(
        "[intrinsics]\nfx = 1.0\nfy = 1.0\ncx = 0.0\ncy = 0.0\nwidth = 16\nheight = 16\n[[frames]]\ndepth = \"d.pfm\"\nnormal = \"n.pfm\"\n",
        dir.path(),
    )
    .map_err(|e| e.to_string())?;
    let rt1 = LambdaSet { cd: 20.0, cb: 200.0, rd: 20.0, rb: 20.0 };
    let rlb = LambdaSet { cd: 20.0, cb: 200.0, rd: 2.0, rb: 2.0 };
    if m.lambdas != rt1 || LambdaSet::preset("rlbench") != Some(rlb) || LambdaSet::preset("bridge") != Some(rt1) {
        failures.push("lambda presets");
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!("pfm/flo/ply bitwise, depth png error {depth_q:.2e}, normal png error {normal_q:.2e}, presets 20/200/20/20 and 2/2")
        } else {
            format!("failed: {}", failures.join(", "))
        },
    )
}

fn criterion_8() -> Outcome {
    let pattern = |shift: f64| {
        Grid::from_fn(64, 64, |u, v| {
            let x = u as f64 - shift;
            0.5 + 0.25 * (std::f64::consts::TAU * x / 32.0).sin() + 0.25 * (std::f64::consts::TAU * v as f64 / 32.0).cos()
        })
    };
    let f = horn_schunck(&pattern(1.0), &pattern(0.0), HornSchunckParams::default()).map_err(|e| e.to_string())?;
    let mut e = 0.0;
    let mut n = 0;
    for v in 8..56 {
        for u in 8..56 {
            let (a, b) = f.at(u, v).unwrap();
            e += ((a - 1.0).powi(2) + b * b).sqrt();
            n += 1;
        }
    }
    let epe = e / n as f64;
    let mag = flow_magnitude(&f);
    let mean_mag = mag.data().iter().sum::<f64>() / mag.len() as f64;
    check(epe < 0.5, format!("interior mean endpoint error {epe:.3} px (< 0.5), mean magnitude {mean_mag:.3}"))
}

/// Mean |residual| over rows whose pixels both lie on the surface and, when
/// `max_tilt_deg` is set, whose ground-truth normals tilt at most that much
/// from the optical axis (a resolution-independent domain).
fn mean_residual(kind: SceneKind, n: usize, max_tilt_deg: Option<f64>) -> Result<f64, String> {
    let k = camera(n);
    let seq = generate(&SceneSpec::new(kind, n, n), &k).map_err(|e| e.to_string())?;
    let f = &seq.frames[0];
    let sys = assemble_system(&f.gt_normal, &k).map_err(|e| e.to_string())?;
    let d = sys.pixel_index().gather(f.gt_depth.to_log().unwrap().values().data());
    let on_surface = |i: usize| {
        let (u, v) = sys.pixel_index().coords(i);
        let smooth = max_tilt_deg.is_none_or(|t| -f.gt_normal.at(u, v).unwrap()[2] >= t.to_radians().cos());
        smooth && f.object_mask.as_ref().is_none_or(|m| *m.get(u, v))
    };
    let res: Vec<f64> = sys
        .rows()
        .iter()
        .filter(|r| on_surface(r.pixel) && on_surface(r.neighbor))
        .map(|r| r.residual(&d).abs())
        .collect();
    Ok(res.iter().sum::<f64>() / res.len() as f64)
}

fn criterion_9() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (kind, tilt) in [(SceneKind::SlantedPlane, None), (SceneKind::Sphere, Some(60.0))] {
        let a = mean_residual(kind, 128, tilt)?;
        let b = mean_residual(kind, 256, tilt)?;
        let ratio = a / b;
        ok &= (1.8..=2.2).contains(&ratio) && a < 5e-2;
        parts.push(format!("{kind:?} {a:.3e} -> {b:.3e} (ratio {ratio:.3})"));
    }
    // near the limb the depth is not smooth; reported, not gated
    let a = mean_residual(SceneKind::Sphere, 128, None)?;
    let b = mean_residual(SceneKind::Sphere, 256, None)?;
    parts.push(format!("full sphere disk ratio {:.3}", a / b));
    check(ok, parts.join(", "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("slanted-plane recovery", criterion_1),
        ("discontinuity preservation", criterion_2),
        ("temporal consistency ablation", criterion_3),
        ("solver correctness", criterion_4),
        ("gauge and identity properties", criterion_5),
        ("metric oracle equivalence", criterion_6),
        ("format fidelity", criterion_7),
        ("flow fallback", criterion_8),
        ("discretization convergence", criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = format!("criterion {}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|x| name.contains(x.as_str()) || id == *x) {
            continue;
        }
        let t0 = Instant::now();
        let out = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t0.elapsed().as_secs_f64();
        match out {
            Ok(d) => println!("{id} PASS [{name}] {d} ({secs:.1} s)"),
            Err(d) => {
                failed += 1;
                println!("{id} FAIL [{name}] {d} ({secs:.1} s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
