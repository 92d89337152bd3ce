//! Acceptance run: every criterion in sequence, one PASS/FAIL line each.
//!
//! `cargo test -p mvdmm --test acceptance -- --nocapture` shows the lines.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mvdmm::dmm::{accumulate_dmm, accumulate_ramdmm, Window};
use mvdmm::geometry::{depth_to_points, project_points, rotate_points, Intrinsics, Plane, PointCloud, ProjectedMap, RotationSpec};
use mvdmm::learn::{fuse_scores, pca_fit, softmax, svm_train, PcaTarget, ScoreVector, SvmParams};
use mvdmm::motion::{estimate_flow, normalize_magnitude, FlowParams, MagnitudeMap};
use mvdmm::neural::{conv3d_forward, maxpool3d, Architecture, ConvLayer, NetworkSpec, PoolLayer, Tensor4};
use mvdmm::pipeline::{
    build_streams, evaluate, generate_synthetic, generate_synthetic_dataset, plane_motion, read_manifest, train, Action,
    NoiseLevel, PipelineConfig, Split, SynthSpec,
};
use mvdmm::videoio::DepthFrame;
use mvdmm::Grid;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn topology() -> Outcome {
    let cfg = PipelineConfig::default();
    let n = build_streams(&cfg).map_err(|e| e.to_string())?.len();
    ensure!(n == 132, "default config has {n} streams");
    ensure!(cfg.angles.len() == 7, "{} view angles", cfg.angles.len());
    Ok(format!("{n} streams, {} angles", cfg.angles.len()))
}

fn maps_from(values: &[Vec<f64>], w: usize) -> Vec<ProjectedMap> {
    values
        .iter()
        .map(|v| ProjectedMap {
            plane: Plane::Xy,
            angle: 0.0,
            grid: Grid::from_vec(w, v.len() / w, v.clone()).unwrap(),
            bins: Default::default(),
        })
        .collect()
}

fn dmm_algebra() -> Outcome {
    let still = NoiseLevel {
        depth_sigma_mm: 0.0,
        dropout: 0.0,
        rgb_sigma: 0.0,
    };
    let spec = SynthSpec {
        actions: vec![Action::Static, Action::Translate],
        subjects: 2,
        cameras: 1,
        frames: 12,
        noise: still,
        ..SynthSpec::default()
    };
    let cfg = PipelineConfig::desk();
    let mut templates = 0;
    for sample in generate_synthetic(&spec).map_err(|e| e.to_string())?.iter().filter(|s| s.meta.label == 0) {
        for plane in Plane::ALL {
            let m = plane_motion(sample.depth.frames(), plane, 0.0, &cfg).map_err(|e| e.to_string())?;
            for w in [Window::Frames(5), Window::All] {
                for t in m.templates(w, None, 0.0).map_err(|e| e.to_string())? {
                    ensure!(t.grid.as_slice().iter().all(|&v| v == 0.0), "static {plane:?} template nonzero");
                    templates += 1;
                }
            }
        }
    }

    let mut r = rng(2);
    for case in 0..1000 {
        let n = r.random_range(3..20);
        let vals: Vec<Vec<f64>> = (0..n).map(|_| (0..12).map(|_| r.random_range(0..2000) as f64).collect()).collect();
        let m = maps_from(&vals, 4);
        let t0 = r.random_range(0..n - 1);
        let len = r.random_range(1..n - t0);
        let mut cuts: Vec<usize> = (1..len).filter(|_| r.random_bool(0.3)).collect();
        cuts.insert(0, 0);
        cuts.push(len);
        let whole = accumulate_dmm(&m, t0, Window::Frames(len)).map_err(|e| e.to_string())?;
        let mut sum = vec![0.0; 12];
        for seg in cuts.windows(2) {
            let part = accumulate_dmm(&m, t0 + seg[0], Window::Frames(seg[1] - seg[0])).map_err(|e| e.to_string())?;
            for (s, v) in sum.iter_mut().zip(part.grid.as_slice()) {
                *s += v;
            }
        }
        ensure!(sum == whole.grid.as_slice(), "partition case {case} is not additive");
    }

    for case in 0..200 {
        let n = r.random_range(2..12);
        let vals: Vec<Vec<f64>> = (0..n).map(|_| (0..6).map(|_| r.random_range(-500.0..500.0)).collect()).collect();
        let m = maps_from(&vals, 3);
        let ones: Vec<MagnitudeMap> = (0..n - 1).map(|_| MagnitudeMap::uniform(3, 2, 1.0)).collect();
        let g: Vec<MagnitudeMap> = (0..n - 1)
            .map(|_| MagnitudeMap {
                g: Grid::from_fn(3, 2, |_, _| r.random_range(0.0..=1.0)),
                normalized: true,
            })
            .collect();
        let t = r.random_range(0..n - 1);
        let plain = accumulate_dmm(&m, t, Window::All).map_err(|e| e.to_string())?;
        let unit = accumulate_ramdmm(&m, &ones, t, Window::All).map_err(|e| e.to_string())?;
        ensure!(unit == plain, "unit weights differ from the plain map in case {case}");
        let weighted = accumulate_ramdmm(&m, &g, t, Window::All).map_err(|e| e.to_string())?;
        ensure!(
            weighted.grid.as_slice().iter().zip(plain.grid.as_slice()).all(|(a, b)| a <= b),
            "weighted exceeds plain in case {case}"
        );
    }
    Ok(format!("{templates} static templates zero, 1000 partitions additive, 200 weight cases"))
}

fn random_cloud(r: &mut ChaCha8Rng, n: usize) -> PointCloud {
    PointCloud {
        points: (0..n)
            .map(|_| [r.random_range(-1500.0..1500.0), r.random_range(-1000.0..1000.0), r.random_range(500.0..4500.0)])
            .collect(),
    }
}

fn geometry() -> Outcome {
    let mut r = rng(3);
    let mut worst = 0.0f64;
    for alpha in PipelineConfig::default().angles {
        for _ in 0..20 {
            let cloud = random_cloud(&mut r, 200);
            let forward = RotationSpec::new(alpha, 0.0).map_err(|e| e.to_string())?;
            let back = RotationSpec::new(-alpha, 0.0).map_err(|e| e.to_string())?;
            let round = rotate_points(&rotate_points(&cloud, &forward), &back);
            for (p, q) in cloud.points.iter().zip(&round.points) {
                for k in 0..3 {
                    worst = worst.max((p[k] - q[k]).abs());
                }
            }
        }
    }
    ensure!(worst < 1e-6, "round trip error {worst} mm");

    let mut norm_err = 0.0f64;
    for _ in 0..200 {
        let cloud = random_cloud(&mut r, 50);
        let spec = RotationSpec::new(r.random_range(-180.0..=180.0), r.random_range(-180.0..=180.0)).map_err(|e| e.to_string())?;
        for (p, q) in cloud.points.iter().zip(&rotate_points(&cloud, &spec).points) {
            let n0 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            let n1 = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            norm_err = norm_err.max(((n1 - n0) / n0).abs());
        }
    }
    ensure!(norm_err < 1e-9, "relative norm change {norm_err}");

    let (w, h) = (64, 48);
    let intr = Intrinsics::kinect_default(w, h);
    let identity = RotationSpec::new(0.0, 0.0).map_err(|e| e.to_string())?;
    for case in 0..20 {
        let depth = Grid::from_fn(w, h, |_, _| if r.random_bool(0.2) { 0 } else { r.random_range(500..4500) });
        let frame = DepthFrame::new(depth, 0);
        let back = project_points(&rotate_points(&depth_to_points(&frame, &intr), &identity), &intr, w, h);
        for (a, b) in frame.depth.as_slice().iter().zip(back.depth.as_slice()) {
            ensure!(*a == 0 || a == b, "identity reprojection moved a pixel in case {case}");
        }
    }
    Ok(format!("round trip {worst:.1e} mm, norm {norm_err:.1e}, identity exact"))
}

fn flow() -> Outcome {
    use std::f64::consts::PI;
    let p = FlowParams::default();
    let texture = Grid::from_fn(32, 24, |x, y| 0.5 + 0.2 * (x as f64 * 0.7).sin() + 0.2 * (y as f64 * 0.45).cos());
    let f = estimate_flow(&texture, &texture, &p).map_err(|e| e.to_string())?;
    let peak = f.ox.as_slice().iter().chain(f.oy.as_slice()).fold(0.0f64, |m, v| m.max(v.abs()));
    ensure!(peak < 1e-6, "identical frames give flow {peak}");

    let square = |shift: i64| {
        Grid::from_fn(40, 40, |x, y| {
            let (sx, sy) = (x as i64 - shift, y as i64);
            if (12..28).contains(&sx) && (12..28).contains(&sy) {
                0.6 + 0.3 * (2.0 * PI * sx as f64 / 8.0).sin() * (2.0 * PI * sy as f64 / 8.0).cos()
            } else {
                0.1
            }
        })
    };
    let f = estimate_flow(&square(0), &square(1), &p).map_err(|e| e.to_string())?;
    let mut sum = 0.0;
    for y in 12..28 {
        for x in 12..28 {
            sum += f.ox.get(x, y);
        }
    }
    let mean = sum / 256.0;
    ensure!((0.8..=1.2).contains(&mean), "mean in-square ox {mean}");

    let mut r = rng(4);
    for case in 0..500 {
        let g = Grid::from_fn(r.random_range(1..9), r.random_range(1..9), |_, _| r.random_range(0.0..100.0));
        let m = MagnitudeMap { g, normalized: false };
        let n = normalize_magnitude(&m);
        ensure!(normalize_magnitude(&n) == n, "normalization not idempotent in case {case}");
        let k = 2f64.powi(r.random_range(-30..30));
        let scaled = MagnitudeMap { g: m.g.map(|v| v * k), normalized: false };
        ensure!(normalize_magnitude(&scaled) == n, "scale {k} changes the normalized map in case {case}");
    }
    Ok(format!("static peak {peak:.1e}, mean ox {mean:.3}, 500 normalization cases"))
}

fn conv_oracle(input: &Tensor4, layer: &ConvLayer) -> Vec<f64> {
    let [cin, d, h, w] = input.shape();
    let [kr, kp, kq] = layer.kernel;
    let [sz, sy, sx] = layer.stride;
    let [pz, py, px] = layer.padding;
    let mut out = Vec::new();
    for j in 0..layer.out_maps {
        for z in 0..(d + 2 * pz - kr) / sz + 1 {
            for y in 0..(h + 2 * py - kp) / sy + 1 {
                for x in 0..(w + 2 * px - kq) / sx + 1 {
                    let mut s = layer.bias[j] as f64;
                    for m in 0..cin {
                        for a in 0..kr {
                            for b in 0..kp {
                                for c in 0..kq {
                                    let (iz, iy, ix) = (z * sz + a, y * sy + b, x * sx + c);
                                    if iz < pz || iy < py || ix < px || iz - pz >= d || iy - py >= h || ix - px >= w {
                                        continue;
                                    }
                                    let wi = (((j * cin + m) * kr + a) * kp + b) * kq + c;
                                    s += layer.weights[wi] as f64 * input.get(m, iz - pz, iy - py, ix - px) as f64;
                                }
                            }
                        }
                    }
                    out.push(s.tanh());
                }
            }
        }
    }
    out
}

fn pool_oracle(input: &Tensor4, k: [usize; 3], s: [usize; 3]) -> Vec<f32> {
    let [c, d, h, w] = input.shape();
    let mut out = Vec::new();
    for ch in 0..c {
        for z in 0..(d - k[0]) / s[0] + 1 {
            for y in 0..(h - k[1]) / s[1] + 1 {
                for x in 0..(w - k[2]) / s[2] + 1 {
                    let mut m = f32::NEG_INFINITY;
                    for a in 0..k[0] {
                        for b in 0..k[1] {
                            for c in 0..k[2] {
                                m = m.max(input.get(ch, z * s[0] + a, y * s[1] + b, x * s[2] + c));
                            }
                        }
                    }
                    out.push(m);
                }
            }
        }
    }
    out
}

fn neural() -> Outcome {
    let mut r = rng(5);
    let mut worst = 0.0f64;
    for case in 0..120 {
        let shape = [r.random_range(1..=4), r.random_range(3..=8), r.random_range(3..=8), r.random_range(3..=8)];
        let x = Tensor4::from_fn(shape, |_, _, _, _| r.random_range(-1.0..1.0));
        let kernel = [r.random_range(1..=3), r.random_range(1..=3), r.random_range(1..=3)];
        let out_maps = r.random_range(1..=4);
        // every fifth layer has large weights so that tanh saturates
        let scale = if case % 5 == 0 { 40.0 } else { 0.5 };
        let n = shape[0] * out_maps * kernel.iter().product::<usize>();
        let mut layer = ConvLayer::new(
            shape[0],
            out_maps,
            kernel,
            (0..n).map(|_| r.random_range(-scale..scale)).collect(),
            (0..out_maps).map(|_| r.random_range(-0.5..0.5)).collect(),
        )
        .map_err(|e| e.to_string())?;
        layer.stride = [r.random_range(1..=2), r.random_range(1..=2), r.random_range(1..=2)];
        layer.padding = [r.random_range(0..=1), r.random_range(0..=1), r.random_range(0..=1)];
        let y = conv3d_forward(&x, &layer).map_err(|e| e.to_string())?;
        let oracle = conv_oracle(&x, &layer);
        ensure!(y.len() == oracle.len(), "case {case}: {} outputs, oracle {}", y.len(), oracle.len());
        for (a, b) in y.as_slice().iter().zip(&oracle) {
            worst = worst.max((*a as f64 - b).abs());
            ensure!(a.abs() < 1.0, "case {case}: activation {a} outside (-1, 1)");
        }

        let k = [r.random_range(1..=2), r.random_range(1..=3), r.random_range(1..=3)];
        let s = [r.random_range(1..=2), r.random_range(1..=2), r.random_range(1..=2)];
        let pooled = maxpool3d(&x, &PoolLayer::new(k, s)).map_err(|e| e.to_string())?;
        ensure!(pooled.as_slice() == pool_oracle(&x, k, s).as_slice(), "pool case {case} differs");
    }
    ensure!(worst < 1e-6, "conv differs from the oracle by {worst}");

    let arch = Architecture::c3d(16, 112);
    let net = NetworkSpec::seeded(&arch, 1).map_err(|e| e.to_string())?;
    let inferred = net.infer_shapes().map_err(|e| e.to_string())?;
    let input = Tensor4::from_fn([3, 16, 112, 112], |c, z, y, x| ((c * 7 + z * 3 + y + 2 * x) % 17) as f32 / 16.0);
    let trace = net.forward_trace(&input, None).map_err(|e| e.to_string())?;
    let executed: Vec<[usize; 4]> = trace.iter().map(Tensor4::shape).collect();
    ensure!(executed == inferred, "executed shapes {executed:?} != inferred {inferred:?}");
    Ok(format!("120 conv/pool cases, max error {worst:.1e}, {} C3D layers", executed.len()))
}

fn learning() -> Outcome {
    let mut r = rng(6);
    let dir = [[0.3, -1.2, 0.5, 2.0, 0.1, -0.7], [1.0, 0.2, -0.4, 0.0, 0.9, 0.3]];
    let samples: Vec<Vec<f32>> = (0..30)
        .map(|_| {
            let (a, b): (f32, f32) = (r.random_range(-3.0..3.0), r.random_range(-3.0..3.0));
            (0..6).map(|j| 1.5 - j as f32 * 0.4 + a * dir[0][j] + b * dir[1][j]).collect()
        })
        .collect();
    let pca = pca_fit(&samples, PcaTarget::default()).map_err(|e| e.to_string())?;
    ensure!(pca.k() == 2, "rank-2 data kept {} components", pca.k());
    for i in 0..pca.k() {
        for j in 0..pca.k() {
            let d: f64 = pca.components[i].iter().zip(&pca.components[j]).map(|(a, b)| *a as f64 * *b as f64).sum();
            ensure!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-6, "components {i},{j} dot {d}");
        }
    }
    for s in &samples {
        let back = pca.reconstruct(&pca.project(s).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        for (a, b) in back.iter().zip(s) {
            ensure!((a - b).abs() <= 1e-6 * (1.0 + b.abs()), "reconstruction {a} vs {b}");
        }
    }

    let mut b = rng(7);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (label, cx) in [(0u32, -2.0f32), (1, 2.0)] {
        for _ in 0..50 {
            xs.push(vec![cx + b.random_range(-1.0..1.0), b.random_range(-1.0..1.0)]);
            ys.push(label);
        }
    }
    let svm = svm_train(&xs, &ys, &SvmParams { lambda: 1e-3, epochs: 20, seed: 7 }).map_err(|e| e.to_string())?;
    let correct = xs.iter().zip(&ys).filter(|(x, y)| svm.labels[svm.predict_index(x).unwrap()] == **y).count();
    ensure!(correct == xs.len(), "SVM fits {correct}/{} blob points", xs.len());

    for case in 0..1000 {
        let m: Vec<f64> = (0..r.random_range(2..10)).map(|_| r.random_range(-20.0..20.0)).collect();
        let s = ScoreVector::normalized(softmax(&m));
        ensure!(s.argmax() == mvdmm::learn::argmax(&m), "softmax moved the argmax in case {case}");
    }

    for case in 0..200 {
        let classes = r.random_range(2..6);
        let streams: Vec<ScoreVector> = (0..r.random_range(1..10))
            .map(|_| ScoreVector::normalized(softmax(&(0..classes).map(|_| r.random_range(-4.0..4.0)).collect::<Vec<_>>())))
            .collect();
        let fused = fuse_scores(&streams).map_err(|e| e.to_string())?;
        let mut perm = streams.clone();
        for i in (1..perm.len()).rev() {
            perm.swap(i, r.random_range(0..=i));
        }
        ensure!(fuse_scores(&perm).map_err(|e| e.to_string())? == fused, "fusion depends on order in case {case}");
        let one = &streams[0];
        ensure!(fuse_scores(std::slice::from_ref(one)).map_err(|e| e.to_string())? == *one, "single fusion changed case {case}");
        ensure!(fuse_scores(&[one.clone(), one.clone(), one.clone()]).map_err(|e| e.to_string())? == *one, "fusion not idempotent in case {case}");
    }
    let example = fuse_scores(&[ScoreVector::normalized(vec![0.2, 0.8]), ScoreVector::normalized(vec![0.4, 0.6])])
        .map_err(|e| e.to_string())?;
    ensure!(example.values == [0.3, 0.7], "fusion example gave {:?}", example.values);
    Ok("PCA rank-2 recovery, SVM 100/100, 1000 softmax cases, fusion exact".into())
}

fn benchmark_split() -> Split {
    Split::CrossSubject {
        train: BTreeSet::from([0, 2, 4]),
        test: None,
    }
}

/// Full synthetic run from files on disk; returns the report CSV.
fn benchmark_csv() -> Result<(String, f64, Option<(String, f64)>), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SynthSpec {
        seed: 42,
        ..SynthSpec::default()
    };
    let e = |e: mvdmm::Error| e.to_string();
    generate_synthetic_dataset(&spec, dir.path()).map_err(e)?;
    let records = read_manifest(&dir.path().join("manifest.tsv")).map_err(e)?;
    let cfg = PipelineConfig::desk();
    let split = benchmark_split();
    let plan = train(&records, &split, &cfg).map_err(e)?;
    let report = evaluate(&records, &split, &plan).map_err(e)?;
    print!("{}", report.to_table());
    let best = report.best_stream().map(|(k, v)| (k.to_string(), v));
    Ok((report.to_csv(), report.overall, best))
}

fn main_run(first: &mut Option<String>) -> Outcome {
    let (csv, overall, best) = benchmark_csv()?;
    *first = Some(csv);
    let (name, b) = best.ok_or("no single-stream accuracies")?;
    ensure!(overall >= 0.90, "overall accuracy {overall:.3} < 0.90 (best stream {name} {b:.3})");
    ensure!(overall > b, "overall {overall:.3} does not beat stream {name} at {b:.3}");
    Ok(format!("overall {overall:.3} > best single stream {name} {b:.3}"))
}

fn determinism(first: &Option<String>) -> Outcome {
    let (csv, _, _) = benchmark_csv()?;
    let first = first.as_ref().ok_or("criterion 7 produced no report")?;
    ensure!(&csv == first, "report CSV differs between identical runs");
    Ok(format!("{} CSV bytes identical", csv.len()))
}

#[test]
fn acceptance() {
    let mut first = None;
    let mut results: Vec<(u32, &str, Duration, Duration, Outcome)> = Vec::new();
    let mut run = |n: u32, name: &'static str, limit: u64, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let out = f();
        let elapsed = t.elapsed();
        let limit = Duration::from_secs(limit);
        let out = match out {
            Ok(m) if elapsed > limit => Err(format!("{m}; took {elapsed:.1?}, limit {limit:?}")),
            o => o,
        };
        let (tag, msg) = match &out {
            Ok(m) => ("PASS", m),
            Err(m) => ("FAIL", m),
        };
        println!("{tag} criterion {n} ({name}, {elapsed:.1?}): {msg}");
        results.push((n, name, elapsed, limit, out));
    };
    run(1, "stream topology", 1, &mut topology);
    run(2, "DMM algebra", 10, &mut dmm_algebra);
    run(3, "geometry", 30, &mut geometry);
    run(4, "flow", 30, &mut flow);
    run(5, "neural oracles", 120, &mut neural);
    run(6, "learning", 60, &mut learning);
    run(7, "synthetic benchmark", 600, &mut || main_run(&mut first));
    run(8, "determinism", 600, &mut || determinism(&first));

    println!("\nsummary:");
    for (n, name, elapsed, _, out) in &results {
        println!("  {} {n} {name} ({elapsed:.1?})", if out.is_ok() { "PASS" } else { "FAIL" });
    }
    let failed: Vec<u32> = results.iter().filter(|r| r.4.is_err()).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
