//! Convolution, pooling and feature extraction checked against direct
//! nested-loop evaluation.

use mvdmm::dmm::Clip;
use mvdmm::neural::{
    concat_views, conv3d_forward, extract_features, maxpool3d, Architecture, ConvLayer, FeatureVector, NetworkSpec,
    PoolLayer, Provenance, Tensor4,
};
use mvdmm::Grid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor4 {
    Tensor4::from_fn(shape, |_, _, _, _| rng.random_range(-1.0..1.0))
}

/// Six nested loops over output position and kernel offset, straight from
/// the definition, with explicit zero padding checks.
fn conv_oracle(input: &Tensor4, layer: &ConvLayer) -> Vec<f64> {
    let [cin, d, h, w] = input.shape();
    let [kr, kp, kq] = layer.kernel;
    let [sz, sy, sx] = layer.stride;
    let [pz, py, px] = layer.padding;
    let od = (d + 2 * pz - kr) / sz + 1;
    let oh = (h + 2 * py - kp) / sy + 1;
    let ow = (w + 2 * px - kq) / sx + 1;
    let mut out = Vec::new();
    for j in 0..layer.out_maps {
        for z in 0..od {
            for y in 0..oh {
                for x in 0..ow {
                    let mut s = layer.bias[j] as f64;
                    for m in 0..cin {
                        for r in 0..kr {
                            for p in 0..kp {
                                for q in 0..kq {
                                    let (iz, iy, ix) = (z * sz + r, y * sy + p, x * sx + q);
                                    if iz < pz || iy < py || ix < px || iz - pz >= d || iy - py >= h || ix - px >= w {
                                        continue;
                                    }
                                    let wi = (((j * cin + m) * kr + r) * kp + p) * kq + q;
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
                    for r in 0..k[0] {
                        for p in 0..k[1] {
                            for q in 0..k[2] {
                                m = m.max(input.get(ch, z * s[0] + r, y * s[1] + p, x * s[2] + q));
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

fn random_conv(rng: &mut ChaCha8Rng, cin: usize, cout: usize, kernel: [usize; 3]) -> ConvLayer {
    let n = cin * cout * kernel.iter().product::<usize>();
    ConvLayer::new(
        cin,
        cout,
        kernel,
        (0..n).map(|_| rng.random_range(-0.5..0.5)).collect(),
        (0..cout).map(|_| rng.random_range(-0.5..0.5)).collect(),
    )
    .unwrap()
}

#[test]
fn identity_kernel_is_tanh() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_tensor(&mut rng, [1, 3, 4, 5]);
    let layer = ConvLayer::new(1, 1, [1, 1, 1], vec![1.0], vec![0.0]).unwrap();
    let y = conv3d_forward(&x, &layer).unwrap();
    for (a, b) in x.as_slice().iter().zip(y.as_slice()) {
        assert_eq!(*b, (*a as f64).tanh() as f32);
    }
}

#[test]
fn zero_weights_give_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_tensor(&mut rng, [2, 4, 4, 4]);
    let layer = ConvLayer::new(2, 3, [3, 3, 3], vec![0.0; 162], vec![0.0; 3]).unwrap();
    assert!(conv3d_forward(&x, &layer).unwrap().as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn conv_shape_mismatch() {
    let x = Tensor4::zeros([2, 4, 4, 4]);
    let layer = ConvLayer::new(3, 1, [1, 1, 1], vec![0.0; 3], vec![0.0]).unwrap();
    assert!(conv3d_forward(&x, &layer).is_err());
    let big = ConvLayer::new(2, 1, [5, 1, 1], vec![0.0; 10], vec![0.0]).unwrap();
    assert!(conv3d_forward(&x, &big).is_err());
}

#[test]
fn conv_matches_oracle_on_documented_case() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_tensor(&mut rng, [2, 4, 6, 6]);
    let layer = random_conv(&mut rng, 2, 3, [3, 3, 3]);
    let y = conv3d_forward(&x, &layer).unwrap();
    assert_eq!(y.shape(), [3, 2, 4, 4]);
    for (a, b) in y.as_slice().iter().zip(conv_oracle(&x, &layer)) {
        assert!((*a as f64 - b).abs() < 1e-6);
    }
}

#[test]
fn conv_with_stride_and_padding_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let x = random_tensor(&mut rng, [2, 5, 7, 6]);
        let mut layer = random_conv(&mut rng, 2, 2, [3, 2, 3]);
        layer.stride = [rng.random_range(1..3), rng.random_range(1..3), rng.random_range(1..3)];
        layer.padding = [rng.random_range(0..2), rng.random_range(0..2), rng.random_range(0..2)];
        let y = conv3d_forward(&x, &layer).unwrap();
        let oracle = conv_oracle(&x, &layer);
        assert_eq!(y.len(), oracle.len());
        for (a, b) in y.as_slice().iter().zip(oracle) {
            assert!((*a as f64 - b).abs() < 1e-6);
        }
    }
}

#[test]
fn pool_examples() {
    let c = Tensor4::from_vec([2, 4, 4, 4], vec![0.25; 128]).unwrap();
    let out = maxpool3d(&c, &PoolLayer::new([2, 2, 2], [2, 2, 2])).unwrap();
    assert_eq!(out.shape(), [2, 2, 2, 2]);
    assert!(out.as_slice().iter().all(|&v| v == 0.25));

    let t = Tensor4::from_vec([1, 2, 2, 2], (1..=8).map(|v| v as f32).collect()).unwrap();
    let out = maxpool3d(&t, &PoolLayer::new([2, 2, 2], [2, 2, 2])).unwrap();
    assert_eq!(out.as_slice(), &[8.0]);

    assert!(maxpool3d(&t, &PoolLayer::new([3, 1, 1], [1, 1, 1])).is_err());
}

#[test]
fn pool_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let shape = [rng.random_range(1..5), rng.random_range(2..9), rng.random_range(2..9), rng.random_range(2..9)];
        let x = random_tensor(&mut rng, shape);
        let k = [rng.random_range(1..3), 2, 2];
        let s = [k[0], rng.random_range(1..3), 2];
        let y = maxpool3d(&x, &PoolLayer::new(k, s)).unwrap();
        assert_eq!(y.as_slice(), pool_oracle(&x, k, s).as_slice());
    }
}

fn synthetic_clip(frames: usize, size: usize, seed: u64) -> Clip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Clip::new(
        (0..frames)
            .map(|_| Grid::from_fn(size, size, |_, _| [rng.random(), rng.random(), rng.random()]))
            .collect(),
    )
    .unwrap()
}

#[test]
fn compact_network_feature_length_and_determinism() {
    let arch = Architecture::compact(16, 32, 32, &[8, 16], 32);
    let net = NetworkSpec::seeded(&arch, 9).unwrap();
    let clip = synthetic_clip(16, 32, 10);
    let a = extract_features(&clip, &net).unwrap();
    let b = extract_features(&clip, &net).unwrap();
    assert_eq!(a.len(), 32);
    assert_eq!(a, b);
}

#[test]
fn frame_order_matters() {
    let arch = Architecture::compact(8, 16, 16, &[4, 4], 16);
    let net = NetworkSpec::seeded(&arch, 21).unwrap();
    let clip = synthetic_clip(8, 16, 22);
    let mut rev = clip.frames().to_vec();
    rev.reverse();
    let reversed = Clip::new(rev).unwrap();
    assert_ne!(
        extract_features(&clip, &net).unwrap(),
        extract_features(&reversed, &net).unwrap()
    );
}

#[test]
fn clip_shape_mismatch_names_input() {
    let net = NetworkSpec::seeded(&Architecture::compact(16, 32, 32, &[4, 4], 8), 1).unwrap();
    let err = extract_features(&synthetic_clip(10, 32, 1), &net).unwrap_err();
    assert!(err.to_string().contains("expects input"));
}

#[test]
fn weight_file_round_trip() {
    let net = NetworkSpec::seeded(&Architecture::compact(8, 16, 16, &[4, 8], 16), 77).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.weights");
    net.save(&path).unwrap();
    let loaded = NetworkSpec::load(&path).unwrap();
    let clip = synthetic_clip(8, 16, 5);
    assert_eq!(
        extract_features(&clip, &net).unwrap().values,
        extract_features(&clip, &loaded).unwrap().values
    );
    assert_eq!(loaded.to_bytes(), net.to_bytes());

    let bytes = net.to_bytes();
    assert!(NetworkSpec::from_bytes(&bytes[..bytes.len() - 3]).is_err());
}

#[test]
fn c3d_shape_algebra() {
    let shapes = Architecture::c3d(16, 112).infer_shapes().unwrap();
    let expected = [
        [64, 16, 112, 112],
        [64, 16, 56, 56],
        [128, 16, 56, 56],
        [128, 8, 28, 28],
        [256, 8, 28, 28],
        [256, 8, 28, 28],
        [256, 4, 14, 14],
        [512, 4, 14, 14],
        [512, 4, 14, 14],
        [512, 2, 7, 7],
        [512, 2, 7, 7],
        [512, 2, 7, 7],
        [512, 1, 3, 3],
        [4608, 1, 1, 1],
        [4096, 1, 1, 1],
        [4096, 1, 1, 1],
    ];
    assert_eq!(shapes, expected);
}

#[test]
fn c3d_adapts_to_other_clip_lengths() {
    for frames in [10, 25] {
        let shapes = Architecture::c3d(frames, 112).infer_shapes().unwrap();
        assert_eq!(shapes[12], [512, 1, 3, 3], "frames {frames}");
        assert_eq!(shapes[13], [4608, 1, 1, 1]);
    }
}

fn fv(values: &[f32], clip_end: usize) -> FeatureVector {
    FeatureVector::new(values.to_vec()).with_provenance(Provenance {
        stream: "s".into(),
        window: Some(mvdmm::dmm::Window::Frames(5)),
        angle: Some(30.0),
        clip_end,
    })
}

#[test]
fn concat_examples() {
    let out = concat_views(&fv(&[1.0, 2.0], 15), &fv(&[3.0], 15), &fv(&[4.0, 5.0], 15)).unwrap();
    assert_eq!(out.values, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    assert!(concat_views(&fv(&[], 0), &fv(&[], 0), &fv(&[], 0)).unwrap().is_empty());
    let big = fv(&vec![0.0; 4096], 15);
    assert_eq!(concat_views(&big, &big, &big).unwrap().len(), 12288);
    assert!(concat_views(&fv(&[1.0], 15), &fv(&[1.0], 31), &fv(&[1.0], 15)).is_err());
}
