mod common;

use common::{random_tensor, rng};
use msnn::layers::conv::SeparableConv;
use msnn::Tensor;
use proptest::prelude::*;

/// Depthwise then pointwise, written as plain loops.
fn brute_force(conv: &SeparableConv, x: &Tensor) -> Tensor {
    let [c, t, fi] = x.shape();
    let (k, fo, pl) = (conv.kernel_len(), conv.out_maps(), conv.pad_left());
    let mut z = vec![0.0; c * t * fi];
    for ci in 0..c {
        for ti in 0..t {
            for f in 0..fi {
                let mut s = 0.0;
                for tau in 0..k {
                    let src = ti as isize + tau as isize - pl as isize;
                    if src >= 0 && (src as usize) < t {
                        s += conv.depthwise.data[tau * fi + f] * x.get(ci, src as usize, f);
                    }
                }
                z[(ci * t + ti) * fi + f] = s;
            }
        }
    }
    let mut y = Tensor::zeros(c, t, fo);
    for ci in 0..c {
        for ti in 0..t {
            for o in 0..fo {
                let mut s = conv.bias.data[o];
                for f in 0..fi {
                    s += conv.pointwise.data[f * fo + o] * z[(ci * t + ti) * fi + f];
                }
                y.set(ci, ti, o, s);
            }
        }
    }
    y
}

/// Full convolution with the rank-1 kernel `W[τ, i, o] = d[τ, i]·p[i, o]`.
fn rank_one_full(conv: &SeparableConv, x: &Tensor) -> Tensor {
    let [c, t, fi] = x.shape();
    let (k, fo, pl) = (conv.kernel_len(), conv.out_maps(), conv.pad_left());
    let w: Vec<f64> = (0..k * fi * fo)
        .map(|idx| {
            let (tau, rest) = (idx / (fi * fo), idx % (fi * fo));
            let (i, o) = (rest / fo, rest % fo);
            conv.depthwise.data[tau * fi + i] * conv.pointwise.data[i * fo + o]
        })
        .collect();
    let mut y = Tensor::zeros(c, t, fo);
    for ci in 0..c {
        for ti in 0..t {
            for o in 0..fo {
                let mut s = conv.bias.data[o];
                for tau in 0..k {
                    let src = ti as isize + tau as isize - pl as isize;
                    if src < 0 || src as usize >= t {
                        continue;
                    }
                    for i in 0..fi {
                        s += w[(tau * fi + i) * fo + o] * x.get(ci, src as usize, i);
                    }
                }
                y.set(ci, ti, o, s);
            }
        }
    }
    y
}

fn check(c: usize, t: usize, fi: usize, fo: usize, k: usize, seed: u64) {
    let mut r = rng(seed);
    let mut conv = SeparableConv::new("sep", k, fi, fo, &mut r);
    conv.bias.data = random_tensor(&mut r, [1, 1, fo]).into_data();
    let x = random_tensor(&mut r, [c, t, fi]);
    let (y, _) = conv.forward(&x).unwrap();
    let scale = 1.0 + y.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let brute = brute_force(&conv, &x);
    let full = rank_one_full(&conv, &x);
    assert!(y.max_abs_diff(&brute) <= 1e-12 * scale, "loops: {}", y.max_abs_diff(&brute));
    assert!(y.max_abs_diff(&full) <= 1e-12 * scale, "rank-1: {}", y.max_abs_diff(&full));
}

#[test]
fn fixed_shapes() {
    let shapes = [
        (1, 1, 1, 1, 1),
        (1, 5, 1, 1, 5),
        (2, 7, 3, 2, 4),
        (3, 16, 4, 16, 8),
        (1, 33, 16, 32, 7),
        (2, 9, 2, 5, 9),
        (4, 40, 4, 16, 20),
        (1, 100, 8, 8, 100),
    ];
    for (i, &(c, t, fi, fo, k)) in shapes.iter().enumerate() {
        check(c, t, fi, fo, k, i as u64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn random_shapes(c in 1usize..5, t in 1usize..48, fi in 1usize..9, fo in 1usize..9, k_frac in 0.0f64..1.0, seed in 0u64..10_000) {
        let k = 1 + ((t - 1) as f64 * k_frac) as usize;
        check(c, t, fi, fo, k, seed);
    }
}
