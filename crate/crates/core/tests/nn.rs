use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use talkhead::anim::{AnimArch, Generator, Role};
use talkhead::nn::*;

const SMALL: AnimArch = AnimArch {
    embed_dim: 6,
    mouth_channels: 8,
    mouth_blocks: 2,
    encdec_channels: 6,
    disc_channels: 4,
};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random(shape: &[usize], seed: u64) -> Tensor {
    Tensor::uniform(shape.to_vec(), 1.0, &mut rng(seed))
}

#[test]
fn identity_linear_layer_passes_input_through() {
    let net = Net::new("lin", vec![LayerSpec::linear(4, 4, Activation::None).unwrap()]);
    let mut w = NetWeights::new();
    let mut eye = Tensor::zeros([4, 4]);
    for i in 0..4 {
        eye.data_mut()[i * 4 + i] = 1.0;
    }
    w.insert("lin.0.weight", eye);
    w.insert("lin.0.bias", Tensor::zeros([4]));
    let x = random(&[3, 4], 1);
    let (y, _) = net.run(&w, &x).unwrap();
    assert_eq!(y, x);
}

#[test]
fn centre_tap_conv_is_identity_per_channel() {
    let net = Net::new("c", vec![LayerSpec::conv1d(3, 3, 3, Activation::None).unwrap()]);
    let mut w = NetWeights::new();
    let mut k = Tensor::zeros([3, 3, 3]);
    for c in 0..3 {
        k.data_mut()[(c * 3 + c) * 3 + 1] = 1.0;
    }
    w.insert("c.0.weight", k);
    w.insert("c.0.bias", Tensor::zeros([3]));
    let x = random(&[3, 11], 2);
    let (y, _) = net.run(&w, &x).unwrap();
    assert_eq!(y, x);
}

// Straight-line reimplementation of linear → conv1d(relu) → linear(tanh)
// with plain loops and no graph.
fn naive_linear(x: &[Vec<f64>], w: &Tensor, b: &Tensor) -> Vec<Vec<f64>> {
    let (out, inp) = (w.dim(0), w.dim(1));
    x.iter()
        .map(|row| {
            (0..out)
                .map(|o| b.data()[o] + (0..inp).map(|i| w.data()[o * inp + i] * row[i]).sum::<f64>())
                .collect()
        })
        .collect()
}

fn naive_conv_same(x: &[Vec<f64>], w: &Tensor, b: &Tensor) -> Vec<Vec<f64>> {
    let (cout, cin, k) = (w.dim(0), w.dim(1), w.dim(2));
    let len = x[0].len();
    let pad = (k - 1) / 2;
    (0..cout)
        .map(|o| {
            (0..len)
                .map(|t| {
                    let mut s = b.data()[o];
                    for c in 0..cin {
                        for j in 0..k {
                            let src = t as i64 + j as i64 - pad as i64;
                            if src >= 0 && (src as usize) < len {
                                s += w.data()[(o * cin + c) * k + j] * x[c][src as usize];
                            }
                        }
                    }
                    s
                })
                .collect()
        })
        .collect()
}

#[test]
fn three_layer_forward_matches_naive_loops() {
    // [N, 5] → linear 5→4 → transpose to [4, N] → conv → transpose → linear 4→2 tanh
    let l1 = Net::new("a", vec![LayerSpec::linear(5, 4, Activation::None).unwrap()]);
    let l2 = Net::new("b", vec![LayerSpec::conv1d(4, 4, 3, Activation::Relu).unwrap()]);
    let l3 = Net::new("c", vec![LayerSpec::linear(4, 2, Activation::Tanh).unwrap()]);
    let mut r = rng(3);
    let mut w = l1.init_weights(&mut r);
    w.extend(l2.init_weights(&mut r));
    w.extend(l3.init_weights(&mut r));
    let x = random(&[7, 5], 4);

    let mut g = Graph::new();
    let xi = g.input(x.clone());
    let h = l1.forward(&mut g, &w, xi).unwrap();
    let h = g.transpose(h);
    let h = l2.forward(&mut g, &w, h).unwrap();
    let h = g.transpose(h);
    let y = l3.forward(&mut g, &w, h).unwrap();
    let got = g.value(y).clone();

    let rows: Vec<Vec<f64>> = x.rows().map(|r| r.to_vec()).collect();
    let h = naive_linear(&rows, w.get("a.0.weight").unwrap(), w.get("a.0.bias").unwrap());
    let ht: Vec<Vec<f64>> = (0..4).map(|c| h.iter().map(|r| r[c]).collect()).collect();
    let h = naive_conv_same(&ht, w.get("b.0.weight").unwrap(), w.get("b.0.bias").unwrap());
    let h: Vec<Vec<f64>> = (0..7).map(|t| h.iter().map(|c| c[t].max(0.0)).collect()).collect();
    let want = naive_linear(&h, w.get("c.0.weight").unwrap(), w.get("c.0.bias").unwrap());
    for (t, row) in want.iter().enumerate() {
        for (o, v) in row.iter().enumerate() {
            assert!((got.data()[t * 2 + o] - v.tanh()).abs() < 1e-12);
        }
    }
}

#[test]
fn sum_loss_weight_gradient_is_summed_outer_product() {
    let net = Net::new("l", vec![LayerSpec::linear(3, 2, Activation::None).unwrap()]);
    let w = net.init_weights(&mut rng(5));
    let x = random(&[4, 3], 6);
    let (y, tape) = net.run(&w, &x).unwrap();
    let (grads, gx) = tape.backward(&Tensor::full(y.shape().to_vec(), 1.0)).unwrap();
    let gw = &grads["l.0.weight"];
    for o in 0..2 {
        for i in 0..3 {
            let want: f64 = x.rows().map(|r| r[i]).sum();
            assert!((gw.data()[o * 3 + i] - want).abs() < 1e-12);
        }
    }
    assert!(grads["l.0.bias"].data().iter().all(|&v| (v - 4.0).abs() < 1e-12));
    let wt = w.get("l.0.weight").unwrap();
    for n in 0..4 {
        for i in 0..3 {
            let want = wt.data()[i] + wt.data()[3 + i];
            assert!((gx.data()[n * 3 + i] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_output_gradient_gives_zero_gradients() {
    let net = Net::new(
        "z",
        vec![
            LayerSpec::conv1d(2, 4, 3, Activation::Tanh).unwrap(),
            LayerSpec::res1d(4, 5, 2).unwrap(),
        ],
    );
    let w = net.init_weights(&mut rng(7));
    let (y, tape) = net.run(&w, &random(&[2, 12], 8)).unwrap();
    let (grads, gx) = tape.backward(&Tensor::zeros(y.shape().to_vec())).unwrap();
    assert_eq!(grads.len(), w.len());
    assert!(grads.values().all(|g| g.data().iter().all(|&v| v == 0.0)));
    assert!(gx.data().iter().all(|&v| v == 0.0));
}

#[test]
fn backward_rejects_mismatched_output_gradient() {
    let net = Net::new("l", vec![LayerSpec::linear(3, 2, Activation::None).unwrap()]);
    let w = net.init_weights(&mut rng(5));
    let (_, tape) = net.run(&w, &random(&[4, 3], 6)).unwrap();
    assert!(tape.backward(&Tensor::zeros([4, 3])).is_err());
}

#[test]
fn forward_rejects_wrong_input_shape() {
    let net = Net::new("l", vec![LayerSpec::linear(3, 2, Activation::None).unwrap()]);
    let w = net.init_weights(&mut rng(5));
    assert!(net.run(&w, &random(&[4, 5], 6)).is_err());
}

fn scalar(x: f64) -> NetWeights {
    let mut w = NetWeights::new();
    w.insert("x", Tensor::scalar(x));
    w
}

fn grad(g: f64) -> BTreeMap<String, Tensor> {
    BTreeMap::from([("x".to_string(), Tensor::scalar(g))])
}

#[test]
fn adam_single_step_matches_hand_calculation() {
    let mut w = scalar(0.3);
    let cfg = AdamConfig::animation(1e-3);
    w.adam_step(&grad(1.0), &cfg).unwrap();
    // m = 0.5, v = 0.01; bias corrected both become 1.
    let m_hat = 0.5 / (1.0 - 0.5);
    let v_hat = 0.01 / (1.0 - 0.99);
    let want = 0.3 - 1e-3 * m_hat / (f64::sqrt(v_hat) + 1e-8);
    assert!((w.get("x").unwrap().item() - want).abs() < 1e-15);
    assert_eq!(w.step(), 1);
    let p = w.param("x").unwrap();
    assert!((p.m.item() - 0.5).abs() < 1e-15);
    assert!((p.v.item() - 0.01).abs() < 1e-15);
}

#[test]
fn adam_zero_gradient_leaves_values_and_counts_step() {
    let mut w = scalar(0.7);
    w.adam_step(&grad(0.0), &AdamConfig::animation(1e-3)).unwrap();
    assert_eq!(w.get("x").unwrap().item(), 0.7);
    assert_eq!(w.step(), 1);
}

#[test]
fn adam_constant_gradient_decreases_monotonically() {
    let mut w = scalar(1.0);
    let mut prev = 1.0;
    for _ in 0..100 {
        w.adam_step(&grad(0.25), &AdamConfig::renderer(1e-2)).unwrap();
        let x = w.get("x").unwrap().item();
        assert!(x < prev);
        prev = x;
    }
    assert_eq!(w.step(), 100);
}

#[test]
fn adam_rejects_mismatched_gradient() {
    let mut w = scalar(1.0);
    let g = BTreeMap::from([("x".to_string(), Tensor::zeros([2]))]);
    assert!(w.adam_step(&g, &AdamConfig::animation(1e-3)).is_err());
}

#[test]
fn zero_learning_rate_changes_no_parameter() {
    let gen = Generator::new(Role::Mouth, SMALL).unwrap();
    let w0 = gen.init(&mut rng(9));
    let mut w = w0.clone();
    let grads: BTreeMap<String, Tensor> = w0
        .iter()
        .map(|(n, p)| (n.to_string(), Tensor::uniform(p.value.shape().to_vec(), 1.0, &mut rng(10))))
        .collect();
    w.adam_step(&grads, &AdamConfig::animation(0.0)).unwrap();
    for (n, p) in w0.iter() {
        assert_eq!(&p.value, w.get(n).unwrap());
    }
}

#[test]
fn linear_net_under_l1_passes_gradcheck() {
    let net = Net::new("l", vec![LayerSpec::linear(6, 3, Activation::None).unwrap()]);
    let w = net.init_weights(&mut rng(11));
    let x = random(&[5, 6], 12);
    let target = random(&[5, 3], 13);
    let r = grad_check_net(
        &net,
        &w,
        &x,
        |g, y| {
            let t = g.constant(target.clone());
            let d = g.sub(y, t);
            let a = g.abs(d);
            g.mean(a)
        },
        &GradCheckConfig::default(),
    )
    .unwrap();
    assert!(r.max_rel_error < 1e-6, "{r:?}");
    assert_eq!(r.checked, w.num_scalars());
}

fn squared_sum(g: &mut Graph, y: Var) -> Var {
    let s = g.square(y);
    g.sum(s)
}

fn check(layers: Vec<LayerSpec>, input: &[usize], seed: u64) -> f64 {
    let net = Net::new("n", layers);
    let w = net.init_weights(&mut rng(seed));
    let x = random(input, seed + 1);
    grad_check_net(&net, &w, &x, squared_sum, &GradCheckConfig::default())
        .unwrap()
        .max_rel_error
}

#[test]
fn every_layer_kind_passes_gradcheck() {
    let cases: Vec<(&str, Vec<LayerSpec>, Vec<usize>)> = vec![
        ("linear", vec![LayerSpec::linear(4, 3, Activation::Sigmoid).unwrap()], vec![5, 4]),
        ("conv1d", vec![LayerSpec::conv1d(3, 4, 5, Activation::Tanh).unwrap()], vec![3, 9]),
        (
            "conv1d strided dilated",
            vec![LayerSpec::new(
                LayerKind::Conv1d { cin: 2, cout: 3, kernel: 3, stride: 2, dilation: 2 },
                Padding::Same,
                Activation::LeakyRelu(0.2),
            )
            .unwrap()],
            vec![2, 11],
        ),
        (
            "conv transpose",
            vec![LayerSpec::new(
                LayerKind::ConvTranspose1d { cin: 3, cout: 2, kernel: 4, stride: 2 },
                Padding::Explicit(1),
                Activation::None,
            )
            .unwrap()],
            vec![3, 6],
        ),
        ("res1d", vec![LayerSpec::res1d(3, 5, 1).unwrap()], vec![3, 10]),
        ("conv2d", vec![LayerSpec::conv2d(2, 3, 3, 2, Activation::Relu).unwrap()], vec![2, 6, 6]),
        ("res2d", vec![LayerSpec::res2d(2, 3).unwrap()], vec![2, 5, 5]),
        (
            "pool and upsample",
            vec![
                LayerSpec::conv2d(2, 2, 3, 1, Activation::Tanh).unwrap(),
                LayerSpec::new(LayerKind::AvgPool2, Padding::Explicit(0), Activation::None).unwrap(),
                LayerSpec::new(LayerKind::Upsample2, Padding::Explicit(0), Activation::None).unwrap(),
                LayerSpec::conv2d(2, 1, 3, 1, Activation::None).unwrap(),
            ],
            vec![2, 4, 6],
        ),
    ];
    for (i, (name, layers, shape)) in cases.into_iter().enumerate() {
        let err = check(layers, &shape, 100 + i as u64);
        assert!(err < 1e-4, "{name}: {err}");
    }
}

#[test]
fn res1d_stack_passes_gradcheck() {
    let mut layers = vec![LayerSpec::conv1d(4, 8, 5, Activation::Relu).unwrap()];
    for _ in 0..3 {
        layers.push(LayerSpec::res1d(8, 5, 1).unwrap());
    }
    layers.push(LayerSpec::conv1d(8, 3, 5, Activation::Sigmoid).unwrap());
    assert!(check(layers, &[4, 16], 200) < 1e-4);
}

#[test]
fn encoder_decoder_passes_gradcheck() {
    let gen = Generator::new(Role::Upper, SMALL).unwrap();
    let w = gen.init(&mut rng(13));
    let t = 24;
    let cond = talkhead::anim::Conditioning {
        ph: vec![0; t],
        w: (0..t).map(|i| 1 + i / 6).collect(),
        emotion: 2,
    };
    let used: Vec<usize> = cond.w.clone();
    let r = grad_check_where(
        &w,
        |w, g| {
            let y = gen.forward(g, w, &cond)?;
            let s = g.square(y);
            Ok(g.mean(s))
        },
        &GradCheckConfig::default(),
        |name, idx| {
            if name == "emb.txt" {
                used.contains(&(idx / SMALL.embed_dim))
            } else if name == "emb.emo" {
                idx / SMALL.embed_dim == cond.emotion
            } else {
                true
            }
        },
    )
    .unwrap();
    assert!(r.max_rel_error < 1e-4, "{r:?}");
}

#[test]
fn forward_is_bit_deterministic() {
    let gen = Generator::new(Role::Mouth, SMALL).unwrap();
    let w = gen.init(&mut rng(14));
    let cond = talkhead::anim::Conditioning {
        ph: (0..40).map(|i| i % 41).collect(),
        w: vec![0; 40],
        emotion: 0,
    };
    let a = gen.generate(&w, &cond).unwrap();
    let b = gen.generate(&w, &cond).unwrap();
    assert_eq!(a.data(), b.data());
}

#[test]
fn checkpoint_round_trip_keeps_moments_and_step() {
    let net = Net::new("n", vec![LayerSpec::conv1d(2, 3, 3, Activation::None).unwrap()]);
    let mut w = net.init_weights(&mut rng(15));
    let grads: BTreeMap<String, Tensor> = w
        .iter()
        .map(|(n, p)| (n.to_string(), p.value.map(|v| v * 0.5)))
        .collect();
    w.adam_step(&grads, &AdamConfig::animation(1e-3)).unwrap();
    let back = NetWeights::from_tensor_file(&TensorFile::from_bytes(&w.to_tensor_file().to_bytes()).unwrap()).unwrap();
    assert_eq!(back, w);
}

fn linear_combo_grads(a: f64, b: f64, w: &NetWeights, net: &Net, x: &Tensor, t: &Tensor) -> BTreeMap<String, Tensor> {
    let mut g = Graph::new();
    let xi = g.constant(x.clone());
    let y = net.forward(&mut g, w, xi).unwrap();
    let tt = g.constant(t.clone());
    let d = g.sub(y, tt);
    let l1 = g.square(d);
    let l1 = g.mean(l1);
    let l2 = g.sin(y);
    let l2 = g.sum(l2);
    let l1 = g.scale(l1, a);
    let l2 = g.scale(l2, b);
    let out = g.add(l1, l2);
    let grads = g.backward(out);
    g.param_grads(&grads)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn backward_is_linear_in_the_loss(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let net = Net::new("n", vec![
            LayerSpec::conv1d(2, 3, 3, Activation::Tanh).unwrap(),
            LayerSpec::res1d(3, 5, 1).unwrap(),
        ]);
        let w = net.init_weights(&mut rng(seed));
        let x = random(&[2, 9], seed + 1);
        let t = random(&[3, 9], seed + 2);
        let both = linear_combo_grads(a, b, &w, &net, &x, &t);
        let only1 = linear_combo_grads(1.0, 0.0, &w, &net, &x, &t);
        let only2 = linear_combo_grads(0.0, 1.0, &w, &net, &x, &t);
        for (k, v) in &both {
            for i in 0..v.len() {
                let want = a * only1[k].data()[i] + b * only2[k].data()[i];
                prop_assert!((v.data()[i] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transposed_conv_is_adjoint_of_strided_conv(
        seed in 0u64..1000,
        stride in 1usize..4,
        kernel in 1usize..6,
        pad in 0usize..3,
        dilation in 1usize..3,
        len in 8usize..20,
    ) {
        let mut r = rng(seed);
        let (cin, cout) = (r.random_range(1..4), r.random_range(1..4));
        prop_assume!(len + 2 * pad > dilation * (kernel - 1));
        let x = Tensor::uniform([cin, len], 1.0, &mut r);
        let w = Tensor::uniform([cout, cin, kernel], 1.0, &mut r);
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let wv = g.input(w.clone());
        let y = g.conv1d(xv, wv, stride, pad, dilation);
        let out_len = g.shape(y)[1];
        let yt = Tensor::uniform([cout, out_len], 1.0, &mut r);
        // Reconstruct the original length with output padding.
        let full = (out_len - 1) * stride + dilation * (kernel - 1) + 1;
        let extra = len + 2 * pad - full;
        prop_assume!(extra < stride.max(1) || extra == 0);
        let yv = g.input(yt.clone());
        let wtv = g.input(w.clone());
        let back = g.conv_transpose1d(yv, wtv, stride, pad, dilation, extra);
        prop_assert_eq!(g.shape(back), &[cin, len]);
        let lhs = g.value(y).dot(&yt);
        let rhs = x.dot(g.value(back));
        prop_assert!((lhs - rhs).abs() < 1e-10, "{} vs {}", lhs, rhs);
    }
}
