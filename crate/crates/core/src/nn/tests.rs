use super::*;
use crate::stochastic::{Granularity, NoiseSpec, SigmaSource};

fn rand_tensor(rng: &mut RandomStream, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.standard_normal()).collect()).unwrap()
}

fn dense(w: Tensor, b: Vec<f64>, act: Activation) -> Layer {
    Layer::Dense(DenseLayer::new(w, Tensor::vector(b), act).unwrap())
}

#[test]
fn identity_layer_passes_input_through() {
    let net = Network::new(vec![dense(Tensor::eye(2), vec![0.0, 0.0], Activation::Identity)], Task::Regression).unwrap();
    let x = Tensor::from_rows(&[[1.0, 2.0]]).unwrap();
    let y = predict(&net, &x, Mode::Eval, &mut RandomStream::new(0)).unwrap();
    assert_eq!(y.data(), &[1.0, 2.0]);
}

#[test]
fn relu_layer_clips_negatives() {
    let net = Network::new(vec![dense(Tensor::eye(2), vec![0.0, 0.0], Activation::Relu)], Task::Regression).unwrap();
    let x = Tensor::from_rows(&[[-1.0, 2.0]]).unwrap();
    let y = predict(&net, &x, Mode::Eval, &mut RandomStream::new(0)).unwrap();
    assert_eq!(y.data(), &[0.0, 2.0]);
}

#[test]
fn one_hidden_layer_matches_hand_rolled_oracle() {
    let mut rng = RandomStream::new(21);
    let arch = Architecture::new(3, &[5], 2).with_activation(Activation::Tanh);
    let net = build_network(&arch, &ModelKind::Deterministic, Task::Regression, &rng.derive(1)).unwrap();
    let x = rand_tensor(&mut rng, &[4, 3]);
    let y = predict(&net, &x, Mode::Eval, &mut rng).unwrap();

    let (w1, b1, w2, b2) = match (&net.layers()[0], &net.layers()[1]) {
        (Layer::Dense(a), Layer::Dense(b)) => (&a.weight, &a.bias, &b.weight, &b.bias),
        _ => unreachable!(),
    };
    for r in 0..4 {
        let mut h = [0.0; 5];
        for (j, hj) in h.iter_mut().enumerate() {
            let mut s = b1.data()[j];
            for i in 0..3 {
                s += x.get(r, i) * w1.get(i, j);
            }
            *hj = s.tanh();
        }
        for k in 0..2 {
            let mut s = b2.data()[k];
            for (j, hj) in h.iter().enumerate() {
                s += hj * w2.get(j, k);
            }
            assert!((y.get(r, k) - s).abs() < 1e-12);
        }
    }
}

#[test]
fn dimension_mismatch_names_layer() {
    let err = Network::new(
        vec![
            dense(Tensor::zeros(&[2, 3]), vec![0.0; 3], Activation::Relu),
            dense(Tensor::zeros(&[4, 1]), vec![0.0], Activation::Identity),
        ],
        Task::Regression,
    )
    .unwrap_err();
    assert!(matches!(err, Error::Shape { layer: Some(1), .. }), "{err}");

    let net = Network::new(vec![dense(Tensor::eye(2), vec![0.0; 2], Activation::Identity)], Task::Regression).unwrap();
    let x = Tensor::zeros(&[1, 3]);
    assert!(matches!(
        forward(&net, &x, Mode::Eval, &mut RandomStream::new(0)),
        Err(Error::Shape { layer: Some(0), .. })
    ));
}

#[test]
fn zero_output_grad_gives_zero_gradients() {
    let rng = RandomStream::new(3);
    let arch = Architecture::new(3, &[4], 2);
    let net = build_network(&arch, &ModelKind::mcni_learned(0.1), Task::Regression, &rng).unwrap();
    let x = rand_tensor(&mut rng.derive(9), &[5, 3]);
    let (y, trace) = forward(&net, &x, Mode::Train, &mut rng.derive(10)).unwrap();
    let g = backward(&net, &trace, &Tensor::zeros(y.shape())).unwrap();
    assert_eq!(g.max_abs(), 0.0);
    assert_eq!(g.len(), 6);
}

#[test]
fn stale_trace_is_rejected() {
    let rng = RandomStream::new(3);
    let arch = Architecture::new(2, &[3], 1);
    let mut net = build_network(&arch, &ModelKind::Deterministic, Task::Regression, &rng).unwrap();
    let x = Tensor::zeros(&[1, 2]);
    let (y, trace) = forward(&net, &x, Mode::Train, &mut rng.derive(1)).unwrap();
    net.parameters_mut()[0].1.data_mut()[0] += 1.0;
    assert!(matches!(backward(&net, &trace, &y), Err(Error::Contract(_))));

    let other = build_network(&arch, &ModelKind::McDropout { p: 0.1 }, Task::Regression, &rng).unwrap();
    assert!(matches!(backward(&other, &trace, &y), Err(Error::Contract(_))));
}

#[test]
fn linear_mse_gradient_closed_form() {
    // one sample, identity activation: dL/dW = x^T (y^ - y) * 2 / D
    let mut rng = RandomStream::new(4);
    let w = rand_tensor(&mut rng, &[3, 2]);
    let net = Network::new(vec![dense(w, vec![0.1, -0.3], Activation::Identity)], Task::Regression).unwrap();
    let x = rand_tensor(&mut rng, &[1, 3]);
    let y = rand_tensor(&mut rng, &[1, 2]);
    let (pred, trace) = forward(&net, &x, Mode::Train, &mut rng).unwrap();
    let g = backward(&net, &trace, &mse_grad(&pred, &y).unwrap()).unwrap();
    let gw = g.get(ParamId { layer: 0, kind: ParamKind::Weight }).unwrap();
    for i in 0..3 {
        for j in 0..2 {
            let expect = x.get(0, i) * (pred.get(0, j) - y.get(0, j)) * 2.0 / 2.0;
            assert!((gw.get(i, j) - expect).abs() < 1e-14);
        }
    }
}

enum Target {
    Reg(Tensor),
    Cls(Vec<usize>),
}

fn task_loss(out: &Tensor, t: &Target) -> f64 {
    match t {
        Target::Reg(y) => loss_mse(out, y).unwrap(),
        Target::Cls(l) => loss_cross_entropy(out, l).unwrap(),
    }
}

/// Central differences on every parameter with the pass's noise frozen.
fn max_rel_fd_error(net: &mut Network, x: &Tensor, t: &Target, rng: &mut RandomStream) -> f64 {
    let (out, trace) = forward(net, x, Mode::Train, rng).unwrap();
    let g_out = match t {
        Target::Reg(y) => mse_grad(&out, y).unwrap(),
        Target::Cls(l) => cross_entropy_grad(&out, l).unwrap(),
    };
    let grads = backward(net, &trace, &g_out).unwrap();
    let noise = trace.noise().to_vec();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let ids: Vec<ParamId> = net.parameters().iter().map(|(id, _)| *id).collect();
    for id in ids {
        let n = net.parameters().iter().find(|(i, _)| *i == id).unwrap().1.len();
        for k in 0..n {
            let eval = |net: &mut Network, delta: f64| {
                {
                    let mut ps = net.parameters_mut();
                    let p = ps.iter_mut().find(|(i, _)| *i == id).unwrap();
                    p.1.data_mut()[k] += delta;
                }
                let (o, _) = forward_with(net, x, Mode::Train, NoiseSource::Replay(&noise)).unwrap();
                task_loss(&o, t)
            };
            let lp = eval(net, h);
            let lm = eval(net, -2.0 * h);
            eval(net, h);
            let fd = (lp - lm) / (2.0 * h);
            let an = grads.get(id).unwrap().data()[k];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences_across_layer_kinds() {
    let kinds = [
        ModelKind::Deterministic,
        ModelKind::McDropout { p: 0.3 },
        ModelKind::mcni_fixed(0.2),
        ModelKind::mcni_learned(0.2),
        ModelKind::Noise(NoiseSpec::learned(0.3).with_granularity(Granularity::PerElement)),
        ModelKind::Noise(NoiseSpec::learned(0.3).with_sigma_source(SigmaSource::Constant(0.5))),
    ];
    for act in [Activation::Relu, Activation::Tanh, Activation::Identity] {
        for kind in &kinds {
            for seed in 0..5u64 {
                let rng = RandomStream::new(100 + seed);
                let arch = Architecture::new(3, &[6, 4], 2).with_activation(act);
                let mut net = build_network(&arch, kind, Task::Regression, &rng).unwrap();
                let mut d = rng.derive(50);
                let x = rand_tensor(&mut d, &[5, 3]);
                let y = rand_tensor(&mut d, &[5, 2]);
                let e = max_rel_fd_error(&mut net, &x, &Target::Reg(y), &mut rng.derive(51));
                assert!(e < 1e-4, "{act:?} {kind:?} seed {seed}: {e}");

                let mut net = build_network(&arch, kind, Task::Classification, &rng).unwrap();
                let labels: Vec<usize> = (0..5).map(|_| d.index(2)).collect();
                let e = max_rel_fd_error(&mut net, &x, &Target::Cls(labels), &mut rng.derive(52));
                assert!(e < 1e-4, "CE {act:?} {kind:?} seed {seed}: {e}");
            }
        }
    }
}

#[test]
fn softmax_output_layer_gradient() {
    for seed in 0..5 {
        let mut rng = RandomStream::new(seed);
        let layers = vec![
            dense(rand_tensor(&mut rng, &[3, 4]), vec![0.0; 4], Activation::Tanh),
            dense(rand_tensor(&mut rng, &[4, 3]), vec![0.1, 0.0, -0.1], Activation::Softmax),
        ];
        let mut net = Network::new(layers, Task::Regression).unwrap();
        let x = rand_tensor(&mut rng, &[4, 3]);
        let y = rand_tensor(&mut rng, &[4, 3]);
        let e = max_rel_fd_error(&mut net, &x, &Target::Reg(y), &mut rng);
        assert!(e < 1e-4, "{e}");
    }
}

#[test]
fn softmax_rows_are_normalized() {
    let mut rng = RandomStream::new(6);
    let z = rand_tensor(&mut rng, &[20, 7]).scale(30.0);
    let s = softmax_rows(&z);
    for r in 0..20 {
        assert!((s.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn mse_examples() {
    let a = Tensor::from_rows(&[[0.0, 0.0]]).unwrap();
    let b = Tensor::from_rows(&[[3.0, 4.0]]).unwrap();
    assert_eq!(loss_mse(&b, &b).unwrap(), 0.0);
    assert_eq!(loss_mse(&a, &b).unwrap(), 12.5);
    assert!(loss_mse(&a, &Tensor::zeros(&[2, 1])).is_err());

    let mut rng = RandomStream::new(8);
    for _ in 0..20 {
        let p = rand_tensor(&mut rng, &[6, 3]);
        let t = rand_tensor(&mut rng, &[6, 3]);
        let mut s = 0.0;
        for r in 0..6 {
            for c in 0..3 {
                let d = p.get(r, c) - t.get(r, c);
                s += d * d;
            }
        }
        assert!((loss_mse(&p, &t).unwrap() - s / 18.0).abs() < 1e-12);
    }
}

#[test]
fn cross_entropy_examples() {
    let z = Tensor::zeros(&[1, 10]);
    assert!((loss_cross_entropy(&z, &[4]).unwrap() - 10f64.ln()).abs() < 1e-12);

    let big = Tensor::from_rows(&[[1000.0, 0.0]]).unwrap();
    let l = loss_cross_entropy(&big, &[0]).unwrap();
    assert!(l.is_finite() && l.abs() < 1e-12);

    assert!(matches!(
        loss_cross_entropy(&z, &[10]),
        Err(Error::InvalidArgument(_))
    ));

    let mut rng = RandomStream::new(9);
    for _ in 0..20 {
        let logits = rand_tensor(&mut rng, &[5, 4]).scale(3.0);
        let labels: Vec<usize> = (0..5).map(|_| rng.index(4)).collect();
        let mut naive = 0.0;
        for (r, &l) in labels.iter().enumerate() {
            let den: f64 = logits.row(r).iter().map(|v| v.exp()).sum();
            naive += -(logits.get(r, l).exp() / den).ln();
        }
        naive /= 5.0;
        let got = loss_cross_entropy(&logits, &labels).unwrap();
        assert!(got >= 0.0);
        assert!((got - naive).abs() < 1e-10);
    }
}

#[test]
fn l2_penalty_examples() {
    let net = Network::new(
        vec![dense(Tensor::matrix(1, 1, vec![2.0]).unwrap(), vec![0.0], Activation::Identity)],
        Task::Regression,
    )
    .unwrap();
    assert_eq!(l2_penalty(&net, &WeightDecay::none()).unwrap(), 0.0);
    assert_eq!(l2_penalty(&net, &WeightDecay::uniform(0.5)).unwrap(), 2.0);
    assert!(l2_penalty(&net, &WeightDecay::uniform(-0.1)).is_err());

    let rng = RandomStream::new(10);
    let arch = Architecture::new(3, &[5, 4], 2);
    let net = build_network(&arch, &ModelKind::mcni_learned(0.7), Task::Regression, &rng).unwrap();
    let decay = WeightDecay {
        weights: vec![0.1, 0.2, 0.3],
        bias: 0.05,
    };
    let mut oracle = 0.0;
    let mut k = 0;
    for layer in net.layers() {
        if let Layer::Noisy(n) = layer {
            for v in n.weight.data() {
                oracle += decay.weights[k] * v * v;
            }
            for v in n.bias.data() {
                oracle += decay.bias * v * v;
            }
            k += 1;
        }
    }
    assert!((l2_penalty(&net, &decay).unwrap() - oracle).abs() < 1e-12);

    let mut g = GradientSet::zeros_like(&net);
    l2_penalty_grad(&net, &decay, &mut g).unwrap();
    for (id, t) in g.iter() {
        if id.kind == ParamKind::Alpha {
            assert_eq!(t.sum_sq(), 0.0, "decay must not touch alpha");
        }
    }
}

#[test]
fn deterministic_mode_is_pure() {
    let rng = RandomStream::new(12);
    let arch = Architecture::new(2, &[8], 1);
    for kind in [ModelKind::McDropout { p: 0.5 }, ModelKind::mcni_fixed(0.5)] {
        let net = build_network(&arch, &kind, Task::Regression, &rng).unwrap();
        let x = rand_tensor(&mut rng.derive(1), &[3, 2]);
        let a = predict(&net, &x, Mode::Deterministic, &mut RandomStream::new(1)).unwrap();
        let b = predict(&net, &x, Mode::Deterministic, &mut RandomStream::new(2)).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn zero_alpha_network_is_deterministic_in_eval() {
    let rng = RandomStream::new(13);
    let arch = Architecture::new(2, &[8], 1);
    let net = build_network(&arch, &ModelKind::mcni_fixed(0.0), Task::Regression, &rng).unwrap();
    let x = rand_tensor(&mut rng.derive(1), &[3, 2]);
    let mut s = rng.derive(2);
    let a = predict(&net, &x, Mode::Eval, &mut s).unwrap();
    let b = predict(&net, &x, Mode::Eval, &mut s).unwrap();
    assert_eq!(a, b);
    let det = build_network(&arch, &ModelKind::Deterministic, Task::Regression, &rng).unwrap();
    assert_eq!(predict(&det, &x, Mode::Eval, &mut s).unwrap(), a);
}

#[test]
fn forward_is_seed_deterministic() {
    let rng = RandomStream::new(14);
    let arch = Architecture::new(2, &[8], 1);
    let net = build_network(&arch, &ModelKind::mcni_learned(0.3), Task::Regression, &rng).unwrap();
    let x = rand_tensor(&mut rng.derive(1), &[3, 2]);
    let y = rand_tensor(&mut rng.derive(2), &[3, 1]);
    let run = |seed| {
        let (o, t) = forward(&net, &x, Mode::Train, &mut RandomStream::new(seed)).unwrap();
        let g = backward(&net, &t, &mse_grad(&o, &y).unwrap()).unwrap();
        (o, g)
    };
    assert_eq!(run(5), run(5));
}

#[test]
fn json_round_trip_is_bit_exact() {
    let rng = RandomStream::new(21);
    let arch = Architecture::new(3, &[7, 5], 2).with_activation(Activation::Tanh);
    for kind in [ModelKind::mcni_learned(0.1), ModelKind::McDropout { p: 0.2 }, ModelKind::Deterministic] {
        let mut net = build_network(&arch, &kind, Task::Classification, &rng).unwrap();
        net.epochs_trained = 4;
        let back = network_from_json(&network_to_json(&net).unwrap()).unwrap();
        assert_eq!(back.epochs_trained, 4);
        let bits = |n: &Network| -> Vec<u64> { n.parameters().iter().flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits())).collect() };
        assert_eq!(bits(&net), bits(&back));
        assert_eq!(back.layers(), net.layers());
    }
    assert!(network_from_json("{\"layers\": []}").is_err());
}
