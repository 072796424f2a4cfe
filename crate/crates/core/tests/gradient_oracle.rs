use ampgrad_core::autograd::{
    check_gradients, finite_diff_grad, max_relative_error, BnParams, Mode, RunningStats,
};
use ampgrad_core::nn::{build_model, ArchConfig, BlockSpec, LayerSpec, ResidualBlockSpec};
use ampgrad_core::rng::{self, Domain};
use ampgrad_core::Tensor;

const EPS: f64 = 1e-6;
const FLOOR: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn rand_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut r = rng::stream(seed, Domain::Synthetic, 77);
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng::unit_f64(&mut r) * 2.0 - 1.0).collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Values spaced at least `1/n` apart, so pooling and ReLU never sit on a kink.
fn distinct_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng::stream(seed, Domain::Synthetic, 78), &mut order);
    let data = order
        .into_iter()
        .map(|k| (k as f64 + 0.5) / n as f64 * 2.0 - 1.0)
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

fn assert_clean(name: &str, errs: &[f64]) {
    for (i, e) in errs.iter().enumerate() {
        assert!(*e < TOL, "{} leaf {}: relative error {:e}", name, i, e);
    }
}

#[test]
fn linear() {
    let leaves = [rand_tensor(&[4, 5], 1), rand_tensor(&[3, 5], 2), rand_tensor(&[3], 3)];
    let errs = check_gradients(&leaves, |g, v| g.linear(v[0], v[1], v[2]), EPS, FLOOR).unwrap();
    assert_clean("linear", &errs);
}

#[test]
fn conv2d_padded() {
    let leaves = [rand_tensor(&[2, 2, 4, 4], 4), rand_tensor(&[3, 2, 3, 3], 5), rand_tensor(&[3], 6)];
    let errs =
        check_gradients(&leaves, |g, v| g.conv2d(v[0], v[1], v[2], 1, 1), EPS, FLOOR).unwrap();
    assert_clean("conv2d s1 p1", &errs);
}

#[test]
fn conv2d_strided() {
    let leaves = [rand_tensor(&[1, 2, 5, 5], 7), rand_tensor(&[2, 2, 3, 3], 8), rand_tensor(&[2], 9)];
    let errs =
        check_gradients(&leaves, |g, v| g.conv2d(v[0], v[1], v[2], 2, 1), EPS, FLOOR).unwrap();
    assert_clean("conv2d s2 p1", &errs);
    let leaves = [rand_tensor(&[2, 3, 4, 4], 10), rand_tensor(&[4, 3, 1, 1], 11), rand_tensor(&[4], 12)];
    let errs =
        check_gradients(&leaves, |g, v| g.conv2d(v[0], v[1], v[2], 2, 0), EPS, FLOOR).unwrap();
    assert_clean("conv2d 1x1 s2", &errs);
}

#[test]
fn batchnorm_train() {
    let leaves = [rand_tensor(&[2, 2, 4, 4], 13), rand_tensor(&[2], 14), rand_tensor(&[2], 15)];
    let mut stats = RunningStats::new(2);
    let p = BnParams {
        eps: 1e-5,
        momentum: 0.1,
    };
    let errs = check_gradients(
        &leaves,
        |g, v| g.batch_norm(v[0], v[1], v[2], &mut stats, p, Mode::Train),
        EPS,
        FLOOR,
    )
    .unwrap();
    assert_clean("batchnorm train 4d", &errs);

    let leaves = [rand_tensor(&[8, 4], 16), rand_tensor(&[4], 17), rand_tensor(&[4], 18)];
    let mut stats = RunningStats::new(4);
    let errs = check_gradients(
        &leaves,
        |g, v| g.batch_norm(v[0], v[1], v[2], &mut stats, p, Mode::Train),
        EPS,
        FLOOR,
    )
    .unwrap();
    assert_clean("batchnorm train 2d", &errs);
}

#[test]
fn batchnorm_eval() {
    let leaves = [rand_tensor(&[3, 2, 3, 3], 19), rand_tensor(&[2], 20), rand_tensor(&[2], 21)];
    let mut stats = RunningStats {
        mean: vec![0.2, -0.1],
        var: vec![0.5, 1.5],
    };
    let p = BnParams {
        eps: 1e-5,
        momentum: 0.1,
    };
    let errs = check_gradients(
        &leaves,
        |g, v| g.batch_norm(v[0], v[1], v[2], &mut stats, p, Mode::Eval),
        EPS,
        FLOOR,
    )
    .unwrap();
    assert_clean("batchnorm eval", &errs);
}

#[test]
fn relu() {
    let errs =
        check_gradients(&[distinct_tensor(&[4, 8], 22)], |g, v| g.relu(v[0]), EPS, FLOOR).unwrap();
    assert_clean("relu", &errs);
}

#[test]
fn pools() {
    let x = distinct_tensor(&[2, 2, 4, 4], 23);
    let errs = check_gradients(&[x.clone()], |g, v| g.max_pool(v[0], 2, 2), EPS, FLOOR).unwrap();
    assert_clean("maxpool 2/2", &errs);
    let errs = check_gradients(&[x.clone()], |g, v| g.max_pool(v[0], 3, 1), EPS, FLOOR).unwrap();
    assert_clean("maxpool 3/1", &errs);
    let errs = check_gradients(&[x.clone()], |g, v| g.avg_pool(v[0], 2, 2), EPS, FLOOR).unwrap();
    assert_clean("avgpool 2/2", &errs);
    let errs = check_gradients(&[x], |g, v| g.avg_pool(v[0], 4, 4), EPS, FLOOR).unwrap();
    assert_clean("avgpool global", &errs);
}

#[test]
fn softmax_cross_entropy() {
    let logits = rand_tensor(&[4, 5], 24);
    let errs = check_gradients(
        &[logits],
        |g, v| g.softmax_cross_entropy(v[0], &[0, 3, 4, 3]),
        EPS,
        FLOOR,
    )
    .unwrap();
    assert_clean("softmax-ce", &errs);
}

#[test]
fn residual_add_and_flatten() {
    let leaves = [rand_tensor(&[3, 4], 25), rand_tensor(&[3, 4], 26)];
    let errs = check_gradients(&leaves, |g, v| g.residual_add(v[0], v[1]), EPS, FLOOR).unwrap();
    assert_clean("residual add", &errs);

    // fan-out: the same node feeds both branches
    let x = distinct_tensor(&[3, 4], 27);
    let errs = check_gradients(
        &[x],
        |g, v| {
            let r = g.relu(v[0])?;
            g.residual_add(r, v[0])
        },
        EPS,
        FLOOR,
    )
    .unwrap();
    assert_clean("relu(x) + x", &errs);

    let x = rand_tensor(&[2, 2, 2, 3], 28);
    let errs = check_gradients(&[x], |g, v| g.flatten(v[0]), EPS, FLOOR).unwrap();
    assert_clean("flatten", &errs);
}

#[test]
fn five_layer_relu_mlp() {
    let widths = [3, 8, 8, 6, 6, 4];
    let mut leaves = vec![rand_tensor(&[4, 3], 30)];
    for (i, w) in widths.windows(2).enumerate() {
        leaves.push(rand_tensor(&[w[1], w[0]], 31 + i as u64));
        leaves.push(rand_tensor(&[w[1]], 41 + i as u64));
    }
    let errs = check_gradients(
        &leaves,
        |g, v| {
            let mut h = v[0];
            for layer in 0..5 {
                h = g.linear(h, v[1 + 2 * layer], v[2 + 2 * layer])?;
                if layer < 4 {
                    h = g.relu(h)?;
                }
            }
            g.softmax_cross_entropy(h, &[1, 0, 3, 2])
        },
        EPS,
        FLOOR,
    )
    .unwrap();
    assert_clean("mlp", &errs);
}

/// Whole-model check through parameter nodes, including a projection block.
#[test]
fn residual_model_parameters() {
    let cfg = ArchConfig {
        name: "tiny-res".into(),
        input_shape: vec![2, 4, 4],
        blocks: vec![
            BlockSpec::Residual {
                residual: ResidualBlockSpec {
                    in_ch: 2,
                    out_ch: 2,
                    stride: 1,
                    bn: Default::default(),
                },
            },
            BlockSpec::Residual {
                residual: ResidualBlockSpec {
                    in_ch: 2,
                    out_ch: 3,
                    stride: 2,
                    bn: Default::default(),
                },
            },
            BlockSpec::Layer(LayerSpec::AvgPool { kernel: 2, stride: 2 }),
            BlockSpec::Layer(LayerSpec::Flatten),
            BlockSpec::Layer(LayerSpec::Linear {
                in_features: 3,
                out_features: 3,
            }),
        ],
        num_classes: 3,
    };
    let mut model = build_model::<f32>(&cfg, 5).unwrap().cast::<f64>();
    let x = rand_tensor(&[4, 2, 4, 4], 50);
    let labels = [0, 2, 1, 2];

    let mut loss_of = |m: &mut ampgrad_core::nn::Model<f64>| {
        let mut g = m.new_graph();
        let xi = g.constant(x.clone());
        let out = m.forward(&mut g, xi, Mode::Train).unwrap();
        let loss = g.softmax_cross_entropy(out, &labels).unwrap();
        (g, loss)
    };
    let (mut g, loss) = loss_of(&mut model);
    let grads = g.backward(loss).unwrap();

    for pid in 0..model.params().len() {
        let base = model.params()[pid].clone();
        let numeric = finite_diff_grad(
            |probe| {
                let mut m = model.clone();
                m.params_mut()[pid] = probe.clone();
                let (g, loss) = loss_of(&mut m);
                Ok(g.value(loss)?.data()[0])
            },
            &base,
            EPS,
        )
        .unwrap();
        let analytic = grads.get(ampgrad_core::autograd::ParamId(pid)).unwrap();
        // conv biases ahead of a batch-norm have an exactly-zero gradient
        let err = max_relative_error(analytic.data(), numeric.data(), 1e-4);
        assert!(err < TOL, "{}: {:e}", model.param_names()[pid], err);
    }
}
