//! Oracles and finite-difference helpers shared by the integration tests.
#![allow(dead_code)]

use henet::arch::{build_henet, Layer, Mode, ModelGraph, NetworkConfig};
use henet::ops::{
    batch_norm, batch_norm_backward, channel_shuffle, channel_shuffle_backward, fully_connected,
    fully_connected_backward, group_conv2d_backward, group_conv2d_forward, relu, relu_backward, softmax_cross_entropy,
    BatchNormParams, BnMode, ConvParams, LinearParams,
};
use henet::{Scalar, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-4;
/// Relative errors use `max(|a|, |n|, FD_FLOOR)` as the denominator.
pub const FD_FLOOR: f64 = 1e-3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor<T: Scalar>(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::from_f64_lossy(rng.random_range(-1.0..1.0)))
}

/// Uniform in `±[lo, hi]`, so values stay clear of zero.
pub fn away_from_zero(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let v = rng.random_range(lo..hi);
    if rng.random_bool(0.5) {
        v
    } else {
        -v
    }
}

/// Direct dense convolution, accumulated in f64. Padded taps read zero.
pub fn naive_dense_conv(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    bias: Option<&[f64]>,
    stride: usize,
    padding: usize,
) -> Tensor<f64> {
    let s = x.shape();
    let ws = w.shape();
    let (cout, k) = (ws.n, ws.h);
    assert_eq!(ws.c, s.c);
    let oh = (s.h + 2 * padding - k) / stride + 1;
    let ow = (s.w + 2 * padding - k) / stride + 1;
    Tensor::from_fn(Shape::new(s.n, cout, oh, ow), |[n, o, y, xo]| {
        let mut acc = bias.map_or(0.0, |b| b[o]);
        for c in 0..s.c {
            for kh in 0..k {
                for kw in 0..k {
                    let iy = (y * stride + kh) as isize - padding as isize;
                    let ix = (xo * stride + kw) as isize - padding as isize;
                    if iy < 0 || ix < 0 || iy >= s.h as isize || ix >= s.w as isize {
                        continue;
                    }
                    acc += x.get([n, c, iy as usize, ix as usize]) * w.get([o, c, kh, kw]);
                }
            }
        }
        acc
    })
}

/// Grouped convolution as `G` independent dense convolutions over channel slices.
pub fn per_group_oracle(x: &Tensor<f64>, p: &ConvParams<f64>) -> Tensor<f64> {
    let s = x.shape();
    let (ipg, opg) = (p.in_per_group(), p.out_per_group());
    let k = p.kernel;
    let mut parts = Vec::new();
    for g in 0..p.groups {
        let xg = Tensor::from_fn(s.with_channels(ipg), |[n, c, y, xx]| x.get([n, g * ipg + c, y, xx]));
        let wg = Tensor::from_fn(Shape::new(opg, ipg, k, k), |[o, c, kh, kw]| {
            p.weight.get([g * opg + o, c, kh, kw])
        });
        let bg: Option<Vec<f64>> = p.bias.as_ref().map(|b| b.data()[g * opg..(g + 1) * opg].to_vec());
        parts.push(naive_dense_conv(&xg, &wg, bg.as_deref(), p.stride, p.padding));
    }
    let os = parts[0].shape();
    Tensor::from_fn(os.with_channels(p.out_channels), |[n, o, y, xx]| {
        parts[o / opg].get([n, o % opg, y, xx])
    })
}

/// Five-point central difference: Richardson-combined steps `h` and `h/2`.
pub fn stencil(mut at: impl FnMut(f64) -> f64) -> f64 {
    let h = FD_STEP;
    let d = |up: f64, down: f64, step: f64| (up - down) / (2.0 * step);
    let coarse = d(at(h), at(-h), h);
    let fine = d(at(h / 2.0), at(-h / 2.0), h / 2.0);
    (4.0 * fine - coarse) / 3.0
}

/// Central differences of `loss` with respect to every entry of `base`.
pub fn central_diff(base: &[f64], mut loss: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut v = base.to_vec();
    (0..v.len())
        .map(|i| {
            let orig = v[i];
            let n = stencil(|delta| {
                v[i] = orig + delta;
                loss(&v)
            });
            v[i] = orig;
            n
        })
        .collect()
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

fn projection(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    random_tensor(shape, rng)
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn with_data(t: &Tensor<f64>, data: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(t.shape(), data.to_vec()).unwrap()
}

/// `(label, max relative error)` for one checked gradient.
pub type CheckRow = (String, f64);

struct ConvCase {
    n: usize,
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    groups: usize,
    bias: bool,
}

const CONV_CASES: [ConvCase; 5] = [
    ConvCase {
        n: 2,
        cin: 6,
        cout: 4,
        h: 5,
        w: 5,
        kernel: 3,
        stride: 1,
        padding: 1,
        groups: 2,
        bias: true,
    },
    ConvCase {
        n: 1,
        cin: 4,
        cout: 4,
        h: 7,
        w: 7,
        kernel: 3,
        stride: 2,
        padding: 0,
        groups: 4,
        bias: false,
    },
    ConvCase {
        n: 1,
        cin: 4,
        cout: 6,
        h: 6,
        w: 6,
        kernel: 3,
        stride: 2,
        padding: 1,
        groups: 2,
        bias: true,
    },
    ConvCase {
        n: 2,
        cin: 6,
        cout: 6,
        h: 4,
        w: 4,
        kernel: 1,
        stride: 1,
        padding: 0,
        groups: 3,
        bias: false,
    },
    ConvCase {
        n: 1,
        cin: 3,
        cout: 2,
        h: 5,
        w: 4,
        kernel: 3,
        stride: 1,
        padding: 1,
        groups: 1,
        bias: true,
    },
];

fn check_conv(case: &ConvCase, rng: &mut ChaCha8Rng, rows: &mut Vec<CheckRow>) {
    let mut p = ConvParams::<f64>::new(
        case.cin,
        case.cout,
        case.kernel,
        case.stride,
        case.padding,
        case.groups,
        case.bias,
    )
    .unwrap();
    p.weight = random_tensor(p.weight.shape(), rng);
    if let Some(b) = &mut p.bias {
        *b = random_tensor(b.shape(), rng);
    }
    let x = random_tensor::<f64>(Shape::new(case.n, case.cin, case.h, case.w), rng);
    let y = group_conv2d_forward(&x, &p).unwrap();
    let r = projection(y.shape(), rng);
    let grads = group_conv2d_backward(&x, &p, &r).unwrap();
    let label = format!(
        "conv {}→{} k{} s{} p{} g{} {}×{}",
        case.cin, case.cout, case.kernel, case.stride, case.padding, case.groups, case.h, case.w
    );

    let num = central_diff(x.data(), |v| {
        dot(&r, &group_conv2d_forward(&with_data(&x, v), &p).unwrap())
    });
    rows.push((format!("{label} input"), max_rel_err(grads.grad_input.data(), &num)));

    let num = central_diff(p.weight.data(), |v| {
        let mut q = p.clone();
        q.weight = with_data(&p.weight, v);
        dot(&r, &group_conv2d_forward(&x, &q).unwrap())
    });
    rows.push((format!("{label} weight"), max_rel_err(grads.grad_weight.data(), &num)));

    if let (Some(b), Some(gb)) = (&p.bias, &grads.grad_bias) {
        let num = central_diff(b.data(), |v| {
            let mut q = p.clone();
            q.bias = Some(with_data(b, v));
            dot(&r, &group_conv2d_forward(&x, &q).unwrap())
        });
        rows.push((format!("{label} bias"), max_rel_err(gb.data(), &num)));
    }
}

fn check_batch_norm(mode: BnMode, rng: &mut ChaCha8Rng, rows: &mut Vec<CheckRow>) {
    let c = 3;
    let mut p = BatchNormParams::<f64>::new(c);
    p.gamma = Tensor::from_fn(p.gamma.shape(), |_| rng.random_range(0.5..1.5));
    p.beta = random_tensor(p.beta.shape(), rng);
    p.running_mean = random_tensor(p.running_mean.shape(), rng);
    p.running_var = Tensor::from_fn(p.running_var.shape(), |_| rng.random_range(0.5..1.5));
    let x = random_tensor::<f64>(Shape::new(2, c, 3, 3), rng);
    let (y, cache) = batch_norm(&x, &p, mode).unwrap();
    let r = projection(y.shape(), rng);
    let grads = batch_norm_backward(&x, &p, &cache, &r).unwrap();
    let f = |x: &Tensor<f64>, p: &BatchNormParams<f64>| dot(&r, &batch_norm(x, p, mode).unwrap().0);
    let label = format!("batch_norm {mode:?}");

    let num = central_diff(x.data(), |v| f(&with_data(&x, v), &p));
    rows.push((format!("{label} input"), max_rel_err(grads.grad_input.data(), &num)));
    let num = central_diff(p.gamma.data(), |v| {
        let mut q = p.clone();
        q.gamma = with_data(&p.gamma, v);
        f(&x, &q)
    });
    rows.push((format!("{label} gamma"), max_rel_err(grads.grad_gamma.data(), &num)));
    let num = central_diff(p.beta.data(), |v| {
        let mut q = p.clone();
        q.beta = with_data(&p.beta, v);
        f(&x, &q)
    });
    rows.push((format!("{label} beta"), max_rel_err(grads.grad_beta.data(), &num)));
}

fn check_linear(rng: &mut ChaCha8Rng, rows: &mut Vec<CheckRow>) {
    let mut p = LinearParams::<f64>::new(8, 5);
    p.weight = random_tensor(p.weight.shape(), rng);
    p.bias = random_tensor(p.bias.shape(), rng);
    let x = random_tensor::<f64>(Shape::new(3, 2, 2, 2), rng);
    let y = fully_connected(&x, &p).unwrap();
    let r = projection(y.shape(), rng);
    let grads = fully_connected_backward(&x, &p, &r).unwrap();

    let num = central_diff(x.data(), |v| dot(&r, &fully_connected(&with_data(&x, v), &p).unwrap()));
    rows.push(("fc input".into(), max_rel_err(grads.grad_input.data(), &num)));
    let num = central_diff(p.weight.data(), |v| {
        let mut q = p.clone();
        q.weight = with_data(&p.weight, v);
        dot(&r, &fully_connected(&x, &q).unwrap())
    });
    rows.push(("fc weight".into(), max_rel_err(grads.grad_weight.data(), &num)));
    let num = central_diff(p.bias.data(), |v| {
        let mut q = p.clone();
        q.bias = with_data(&p.bias, v);
        dot(&r, &fully_connected(&x, &q).unwrap())
    });
    rows.push(("fc bias".into(), max_rel_err(grads.grad_bias.data(), &num)));
}

fn check_relu(rng: &mut ChaCha8Rng, rows: &mut Vec<CheckRow>) {
    let x = Tensor::from_fn(Shape::new(2, 3, 4, 4), |_| away_from_zero(rng, 0.05, 1.0));
    let y = relu(&x);
    let r = projection(y.shape(), rng);
    let g = relu_backward(&y, &r).unwrap();
    let num = central_diff(x.data(), |v| dot(&r, &relu(&with_data(&x, v))));
    rows.push(("relu input".into(), max_rel_err(g.data(), &num)));
}

fn check_shuffle(rng: &mut ChaCha8Rng, rows: &mut Vec<CheckRow>) {
    for (c, g) in [(6, 2), (12, 3), (8, 8)] {
        let x = random_tensor::<f64>(Shape::new(2, c, 3, 3), rng);
        let y = channel_shuffle(&x, g).unwrap();
        let r = projection(y.shape(), rng);
        let gx = channel_shuffle_backward(&r, g).unwrap();
        let num = central_diff(x.data(), |v| dot(&r, &channel_shuffle(&with_data(&x, v), g).unwrap()));
        rows.push((format!("shuffle C={c} g={g}"), max_rel_err(gx.data(), &num)));
    }
}

fn check_softmax_ce(rng: &mut ChaCha8Rng, rows: &mut Vec<CheckRow>) {
    let scores = Tensor::from_fn(Shape::new(3, 5, 1, 1), |_| rng.random_range(-3.0..3.0));
    let labels = [1, 4, 0];
    let (_, g) = softmax_cross_entropy(&scores, &labels).unwrap();
    let num = central_diff(scores.data(), |v| {
        softmax_cross_entropy(&with_data(&scores, v), &labels).unwrap().0
    });
    rows.push(("softmax_cross_entropy scores".into(), max_rel_err(g.data(), &num)));
}

/// Finite-difference checks of every op with a backward kernel.
pub fn op_gradient_checks(seed: u64) -> Vec<CheckRow> {
    let mut rng = rng(seed);
    let mut rows = Vec::new();
    for case in &CONV_CASES {
        check_conv(case, &mut rng, &mut rows);
    }
    check_batch_norm(BnMode::Train, &mut rng, &mut rows);
    check_batch_norm(BnMode::Infer, &mut rng, &mut rows);
    check_linear(&mut rng, &mut rows);
    check_relu(&mut rng, &mut rows);
    check_shuffle(&mut rng, &mut rows);
    check_softmax_ce(&mut rng, &mut rows);
    rows
}

/// Repeat-1 model at 7×7 in f64, with batch-norm affine terms and running
/// statistics randomized so no ReLU sits on its kink and infer mode is not the identity.
pub fn micro_model(seed: u64) -> ModelGraph<f64> {
    let cfg = NetworkConfig {
        input_size: 7,
        ..NetworkConfig::with_repeat(1)
    };
    let mut g = build_henet::<f32>(&cfg, seed).unwrap().cast::<f64>();
    let mut rng = rng(seed ^ 0x5eed);
    let infos = g.param_infos();
    for (info, p) in infos.iter().zip(g.params_mut()) {
        match info.kind {
            henet::arch::ParamKind::BnGamma => {
                *p = Tensor::from_fn(p.shape(), |_| rng.random_range(0.5..1.5));
            }
            henet::arch::ParamKind::BnBeta => {
                *p = Tensor::from_fn(p.shape(), |_| away_from_zero(&mut rng, 0.1, 0.5));
            }
            _ => {}
        }
    }
    for (name, b) in g.buffers_mut() {
        *b = if name.ends_with("running_var") {
            Tensor::from_fn(b.shape(), |_| rng.random_range(0.5..1.5))
        } else {
            Tensor::from_fn(b.shape(), |_| rng.random_range(-0.2..0.2))
        };
    }
    g
}

#[derive(Debug, Clone)]
pub struct ModelCheck {
    pub entries: usize,
    /// Entries whose stencil moved some ReLU across its kink; not compared.
    pub skipped: usize,
    pub max_rel: f64,
    pub worst: String,
}

/// `⟨R, scores⟩` plus which ReLU units are active.
fn loss_and_pattern(g: &ModelGraph<f64>, x: &Tensor<f64>, r: &Tensor<f64>, mode: Mode) -> (f64, Vec<bool>) {
    let acts = g.forward_trace(x, mode).unwrap();
    let mut pattern = Vec::new();
    for (id, node) in g.nodes().iter().enumerate() {
        if matches!(node.layer, Layer::Relu) {
            pattern.extend(acts.value(id).data().iter().map(|&v| v > 0.0));
        }
    }
    (dot(r, acts.scores()), pattern)
}

/// [`stencil`] over a piecewise-smooth loss; `None` when any stencil point changes the pattern.
fn kink_aware_stencil(base: &[bool], mut at: impl FnMut(f64) -> (f64, Vec<bool>)) -> Option<f64> {
    let mut smooth = true;
    let n = stencil(|delta| {
        let (l, p) = at(delta);
        smooth &= p == base;
        l
    });
    smooth.then_some(n)
}

/// Checks the gradient of `⟨R, scores⟩` against central differences for the
/// input and for every `stride`-th entry of every parameter tensor.
pub fn model_gradient_check(g: &mut ModelGraph<f64>, batch: usize, mode: Mode, stride: usize, seed: u64) -> ModelCheck {
    let mut rng = rng(seed);
    let x = random_tensor::<f64>(g.input_shape().with_batch(batch), &mut rng);
    let acts = g.forward_trace(&x, mode).unwrap();
    let r = projection(acts.scores().shape(), &mut rng);
    let grads = g.backward(&acts, &r).unwrap();
    let (_, base) = loss_and_pattern(g, &x, &r, mode);
    let mut report = ModelCheck {
        entries: 0,
        skipped: 0,
        max_rel: 0.0,
        worst: String::new(),
    };
    let note = |label: String, a: f64, n: Option<f64>, report: &mut ModelCheck| {
        let Some(n) = n else {
            report.skipped += 1;
            return;
        };
        report.entries += 1;
        let e = rel_err(a, n);
        if e > report.max_rel || report.worst.is_empty() {
            report.max_rel = report.max_rel.max(e);
            report.worst = format!("{label} analytic={a:e} numeric={n:e}");
        }
    };

    let mut xv = x.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        let n = kink_aware_stencil(&base, |delta| {
            xv.data_mut()[i] = orig + delta;
            loss_and_pattern(g, &xv, &r, mode)
        });
        xv.data_mut()[i] = orig;
        note(format!("input[{i}]"), grads.input.data()[i], n, &mut report);
    }

    let names: Vec<String> = g.param_infos().into_iter().map(|p| p.name).collect();
    for (p, name) in names.iter().enumerate() {
        let len = grads.params[p].len();
        for i in (0..len).step_by(stride.max(1)) {
            let orig = g.params()[p].data()[i];
            let n = kink_aware_stencil(&base, |delta| {
                g.params_mut()[p].data_mut()[i] = orig + delta;
                loss_and_pattern(g, &x, &r, mode)
            });
            g.params_mut()[p].data_mut()[i] = orig;
            note(format!("{name}[{i}]"), grads.params[p].data()[i], n, &mut report);
        }
    }
    report
}

/// Loop-counting oracle for a convolution: one per multiply actually issued by
/// a direct implementation that also visits padded taps.
pub fn counted_conv_macs(p: &ConvParams<f32>, out_h: usize, out_w: usize) -> u64 {
    let mut macs = 0u64;
    for _o in 0..p.out_channels {
        for _y in 0..out_h {
            for _x in 0..out_w {
                for _c in 0..p.in_per_group() {
                    for _kh in 0..p.kernel {
                        for _kw in 0..p.kernel {
                            macs += 1;
                        }
                    }
                }
            }
        }
    }
    macs
}

pub fn counted_conv_params(p: &ConvParams<f32>) -> u64 {
    let mut n = 0u64;
    for _o in 0..p.out_channels {
        for _c in 0..p.in_per_group() {
            for _k in 0..p.kernel * p.kernel {
                n += 1;
            }
        }
        if p.bias.is_some() {
            n += 1;
        }
    }
    n
}
