//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.
//!
//! `HENET_ACCEPTANCE_ITERS` overrides the training budget of criterion 10 (default 1000,
//! at most 3000); `HENET_CIFAR10_DIR` points it at a real CIFAR-10 binary directory.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use common::{
    counted_conv_macs, counted_conv_params, micro_model, model_gradient_check, naive_dense_conv, op_gradient_checks,
    per_group_oracle, random_tensor, rng,
};
use henet::analyze::{layer_macs, layer_params, CountingConvention};
use henet::arch::{
    build_henet, build_shufflenet_baseline, make_stride1_block, nearest_divisor_pair, BlockKind, BlockWeights, Layer,
    LayerKind, Mode, ModelFamily, ModelGraph, NetworkConfig,
};
use henet::bench::{odd_even_experiment, resolution_chain, stride2_paddings};
use henet::data::{load_cifar10, load_model, save_model, synth_dataset, write_cifar10_dir};
use henet::ops::{channel_shuffle, group_conv2d_forward, shuffle_source_index, BnMode, ConvParams, LinearParams};
use henet::tensor::{add_elementwise, slice_channels};
use henet::train::{evaluate, multistep_lr, train_loop, TrainConfig};
use henet::{Shape, Tensor};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn henet_graph(repeat: usize) -> ModelGraph<f32> {
    build_henet(&NetworkConfig::with_repeat(repeat), 0).unwrap()
}

fn c1_group_rule() -> Outcome {
    let pairs: Vec<_> = [24, 48, 96].iter().map(|&c| nearest_divisor_pair(c).unwrap()).collect();
    ensure(pairs == [(6, 4), (8, 6), (12, 8)], || format!("pairs {pairs:?}"))?;
    let g = henet_graph(3);
    // layout rows: the dense stem, then each run of identical blocks
    let mut rows: Vec<(usize, usize, usize, usize)> = Vec::new();
    for b in g.blocks() {
        let Some(s) = b.spec else { continue };
        let stride = if s.kind == BlockKind::Stride1 { 1 } else { 2 };
        match rows.last_mut() {
            Some(r) if stride == 1 && r.0 == 1 && (r.2, r.3) == (s.m, s.n) => r.1 += 1,
            _ => rows.push((stride, 1, s.m, s.n)),
        }
    }
    let expect = vec![
        (1, 3, 6, 4),
        (2, 1, 6, 4),
        (1, 3, 8, 6),
        (2, 1, 8, 6),
        (1, 3, 12, 8),
        (2, 1, 8, 6),
        (2, 1, 12, 8),
    ];
    ensure(rows == expect, || format!("rows {rows:?}"))?;
    let stem_groups = g.nodes().iter().find_map(|n| match &n.layer {
        Layer::Conv(p) if n.name == "stem.conv1" => Some(p.groups),
        _ => None,
    });
    ensure(stem_groups == Some(1), || format!("stem groups {stem_groups:?}"))?;
    let seq: Vec<String> = rows.iter().map(|r| format!("({},{})", r.2, r.3)).collect();
    Ok(format!("{} rows: stem + {}", rows.len() + 1, seq.join(" ")))
}

fn c2_shape_trace() -> Outcome {
    let g = henet_graph(3);
    let trace = g.block_trace();
    let at = |name: &str| {
        let s = trace.iter().find(|(n, _)| n == name).unwrap().1;
        (s.h, s.w, s.c)
    };
    let want = [
        ("stem", (31, 31, 24)),
        ("stage1.block3", (31, 31, 24)),
        ("stage1.down", (15, 15, 48)),
        ("stage2.block3", (15, 15, 48)),
        ("stage2.down", (7, 7, 96)),
        ("stage3.block3", (7, 7, 96)),
        ("stage3.down", (3, 3, 96)),
        ("stage4.down", (1, 1, 192)),
    ];
    for (name, hwc) in want {
        ensure(at(name) == hwc, || format!("{name}: {:?} != {hwc:?}", at(name)))?;
    }
    let fc = g.nodes().last().unwrap().output;
    ensure(fc.c == 10, || format!("fc {fc}"))?;
    let chain = resolution_chain(&g);
    let pads = stride2_paddings(&g);
    ensure(chain == [31, 15, 7, 3, 1], || format!("chain {chain:?}"))?;
    ensure(pads == [0, 0, 0, 0], || format!("paddings {pads:?}"))?;
    Ok("31×31×24 → 15×15×48 → 7×7×96 → 3×3×96 → 1×1×192 → FC 10, pad 0".into())
}

fn c3_no_pooling() -> Outcome {
    let mut graphs = 0;
    for repeat in 1..=6 {
        let cfg = NetworkConfig::with_repeat(repeat);
        for g in [
            build_henet::<f32>(&cfg, 0).unwrap(),
            build_shufflenet_baseline(&cfg, 0).unwrap(),
        ] {
            graphs += 1;
            for node in g.nodes() {
                ensure(!node.layer.kind().name().contains("pool"), || node.name.clone())?;
                let Some(&i) = node.inputs.first() else { continue };
                if node.output.h < g.nodes()[i].output.h && node.layer.kind() != LayerKind::Linear {
                    let strided = matches!(&node.layer, Layer::Conv(p) if p.stride == 2);
                    ensure(strided, || {
                        format!("{} reduces resolution without a strided conv", node.name)
                    })?;
                }
            }
        }
    }
    Ok(format!("{graphs} graphs, every reduction is a stride-2 conv"))
}

fn c4_kernel_oracle() -> Outcome {
    let mut r = rng(4);
    let mut worst = 0.0f64;
    let instances = 24;
    for _ in 0..instances {
        let groups = r.random_range(1..=4);
        let cin = groups * r.random_range(1..=3);
        let cout = groups * r.random_range(1..=3);
        let kernel = [1, 3][r.random_range(0..2)];
        let stride = r.random_range(1..=2);
        let padding = r.random_range(0..=1);
        let (h, w) = (r.random_range(3..=9), r.random_range(3..=9));
        let n = r.random_range(1..=2);
        let bias = r.random_bool(0.5);
        let x = random_tensor::<f32>(Shape::new(n, cin, h, w), &mut r);

        let mut p = ConvParams::<f32>::new(cin, cout, kernel, stride, padding, groups, bias).unwrap();
        p.weight = random_tensor(p.weight.shape(), &mut r);
        if let Some(b) = &mut p.bias {
            *b = random_tensor(b.shape(), &mut r);
        }
        let got = group_conv2d_forward(&x, &p).unwrap();
        let p64 = ConvParams {
            weight: p.weight.cast::<f64>(),
            bias: p.bias.as_ref().map(Tensor::cast),
            in_channels: cin,
            out_channels: cout,
            kernel,
            stride,
            padding,
            groups,
        };
        let want = per_group_oracle(&x.cast(), &p64);
        worst = worst.max(got.cast::<f64>().max_abs_diff(&want).unwrap());

        let mut dense = ConvParams::<f32>::new(cin, cout, kernel, stride, padding, 1, false).unwrap();
        dense.weight = random_tensor(dense.weight.shape(), &mut r);
        let got = group_conv2d_forward(&x, &dense).unwrap();
        let want = naive_dense_conv(&x.cast(), &dense.weight.cast(), None, stride, padding);
        worst = worst.max(got.cast::<f64>().max_abs_diff(&want).unwrap());
    }
    ensure(worst < 1e-5, || format!("max |diff| {worst:e}"))?;
    Ok(format!(
        "{instances} grouped + {instances} dense instances, max |diff| {worst:.2e}"
    ))
}

fn c5_shuffle() -> Outcome {
    for c in 1..=48usize {
        for g in (1..=c).filter(|g| c % g == 0) {
            let mut seen = vec![false; c];
            for o in 0..c {
                seen[shuffle_source_index(o, c, g)] = true;
            }
            ensure(seen.iter().all(|&s| s), || format!("C={c} g={g} not a bijection"))?;
        }
    }
    let x = Tensor::from_fn(Shape::new(2, 12, 2, 3), |[n, c, h, w]| {
        (n * 1000 + c * 100 + h * 10 + w) as f32
    });
    ensure(channel_shuffle(&x, 1).unwrap() == x, || "g=1 not identity".into())?;
    ensure(channel_shuffle(&x, 12).unwrap() == x, || "g=C not identity".into())?;
    let six = Tensor::from_fn(Shape::new(1, 6, 1, 1), |[_, c, _, _]| c as f32);
    let perm: Vec<usize> = channel_shuffle(&six, 2)
        .unwrap()
        .data()
        .iter()
        .map(|&v| v as usize)
        .collect();
    ensure(perm == [0, 3, 1, 4, 2, 5], || format!("C=6 g=2 gives {perm:?}"))?;
    Ok(format!("bijective for every g | C ≤ 48; C=6,g=2 → {perm:?}"))
}

fn c6_running_sum() -> Outcome {
    let mut r = rng(6);
    let spec = make_stride1_block(48).unwrap();
    let mut blocks: Vec<BlockWeights<f32>> = (0..3).map(|_| BlockWeights::new(spec, &mut r).unwrap()).collect();
    for b in &mut blocks {
        for bn in [&mut b.bn1, &mut b.bn2] {
            bn.gamma = Tensor::from_fn(bn.gamma.shape(), |_| r.random_range(0.5..1.5));
            bn.beta = random_tensor(bn.beta.shape(), &mut r);
        }
    }
    let x0 = random_tensor::<f32>(Shape::new(2, 48, 9, 9), &mut r);
    let mut x = x0.clone();
    let mut sum = slice_channels(&x0, 0, 24).unwrap();
    for b in &blocks {
        let out = henet::arch::stride1_block_forward(&x, b, BnMode::Train).unwrap();
        sum = add_elementwise(&sum, &out.transform).unwrap();
        x = out.output;
    }
    let diff = slice_channels(&x, 0, 24).unwrap().max_abs_diff(&sum).unwrap();
    ensure(diff < 1e-4, || format!("max |diff| {diff:e}"))?;
    Ok(format!(
        "3 blocks, max |firstHalf(out) − (firstHalf(x) + Σh)| {diff:.2e}"
    ))
}

fn c7_gradients() -> Outcome {
    let mut worst_op = (String::new(), 0.0f64);
    for (label, e) in op_gradient_checks(7) {
        if e > worst_op.1 || worst_op.0.is_empty() {
            worst_op = (label, e);
        }
    }
    ensure(worst_op.1 < 1e-6, || format!("{}: {:e}", worst_op.0, worst_op.1))?;
    let mut g = micro_model(7);
    let infer = model_gradient_check(&mut g, 1, Mode::Infer, 1, 8);
    ensure(infer.max_rel < 1e-6, || {
        format!("infer: {} ({:e})", infer.worst, infer.max_rel)
    })?;
    ensure(infer.skipped * 100 < infer.entries, || {
        format!("infer: {} kink crossings", infer.skipped)
    })?;
    let mut g = micro_model(7);
    let train = model_gradient_check(&mut g, 1, Mode::Train, 5, 9);
    ensure(train.max_rel < 1e-6, || {
        format!("train: {} ({:e})", train.worst, train.max_rel)
    })?;
    Ok(format!(
        "ops max {:.1e} ({}); micro-model infer {} entries max {:.1e}, train {} entries max {:.1e}; {} kink-crossing entries skipped",
        worst_op.1,
        worst_op.0,
        infer.entries,
        infer.max_rel,
        train.entries,
        train.max_rel,
        infer.skipped + train.skipped
    ))
}

fn c8_analyzer() -> Outcome {
    let conv = |cin, cout, k, pad, g, bias| Layer::Conv(ConvParams::<f32>::new(cin, cout, k, 1, pad, g, bias).unwrap());
    let c = CountingConvention::default();
    let at31 = |c: usize| Shape::new(1, c, 31, 31);
    let values = [
        layer_params(&conv(3, 24, 3, 1, 1, true), c),
        layer_params(&conv(24, 12, 1, 0, 6, false), c),
        layer_params(&Layer::Linear(LinearParams::<f32>::new(192, 10)), c),
        layer_macs(&conv(24, 12, 1, 0, 6, false), at31(12)),
        layer_macs(&conv(3, 24, 3, 1, 1, false), at31(24)),
    ];
    ensure(values == [672, 48, 1930, 46_128, 622_728], || format!("{values:?}"))?;
    let mut r = rng(8);
    for i in 0..20 {
        let g = r.random_range(1..=4);
        let cin = g * r.random_range(1..=8);
        let cout = g * r.random_range(1..=8);
        let k = [1, 3, 5][r.random_range(0..3)];
        let stride = r.random_range(1..=2);
        let pad = r.random_range(0..=2);
        let size = r.random_range(k..=20);
        let p = ConvParams::<f32>::new(cin, cout, k, stride, pad, g, r.random_bool(0.5)).unwrap();
        let out = p.output_shape(Shape::new(1, cin, size, size)).unwrap();
        let layer = Layer::Conv(p.clone());
        let want = (counted_conv_params(&p), counted_conv_macs(&p, out.h, out.w));
        let got = (layer_params(&layer, c), layer_macs(&layer, out));
        ensure(got == want, || format!("config {i}: {p:?}: {got:?} != {want:?}"))?;
    }
    Ok("672, 48, 1930, 46128, 622728 and 20 random convs match the loop counts".into())
}

fn c9_comparison_report() -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = henet::cli::run(["henet", "analyze"], &mut out, &mut err);
    ensure(code == 0, || String::from_utf8_lossy(&err).into_owned())?;
    let text = String::from_utf8(out).unwrap();
    let rows: Vec<&str> = text
        .lines()
        .filter(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            f.len() == 9 && ["2", "3", "4"].contains(&f[0])
        })
        .collect();
    ensure(rows.len() == 3, || format!("comparison rows missing:\n{text}"))?;
    for (row, (published_params, published_mflops)) in
        rows.iter()
            .zip([("507000", "7.3"), ("641000", "10.2"), ("775000", "13.2")])
    {
        let f: Vec<&str> = row.split_whitespace().collect();
        ensure(f[2] == published_params && f[5] == published_mflops, || {
            format!("row {row}")
        })?;
    }
    let summary: Vec<String> = rows
        .iter()
        .map(|r| {
            let f: Vec<&str> = r.split_whitespace().collect();
            format!("r{}: {} params (×{}), {} MFLOPs (×{})", f[0], f[1], f[3], f[4], f[6])
        })
        .collect();
    Ok(format!("displayed, not asserted; {}", summary.join("; ")))
}

fn training_data() -> (henet::data::LabeledDataset, String) {
    if let Some(dir) = std::env::var_os("HENET_CIFAR10_DIR") {
        let (train, _) = load_cifar10(&PathBuf::from(&dir)).unwrap();
        return (train.take(500), format!("CIFAR-10 {}", PathBuf::from(dir).display()));
    }
    // no dataset shipped: synthetic images in the CIFAR-10 file format, read back by the loader
    let dir = tempfile::tempdir().unwrap();
    let train = synth_dataset(500, 10, 10).unwrap();
    write_cifar10_dir(dir.path(), &train, &synth_dataset(10, 10, 11).unwrap()).unwrap();
    let (train, _) = load_cifar10(dir.path()).unwrap();
    (train, "synthetic CIFAR-10-format data".into())
}

fn c10_training() -> Outcome {
    let iters: usize = std::env::var("HENET_ACCEPTANCE_ITERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(1000)
        .clamp(1, 3000);
    let (train, source) = training_data();
    let recipe = |max_iter| TrainConfig {
        batch_size: 50,
        seed: 10,
        log_interval: 0,
        ..TrainConfig::scaled(max_iter)
    };
    let model = || {
        let mut g = henet_graph(2);
        g.set_input_mean(train.channel_means()).unwrap();
        g
    };

    let short = recipe(15);
    let a = train_loop(model(), &train, None, &short, &mut |_| {}).unwrap();
    let b = train_loop(model(), &train, None, &short, &mut |_| {}).unwrap();
    ensure(a.graph == b.graph && a.final_loss == b.final_loss, || {
        "runs with one seed differ".into()
    })?;

    let cfg = recipe(iters);
    ensure(
        cfg.base_lr == 0.01 && cfg.momentum == 0.9 && cfg.weight_decay == 5e-4 && cfg.lr_steps.is_empty(),
        || format!("recipe {cfg:?}"),
    )?;
    let outcome = train_loop(model(), &train, None, &cfg, &mut |_| {}).unwrap();
    let acc = evaluate(&outcome.graph, &train).unwrap();
    ensure(acc >= 0.95, || {
        format!("train accuracy {acc:.4} after {iters} iterations")
    })?;
    Ok(format!(
        "{source}, 500 samples, {iters} iterations: train accuracy {acc:.4}, final loss {:.4}; seeded runs bit-identical",
        outcome.final_loss.unwrap_or(f64::NAN)
    ))
}

fn c11_lr_schedule() -> Outcome {
    let cfg = TrainConfig::default();
    let at = |i| multistep_lr(i, &cfg).unwrap();
    let got = [at(0), at(31_999), at(32_000), at(47_999), at(48_000), at(64_999)];
    ensure(got == [0.01, 0.01, 0.001, 0.001, 0.0001, 0.0001], || format!("{got:?}"))?;
    Ok(format!(
        "{} / {} / {} at 0 / 32000 / 48000",
        at(0),
        at(32_000),
        at(48_000)
    ))
}

fn c12_odd_even() -> Outcome {
    let r = odd_even_experiment(ModelFamily::HeNet, &NetworkConfig::with_repeat(2), 1000, 5, 0).unwrap();
    ensure((r.odd_size, r.even_size) == (31, 32), || {
        format!("sizes {} {}", r.odd_size, r.even_size)
    })?;
    ensure(r.even_macs > r.odd_macs, || {
        format!("MACs {} vs {}", r.even_macs, r.odd_macs)
    })?;
    ensure(r.odd.threads == 1 && r.even.threads == 1, || {
        "benchmark used more than one thread".into()
    })?;
    ensure(r.odd.runs == 1000 && r.odd.trials == 5, || "wrong run count".into())?;
    Ok(format!(
        "31: {:.1} µs, {} MACs; 32: {:.1} µs, {} MACs; odd input {:.2}% faster (informational)",
        r.odd.per_forward_us(),
        r.odd_macs,
        r.even.per_forward_us(),
        r.even_macs,
        r.speedup_percent()
    ))
}

fn c13_serialization() -> Outcome {
    let mut g = henet_graph(2);
    g.set_input_mean(vec![0.49, 0.48, 0.45]).unwrap();
    let mut r = rng(13);
    for (_, b) in g.buffers_mut() {
        for v in b.data_mut() {
            *v += r.random_range(0.0..0.3);
        }
    }
    let x = random_tensor::<f32>(g.input_shape().with_batch(2), &mut r);
    let before = g.forward(&x, Mode::Infer).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    save_model(&g, &path).unwrap();
    let after = load_model(&path).unwrap().forward(&x, Mode::Infer).unwrap();
    let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    ensure(bits(&before) == bits(&after), || "scores differ after reload".into())?;
    Ok(format!("{} scores bit-identical", before.len()))
}

fn main() {
    let criteria: [Criterion; 13] = [
        ("group rule", c1_group_rule),
        ("shape trace", c2_shape_trace),
        ("no pooling", c3_no_pooling),
        ("kernel oracle", c4_kernel_oracle),
        ("channel shuffle", c5_shuffle),
        ("running-sum skip path", c6_running_sum),
        ("gradients", c7_gradients),
        ("analyzer oracle", c8_analyzer),
        ("comparison report", c9_comparison_report),
        ("training sanity", c10_training),
        ("lr schedule", c11_lr_schedule),
        ("odd-even experiment", c12_odd_even),
        ("serialization", c13_serialization),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
