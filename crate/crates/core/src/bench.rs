//! Single-threaded forward-pass timing and the odd-versus-even input-size experiment.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analyze::count_macs;
use crate::arch::{build_model, Layer, Mode, ModelFamily, ModelGraph, NetworkConfig};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub model: String,
    pub input: Shape,
    pub runs: usize,
    pub trials: usize,
    pub warmup: usize,
    /// Wall seconds for `runs` forwards, one entry per trial.
    pub trial_seconds: Vec<f64>,
    /// Threads the engine ran on: 1 plus any threads that appeared during timing.
    pub threads: usize,
}

impl BenchResult {
    pub fn mean_seconds(&self) -> f64 {
        self.trial_seconds.iter().sum::<f64>() / self.trial_seconds.len() as f64
    }

    pub fn per_forward_us(&self) -> f64 {
        self.mean_seconds() / self.runs as f64 * 1e6
    }

    pub fn render_kv(&self, prefix: &str) -> String {
        let s = self.input;
        let mut out = String::new();
        let _ = writeln!(out, "{prefix}model={}", self.model);
        let _ = writeln!(out, "{prefix}input={}x{}x{}x{}", s.n, s.c, s.h, s.w);
        let _ = writeln!(out, "{prefix}runs={}", self.runs);
        let _ = writeln!(out, "{prefix}trials={}", self.trials);
        let _ = writeln!(out, "{prefix}warmup={}", self.warmup);
        let _ = writeln!(out, "{prefix}batch={}", s.n);
        let _ = writeln!(out, "{prefix}threads={}", self.threads);
        for (i, t) in self.trial_seconds.iter().enumerate() {
            let _ = writeln!(out, "{prefix}trial.{i}.seconds={t:.6}");
        }
        let _ = writeln!(out, "{prefix}mean_seconds={:.6}", self.mean_seconds());
        let _ = writeln!(out, "{prefix}per_forward_us={:.3}", self.per_forward_us());
        out
    }

    pub fn render_table(&self) -> String {
        let s = self.input;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "model {}  input {}×{}×{}  batch {}  runs {}  warmup {}  threads {}",
            self.model, s.h, s.w, s.c, s.n, self.runs, self.warmup, self.threads
        );
        let _ = writeln!(out, "{:>6}  {:>12}", "trial", "seconds");
        for (i, t) in self.trial_seconds.iter().enumerate() {
            let _ = writeln!(out, "{:>6}  {:>12.6}", i, t);
        }
        let _ = writeln!(out, "{:>6}  {:>12.6}", "mean", self.mean_seconds());
        let _ = writeln!(out, "per forward: {:.3} µs", self.per_forward_us());
        out
    }

    /// Header plus one row per trial.
    pub fn render_csv(&self) -> String {
        let s = self.input;
        let mut out = String::from("model,input_h,input_w,batch,runs,trial,seconds,per_forward_us\n");
        for (i, t) in self.trial_seconds.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.6},{:.3}",
                self.model,
                s.h,
                s.w,
                s.n,
                self.runs,
                i,
                t,
                t / self.runs as f64 * 1e6
            );
        }
        out
    }
}

/// Threads in this process according to `/proc/self/task`, if readable.
pub fn process_threads() -> Option<usize> {
    std::fs::read_dir("/proc/self/task").ok().map(|d| d.count())
}

/// Untimed iterations before each measurement: `runs / 10`, at least 10.
pub fn warmup_runs(runs: usize) -> usize {
    (runs / 10).max(10)
}

fn model_id(g: &ModelGraph<f32>) -> String {
    format!("{}-r{}", g.family().name(), g.config().repeat)
}

/// Times `runs` forwards per trial on one fixed random input after an untimed warmup.
pub fn bench_forward(g: &ModelGraph<f32>, input: Shape, runs: usize, trials: usize, seed: u64) -> Result<BenchResult> {
    if runs == 0 || trials == 0 {
        return Err(Error::invalid("bench_forward", "runs and trials must be at least 1"));
    }
    let want = g.input_shape();
    if (input.c, input.h, input.w) != (want.c, want.h, want.w) || input.n == 0 {
        return Err(Error::ShapeMismatch {
            op: "bench_forward",
            left: input,
            right: want.with_batch(input.n.max(1)),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor::from_fn(input, |_| rng.random_range(-0.5f32..0.5));
    let warmup = warmup_runs(runs);
    let before = process_threads();
    for _ in 0..warmup {
        std::hint::black_box(g.forward(&x, Mode::Infer)?);
    }
    let mut trial_seconds = Vec::with_capacity(trials);
    for _ in 0..trials {
        let start = Instant::now();
        for _ in 0..runs {
            std::hint::black_box(g.forward(std::hint::black_box(&x), Mode::Infer)?);
        }
        trial_seconds.push(start.elapsed().as_secs_f64());
    }
    let spawned = match (before, process_threads()) {
        (Some(b), Some(a)) => a.saturating_sub(b),
        _ => 0,
    };
    Ok(BenchResult {
        model: model_id(g),
        input,
        runs,
        trials,
        warmup,
        trial_seconds,
        threads: 1 + spawned,
    })
}

/// Spatial size after the stem and after each resolution change, starting from the input.
pub fn resolution_chain<T: crate::Scalar>(g: &ModelGraph<T>) -> Vec<usize> {
    let mut chain = vec![g.input_shape().h];
    for node in g.nodes() {
        if node.output.h != *chain.last().expect("non-empty") && !matches!(node.layer, Layer::Linear(_)) {
            chain.push(node.output.h);
        }
    }
    chain
}

/// Padding of every stride-2 convolution on the main path, in graph order.
pub fn stride2_paddings<T: crate::Scalar>(g: &ModelGraph<T>) -> Vec<usize> {
    let from_blocks: Vec<usize> = g
        .blocks()
        .iter()
        .filter_map(|b| b.spec.as_ref())
        .filter(|s| s.first_stride == 2)
        .map(|s| s.first_padding)
        .collect();
    if !from_blocks.is_empty() {
        return from_blocks;
    }
    g.nodes()
        .iter()
        .filter_map(|n| match &n.layer {
            Layer::Conv(p) if p.stride == 2 => Some(p.padding),
            _ => None,
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct OddEvenReport {
    pub odd: BenchResult,
    pub even: BenchResult,
    pub odd_size: usize,
    pub even_size: usize,
    pub odd_macs: u64,
    pub even_macs: u64,
    pub odd_chain: Vec<usize>,
    pub even_chain: Vec<usize>,
    pub odd_paddings: Vec<usize>,
    pub even_paddings: Vec<usize>,
}

impl OddEvenReport {
    /// How much faster the odd input runs: `(t_even / t_odd − 1) · 100`.
    pub fn speedup_percent(&self) -> f64 {
        (self.even.mean_seconds() / self.odd.mean_seconds() - 1.0) * 100.0
    }

    pub fn render_kv(&self) -> String {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut out = self.odd.render_kv("odd.");
        out.push_str(&self.even.render_kv("even."));
        let _ = writeln!(out, "odd.chain={}", join(&self.odd_chain));
        let _ = writeln!(out, "even.chain={}", join(&self.even_chain));
        let _ = writeln!(out, "odd.stride2_padding={}", join(&self.odd_paddings));
        let _ = writeln!(out, "even.stride2_padding={}", join(&self.even_paddings));
        let _ = writeln!(out, "odd.macs={}", self.odd_macs);
        let _ = writeln!(out, "even.macs={}", self.even_macs);
        let _ = writeln!(out, "speedup_percent={:.2}", self.speedup_percent());
        out
    }

    pub fn render_table(&self) -> String {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("→");
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>5}  {:<16}  {:<9}  {:>12}  {:>14}",
            "input", "chain", "s2 pad", "MACs", "µs/forward"
        );
        for (size, chain, pads, macs, r) in [
            (
                self.odd_size,
                &self.odd_chain,
                &self.odd_paddings,
                self.odd_macs,
                &self.odd,
            ),
            (
                self.even_size,
                &self.even_chain,
                &self.even_paddings,
                self.even_macs,
                &self.even,
            ),
        ] {
            let pads = pads.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(",");
            let _ = writeln!(
                out,
                "{:>5}  {:<16}  {:<9}  {:>12}  {:>14.3}",
                size,
                join(chain),
                pads,
                macs,
                r.per_forward_us()
            );
        }
        let _ = writeln!(out, "odd input is {:.2}% faster", self.speedup_percent());
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = self.odd.render_csv();
        out.push_str(
            self.even
                .render_csv()
                .lines()
                .skip(1)
                .map(|l| format!("{l}\n"))
                .collect::<String>()
                .as_str(),
        );
        out
    }
}

/// Benches the same architecture at `size` and `size + 1` (size odd) with identical weights seed.
pub fn odd_even_experiment(
    family: ModelFamily,
    cfg: &NetworkConfig,
    runs: usize,
    trials: usize,
    seed: u64,
) -> Result<OddEvenReport> {
    let odd_size = if cfg.input_size % 2 == 1 {
        cfg.input_size
    } else {
        cfg.input_size - 1
    };
    let even_size = odd_size + 1;
    let build = |size: usize| {
        let c = NetworkConfig {
            input_size: size,
            ..cfg.clone()
        };
        build_model::<f32>(family, &c, seed)
    };
    let (go, ge) = (build(odd_size)?, build(even_size)?);
    let (_, odd_macs) = count_macs(&go, go.input_shape())?;
    let (_, even_macs) = count_macs(&ge, ge.input_shape())?;
    let odd = bench_forward(&go, go.input_shape(), runs, trials, seed)?;
    let even = bench_forward(&ge, ge.input_shape(), runs, trials, seed)?;
    Ok(OddEvenReport {
        odd,
        even,
        odd_size,
        even_size,
        odd_macs,
        even_macs,
        odd_chain: resolution_chain(&go),
        even_chain: resolution_chain(&ge),
        odd_paddings: stride2_paddings(&go),
        even_paddings: stride2_paddings(&ge),
    })
}
