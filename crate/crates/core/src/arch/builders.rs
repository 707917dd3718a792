//! Network builders: the HENet stage layout and a ShuffleNet-style baseline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::block::{he_init, make_stride1_block, make_stride2_block, stride2_padding, BlockKind, BlockSpec};
use super::config::NetworkConfig;
use super::graph::{BlockRecord, GraphBuilder, Layer, ModelFamily, ModelGraph, NodeId};
use crate::error::{Error, Result};
use crate::ops::{conv_output_dim, BatchNormParams, ConvParams, LinearParams};
use crate::tensor::{Scalar, Shape};

const SHUFFLE_GROUPS: usize = 3;

struct Ctx<T> {
    b: GraphBuilder<T>,
    rng: ChaCha8Rng,
    blocks: Vec<BlockRecord>,
}

impl<T: Scalar> Ctx<T> {
    fn new(cfg: &NetworkConfig, seed: u64) -> Self {
        let s = cfg.input_size;
        Ctx {
            b: GraphBuilder::new(Shape::new(1, cfg.input_channels, s, s)),
            rng: ChaCha8Rng::seed_from_u64(seed),
            blocks: Vec::new(),
        }
    }

    fn conv(&mut self, name: &str, input: NodeId, mut p: ConvParams<T>) -> Result<NodeId> {
        let fan_in = p.fan_in();
        he_init(&mut p.weight, fan_in, &mut self.rng);
        self.b.push(name, Layer::Conv(p), &[input])
    }

    /// conv → BN, optionally followed by ReLU.
    fn conv_bn(&mut self, prefix: &str, idx: usize, input: NodeId, p: ConvParams<T>, act: bool) -> Result<NodeId> {
        let channels = p.out_channels;
        let c = self.conv(&format!("{prefix}.conv{idx}"), input, p)?;
        let bn = self.b.push(
            format!("{prefix}.bn{idx}"),
            Layer::BatchNorm(BatchNormParams::new(channels)),
            &[c],
        )?;
        if act {
            self.b.push(format!("{prefix}.relu{idx}"), Layer::Relu, &[bn])
        } else {
            Ok(bn)
        }
    }

    fn stem(&mut self, cfg: &NetworkConfig) -> Result<NodeId> {
        let p = ConvParams::new(cfg.input_channels, cfg.stem_channels, 3, 1, 1, 1, false)?;
        let out = self.conv_bn("stem", 1, 0, p, true)?;
        self.blocks.push(BlockRecord {
            name: "stem".into(),
            stage: 0,
            spec: None,
            input: 0,
            output: out,
            transform: None,
            running_sum: None,
        });
        Ok(out)
    }

    fn head(&mut self, input: NodeId, classes: usize) -> Result<NodeId> {
        let d = self.b.shape(input).sample_len();
        let mut p = LinearParams::new(d, classes);
        he_init(&mut p.weight, d, &mut self.rng);
        self.b.push("fc", Layer::Linear(p), &[input])
    }

    fn henet_block(&mut self, name: String, stage: usize, input: NodeId, spec: BlockSpec) -> Result<NodeId> {
        let c1 = self.conv_bn(&name, 1, input, spec.first_conv()?, true)?;
        let sh = self
            .b
            .push(format!("{name}.shuffle"), Layer::Shuffle { groups: spec.m }, &[c1])?;
        let h = self.conv_bn(&name, 2, sh, spec.second_conv()?, true)?;
        let (output, transform, running_sum) = match spec.kind {
            BlockKind::Stride2 => (h, None, None),
            BlockKind::Stride1 => {
                let prev = self.b.push(
                    format!("{name}.xplus_prev"),
                    Layer::Slice {
                        lo: 0,
                        hi: spec.mid_channels,
                    },
                    &[input],
                )?;
                let sum = self.b.push(format!("{name}.xplus"), Layer::Add, &[prev, h])?;
                let out = self.b.push(format!("{name}.concat"), Layer::Concat, &[sum, h])?;
                (out, Some(h), Some(sum))
            }
        };
        self.blocks.push(BlockRecord {
            name,
            stage,
            spec: Some(spec),
            input,
            output,
            transform,
            running_sum,
        });
        Ok(output)
    }

    fn shuffle_unit(
        &mut self,
        name: String,
        stage: usize,
        input: NodeId,
        out_c: usize,
        stride: usize,
    ) -> Result<NodeId> {
        let s = self.b.shape(input);
        let in_c = s.c;
        let mid = out_c / 2;
        let g = SHUFFLE_GROUPS;
        let pad = if stride == 2 { stride2_padding(s.h) } else { 1 };
        let c1 = self.conv_bn(&name, 1, input, ConvParams::new(in_c, mid, 1, 1, 0, g, false)?, true)?;
        let sh = self
            .b
            .push(format!("{name}.shuffle"), Layer::Shuffle { groups: g }, &[c1])?;
        let dw = self.conv_bn(
            &name,
            2,
            sh,
            ConvParams::new(mid, mid, 3, stride, pad, mid, false)?,
            false,
        )?;
        let main = self.conv_bn(&name, 3, dw, ConvParams::new(mid, out_c, 1, 1, 0, g, false)?, false)?;
        let shortcut = if stride == 1 && in_c == out_c {
            input
        } else {
            let p = ConvParams::new(in_c, out_c, 3, stride, pad, g, false)?;
            self.conv_bn(&format!("{name}.proj"), 1, input, p, false)?
        };
        let sum = self.b.push(format!("{name}.add"), Layer::Add, &[main, shortcut])?;
        let out = self.b.push(format!("{name}.relu"), Layer::Relu, &[sum])?;
        self.blocks.push(BlockRecord {
            name,
            stage,
            spec: None,
            input,
            output: out,
            transform: None,
            running_sum: None,
        });
        Ok(out)
    }
}

/// Per-stage `(width, next_width)` transitions, with the final stride-2 stage appended.
fn stage_plan(cfg: &NetworkConfig) -> Result<Vec<(usize, usize)>> {
    cfg.validate()?;
    if cfg.stem_channels != cfg.stage_channels[0] {
        return Err(Error::Build(format!(
            "stem_channels {} must equal the first stage width {}",
            cfg.stem_channels, cfg.stage_channels[0]
        )));
    }
    let last = cfg.stage_channels.len() - 1;
    let mut plan: Vec<(usize, usize)> = cfg
        .stage_channels
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let next = if i < last {
                cfg.stage_channels[i + 1]
            } else if cfg.stage3_doubles {
                2 * w
            } else {
                w
            };
            (w, next)
        })
        .collect();
    let width = plan[last].1;
    plan.push((width, cfg.final_channels));
    Ok(plan)
}

fn after_stride2(size: usize) -> Result<usize> {
    conv_output_dim(size, 3, 2, stride2_padding(size))
        .filter(|&s| s >= 1)
        .ok_or_else(|| Error::Build(format!("spatial size {size} too small for a stride-2 block")))
}

/// Stem, `repeat` stride-1 blocks plus one stride-2 block per stage, a final
/// stride-2 stage, then the classifier. No pooling anywhere.
pub fn build_henet<T: Scalar>(cfg: &NetworkConfig, seed: u64) -> Result<ModelGraph<T>> {
    let plan = stage_plan(cfg)?;
    let mut ctx = Ctx::<T>::new(cfg, seed);
    let mut x = ctx.stem(cfg)?;
    let mut size = cfg.input_size;
    let stages = plan.len();
    for (si, &(width, next)) in plan.iter().enumerate() {
        let stage = si + 1;
        if si + 1 < stages {
            for r in 0..cfg.repeat {
                let spec = make_stride1_block(width)
                    .map_err(|e| Error::Build(format!("stage {stage} block {}: {e}", r + 1)))?;
                x = ctx.henet_block(format!("stage{stage}.block{}", r + 1), stage, x, spec)?;
            }
        }
        let spec = make_stride2_block(width, next, size)
            .map_err(|e| Error::Build(format!("stage {stage} stride-2 block: {e}")))?;
        x = ctx.henet_block(format!("stage{stage}.down"), stage, x, spec)?;
        size = after_stride2(size)?;
    }
    ctx.head(x, cfg.num_classes)?;
    Ok(ctx.b.finish(ModelFamily::HeNet, cfg.clone(), ctx.blocks))
}

/// ShuffleNet-style comparison model with the same stage layout, bottleneck
/// ratio 2 and 3 groups.
pub fn build_shufflenet_baseline<T: Scalar>(cfg: &NetworkConfig, seed: u64) -> Result<ModelGraph<T>> {
    let plan = stage_plan(cfg)?;
    for &(w, next) in &plan {
        for c in [w, next] {
            if c % 2 != 0 || (c / 2) % SHUFFLE_GROUPS != 0 {
                return Err(Error::Build(format!(
                    "baseline width {c} needs an even width whose half is divisible by {SHUFFLE_GROUPS}"
                )));
            }
        }
    }
    let mut ctx = Ctx::<T>::new(cfg, seed);
    let mut x = ctx.stem(cfg)?;
    let mut size = cfg.input_size;
    let stages = plan.len();
    for (si, &(width, next)) in plan.iter().enumerate() {
        let stage = si + 1;
        if si + 1 < stages {
            for r in 0..cfg.repeat {
                x = ctx.shuffle_unit(format!("stage{stage}.unit{}", r + 1), stage, x, width, 1)?;
            }
        }
        x = ctx.shuffle_unit(format!("stage{stage}.down"), stage, x, next, 2)?;
        size = after_stride2(size)?;
    }
    ctx.head(x, cfg.num_classes)?;
    Ok(ctx.b.finish(ModelFamily::ShuffleNet, cfg.clone(), ctx.blocks))
}

/// Build either family from a config.
pub fn build_model<T: Scalar>(family: ModelFamily, cfg: &NetworkConfig, seed: u64) -> Result<ModelGraph<T>> {
    match family {
        ModelFamily::HeNet => build_henet(cfg, seed),
        ModelFamily::ShuffleNet => build_shufflenet_baseline(cfg, seed),
    }
}
