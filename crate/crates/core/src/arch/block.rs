//! The two building blocks and their group-count rule.
//!
//! A stride-1 block maps `2C → C → C` channels through
//! `1×1 conv (m groups) → shuffle(m) → 3×3 conv (n groups)` and combines the
//! result `h` with its input as `[X⁺ + h, h]`, where `X⁺` is the first half of
//! the input. A stride-2 block runs `3×3/s2 conv (m) → shuffle(m) → 1×1 conv (n)`
//! with no shortcut.

use rand::Rng;

use super::groups::nearest_divisor_pair;
use crate::error::{Error, Result};
use crate::ops::{batch_norm, channel_shuffle, group_conv2d_forward, relu, BatchNormParams, BnMode, ConvParams};
use crate::tensor::{add_elementwise, concat_channels, slice_channels, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Stride1,
    Stride2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSpec {
    pub kind: BlockKind,
    pub in_channels: usize,
    pub mid_channels: usize,
    pub out_channels: usize,
    /// Groups of the first convolution and of the shuffle.
    pub m: usize,
    /// Groups of the second convolution.
    pub n: usize,
    pub first_kernel: usize,
    pub second_kernel: usize,
    pub first_stride: usize,
    pub first_padding: usize,
    pub second_padding: usize,
}

/// Padding for a 3×3 stride-2 convolution over `size` pixels.
///
/// Odd sizes with `size − 3` even need none; everything else pads by one and
/// floors, which also keeps a 1×1 map at 1×1.
pub fn stride2_padding(size: usize) -> usize {
    if size >= 3 && (size - 3).is_multiple_of(2) {
        0
    } else {
        1
    }
}

fn require_divides(what: &str, groups: usize, channels: usize, label: &str) -> Result<()> {
    if !channels.is_multiple_of(groups) {
        return Err(Error::Build(format!(
            "{what}: {label} groups {groups} does not divide {channels} channels"
        )));
    }
    Ok(())
}

impl BlockSpec {
    pub fn validate(&self) -> Result<()> {
        let what = match self.kind {
            BlockKind::Stride1 => format!("stride-1 block of width {}", self.in_channels),
            BlockKind::Stride2 => format!("stride-2 block {}→{}", self.in_channels, self.out_channels),
        };
        if self.m <= self.n || self.n == 0 {
            return Err(Error::Build(format!(
                "{what}: need m > n ≥ 1, got ({}, {})",
                self.m, self.n
            )));
        }
        require_divides(&what, self.m, self.in_channels, "m")?;
        require_divides(&what, self.m, self.mid_channels, "m")?;
        require_divides(&what, self.n, self.mid_channels, "n")?;
        let second_out = match self.kind {
            BlockKind::Stride1 => {
                if self.out_channels != self.in_channels || self.mid_channels * 2 != self.in_channels {
                    return Err(Error::Build(format!("{what}: channels must be 2C → C → 2C")));
                }
                self.mid_channels
            }
            BlockKind::Stride2 => {
                if self.mid_channels * 2 != self.out_channels {
                    return Err(Error::Build(format!("{what}: mid must be half of out")));
                }
                self.out_channels
            }
        };
        require_divides(&what, self.n, second_out, "n")?;
        Ok(())
    }

    pub fn first_conv<T: Scalar>(&self) -> Result<ConvParams<T>> {
        ConvParams::new(
            self.in_channels,
            self.mid_channels,
            self.first_kernel,
            self.first_stride,
            self.first_padding,
            self.m,
            false,
        )
    }

    pub fn second_conv<T: Scalar>(&self) -> Result<ConvParams<T>> {
        let out = match self.kind {
            BlockKind::Stride1 => self.mid_channels,
            BlockKind::Stride2 => self.out_channels,
        };
        ConvParams::new(
            self.mid_channels,
            out,
            self.second_kernel,
            1,
            self.second_padding,
            self.n,
            false,
        )
    }
}

pub fn make_stride1_block(width: usize) -> Result<BlockSpec> {
    if width < 2 || !width.is_multiple_of(2) {
        return Err(Error::Build(format!("stride-1 block width {width} must be even")));
    }
    let (m, n) = nearest_divisor_pair(width)?;
    let spec = BlockSpec {
        kind: BlockKind::Stride1,
        in_channels: width,
        mid_channels: width / 2,
        out_channels: width,
        m,
        n,
        first_kernel: 1,
        second_kernel: 3,
        first_stride: 1,
        first_padding: 0,
        second_padding: 1,
    };
    spec.validate()?;
    Ok(spec)
}

/// Stride-2 block `in_c → out_c/2 → out_c`, padded for a `size × size` input.
///
/// Groups come from `nearest_divisor_pair(mid)` when the block narrows
/// (`mid < in_c`) and from `nearest_divisor_pair(in_c)` otherwise.
pub fn make_stride2_block(in_c: usize, out_c: usize, size: usize) -> Result<BlockSpec> {
    if out_c < 2 || !out_c.is_multiple_of(2) {
        return Err(Error::Build(format!(
            "stride-2 block output width {out_c} must be even"
        )));
    }
    let mid = out_c / 2;
    let key = if mid < in_c { mid } else { in_c };
    let (m, n) = nearest_divisor_pair(key)?;
    let spec = BlockSpec {
        kind: BlockKind::Stride2,
        in_channels: in_c,
        mid_channels: mid,
        out_channels: out_c,
        m,
        n,
        first_kernel: 3,
        second_kernel: 1,
        first_stride: 2,
        first_padding: stride2_padding(size),
        second_padding: 0,
    };
    spec.validate()?;
    Ok(spec)
}

/// Zero-mean Gaussian with standard deviation `sqrt(2 / fan_in)`.
pub(crate) fn he_init<T: Scalar>(t: &mut Tensor<T>, fan_in: usize, rng: &mut impl Rng) {
    let dist = rand_distr::Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid std");
    for v in t.data_mut() {
        *v = T::from_f64_lossy(rng.sample(dist));
    }
}

/// Parameters of one block, for running it outside a [`crate::arch::ModelGraph`].
#[derive(Debug, Clone)]
pub struct BlockWeights<T = f32> {
    pub spec: BlockSpec,
    pub conv1: ConvParams<T>,
    pub bn1: BatchNormParams<T>,
    pub conv2: ConvParams<T>,
    pub bn2: BatchNormParams<T>,
}

impl<T: Scalar> BlockWeights<T> {
    pub fn new(spec: BlockSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let mut conv1 = spec.first_conv()?;
        let mut conv2 = spec.second_conv()?;
        let (f1, f2) = (conv1.fan_in(), conv2.fan_in());
        he_init(&mut conv1.weight, f1, rng);
        he_init(&mut conv2.weight, f2, rng);
        Ok(BlockWeights {
            spec,
            bn1: BatchNormParams::new(conv1.out_channels),
            bn2: BatchNormParams::new(conv2.out_channels),
            conv1,
            conv2,
        })
    }

    /// `conv → BN → ReLU → shuffle(m) → conv → BN → ReLU`.
    pub fn transform(&self, x: &Tensor<T>, mode: BnMode) -> Result<Tensor<T>> {
        let a = group_conv2d_forward(x, &self.conv1)?;
        let a = relu(&batch_norm(&a, &self.bn1, mode)?.0);
        let a = channel_shuffle(&a, self.spec.m)?;
        let a = group_conv2d_forward(&a, &self.conv2)?;
        Ok(relu(&batch_norm(&a, &self.bn2, mode)?.0))
    }
}

/// `[X⁺ + h, h]` with `X⁺` the first `h.C` channels of `x`.
pub fn skip_combine<T: Scalar>(x: &Tensor<T>, h: &Tensor<T>) -> Result<Tensor<T>> {
    let mid = h.shape().c;
    if x.shape() != h.shape().with_channels(2 * mid) {
        return Err(Error::ShapeMismatch {
            op: "skip_combine",
            left: x.shape(),
            right: h.shape().with_channels(2 * mid),
        });
    }
    let running = add_elementwise(&slice_channels(x, 0, mid)?, h)?;
    concat_channels(&running, h)
}

#[derive(Debug, Clone)]
pub struct BlockOutput<T = f32> {
    pub output: Tensor<T>,
    /// The block transform `h`.
    pub transform: Tensor<T>,
}

pub fn stride1_block_forward<T: Scalar>(
    x: &Tensor<T>,
    block: &BlockWeights<T>,
    mode: BnMode,
) -> Result<BlockOutput<T>> {
    if block.spec.kind != BlockKind::Stride1 || x.shape().c != block.spec.in_channels {
        return Err(Error::ShapeMismatch {
            op: "stride1_block_forward",
            left: x.shape(),
            right: x.shape().with_channels(block.spec.in_channels),
        });
    }
    let h = block.transform(x, mode)?;
    Ok(BlockOutput {
        output: skip_combine(x, &h)?,
        transform: h,
    })
}

pub fn stride2_block_forward<T: Scalar>(x: &Tensor<T>, block: &BlockWeights<T>, mode: BnMode) -> Result<Tensor<T>> {
    let s = x.shape();
    if block.spec.kind != BlockKind::Stride2 || s.c != block.spec.in_channels {
        return Err(Error::ShapeMismatch {
            op: "stride2_block_forward",
            left: s,
            right: s.with_channels(block.spec.in_channels),
        });
    }
    if s.h < 3 && block.spec.first_padding == 0 {
        return Err(Error::invalid(
            "stride2_block_forward",
            format!(
                "spatial size {}×{} too small for an unpadded 3×3 stride-2 convolution",
                s.h, s.w
            ),
        ));
    }
    block.transform(x, mode)
}
