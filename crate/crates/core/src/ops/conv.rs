//! Grouped 2-D convolution on NCHW tensors.
//!
//! Group `g` of `G` maps input channels `[g·Cin/G, (g+1)·Cin/G)` onto output
//! channels `[g·Cout/G, (g+1)·Cout/G)`. The kernels are direct loops over
//! contiguous output rows, so stride-1 rows reduce to `axpy`/`dot` calls.

use crate::error::{Error, Result};
use crate::ops::{axpy, dot};
use crate::tensor::{Scalar, Shape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T = f32> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
    /// `(out_channels, in_channels / groups, kernel, kernel)`
    pub weight: Tensor<T>,
    /// `(out_channels, 1, 1, 1)` when present.
    pub bias: Option<Tensor<T>>,
}

impl<T: Scalar> ConvParams<T> {
    /// Zero-weight convolution; fails when the channel/group arithmetic is inconsistent.
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        groups: usize,
        bias: bool,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 || groups == 0 {
            return Err(Error::invalid(
                "ConvParams::new",
                "channels, kernel, stride and groups must be positive",
            ));
        }
        if !in_channels.is_multiple_of(groups) {
            return Err(Error::invalid(
                "ConvParams::new",
                format!("groups {groups} does not divide in_channels {in_channels}"),
            ));
        }
        if !out_channels.is_multiple_of(groups) {
            return Err(Error::invalid(
                "ConvParams::new",
                format!("groups {groups} does not divide out_channels {out_channels}"),
            ));
        }
        Ok(ConvParams {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            groups,
            weight: Tensor::zeros(Shape::new(out_channels, in_channels / groups, kernel, kernel)),
            bias: bias.then(|| Tensor::zeros(Shape::vector(out_channels))),
        })
    }

    pub fn in_per_group(&self) -> usize {
        self.in_channels / self.groups
    }

    pub fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }

    /// Fan-in of one output unit.
    pub fn fan_in(&self) -> usize {
        self.in_per_group() * self.kernel * self.kernel
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let h = conv_output_dim(input.h, self.kernel, self.stride, self.padding);
        let w = conv_output_dim(input.w, self.kernel, self.stride, self.padding);
        match (h, w) {
            (Some(h), Some(w)) if h >= 1 && w >= 1 => Ok(Shape::new(input.n, self.out_channels, h, w)),
            _ => Err(Error::invalid(
                "group_conv2d",
                format!(
                    "non-positive output size for input {input}, kernel {}, stride {}, padding {}",
                    self.kernel, self.stride, self.padding
                ),
            )),
        }
    }

    fn check(&self) -> Result<()> {
        if !self.in_channels.is_multiple_of(self.groups) || !self.out_channels.is_multiple_of(self.groups) {
            return Err(Error::invalid(
                "group_conv2d",
                format!(
                    "groups {} must divide in_channels {} and out_channels {}",
                    self.groups, self.in_channels, self.out_channels
                ),
            ));
        }
        let expect = Shape::new(self.out_channels, self.in_per_group(), self.kernel, self.kernel);
        if self.weight.shape() != expect {
            return Err(Error::ShapeMismatch {
                op: "group_conv2d weight",
                left: self.weight.shape(),
                right: expect,
            });
        }
        if let Some(b) = &self.bias {
            if b.len() != self.out_channels {
                return Err(Error::ShapeMismatch {
                    op: "group_conv2d bias",
                    left: b.shape(),
                    right: Shape::vector(self.out_channels),
                });
            }
        }
        Ok(())
    }

    fn check_input(&self, x: Shape) -> Result<Shape> {
        self.check()?;
        if x.c != self.in_channels {
            return Err(Error::ShapeMismatch {
                op: "group_conv2d input",
                left: x,
                right: x.with_channels(self.in_channels),
            });
        }
        self.output_shape(x)
    }
}

/// `floor((input + 2·padding − kernel) / stride) + 1`, or `None` when the window does not fit.
pub fn conv_output_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if padded < kernel || stride == 0 {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Padded input split into `stride × stride` phase planes, so that every kernel tap reads a
/// contiguous run of one plane. Plane `(a, b)` holds padded pixel `(s·i + a, s·j + b)` at `(i, j)`.
struct Phases {
    s: usize,
    pad: usize,
    ph: usize,
    pw: usize,
    /// planes per channel
    count: usize,
}

impl Phases {
    fn new(x: Shape, stride: usize, pad: usize) -> Self {
        let (hp, wp) = (x.h + 2 * pad, x.w + 2 * pad);
        Phases {
            s: stride,
            pad,
            ph: hp.div_ceil(stride),
            pw: wp.div_ceil(stride),
            count: stride * stride,
        }
    }

    fn plane_len(&self) -> usize {
        self.ph * self.pw
    }

    fn channel_len(&self) -> usize {
        self.count * self.plane_len()
    }

    /// Offset of tap `(kh, kw)` within its channel block.
    fn tap(&self, kh: usize, kw: usize) -> usize {
        let plane = (kh % self.s) * self.s + kw % self.s;
        plane * self.plane_len() + (kh / self.s) * self.pw + kw / self.s
    }

    /// Calls `f(h, w, offset)` for every unpadded pixel.
    fn for_each_pixel(&self, x: Shape, mut f: impl FnMut(usize, usize, usize)) {
        for h in 0..x.h {
            let (i, a) = ((h + self.pad) / self.s, (h + self.pad) % self.s);
            for w in 0..x.w {
                let (j, b) = ((w + self.pad) / self.s, (w + self.pad) % self.s);
                f(h, w, (a * self.s + b) * self.plane_len() + i * self.pw + j);
            }
        }
    }
}

fn split_sample<T: Scalar>(ph: &Phases, x: &Tensor<T>, n: usize) -> Vec<T> {
    let s = x.shape();
    let cl = ph.channel_len();
    let mut out = vec![T::zero(); s.c * cl];
    for c in 0..s.c {
        let src = x.plane(n, c);
        let dst = &mut out[c * cl..(c + 1) * cl];
        if ph.s == 1 {
            for h in 0..s.h {
                let row = (h + ph.pad) * ph.pw + ph.pad;
                dst[row..row + s.w].copy_from_slice(&src[h * s.w..(h + 1) * s.w]);
            }
        } else {
            ph.for_each_pixel(s, |h, w, off| dst[off] = src[h * s.w + w]);
        }
    }
    out
}

fn merge_sample<T: Scalar>(ph: &Phases, split: &[T], gx: &mut Tensor<T>, n: usize) {
    let s = gx.shape();
    let cl = ph.channel_len();
    let plane = s.plane();
    let data = gx.data_mut();
    for c in 0..s.c {
        let src = &split[c * cl..(c + 1) * cl];
        let base = (n * s.c + c) * plane;
        let dst = &mut data[base..base + plane];
        if ph.s == 1 {
            for h in 0..s.h {
                let row = (h + ph.pad) * ph.pw + ph.pad;
                dst[h * s.w..(h + 1) * s.w].copy_from_slice(&src[row..row + s.w]);
            }
        } else {
            ph.for_each_pixel(s, |h, w, off| dst[h * s.w + w] = src[off]);
        }
    }
}

fn is_pointwise<T: Scalar>(p: &ConvParams<T>) -> bool {
    p.kernel == 1 && p.stride == 1 && p.padding == 0
}

/// Grouped convolution forward pass.
pub fn group_conv2d_forward<T: Scalar>(x: &Tensor<T>, params: &ConvParams<T>) -> Result<Tensor<T>> {
    let xs = x.shape();
    let ys = params.check_input(xs)?;
    let mut y = Tensor::zeros(ys);
    let (cig, cog) = (params.in_per_group(), params.out_per_group());
    let k = params.kernel;
    let w = params.weight.data();
    let bias = params.bias.as_ref().map(|b| b.data());
    let (in_plane, out_plane) = (xs.plane(), ys.plane());
    let pointwise = is_pointwise(params);
    let ph = Phases::new(xs, params.stride, params.padding);
    let cl = ph.channel_len();
    // flat length covering every valid output position when rows are `ph.pw` wide
    let wide_len = (ys.h - 1) * ph.pw + ys.w;
    let mut wide = vec![T::zero(); ys.h * ph.pw];

    let xd = x.data();
    let yd = y.data_mut();
    for n in 0..xs.n {
        let split = if pointwise { Vec::new() } else { split_sample(&ph, x, n) };
        for co in 0..params.out_channels {
            let g = co / cog;
            let ybase = (n * ys.c + co) * out_plane;
            let yplane = &mut yd[ybase..ybase + out_plane];
            if !pointwise {
                wide.fill(T::zero());
            }
            for cl_idx in 0..cig {
                let ci = g * cig + cl_idx;
                let wbase = (co * cig + cl_idx) * k * k;
                if pointwise {
                    let xbase = (n * xs.c + ci) * in_plane;
                    axpy(yplane, w[wbase], &xd[xbase..xbase + in_plane]);
                    continue;
                }
                let src = &split[ci * cl..(ci + 1) * cl];
                for kh in 0..k {
                    for kw in 0..k {
                        let off = ph.tap(kh, kw);
                        axpy(&mut wide[..wide_len], w[wbase + kh * k + kw], &src[off..off + wide_len]);
                    }
                }
            }
            if !pointwise {
                for oh in 0..ys.h {
                    yplane[oh * ys.w..(oh + 1) * ys.w].copy_from_slice(&wide[oh * ph.pw..oh * ph.pw + ys.w]);
                }
            }
            if let Some(b) = bias {
                for v in yplane.iter_mut() {
                    *v += b[co];
                }
            }
        }
    }
    Ok(y)
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T = f32> {
    pub grad_input: Tensor<T>,
    pub grad_weight: Tensor<T>,
    pub grad_bias: Option<Tensor<T>>,
}

/// Gradients of `sum(grad_out ⊙ forward(x, params))` with respect to input, weight and bias.
pub fn group_conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    params: &ConvParams<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let xs = x.shape();
    let ys = params.check_input(xs)?;
    if grad_out.shape() != ys {
        return Err(Error::ShapeMismatch {
            op: "group_conv2d_backward",
            left: grad_out.shape(),
            right: ys,
        });
    }
    let (cig, cog) = (params.in_per_group(), params.out_per_group());
    let k = params.kernel;
    let w = params.weight.data();
    let (in_plane, out_plane) = (xs.plane(), ys.plane());
    let pointwise = is_pointwise(params);
    let ph = Phases::new(xs, params.stride, params.padding);
    let cl = ph.channel_len();
    let wide_len = (ys.h - 1) * ph.pw + ys.w;
    // gaps between rows stay zero, so they contribute nothing to either gradient
    let mut gy_wide = vec![T::zero(); ys.h * ph.pw];

    let mut gx = Tensor::zeros(xs);
    let mut gw = Tensor::zeros(params.weight.shape());
    let xd = x.data();
    let gyd = grad_out.data();
    let mut gsplit = vec![T::zero(); if pointwise { 0 } else { xs.c * cl }];
    for n in 0..xs.n {
        let split = if pointwise { Vec::new() } else { split_sample(&ph, x, n) };
        gsplit.fill(T::zero());
        let gwd = gw.data_mut();
        for co in 0..params.out_channels {
            let g = co / cog;
            let ybase = (n * ys.c + co) * out_plane;
            let gyplane = &gyd[ybase..ybase + out_plane];
            if !pointwise {
                for oh in 0..ys.h {
                    gy_wide[oh * ph.pw..oh * ph.pw + ys.w].copy_from_slice(&gyplane[oh * ys.w..(oh + 1) * ys.w]);
                }
            }
            for cl_idx in 0..cig {
                let ci = g * cig + cl_idx;
                let wbase = (co * cig + cl_idx) * k * k;
                if pointwise {
                    let xbase = (n * xs.c + ci) * in_plane;
                    axpy(&mut gx.data_mut()[xbase..xbase + in_plane], w[wbase], gyplane);
                    gwd[wbase] += dot(gyplane, &xd[xbase..xbase + in_plane]);
                    continue;
                }
                let src = &split[ci * cl..(ci + 1) * cl];
                let gsrc = &mut gsplit[ci * cl..(ci + 1) * cl];
                let gyw = &gy_wide[..wide_len];
                for kh in 0..k {
                    for kw in 0..k {
                        let off = ph.tap(kh, kw);
                        let wi = wbase + kh * k + kw;
                        gwd[wi] += dot(gyw, &src[off..off + wide_len]);
                        axpy(&mut gsrc[off..off + wide_len], w[wi], gyw);
                    }
                }
            }
        }
        if !pointwise {
            merge_sample(&ph, &gsplit, &mut gx, n);
        }
    }
    let grad_bias = params.bias.as_ref().map(|_| {
        let mut gb = Tensor::zeros(Shape::vector(params.out_channels));
        let gbd = gb.data_mut();
        for n in 0..ys.n {
            for (co, slot) in gbd.iter_mut().enumerate() {
                *slot += grad_out.plane(n, co).iter().copied().sum::<T>();
            }
        }
        gb
    });
    Ok(ConvGrads {
        grad_input: gx,
        grad_weight: gw,
        grad_bias,
    })
}
