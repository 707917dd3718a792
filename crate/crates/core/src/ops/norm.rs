//! Per-channel batch normalization.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize by batch statistics.
    Train,
    /// Normalize by running statistics.
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<T = f32> {
    pub channels: usize,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub epsilon: f64,
    /// Weight kept by the running average on each update.
    pub momentum: f64,
}

/// Statistics captured by a forward pass, needed by backward and by the running-stat update.
#[derive(Debug, Clone, PartialEq)]
pub struct BnCache<T = f32> {
    pub mode: BnMode,
    pub mean: Vec<T>,
    /// Biased variance of the batch (train) or running variance (infer).
    pub var: Vec<T>,
    pub inv_std: Vec<T>,
    /// Elements per channel that produced the statistics.
    pub count: usize,
}

impl<T: Scalar> BatchNormParams<T> {
    pub fn new(channels: usize) -> Self {
        let v = Shape::vector(channels);
        BatchNormParams {
            channels,
            gamma: Tensor::ones(v),
            beta: Tensor::zeros(v),
            running_mean: Tensor::zeros(v),
            running_var: Tensor::ones(v),
            epsilon: BN_EPSILON,
            momentum: BN_MOMENTUM,
        }
    }

    /// Fold batch statistics into the running averages (unbiased variance).
    pub fn update_running_stats(&mut self, cache: &BnCache<T>) {
        if cache.mode != BnMode::Train {
            return;
        }
        let m = T::from_f64_lossy(self.momentum);
        let one_m = T::one() - m;
        let correction = if cache.count > 1 {
            T::from_usize_lossy(cache.count) / T::from_usize_lossy(cache.count - 1)
        } else {
            T::one()
        };
        for c in 0..self.channels {
            let rm = &mut self.running_mean.data_mut()[c];
            *rm = m * *rm + one_m * cache.mean[c];
            let rv = &mut self.running_var.data_mut()[c];
            *rv = m * *rv + one_m * cache.var[c] * correction;
        }
    }

    fn check(&self, x: Shape) -> Result<()> {
        if x.c != self.channels {
            return Err(Error::ShapeMismatch {
                op: "batch_norm",
                left: x,
                right: x.with_channels(self.channels),
            });
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::invalid("batch_norm", "epsilon must be positive"));
        }
        Ok(())
    }
}

pub fn batch_norm<T: Scalar>(x: &Tensor<T>, p: &BatchNormParams<T>, mode: BnMode) -> Result<(Tensor<T>, BnCache<T>)> {
    let s = x.shape();
    p.check(s)?;
    let count = s.n * s.plane();
    let eps = T::from_f64_lossy(p.epsilon);
    let (mean, var): (Vec<T>, Vec<T>) = match mode {
        BnMode::Train => (0..s.c)
            .map(|c| {
                // f64 accumulation in fixed (n, h, w) order
                let mut sum = 0.0f64;
                for n in 0..s.n {
                    sum += x.plane(n, c).iter().map(|v| v.to_f64_lossy()).sum::<f64>();
                }
                let mean = sum / count.max(1) as f64;
                let mut sq = 0.0f64;
                for n in 0..s.n {
                    sq += x
                        .plane(n, c)
                        .iter()
                        .map(|v| {
                            let d = v.to_f64_lossy() - mean;
                            d * d
                        })
                        .sum::<f64>();
                }
                (T::from_f64_lossy(mean), T::from_f64_lossy(sq / count.max(1) as f64))
            })
            .unzip(),
        BnMode::Infer => (p.running_mean.data().to_vec(), p.running_var.data().to_vec()),
    };
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut y = Tensor::zeros(s);
    let plane = s.plane();
    {
        let yd = y.data_mut();
        for n in 0..s.n {
            for c in 0..s.c {
                let scale = p.gamma.data()[c] * inv_std[c];
                let shift = p.beta.data()[c] - mean[c] * scale;
                let base = (n * s.c + c) * plane;
                for (o, &v) in yd[base..base + plane].iter_mut().zip(x.plane(n, c)) {
                    *o = v * scale + shift;
                }
            }
        }
    }
    Ok((
        y,
        BnCache {
            mode,
            mean,
            var,
            inv_std,
            count,
        },
    ))
}

#[derive(Debug, Clone)]
pub struct BnGrads<T = f32> {
    pub grad_input: Tensor<T>,
    pub grad_gamma: Tensor<T>,
    pub grad_beta: Tensor<T>,
}

pub fn batch_norm_backward<T: Scalar>(
    x: &Tensor<T>,
    p: &BatchNormParams<T>,
    cache: &BnCache<T>,
    grad_out: &Tensor<T>,
) -> Result<BnGrads<T>> {
    let s = x.shape();
    p.check(s)?;
    if grad_out.shape() != s {
        return Err(Error::ShapeMismatch {
            op: "batch_norm_backward",
            left: grad_out.shape(),
            right: s,
        });
    }
    let plane = s.plane();
    let mut gx = Tensor::zeros(s);
    let mut gg = Tensor::zeros(Shape::vector(s.c));
    let mut gb = Tensor::zeros(Shape::vector(s.c));
    let m = T::from_usize_lossy(cache.count.max(1));
    for c in 0..s.c {
        let (mean, istd, gamma) = (cache.mean[c], cache.inv_std[c], p.gamma.data()[c]);
        let mut sum_g = T::zero();
        let mut sum_gx = T::zero();
        for n in 0..s.n {
            for (&g, &v) in grad_out.plane(n, c).iter().zip(x.plane(n, c)) {
                sum_g += g;
                sum_gx += g * (v - mean) * istd;
            }
        }
        gb.data_mut()[c] = sum_g;
        gg.data_mut()[c] = sum_gx;
        let gxd = gx.data_mut();
        for n in 0..s.n {
            let base = (n * s.c + c) * plane;
            let (go, xv) = (grad_out.plane(n, c), x.plane(n, c));
            for i in 0..plane {
                gxd[base + i] = match cache.mode {
                    BnMode::Infer => go[i] * gamma * istd,
                    BnMode::Train => {
                        let xhat = (xv[i] - mean) * istd;
                        gamma * istd / m * (m * go[i] - sum_g - xhat * sum_gx)
                    }
                };
            }
        }
    }
    Ok(BnGrads {
        grad_input: gx,
        grad_gamma: gg,
        grad_beta: gb,
    })
}
