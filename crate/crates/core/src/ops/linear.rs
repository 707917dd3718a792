use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

/// Fully connected layer over flattened samples; weights are stored `D × K` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams<T = f32> {
    pub in_features: usize,
    pub out_features: usize,
    /// `(D, K, 1, 1)`
    pub weight: Tensor<T>,
    /// `(K, 1, 1, 1)`
    pub bias: Tensor<T>,
}

impl<T: Scalar> LinearParams<T> {
    pub fn new(in_features: usize, out_features: usize) -> Self {
        LinearParams {
            in_features,
            out_features,
            weight: Tensor::zeros(Shape::new(in_features, out_features, 1, 1)),
            bias: Tensor::zeros(Shape::vector(out_features)),
        }
    }

    fn check(&self, x: Shape) -> Result<()> {
        if x.sample_len() != self.in_features {
            return Err(Error::invalid(
                "fully_connected",
                format!(
                    "input {x} flattens to {} features, layer expects {}",
                    x.sample_len(),
                    self.in_features
                ),
            ));
        }
        if self.weight.len() != self.in_features * self.out_features || self.bias.len() != self.out_features {
            return Err(Error::invalid(
                "fully_connected",
                "parameter sizes inconsistent with D×K",
            ));
        }
        Ok(())
    }
}

/// `scores[n,k] = Σ_d x[n,d]·w[d,k] + b[k]`, returned as `(N, K, 1, 1)`.
pub fn fully_connected<T: Scalar>(x: &Tensor<T>, p: &LinearParams<T>) -> Result<Tensor<T>> {
    p.check(x.shape())?;
    let (d, k) = (p.in_features, p.out_features);
    let n = x.shape().n;
    let mut out = Tensor::zeros(Shape::new(n, k, 1, 1));
    let w = p.weight.data();
    let od = out.data_mut();
    for i in 0..n {
        let row = &mut od[i * k..(i + 1) * k];
        row.copy_from_slice(p.bias.data());
        for (di, &xv) in x.sample(i).iter().enumerate().take(d) {
            super::axpy(row, xv, &w[di * k..(di + 1) * k]);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct LinearGrads<T = f32> {
    pub grad_input: Tensor<T>,
    pub grad_weight: Tensor<T>,
    pub grad_bias: Tensor<T>,
}

pub fn fully_connected_backward<T: Scalar>(
    x: &Tensor<T>,
    p: &LinearParams<T>,
    grad_scores: &Tensor<T>,
) -> Result<LinearGrads<T>> {
    p.check(x.shape())?;
    let (d, k) = (p.in_features, p.out_features);
    let n = x.shape().n;
    if grad_scores.len() != n * k {
        return Err(Error::ShapeMismatch {
            op: "fully_connected_backward",
            left: grad_scores.shape(),
            right: Shape::new(n, k, 1, 1),
        });
    }
    let w = p.weight.data();
    let gs = grad_scores.data();
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(p.weight.shape());
    let mut gb = Tensor::zeros(p.bias.shape());
    for i in 0..n {
        let g = &gs[i * k..(i + 1) * k];
        let xi = x.sample(i);
        let gxi = &mut gx.data_mut()[i * d..(i + 1) * d];
        for di in 0..d {
            let wrow = &w[di * k..(di + 1) * k];
            gxi[di] = super::dot(g, wrow);
        }
        let gwd = gw.data_mut();
        for (di, &xv) in xi.iter().enumerate() {
            super::axpy(&mut gwd[di * k..(di + 1) * k], xv, g);
        }
        for (b, &gv) in gb.data_mut().iter_mut().zip(g) {
            *b += gv;
        }
    }
    Ok(LinearGrads {
        grad_input: gx,
        grad_weight: gw,
        grad_bias: gb,
    })
}
