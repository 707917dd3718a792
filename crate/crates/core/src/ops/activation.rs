use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

/// Passes `grad_out` where the forward output was positive.
pub fn relu_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if output.shape() != grad_out.shape() {
        return Err(Error::ShapeMismatch {
            op: "relu_backward",
            left: output.shape(),
            right: grad_out.shape(),
        });
    }
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| if y > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(output.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn clamps_and_passes() {
        let s = Shape::new(1, 1, 2, 2);
        let neg = Tensor::<f32>::full(s, -3.0);
        assert!(relu(&neg).data().iter().all(|&v| v == 0.0));
        let pos = Tensor::from_vec(s, vec![0.5f32, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(relu(&pos), pos);
        let mixed = Tensor::from_vec(s, vec![-1.0f32, 0.0, 2.5, -0.1]).unwrap();
        let out = relu(&mixed);
        for (o, &x) in out.data().iter().zip(mixed.data()) {
            assert_eq!(*o, if x > 0.0 { x } else { 0.0 });
        }
        assert_eq!(relu(&out), out);
    }

    #[test]
    fn backward_masks() {
        let s = Shape::new(1, 1, 1, 3);
        let y = Tensor::from_vec(s, vec![0.0f32, 1.0, 2.0]).unwrap();
        let g = Tensor::from_vec(s, vec![5.0f32, 6.0, 7.0]).unwrap();
        assert_eq!(relu_backward(&y, &g).unwrap().data(), &[0.0, 6.0, 7.0]);
    }
}
