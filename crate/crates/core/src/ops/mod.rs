//! Forward and backward kernels for the primitives the networks are built from.
//!
//! All kernels are single-threaded, pure functions over NCHW tensors with a
//! fixed summation order, so results are bit-reproducible.

pub mod activation;
pub mod conv;
pub mod linear;
pub mod loss;
pub mod norm;
pub mod shuffle;

pub use activation::{relu, relu_backward};
pub use conv::{conv_output_dim, group_conv2d_backward, group_conv2d_forward, ConvGrads, ConvParams};
pub use linear::{fully_connected, fully_connected_backward, LinearGrads, LinearParams};
pub use loss::softmax_cross_entropy;
pub use norm::{batch_norm, batch_norm_backward, BatchNormParams, BnCache, BnGrads, BnMode};
pub use shuffle::{channel_shuffle, channel_shuffle_backward, shuffle_source_index};

/// `y += a * x`
#[inline]
pub(crate) fn axpy<T: crate::Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub(crate) fn dot<T: crate::Scalar>(a: &[T], b: &[T]) -> T {
    // eight independent lanes so the loop vectorizes; summation order stays fixed
    const LANES: usize = 8;
    let len = a.len().min(b.len());
    let (a, b) = (&a[..len], &b[..len]);
    let mut lanes = [T::zero(); LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            lanes[l] += xa[l] * xb[l];
        }
    }
    let mut acc = T::zero();
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        acc += x * y;
    }
    let pairs = [
        lanes[0] + lanes[4],
        lanes[1] + lanes[5],
        lanes[2] + lanes[6],
        lanes[3] + lanes[7],
    ];
    acc + ((pairs[0] + pairs[2]) + (pairs[1] + pairs[3]))
}
