use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Mean softmax cross-entropy over the batch and its gradient `(softmax − one_hot) / N`.
///
/// `scores` is `(N, K, 1, 1)`; the log-sum-exp is shifted by each row's maximum.
pub fn softmax_cross_entropy<T: Scalar>(scores: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let s = scores.shape();
    let (n, k) = (s.n, s.sample_len());
    if labels.len() != n {
        return Err(Error::invalid(
            "softmax_cross_entropy",
            format!("{} labels for a batch of {n}", labels.len()),
        ));
    }
    if n == 0 {
        return Err(Error::invalid("softmax_cross_entropy", "empty batch"));
    }
    let mut grad = Tensor::zeros(s);
    let inv_n = T::one() / T::from_usize_lossy(n);
    let mut total = T::zero();
    for (i, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(Error::invalid(
                "softmax_cross_entropy",
                format!("label {label} out of range for {k} classes"),
            ));
        }
        let row = scores.sample(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let g = &mut grad.data_mut()[i * k..(i + 1) * k];
        let mut z = T::zero();
        for (gj, &v) in g.iter_mut().zip(row) {
            *gj = (v - max).exp();
            z += *gj;
        }
        total += z.ln() - (row[label] - max);
        for gj in g.iter_mut() {
            *gj = *gj / z * inv_n;
        }
        g[label] -= inv_n;
    }
    Ok((total * inv_n, grad))
}
