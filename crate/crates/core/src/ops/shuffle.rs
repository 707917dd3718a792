use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Source channel feeding output channel `out_c` after a shuffle over `groups`.
///
/// Input channel `q·(C/groups) + r` lands at output channel `r·groups + q`.
pub fn shuffle_source_index(out_c: usize, channels: usize, groups: usize) -> usize {
    let per = channels / groups;
    let (r, q) = (out_c / groups, out_c % groups);
    q * per + r
}

fn check(channels: usize, groups: usize) -> Result<()> {
    if groups == 0 || !channels.is_multiple_of(groups) {
        return Err(Error::invalid(
            "channel_shuffle",
            format!("groups {groups} does not divide {channels} channels"),
        ));
    }
    Ok(())
}

fn permute<T: Scalar>(x: &Tensor<T>, groups: usize, inverse: bool) -> Result<Tensor<T>> {
    let s = x.shape();
    check(s.c, groups)?;
    let plane = s.plane();
    let mut out = Tensor::zeros(s);
    let od = out.data_mut();
    for n in 0..s.n {
        for oc in 0..s.c {
            let src = shuffle_source_index(oc, s.c, groups);
            let (from, to) = if inverse { (oc, src) } else { (src, oc) };
            let dst = (n * s.c + to) * plane;
            od[dst..dst + plane].copy_from_slice(x.plane(n, from));
        }
    }
    Ok(out)
}

/// Interleave channels across `groups` (transpose of the `groups × C/groups` index matrix).
pub fn channel_shuffle<T: Scalar>(x: &Tensor<T>, groups: usize) -> Result<Tensor<T>> {
    permute(x, groups, false)
}

/// Adjoint of [`channel_shuffle`]: applies the inverse permutation to the upstream gradient.
pub fn channel_shuffle_backward<T: Scalar>(grad_out: &Tensor<T>, groups: usize) -> Result<Tensor<T>> {
    permute(grad_out, groups, true)
}
