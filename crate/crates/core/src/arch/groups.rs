use crate::error::{Error, Result};

/// Splits `c` as `m·n` with `m > n ≥ 1` and `m − n` as small as possible.
///
/// Square factorizations are skipped (`36` gives `(9, 4)`, not `(6, 6)`).
pub fn nearest_divisor_pair(c: usize) -> Result<(usize, usize)> {
    if c < 2 {
        return Err(Error::Build(format!(
            "group count undefined for {c} channels (need at least 2)"
        )));
    }
    let mut n = c.isqrt();
    // n == m only at the exact square root; step below it
    if n * n == c {
        n -= 1;
    }
    while n >= 1 {
        if c.is_multiple_of(n) {
            return Ok((c / n, n));
        }
        n -= 1;
    }
    unreachable!("1 divides every integer")
}
