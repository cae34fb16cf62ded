//! Small shared helpers.

/// `ceil(a / b)` for possibly negative `a` and positive `b`.
#[inline]
pub(crate) fn ceil_div(a: i64, b: i64) -> i64 {
    debug_assert!(b > 0);
    (a + b - 1).div_euclid(b)
}

/// `sqrt` that works in both std and no_std builds.
#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        x.sqrt()
    }
    #[cfg(not(feature = "std"))]
    {
        libm::sqrt(x)
    }
}

/// Runs `body` over consecutive chunks of `data` and sums the returned
/// counters. With the `parallel` feature the chunks run on the rayon pool;
/// every chunk is still produced by exactly one closure invocation, so
/// results are identical for any worker count.
pub(crate) fn chunk_sweep<S, F>(data: &mut [S], chunk_len: usize, body: F) -> u64
where
    S: Send,
    F: Fn(usize, &mut [S]) -> u64 + Sync,
{
    debug_assert!(chunk_len > 0 && data.len().is_multiple_of(chunk_len));
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .map(|(i, chunk)| body(i, chunk))
            .sum()
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk_len)
            .enumerate()
            .map(|(i, chunk)| body(i, chunk))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceil_div_signs() {
        assert_eq!(ceil_div(5, 2), 3);
        assert_eq!(ceil_div(4, 2), 2);
        assert_eq!(ceil_div(0, 3), 0);
        assert_eq!(ceil_div(-1, 2), 0); // ceil(-0.5) = 0
        assert_eq!(ceil_div(-4, 3), -1); // ceil(-1.33) = -1
        assert_eq!(ceil_div(-6, 3), -2);
    }
}
