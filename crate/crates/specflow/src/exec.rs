//! Index-parallel mapping with a sequential twin.
//!
//! Every data-parallel path in this crate is a pure map over an index range;
//! merging, thresholds and verdicts stay sequential. The `parallel` feature
//! can therefore only change wall time, never a result.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is on.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sequential twin of [`map_indexed`], kept unconditionally so benchmarks can
/// compare the two strategies inside one build.
pub fn map_indexed_seq<T, F>(n: usize, mut f: F) -> Vec<T>
where
    F: FnMut(usize) -> T,
{
    (0..n).map(&mut f).collect()
}

/// Fallible map over `0..n`. All items are evaluated, then the error at the
/// lowest index wins, so the reported failure does not depend on scheduling.
pub fn try_map_indexed<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        let items: Vec<Result<T, E>> = (0..n).into_par_iter().map(f).collect();
        items.into_iter().collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let a = map_indexed(1000, |i| (i as u64) * i as u64 % 97);
        let b = map_indexed_seq(1000, |i| (i as u64) * i as u64 % 97);
        assert_eq!(a, b);
    }

    #[test]
    fn first_error_wins() {
        let r: Result<Vec<u32>, usize> =
            try_map_indexed(100, |i| if i % 7 == 3 { Err(i) } else { Ok(i as u32) });
        assert_eq!(r.unwrap_err(), 3);
    }
}
