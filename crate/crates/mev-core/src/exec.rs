//! Index-keyed map helpers. Work units derive their own random stream from
//! their index, so results are identical whichever backend runs them.

/// Map `f` over `0..count`, in parallel when the `parallel` feature is on.
/// Output order always follows the index order.
#[cfg(feature = "parallel")]
pub fn indexed_map<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn indexed_map<T, F>(count: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..count).map(f).collect()
}

/// Always-sequential variant, kept for benchmark comparison.
pub fn indexed_map_seq<T, F>(count: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..count).map(f).collect()
}
