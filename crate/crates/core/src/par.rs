//! Order-preserving map over an index range. Uses rayon when `std` is on.

use alloc::vec::Vec;

#[cfg(feature = "std")]
pub(crate) fn map_indices<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "std"))]
pub(crate) fn map_indices<R, F>(n: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..n).map(f).collect()
}

/// Like [`map_indices`] but hands each task a reusable scratch value.
#[cfg(feature = "std")]
pub(crate) fn map_indices_with<S, R, I, F>(n: usize, init: I, f: F) -> Vec<R>
where
    R: Send,
    S: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize) -> R + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map_init(init, f).collect()
}

#[cfg(not(feature = "std"))]
pub(crate) fn map_indices_with<S, R, I, F>(n: usize, init: I, f: F) -> Vec<R>
where
    I: Fn() -> S,
    F: Fn(&mut S, usize) -> R,
{
    let mut scratch = init();
    (0..n).map(|i| f(&mut scratch, i)).collect()
}
