//! Data-parallel execution helpers.
//!
//! Every hot loop in the crate funnels through these functions. With the
//! `parallel` feature (the default) they fan out over the rayon pool; without
//! it they run as plain sequential iterators. Results are written into
//! index-addressed slots and reduced in a fixed order, so output is identical
//! for any schedule and for either backend.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, collecting results in index order.
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

/// Like [`map_indexed`] with a per-worker scratch value built by `init`.
pub fn map_indexed_with<S, T, I, F>(n: usize, init: I, f: F) -> Vec<T>
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n)
            .into_par_iter()
            .map_init(&init, |s, i| f(s, i))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut scratch = init();
        (0..n).map(|i| f(&mut scratch, i)).collect()
    }
}

/// Folds the best candidate out of `0..n` under a total order `better`.
///
/// `better(a, b)` must return true iff `a` strictly beats `b`; the order has
/// to be total over distinct candidates so the winner is schedule-independent.
pub fn best_indexed<T, F, B>(n: usize, f: F, better: B) -> Option<T>
where
    T: Send,
    F: Fn(usize) -> Option<T> + Sync + Send,
    B: Fn(&T, &T) -> bool + Sync + Send,
{
    let pick = |a: Option<T>, b: Option<T>| match (a, b) {
        (Some(x), Some(y)) => Some(if better(&y, &x) { y } else { x }),
        (Some(x), None) => Some(x),
        (None, y) => y,
    };
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(&f).reduce(|| None, pick)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).fold(None, pick)
    }
}
