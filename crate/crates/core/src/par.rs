//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper here is an elementwise map: each output slot depends only on
//! its own index, so results are bitwise identical whether or not the
//! `parallel` feature is enabled. Reductions stay sequential in callers.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many items the rayon overhead outweighs the work.
#[cfg(feature = "parallel")]
const MIN_PARALLEL_LEN: usize = 64;

pub(crate) fn map_range<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if len >= MIN_PARALLEL_LEN {
            return (0..len).into_par_iter().map(f).collect();
        }
    }
    (0..len).map(f).collect()
}

pub(crate) fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if items.len() >= MIN_PARALLEL_LEN {
            items
                .par_iter_mut()
                .enumerate()
                .for_each(|(i, item)| f(i, item));
            return;
        }
    }
    items.iter_mut().enumerate().for_each(|(i, item)| f(i, item));
}

pub(crate) fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        return items.par_iter().map(f).collect();
    }
    #[allow(unreachable_code)]
    items.iter().map(f).collect()
}
