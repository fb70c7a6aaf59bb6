//! Order-preserving parallel map with a sequential fallback.
//!
//! Every parallel site in the crate maps independent items to per-item
//! results and reduces sequentially afterwards, so the `parallel` feature
//! changes wall-clock time but never the output bits.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Cap the global worker count. A no-op once any pool exists or when the
/// crate was built without the `parallel` feature.
#[cfg(feature = "parallel")]
pub fn set_max_threads(n: usize) {
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
}

#[cfg(not(feature = "parallel"))]
pub fn set_max_threads(_n: usize) {}

#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}
