//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over the rayon pool;
//! without it, or under [`Exec::Sequential`], the same closures run in order.
//! Callers only use index-keyed work so both paths produce identical output.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

/// Below this many work items a parallel request still runs sequentially.
pub const DEFAULT_GRAIN: usize = 64;

impl Exec {
    #[cfg_attr(not(feature = "parallel"), allow(dead_code))]
    fn go_parallel(self, n: usize, grain: usize) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel && n >= grain.max(2)
    }
}

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_indexed<T, F>(exec: Exec, grain: usize, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.go_parallel(n, grain) {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = (exec, grain);
    (0..n).map(f).collect()
}

/// Apply `f(i, chunk_i)` to each `width`-sized chunk of `data`.
pub fn for_each_chunk<T, F>(exec: Exec, grain: usize, data: &mut [T], width: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let n = data.len().checked_div(width).unwrap_or(0);
    #[cfg(feature = "parallel")]
    if exec.go_parallel(n, grain) {
        use rayon::prelude::*;
        data.par_chunks_mut(width)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = (exec, grain, n);
    if width == 0 {
        return;
    }
    data.chunks_mut(width)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// Zip a chunked buffer with a per-chunk output slice.
pub fn for_each_chunk_with<T, U, F>(
    exec: Exec,
    grain: usize,
    data: &mut [T],
    width: usize,
    out: &mut [U],
    f: F,
) where
    T: Send,
    U: Send,
    F: Fn(usize, &mut [T], &mut U) + Sync + Send,
{
    if width == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if exec.go_parallel(out.len(), grain) {
        use rayon::prelude::*;
        data.par_chunks_mut(width)
            .zip(out.par_iter_mut())
            .enumerate()
            .for_each(|(i, (c, o))| f(i, c, o));
        return;
    }
    let _ = (exec, grain);
    data.chunks_mut(width)
        .zip(out.iter_mut())
        .enumerate()
        .for_each(|(i, (c, o))| f(i, c, o));
}
