//! Data-parallel dispatch for the kernels.
//!
//! Every parallel loop in the crate partitions *outputs* into disjoint chunks
//! and computes each chunk with the same sequential code, so results are
//! bit-identical between [`Exec::Sequential`] and [`Exec::Parallel`].
//! Without the `parallel` feature, `Parallel` silently runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// Calls `f(i, chunk)` for each `chunk_len`-sized chunk of `data`.
    pub fn for_each_chunk<T, F>(self, data: &mut [T], chunk_len: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Send + Sync,
    {
        if chunk_len == 0 {
            return;
        }
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => data
                .par_chunks_mut(chunk_len)
                .enumerate()
                .for_each(|(i, c)| f(i, c)),
            _ => data
                .chunks_mut(chunk_len)
                .enumerate()
                .for_each(|(i, c)| f(i, c)),
        }
    }

    /// Maps `f` over `0..n`, preserving order.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Send + Sync,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
            _ => (0..n).map(f).collect(),
        }
    }
}

/// Number of worker threads the parallel path will use.
pub fn worker_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_every_element_once() {
        for exec in [Exec::Sequential, Exec::Parallel] {
            let mut v = vec![0usize; 103];
            exec.for_each_chunk(&mut v, 10, |i, c| {
                for (j, x) in c.iter_mut().enumerate() {
                    *x += i * 10 + j;
                }
            });
            assert!(v.iter().enumerate().all(|(i, &x)| i == x));
        }
    }

    #[test]
    fn map_range_keeps_order() {
        let a = Exec::Parallel.map_range(50, |i| i * i);
        let b = Exec::Sequential.map_range(50, |i| i * i);
        assert_eq!(a, b);
    }
}
