//! Deterministic data-parallel helpers.
//!
//! With the `parallel` feature (default) the maps run on rayon; without it
//! they fall back to plain sequential loops. Reductions are always performed
//! over fixed-size chunks in index order, so results are bit-identical for
//! any thread count and for the sequential build.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

const CHUNK: usize = 2048;

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_indexed<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sum `f(i)` over `0..n` with a fixed chunking, independent of thread count.
pub fn sum_indexed(n: usize, f: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
    let nchunks = n.div_ceil(CHUNK);
    let partial = |c: usize| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(n);
        let mut s = 0.0;
        for i in lo..hi {
            s += f(i);
        }
        s
    };
    #[cfg(feature = "parallel")]
    let sums: Vec<f64> = (0..nchunks).into_par_iter().map(partial).collect();
    #[cfg(not(feature = "parallel"))]
    let sums: Vec<f64> = (0..nchunks).map(partial).collect();
    sums.iter().sum()
}

/// Run independent jobs, collecting outputs in job order.
pub fn run_jobs<T: Send, J: Sync>(jobs: &[J], f: impl Fn(&J) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        jobs.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        jobs.iter().map(f).collect()
    }
}

/// Cap the rayon pool used by `scope` to `threads` (sweep driver; honors
/// `EIGENMAP_LAB_THREADS`). No-op without the `parallel` feature.
pub fn with_thread_cap<T: Send>(threads: Option<usize>, scope: impl FnOnce() -> T + Send) -> T {
    #[cfg(feature = "parallel")]
    {
        match threads {
            Some(t) if t > 0 => rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .expect("thread pool")
                .install(scope),
            _ => scope(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        scope()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_matches_sequential() {
        let n = 10_000;
        let s = sum_indexed(n, |i| (i as f64).sin());
        let mut q = 0.0;
        // same chunk order as the helper
        for c in 0..n.div_ceil(CHUNK) {
            let mut p = 0.0;
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                p += (i as f64).sin();
            }
            q += p;
        }
        assert_eq!(s, q);
    }
}
