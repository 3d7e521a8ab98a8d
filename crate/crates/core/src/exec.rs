//! Data-parallel helpers. With the `parallel` feature (default) work fans out
//! over the current rayon pool; without it every helper runs sequentially.

/// Execution strategy for the per-track and per-row kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    Sequential,
    #[default]
    Parallel,
}

impl Mode {
    /// Whether parallel execution is actually available in this build.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

pub fn map<T, R, F>(mode: Mode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        Mode::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

pub fn for_each_mut<T, F>(mode: Mode, items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        Mode::Parallel => {
            use rayon::prelude::*;
            items.par_iter_mut().enumerate().for_each(|(i, t)| f(i, t));
        }
        _ => items.iter_mut().enumerate().for_each(|(i, t)| f(i, t)),
    }
}

/// Like [`for_each_mut`], collecting one result per item in order.
pub fn map_mut<T, R, F>(mode: Mode, items: &mut [T], f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(usize, &mut T) -> R + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        Mode::Parallel => {
            use rayon::prelude::*;
            items.par_iter_mut().enumerate().map(|(i, t)| f(i, t)).collect()
        }
        _ => items.iter_mut().enumerate().map(|(i, t)| f(i, t)).collect(),
    }
}

/// Applies `f` to consecutive chunks of `data` of length `chunk` (the last
/// chunk may be shorter), passing the chunk index.
pub fn for_each_chunk_mut<T, F>(mode: Mode, data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        Mode::Parallel => {
            use rayon::prelude::*;
            data.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
        }
        _ => data
            .chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c)),
    }
}

/// Runs `body` on a pool with `workers` threads when parallelism is compiled in.
pub fn with_workers<R: Send>(workers: usize, body: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if workers > 0 {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                return pool.install(body);
            }
        }
    }
    let _ = workers;
    body()
}
