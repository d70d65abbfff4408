//! Data-parallel helpers. With the `parallel` feature (default) work fans out
//! over rayon's pool; without it, or with [`Execution::Sequential`], the same
//! closures run in order on the calling thread. Output order never depends on
//! the mode.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

pub fn map<T, R, F>(items: &[T], mode: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode == Execution::Parallel {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = mode;
    items.iter().map(f).collect()
}

/// Caps the global worker pool. Only the first call has an effect.
pub fn configure_threads(threads: usize) -> Result<(), String> {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| e.to_string())
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        Ok(())
    }
}

/// Reads `TERRAFOLLOW_THREADS` and applies it when set.
pub fn configure_from_env() -> Result<Option<usize>, String> {
    match std::env::var("TERRAFOLLOW_THREADS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| format!("TERRAFOLLOW_THREADS must be a positive integer, got {v:?}"))?;
            if n == 0 {
                return Err("TERRAFOLLOW_THREADS must be >= 1".into());
            }
            configure_threads(n)?;
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}
