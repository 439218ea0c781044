//! Per-agent work distribution. With the `parallel` feature, [`ExecMode::Parallel`]
//! fans work out over the rayon pool; without it every mode runs sequentially.
//! Results always come back in index order, so both modes produce identical output.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

impl ExecMode {
    /// Whether this mode actually runs on multiple threads in this build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }
}

/// `(0..len).map(f).collect()`, possibly in parallel.
pub fn map_indexed<T, F>(mode: ExecMode, len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return (0..len).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..len).map(f).collect()
}

/// Fallible variant of [`map_indexed`]; the first error by index wins.
pub fn try_map_indexed<T, F>(mode: ExecMode, len: usize, f: F) -> crate::Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> crate::Result<T> + Sync + Send,
{
    map_indexed(mode, len, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let f = |i: usize| (i as f64).sqrt().sin();
        assert_eq!(map_indexed(ExecMode::Sequential, 1000, f), map_indexed(ExecMode::Parallel, 1000, f));
    }

    #[test]
    fn first_error_by_index() {
        let r = try_map_indexed(ExecMode::Parallel, 100, |i| {
            if i % 30 == 29 {
                Err(crate::Error::BadAgent { id: i, n: 100 })
            } else {
                Ok(i)
            }
        });
        assert!(matches!(r, Err(crate::Error::BadAgent { id: 29, .. })));
    }
}
