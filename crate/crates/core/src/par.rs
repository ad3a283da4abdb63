//! Index-ordered parallel map. Results come back in index order whatever the
//! worker count, so seeded trials are reproducible.

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "CLIQUEHIT_WORKERS";

/// Worker count from the environment, if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV)
        .ok()?
        .trim()
        .parse()
        .ok()
        .filter(|&w| w > 0)
}

/// `f(0), .., f(count - 1)`, evaluated in parallel when the `parallel`
/// feature is on.
pub fn map_indexed<T, F>(count: usize, workers: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let run = || (0..count).into_par_iter().map(&f).collect();
        match workers {
            Some(1) => map_indexed_seq(count, f),
            Some(w) => match rayon::ThreadPoolBuilder::new().num_threads(w).build() {
                Ok(pool) => pool.install(run),
                Err(_) => run(),
            },
            None => run(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        map_indexed_seq(count, f)
    }
}

pub fn map_indexed_seq<T, F>(count: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..count).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_independent_of_workers() {
        let f = |i: usize| i * i + 1;
        let seq = map_indexed_seq(100, f);
        assert_eq!(map_indexed(100, None, f), seq);
        assert_eq!(map_indexed(100, Some(3), f), seq);
        assert_eq!(map_indexed(100, Some(1), f), seq);
    }
}
