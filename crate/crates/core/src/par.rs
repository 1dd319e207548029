//! Replica fan-out that gives the same result with or without threads.
//!
//! Replicas are evaluated in fixed-size chunks; inside a chunk they may run
//! in parallel, but results are always folded in replica order.

const CHUNK: u64 = 4096;

pub(crate) fn for_each_replica<T, F, G>(replicas: u64, eval: F, mut fold: G)
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
    G: FnMut(u64, T),
{
    let mut start = 0;
    while start < replicas {
        let end = (start + CHUNK).min(replicas);
        let results = eval_chunk(start, end, &eval);
        for (i, r) in (start..end).zip(results) {
            fold(i, r);
        }
        start = end;
    }
}

#[cfg(feature = "parallel")]
fn eval_chunk<T, F>(start: u64, end: u64, eval: &F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (start..end).into_par_iter().map(eval).collect()
}

#[cfg(not(feature = "parallel"))]
fn eval_chunk<T, F>(start: u64, end: u64, eval: &F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (start..end).map(eval).collect()
}
