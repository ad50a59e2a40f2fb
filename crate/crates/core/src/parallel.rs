/// Maps `f` over `0..n` on up to `workers` scoped threads. Output order is
/// the index order, independent of `workers`.
pub fn map_indexed<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = workers.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(workers);
    let f = &f;
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let range = (w * chunk).min(n)..((w + 1) * chunk).min(n);
                scope.spawn(move || range.map(f).collect::<Vec<T>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::map_indexed;

    #[test]
    fn order_is_preserved() {
        for workers in 1..6 {
            assert_eq!(map_indexed(11, workers, |i| i * i), (0..11).map(|i| i * i).collect::<Vec<_>>());
        }
        assert!(map_indexed(0, 3, |i| i).is_empty());
    }
}
