//! Execution policy for the data-parallel kernels.

/// Chooses between the rayon-backed and the plain sequential loops.
///
/// Without the `parallel` feature both variants run sequentially.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Runs `f(index, chunk)` over consecutive `chunk_len` slices of `out`.
    pub fn for_each_chunk<T, F>(self, out: &mut [T], chunk_len: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        if chunk_len == 0 {
            return;
        }
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            out.par_chunks_mut(chunk_len)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
        out.chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }

    /// Order-preserving map over `0..n`.
    pub fn map<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunked_writes_match_across_policies() {
        let mut a = vec![0u32; 103];
        let mut b = vec![0u32; 103];
        let fill = |i: usize, c: &mut [u32]| {
            for (j, v) in c.iter_mut().enumerate() {
                *v = (i * 10 + j) as u32;
            }
        };
        Exec::Sequential.for_each_chunk(&mut a, 10, fill);
        Exec::Parallel.for_each_chunk(&mut b, 10, fill);
        assert_eq!(a, b);
        assert_eq!(a[102], 102);
    }

    #[test]
    fn map_preserves_order() {
        let v = Exec::Parallel.map(50, |i| i * i);
        assert_eq!(v, (0..50).map(|i| i * i).collect::<Vec<_>>());
    }
}
