use alloc::vec::Vec;

/// Samples per gradient block. Blocks are accumulated sequentially and then
/// combined by a fixed-shape pairwise tree, so results do not depend on how
/// blocks are scheduled.
pub const BLOCK: usize = 8;

/// Runs independent jobs `0..n` and returns their results in index order.
pub trait Executor: Sync {
    fn map<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send;
}

/// Runs jobs one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

/// Pairwise tree sum of equal-length vectors: `(0+1), (2+3), ...` per level.
pub fn tree_sum(mut parts: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop()
}
