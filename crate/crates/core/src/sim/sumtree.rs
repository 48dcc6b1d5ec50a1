/// Complete binary tree of nonnegative weights supporting O(log n) updates
/// and proportional sampling. Internal nodes are recomputed from their
/// children on every update, so totals never drift.
#[derive(Debug, Clone)]
pub(crate) struct SumTree {
    size: usize,
    tree: Vec<f64>,
}

impl SumTree {
    pub fn new(len: usize) -> Self {
        let size = len.max(1).next_power_of_two();
        Self {
            size,
            tree: vec![0.0; 2 * size],
        }
    }

    pub fn set(&mut self, i: usize, w: f64) {
        let mut k = self.size + i;
        self.tree[k] = w;
        while k > 1 {
            k /= 2;
            self.tree[k] = self.tree[2 * k] + self.tree[2 * k + 1];
        }
    }

    pub fn get(&self, i: usize) -> f64 {
        self.tree[self.size + i]
    }

    pub fn total(&self) -> f64 {
        self.tree[1]
    }

    /// Leaf whose cumulative interval contains `u`, `0 <= u < total`.
    /// Always lands on a strictly positive leaf when the total is positive.
    pub fn find(&self, mut u: f64) -> usize {
        let mut k = 1;
        while k < self.size {
            let left = self.tree[2 * k];
            let right = self.tree[2 * k + 1];
            if (u < left && left > 0.0) || right <= 0.0 {
                k *= 2;
            } else {
                u -= left;
                k = 2 * k + 1;
            }
        }
        k - self.size
    }
}
