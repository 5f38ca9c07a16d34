/// Binary tree of partial sums over a fixed number of leaves.
#[derive(Debug, Clone)]
pub struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        SumTree {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    pub fn capacity(&self) -> usize {
        self.leaves
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, index: usize) -> f64 {
        self.nodes[self.leaves + index]
    }

    pub fn set(&mut self, index: usize, value: f64) {
        debug_assert!(value >= 0.0);
        let mut i = self.leaves + index;
        self.nodes[i] = value;
        i /= 2;
        while i >= 1 {
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1];
            i /= 2;
        }
    }

    /// Leaf whose cumulative range `[prefix_before, prefix_before + value)`
    /// contains `mass`. Never returns a zero-valued leaf while total > 0.
    pub fn find(&self, mut mass: f64) -> usize {
        let mut i = 1;
        while i < self.leaves {
            let left = 2 * i;
            let right = left + 1;
            if (mass < self.nodes[left] && self.nodes[left] > 0.0) || self.nodes[right] <= 0.0 {
                i = left;
            } else {
                mass -= self.nodes[left];
                i = right;
            }
        }
        i - self.leaves
    }

    pub fn clear(&mut self) {
        self.nodes.iter_mut().for_each(|v| *v = 0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totals_and_lookup() {
        let mut t = SumTree::new(5);
        assert_eq!(t.capacity(), 8);
        for (i, v) in [1.0, 2.0, 3.0, 4.0].iter().enumerate() {
            t.set(i, *v);
        }
        assert_eq!(t.total(), 10.0);
        assert_eq!(t.find(0.0), 0);
        assert_eq!(t.find(0.99), 0);
        assert_eq!(t.find(1.0), 1);
        assert_eq!(t.find(2.99), 1);
        assert_eq!(t.find(3.0), 2);
        assert_eq!(t.find(9.99), 3);
        // overshoot stays on a populated leaf
        assert_eq!(t.find(10.5), 3);
        t.set(1, 0.0);
        assert_eq!(t.total(), 8.0);
        assert_eq!(t.find(1.0), 2);
    }
}
