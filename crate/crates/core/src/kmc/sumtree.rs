const FANOUT: usize = 8;

#[derive(Debug, Clone, Copy, Default)]
#[repr(C, align(64))]
struct Line([f64; FANOUT]);

impl Line {
    #[inline]
    fn sum(&self) -> f64 {
        let v = &self.0;
        ((v[0] + v[1]) + (v[2] + v[3])) + ((v[4] + v[5]) + (v[6] + v[7]))
    }
}

/// Sum tree over nonnegative weights with eight children per node.
///
/// Each node's children fill one 64-byte cache line, so a descent touches
/// `⌈log₈ n⌉` lines. Internal sums are always recomputed from the children,
/// never adjusted by deltas, so they cannot drift.
#[derive(Debug, Clone)]
pub struct SumTree {
    len: usize,
    /// All levels in one buffer, top line first, leaves last.
    lines: Vec<Line>,
    /// Start of each level in `lines`.
    offsets: Vec<usize>,
    total: f64,
}

impl SumTree {
    pub fn new(weights: &[f64]) -> Self {
        let mut leaves = vec![Line::default(); weights.len().div_ceil(FANOUT).max(1)];
        for (i, &w) in weights.iter().enumerate() {
            leaves[i / FANOUT].0[i % FANOUT] = w;
        }
        let mut levels = vec![leaves];
        while levels.last().unwrap().len() > 1 {
            let below = levels.last().unwrap();
            let mut up = vec![Line::default(); below.len().div_ceil(FANOUT)];
            for (j, line) in below.iter().enumerate() {
                up[j / FANOUT].0[j % FANOUT] = line.sum();
            }
            levels.push(up);
        }
        levels.reverse();
        let mut offsets = Vec::with_capacity(levels.len());
        let mut lines = Vec::new();
        for level in levels {
            offsets.push(lines.len());
            lines.extend(level);
        }
        let total = lines[0].sum();
        Self { len: weights.len(), lines, offsets, total }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.total
    }

    #[inline]
    fn leaf_offset(&self) -> usize {
        self.offsets[self.offsets.len() - 1]
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.lines[self.leaf_offset() + i / FANOUT].0[i % FANOUT]
    }

    /// Copy of the leaf weights.
    pub fn leaves(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.get(i)).collect()
    }

    /// Recomputes the ancestors of the leaf line `line` (an index within the leaf level).
    #[inline]
    fn propagate(&mut self, mut line: usize) {
        for l in (1..self.offsets.len()).rev() {
            let s = self.lines[self.offsets[l] + line].sum();
            let slot = line % FANOUT;
            line /= FANOUT;
            self.lines[self.offsets[l - 1] + line].0[slot] = s;
        }
        self.total = self.lines[0].sum();
    }

    #[inline]
    pub fn set(&mut self, i: usize, w: f64) {
        debug_assert!(w >= 0.0);
        let base = self.leaf_offset();
        self.lines[base + i / FANOUT].0[i % FANOUT] = w;
        self.propagate(i / FANOUT);
    }

    /// Sets two leaves, sharing the ancestor updates when they have the same parent line.
    #[inline]
    pub fn set_pair(&mut self, i: usize, wi: f64, j: usize, wj: f64) {
        let base = self.leaf_offset();
        self.lines[base + i / FANOUT].0[i % FANOUT] = wi;
        self.lines[base + j / FANOUT].0[j % FANOUT] = wj;
        if i / FANOUT != j / FANOUT {
            self.propagate(j / FANOUT);
        }
        self.propagate(i / FANOUT);
    }

    /// Leaf `i` with `Σ_{j<i} w_j ≤ target < Σ_{j≤i} w_j`, for `target ∈ [0, total)`.
    ///
    /// Rounding can push `target` past a subtree sum; a descent that ends on
    /// a zero-weight leaf is redone with an explicit guard, so the result
    /// always has positive weight when the total is positive.
    #[inline]
    pub fn sample(&self, target: f64) -> usize {
        let mut t = target;
        let mut idx = 0;
        for &off in &self.offsets {
            let v = &self.lines[off + idx].0;
            // halving inside the line with selects instead of branches
            let left4 = (v[0] + v[1]) + (v[2] + v[3]);
            let r = t >= left4;
            t -= if r { left4 } else { 0.0 };
            let mut j = 4 * r as usize;
            let left2 = v[j] + v[j + 1];
            let r = t >= left2;
            t -= if r { left2 } else { 0.0 };
            j += 2 * r as usize;
            let r = t >= v[j];
            t -= if r { v[j] } else { 0.0 };
            j += r as usize;
            // an empty slot means rounding overshot, or the target was past the total
            if v[j] <= 0.0 {
                return self.sample_guarded(target);
            }
            idx = idx * FANOUT + j;
        }
        idx
    }

    #[cold]
    fn sample_guarded(&self, mut target: f64) -> usize {
        let mut idx = 0;
        for &off in &self.offsets {
            let line = &self.lines[off + idx].0;
            let mut chosen = FANOUT;
            let mut last_positive = 0;
            for (j, &v) in line.iter().enumerate() {
                if v > 0.0 {
                    last_positive = j;
                    if target < v {
                        chosen = j;
                        break;
                    }
                }
                target -= v;
            }
            if chosen == FANOUT {
                chosen = last_positive;
                target = 0.5 * line[chosen];
            }
            idx = idx * FANOUT + chosen;
        }
        idx
    }

    /// Largest relative discrepancy between stored leaves and `weights`,
    /// and between the stored total and a fresh rebuild.
    pub fn audit(&self, weights: &[f64]) -> f64 {
        let fresh = SumTree::new(weights);
        let mut worst: f64 = 0.0;
        for (a, b) in self.leaves().iter().zip(weights) {
            worst = worst.max((a - b).abs() / b.abs().max(1e-300));
        }
        let scale = fresh.total().abs().max(1e-300);
        worst.max((self.total() - fresh.total()).abs() / scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_follows_prefix_sums() {
        let t = SumTree::new(&[1.0, 0.0, 2.0, 3.0, 0.5]);
        assert_eq!(t.total(), 6.5);
        assert_eq!(t.sample(0.0), 0);
        assert_eq!(t.sample(0.999), 0);
        assert_eq!(t.sample(1.0), 2);
        assert_eq!(t.sample(2.999), 2);
        assert_eq!(t.sample(3.0), 3);
        assert_eq!(t.sample(6.2), 4);
        // past the end falls back to the last positive leaf
        assert_eq!(t.sample(7.0), 4);
    }

    #[test]
    fn multi_level_prefix_sums() {
        let w: Vec<f64> = (0..1000).map(|i| (i % 3) as f64).collect();
        let t = SumTree::new(&w);
        let mut acc = 0.0;
        for (i, &wi) in w.iter().enumerate() {
            if wi > 0.0 {
                assert_eq!(t.sample(acc), i);
                assert_eq!(t.sample(acc + 0.5 * wi), i);
            }
            acc += wi;
        }
        assert_eq!(t.total(), acc);
    }

    #[test]
    fn updates_keep_total_consistent() {
        let mut w: Vec<f64> = (0..537).map(|i| (i % 5) as f64 * 0.3).collect();
        let mut t = SumTree::new(&w);
        for k in 0..5000 {
            let i = (k * 17) % 537;
            w[i] = ((k * 7) % 11) as f64 * 0.1;
            t.set(i, w[i]);
        }
        assert_eq!(t.audit(&w), 0.0);
    }

    #[test]
    fn never_returns_zero_weight_leaf() {
        let mut w = vec![0.0; 100];
        w[42] = 1e-300;
        let t = SumTree::new(&w);
        for target in [0.0, 1e-300, 1.0] {
            assert_eq!(t.sample(target), 42);
        }
    }
}
