//! Exhaustive enumeration helpers: set partitions as restricted-growth
//! strings, and all maps from a finite domain into a finite codomain.

/// Iterates every partition of `{0, .., n-1}` into at most `max_blocks`
/// blocks, in lexicographic order of the restricted-growth string
/// `a[0] = 0, a[i] ≤ 1 + max(a[..i])`. Each item gives the block of every
/// element.
pub struct RestrictedGrowth {
    labels: Vec<usize>,
    // prefix_max[i] = max(labels[..=i])
    prefix_max: Vec<usize>,
    max_blocks: usize,
    started: bool,
    done: bool,
}

impl RestrictedGrowth {
    pub fn new(n: usize, max_blocks: usize) -> Self {
        RestrictedGrowth {
            labels: vec![0; n],
            prefix_max: vec![0; n],
            max_blocks,
            started: false,
            done: n == 0 || max_blocks == 0,
        }
    }

    fn advance(&mut self) -> bool {
        let n = self.labels.len();
        for i in (1..n).rev() {
            let cap = (self.prefix_max[i - 1] + 1).min(self.max_blocks - 1);
            if self.labels[i] < cap {
                self.labels[i] += 1;
                self.prefix_max[i] = self.prefix_max[i - 1].max(self.labels[i]);
                for j in i + 1..n {
                    self.labels[j] = 0;
                    self.prefix_max[j] = self.prefix_max[i];
                }
                return true;
            }
        }
        false
    }
}

impl Iterator for RestrictedGrowth {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        if self.started && !self.advance() {
            self.done = true;
            return None;
        }
        self.started = true;
        Some(self.labels.clone())
    }
}

/// Every map `{0..len} → {0..base}`, as a digit vector with the last
/// position varying fastest.
pub struct Mappings {
    digits: Vec<usize>,
    base: usize,
    started: bool,
    done: bool,
}

impl Mappings {
    pub fn new(len: usize, base: usize) -> Self {
        Mappings {
            digits: vec![0; len],
            base,
            started: false,
            done: base == 0 && len > 0,
        }
    }

    /// `base^len`, saturating.
    pub fn count(len: usize, base: usize) -> u128 {
        (0..len).fold(1u128, |acc, _| acc.saturating_mul(base as u128))
    }
}

impl Iterator for Mappings {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        if self.started {
            let mut i = self.digits.len();
            loop {
                if i == 0 {
                    self.done = true;
                    return None;
                }
                i -= 1;
                self.digits[i] += 1;
                if self.digits[i] < self.base {
                    break;
                }
                self.digits[i] = 0;
            }
        }
        self.started = true;
        Some(self.digits.clone())
    }
}

/// Number of blocks used by a restricted-growth string.
pub fn block_count(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |m| m + 1)
}
